"""Simple normal crossings models glued from toric log Fano pairs.

A model is purely combinatorial: components, an incidence labelling saying
which other component each boundary ray of a component meets, and explicit
lattice maps identifying the double intersections seen from either side.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations, permutations
from typing import Sequence

from .bott import BottTowerSpec, build_fan
from .divisors import (
    Positivity,
    ToricDivisor,
    boundary_divisor,
    divisor,
    divisor_class,
    linearly_equivalent,
    positivity,
    ray_divisor,
    restrict_to_stratum,
)
from .fan import Fan, LatticeMap, as_cone, fan_isomorphic, star_fan
from .logfano import (
    LogFanoPair,
    _line_bundle_data,
    classify,
    free_lines,
    is_log_fano,
    maximality_conditions,
)


class ModelError(ValueError):
    pass


class SearchLimitError(RuntimeError):
    pass


# --- the component ------------------------------------------------------------

def component_spec(n: int) -> tuple[BottTowerSpec, list[tuple[int, int]]]:
    """Spec and boundary labels of the component of X^n, built as a P^1-bundle tower.

    Each step takes the current pair (D, Delta_D) to P_D(O + O(-Delta_D)): a new
    one-dimensional stage whose twist is minus the class of Delta_D in the
    basis of the (i, 0) divisors, and the section with normal bundle -Delta_D
    joins the boundary.
    """
    if n < 1:
        raise ValueError("component_spec needs n >= 1")
    spec = BottTowerSpec((1,))
    boundary = [(1, 1)]
    for m in range(2, n + 1):
        fan = build_fan(spec)
        delta = boundary_divisor(fan, [fan.index_of(b) for b in boundary])
        pivot = [fan.index_of((i, 1)) for i in range(1, m)]
        cls = divisor_class(delta, pivot)
        twist = tuple(-c for c in cls.coords)
        spec = spec.extend(1, [twist])
        X = build_fan(spec)
        sections = []
        for cand in ((m, 0), (m, 1)):
            r = X.index_of(cand)
            normal = restrict_to_stratum(ray_divisor(X, r), [r])
            target = divisor(normal.fan, {normal.fan.index_of(b): -1 for b in boundary})
            if linearly_equivalent(normal, target):
                sections.append(cand)
        if len(sections) != 1:
            raise ModelError(f"stage {m}: expected one section with normal bundle -Delta, "
                             f"found {sections}")
        boundary = boundary + sections
        pair = LogFanoPair.from_labels(X, boundary)
        if not (is_log_fano(X, pair.boundary) and maximality_conditions(pair)["zero_dim_stratum"]):
            raise ModelError(f"stage {m}: component is not maximal log Fano")
    return spec, boundary


def component_pair(n: int) -> LogFanoPair:
    spec, boundary = component_spec(n)
    return LogFanoPair.from_labels(build_fan(spec), boundary)


def basepoint_free_components(pair: LogFanoPair) -> list[int]:
    """Boundary rays whose divisor is nef with linearly trivial normal bundle."""
    out = []
    for b in pair.boundary:
        D = ray_divisor(pair.fan, b)
        if positivity(D) is Positivity.NOT_NEF:
            continue
        if divisor_class(restrict_to_stratum(D, [b])).is_zero():
            out.append(b)
    return out


def section_component(pair: LogFanoPair) -> int:
    """The section of the P^1-bundle given by the unique free stratum line."""
    lines = free_lines(pair)
    if len(lines) != 1:
        raise ModelError(f"expected a unique free stratum line, found {len(lines)}")
    data = _line_bundle_data(pair, lines[0])
    if data is None or len(data[0]) != 1:
        raise ModelError("the free line does not contract to a P^1-bundle")
    return data[0][0]


# --- models -------------------------------------------------------------------

@dataclass(frozen=True)
class Gluing:
    """Identification of D = X_i cap X_j as seen from X_i (star of ray_i) and X_j."""

    i: int
    ray_i: int
    j: int
    ray_j: int
    map: LatticeMap                   # star fan of ray_i in X_i -> star fan of ray_j in X_j
    ray_bijection: tuple[tuple[int, int], ...]  # X_i rays adjacent to ray_i -> X_j rays

    def forward(self) -> dict[int, int]:
        return dict(self.ray_bijection)

    def backward(self) -> dict[int, int]:
        return {b: a for a, b in self.ray_bijection}


@dataclass(frozen=True)
class SncModel:
    components: tuple[LogFanoPair, ...]
    incidence: tuple[tuple[tuple[int, int], ...], ...]  # per component: (boundary ray, other component)
    gluings: tuple[Gluing, ...]
    specs: tuple[BottTowerSpec | None, ...] = field(default=(), compare=False)

    @property
    def size(self) -> int:
        return len(self.components)

    def label(self, c: int) -> dict[int, int]:
        return dict(self.incidence[c])

    def ray_to(self, c: int, other: int) -> int:
        for r, k in self.incidence[c]:
            if k == other:
                return r
        raise ModelError(f"component {c} does not meet component {other}")

    def gluing(self, i: int, j: int) -> Gluing:
        for g in self.gluings:
            if (g.i, g.j) == (min(i, j), max(i, j)):
                return g
        raise ModelError(f"no gluing between {i} and {j}")

    def ray_map(self, i: int, j: int) -> dict[int, int]:
        g = self.gluing(i, j)
        return g.forward() if i < j else g.backward()


def _star_colors(pair: LogFanoPair, labels: dict[int, int], star) -> dict[int, int]:
    return {s: labels.get(r, -1) for r, s in star.ray_map.items()}


def make_gluing(pi: LogFanoPair, li: dict[int, int], i: int,
                pj: LogFanoPair, lj: dict[int, int], j: int) -> Gluing | None:
    """The label-preserving identification of X_i cap X_j, or None if there is none.

    The restricted boundary rays form a basis of the star lattice, so a
    label-preserving isomorphism, when it exists, is unique.
    """
    ri = next(r for r, k in li.items() if k == j)
    rj = next(r for r, k in lj.items() if k == i)
    si, sj = star_fan(pi.fan, [ri]), star_fan(pj.fan, [rj])
    phi = fan_isomorphic(si.fan, sj.fan, _star_colors(pi, li, si), _star_colors(pj, lj, sj))
    if phi is None:
        return None
    back = {s: r for r, s in sj.ray_map.items()}
    bij = tuple(sorted((r, back[phi.ray_map[s]]) for r, s in si.ray_map.items()))
    return Gluing(i, ri, j, rj, phi, bij)


def check_cocycle(model: SncModel) -> list[str]:
    """Gluings must agree on every triple intersection (as ray identifications)."""
    problems = []
    for i, j, k in combinations(range(model.size), 3):
        pi = model.components[i]
        cone = as_cone([model.ray_to(i, j), model.ray_to(i, k)])
        if not pi.fan.is_cone(cone):
            continue
        adjacent = {r for c in pi.fan.cones_containing(cone) for r in c} - set(cone)
        gij, gjk, gik = model.ray_map(i, j), model.ray_map(j, k), model.ray_map(i, k)
        for x in sorted(adjacent):
            if gjk.get(gij.get(x)) != gik.get(x):
                problems.append(f"triple ({i},{j},{k}): ray {x} glued inconsistently")
    return problems


def assemble(components: Sequence[LogFanoPair], labels: Sequence[dict[int, int]],
             specs: Sequence[BottTowerSpec | None] = ()) -> SncModel:
    """Build all gluings for a labelled set of components; raises if any fails."""
    m = len(components)
    for c, (pair, lab) in enumerate(zip(components, labels)):
        if sorted(lab) != list(pair.boundary):
            raise ModelError(f"component {c}: labels must cover exactly the boundary rays")
        if len(set(lab.values())) != len(lab) or c in lab.values() \
                or any(not 0 <= k < m for k in lab.values()):
            raise ModelError(f"component {c}: each boundary ray must meet a distinct other component")
    for i, j in combinations(range(m), 2):
        if (j in labels[i].values()) != (i in labels[j].values()):
            raise ModelError(f"incidence of components {i} and {j} is not symmetric")
    gluings = []
    for i, j in combinations(range(m), 2):
        if j not in labels[i].values():
            continue
        g = make_gluing(components[i], labels[i], i, components[j], labels[j], j)
        if g is None:
            raise ModelError(f"double intersection ({i},{j}) admits no boundary-compatible gluing")
        gluings.append(g)
    model = SncModel(tuple(components), tuple(tuple(sorted(l.items())) for l in labels),
                     tuple(gluings), tuple(specs) or (None,) * m)
    problems = check_cocycle(model)
    if problems:
        raise ModelError("; ".join(problems))
    return model


def build_xn(n: int) -> SncModel:
    """n+1 copies of the X^n component glued in a directed cycle.

    In copy i the basepoint-free boundary component meets copy i+1 and the
    section of the free line meets copy i-1 (indices mod n+1). The remaining
    boundary rays take the remaining offsets; the first assignment (in a fixed
    order) for which every gluing exists and the cocycle condition holds is used.
    """
    spec, _ = component_spec(n)
    pair = component_pair(n)
    m = n + 1
    if n == 1:
        (b,) = pair.boundary
        return assemble([pair, pair], [{b: 1}, {b: 0}], [spec, spec])
    bpf = basepoint_free_components(pair)
    if len(bpf) != 1:
        raise ModelError(f"expected a unique basepoint-free component, found {len(bpf)}")
    sec = section_component(pair)
    rest = [b for b in pair.boundary if b not in (bpf[0], sec)]
    for offsets in permutations(range(2, n)):
        off = {bpf[0]: 1, sec: n}
        off.update(zip(rest, offsets))
        labels = [{r: (c + d) % m for r, d in off.items()} for c in range(m)]
        try:
            return assemble([pair] * m, labels, [spec] * m)
        except ModelError:
            continue
    raise ModelError(f"no consistent gluing of {m} copies found")


# --- checks -------------------------------------------------------------------

@dataclass(frozen=True)
class ModelDualComplex:
    faces: tuple[tuple[int, ...], ...]

    @property
    def dimension(self) -> int:
        return max(len(f) for f in self.faces) - 1

    def is_simplex(self, vertices: int) -> bool:
        return len(self.faces) == 2 ** vertices - 1


def model_dual_complex(model: SncModel) -> ModelDualComplex:
    faces = []
    for k in range(1, model.size + 1):
        for S in combinations(range(model.size), k):
            c0 = S[0]
            try:
                cone = [model.ray_to(c0, c) for c in S[1:]]
            except ModelError:
                continue
            if model.components[c0].fan.is_cone(cone):
                faces.append(S)
    return ModelDualComplex(tuple(faces))


def snc_fano_check(model: SncModel) -> bool:
    """Every component is log Fano with respect to its incidence boundary."""
    return all(is_log_fano(p.fan, p.boundary) for p in model.components)


def is_maximal_model(model: SncModel) -> bool:
    n = model.components[0].dimension
    return model_dual_complex(model).dimension == n


@dataclass(frozen=True)
class DssPair:
    i: int
    j: int
    class_coords: tuple
    verdict: bool
    cross_check: bool                 # the j-side cross terms give the same class

    def to_dict(self) -> dict:
        return {"pair": [self.i, self.j], "class": [str(c) for c in self.class_coords],
                "trivial": self.verdict, "cross_check": self.cross_check}


@dataclass(frozen=True)
class DssReport:
    pairs: tuple[DssPair, ...]

    @property
    def ok(self) -> bool:
        return all(p.verdict and p.cross_check for p in self.pairs)

    def failures(self) -> list[tuple[int, int]]:
        return [(p.i, p.j) for p in self.pairs if not p.verdict]

    def to_json(self) -> str:
        return json.dumps({"ok": self.ok, "pairs": [p.to_dict() for p in self.pairs]},
                          indent=1, sort_keys=True) + "\n"


def _transport(D: ToricDivisor, target: Fan, ray_map: dict[int, int],
               src_star, dst_star) -> ToricDivisor:
    """Pull a divisor on the star fan of X_j back to the star fan of X_i along a gluing."""
    coeffs = [0] * target.n_rays
    for ri, si in src_star.ray_map.items():
        rj = ray_map[ri]
        coeffs[si] = D.coeffs[dst_star.ray_map[rj]]
    return ToricDivisor(target, coeffs)


def dss_pair(model: SncModel, i: int, j: int) -> DssPair:
    if i > j:
        i, j = j, i
    pi, pj = model.components[i], model.components[j]
    ri, rj = model.ray_to(i, j), model.ray_to(j, i)
    si, sj = star_fan(pi.fan, [ri]), star_fan(pj.fan, [rj])
    g = model.ray_map(i, j)
    ni = restrict_to_stratum(ray_divisor(pi.fan, ri), [ri])
    nj = _transport(restrict_to_stratum(ray_divisor(pj.fan, rj), [rj]), si.fan, g, si, sj)
    others = sorted(k for k in model.label(i).values() if k != j)
    total = ni + nj
    total_j = ni + nj
    for k in others:
        rik = model.ray_to(i, k)
        total = total + restrict_to_stratum(ray_divisor(pi.fan, rik), [ri])
        rjk = model.ray_to(j, k)
        total_j = total_j + _transport(restrict_to_stratum(ray_divisor(pj.fan, rjk), [rj]),
                                       si.fan, g, si, sj)
    cls = divisor_class(total)
    return DssPair(i, j, cls.coords, cls.is_zero(), divisor_class(total_j) == cls)


def dss_check(model: SncModel) -> DssReport:
    """The triviality of N_{D/X_i} + N_{D/X_j} + sum_k X_k|_D on every double intersection D."""
    return DssReport(tuple(dss_pair(model, g.i, g.j) for g in model.gluings))


# --- serialization ------------------------------------------------------------

def _lab(fan: Fan, r: int):
    lab = fan.label_of(r)
    return list(lab) if isinstance(lab, tuple) else lab


def model_to_dict(model: SncModel) -> dict:
    comps = []
    for c, pair in enumerate(model.components):
        spec = model.specs[c] if c < len(model.specs) else None
        comps.append({
            "spec": None if spec is None else spec.to_dict(),
            "boundary": [_lab(pair.fan, r) for r in pair.boundary],
            "incidence": [[_lab(pair.fan, r), k] for r, k in model.incidence[c]],
        })
    glue = [{"i": g.i, "ray_i": _lab(model.components[g.i].fan, g.ray_i),
             "j": g.j, "ray_j": _lab(model.components[g.j].fan, g.ray_j),
             "matrix": [list(row) for row in g.map.matrix]} for g in model.gluings]
    return {"components": comps, "gluings": glue}


def dumps_model(model: SncModel) -> str:
    return json.dumps(model_to_dict(model), indent=1, sort_keys=True) + "\n"


def loads_model(text: str) -> SncModel:
    """Rebuild a model from its file; the stored gluing matrices must match the recomputed ones."""
    data = json.loads(text)
    comps, labels, specs = [], [], []
    for c in data["components"]:
        if c["spec"] is None:
            raise ModelError("components must carry a spec to be reloaded")
        spec = BottTowerSpec.from_dict(c["spec"])
        fan = build_fan(spec)
        comps.append(LogFanoPair.from_labels(fan, [tuple(b) for b in c["boundary"]]))
        labels.append({fan.index_of(tuple(r)): k for r, k in c["incidence"]})
        specs.append(spec)
    model = assemble(comps, labels, specs)
    stored = {(g["i"], g["j"]): g["matrix"] for g in data["gluings"]}
    for g in model.gluings:
        if stored.get((g.i, g.j)) != [list(row) for row in g.map.matrix]:
            raise ModelError(f"stored gluing ({g.i},{g.j}) differs from the recomputed one")
    return model


# --- isomorphism and search -----------------------------------------------------

def model_isomorphism(m1: SncModel, m2: SncModel):
    """(component permutation, per-component ray maps) commuting with the gluings, or None."""
    if m1.size != m2.size:
        return None
    for perm in permutations(range(m1.size)):
        maps = []
        for c in range(m1.size):
            p1, p2 = m1.components[c], m2.components[perm[c]]
            l1, l2 = m1.label(c), m2.label(perm[c])
            col1 = {r: (perm[l1[r]] if r in l1 else -1) for r in range(p1.fan.n_rays)}
            col2 = {r: l2.get(r, -1) for r in range(p2.fan.n_rays)}
            phi = fan_isomorphic(p1.fan, p2.fan, col1, col2)
            if phi is None:
                break
            maps.append(phi.ray_map)
        else:
            if _commutes(m1, m2, perm, maps):
                return perm, maps
    return None


def _commutes(m1: SncModel, m2: SncModel, perm, maps) -> bool:
    for g in m1.gluings:
        a, b = perm[g.i], perm[g.j]
        g2 = m2.ray_map(a, b)
        for x, y in g.ray_bijection:
            if g2.get(maps[g.i][x]) != maps[g.j][y]:
                return False
    return True


@dataclass
class SearchResult:
    models: list[SncModel]
    examined: int
    log: list[str]
    exhaustive: bool


def search_maximal_dss(n: int, bound: int, use_dss: bool = True,
                       max_nodes: int = 5_000_000) -> SearchResult:
    """All maximal snc Fano models from classified components, up to model isomorphism.

    Components are chosen as a multiset of classification entries, each with a
    bijective labelling of its boundary by the other components. Search is a
    backtrack: after placing component c, every gluing with earlier components
    must exist (and pass the d-semistability equation when ``use_dss``).
    Complete for the enumerated window; windows with n >= 3 are reported as
    not exhaustive over all twists.
    """
    entries = classify(n, bound, verify=False)
    pairs = [e.pair for e in entries]
    specs = [e.spec for e in entries]
    m = n + 1
    log = [f"{len(entries)} component types from the classification window"]
    survivors: list[SncModel] = []
    examined = 0
    glue_cache: dict = {}

    def glue(ti, li, i, tj, lj, j):
        key = (ti, tuple(sorted(li.items())), i, tj, tuple(sorted(lj.items())), j)
        if key not in glue_cache:
            glue_cache[key] = make_gluing(pairs[ti], li, i, pairs[tj], lj, j)
        return glue_cache[key]

    def labelings(t, c):
        others = [k for k in range(m) if k != c]
        for perm in permutations(others):
            yield dict(zip(pairs[t].boundary, perm))

    pruned = {"gluing": 0, "dss": 0, "cocycle": 0}

    def extend(types, labels):
        nonlocal examined
        c = len(types)
        if c == m:
            try:
                model = assemble([pairs[t] for t in types], labels, [specs[t] for t in types])
            except Exception:
                pruned["cocycle"] += 1
                return
            if not snc_fano_check(model):
                return
            if use_dss and not dss_check(model).ok:
                pruned["dss"] += 1
                return
            if not any(model_isomorphism(model, s) is not None for s in survivors):
                survivors.append(model)
            return
        start = types[-1] if types else 0
        for t in range(start, len(pairs)):
            for lab in labelings(t, c):
                examined += 1
                if examined > max_nodes:
                    raise SearchLimitError(
                        f"search exceeded {max_nodes} nodes; pruning so far: {pruned}")
                ok = True
                for i in range(c):
                    g = glue(types[i], labels[i], i, t, lab, c)
                    if g is None:
                        ok = False
                        pruned["gluing"] += 1
                        break
                if ok and use_dss:
                    ok = _partial_dss(types + [t], labels + [lab], pairs, c, glue)
                    if not ok:
                        pruned["dss"] += 1
                if ok:
                    extend(types + [t], labels + [lab])

    extend([], [])
    log.append(f"examined {examined} partial assignments; pruned {pruned}")
    log.append(f"{len(survivors)} model(s) up to isomorphism")
    return SearchResult(survivors, examined, log, exhaustive=n <= 2)


def _partial_dss(types, labels, pairs, c, glue) -> bool:
    """Check the d-semistability equation on pairs (i, c) whose data is now complete."""
    comps = [pairs[t] for t in types]
    gl = []
    for i, j in combinations(range(len(types)), 2):
        g = glue(types[i], labels[i], i, types[j], labels[j], j)
        gl.append(g)
    # A partial model: only double intersections among placed components exist,
    # but each dss term needs only the rays of X_i and X_j plus the labels.
    partial = SncModel(tuple(comps), tuple(tuple(sorted(l.items())) for l in labels), tuple(gl))
    for i in range(c):
        if not dss_pair(partial, i, c).verdict:
            return False
    return True
