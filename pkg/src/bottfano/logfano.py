"""Toric log Fano pairs (X, Delta) with Delta a sum of torus-invariant prime divisors.

A pair is stored as a fan plus the tuple of boundary ray indices. Everything
the structure report asserts is recomputed from the fan; nothing is assumed.
"""
from __future__ import annotations

import json
from collections import Counter, defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from itertools import combinations
from typing import Hashable, Iterable, Sequence

from . import linalg
from .bott import BottTowerSpec, build_fan, compositions, enumerate_specs
from .divisors import (
    DivisorError,
    Positivity,
    ToricDivisor,
    Wall,
    boundary_divisor,
    canonical_divisor,
    curve_vector,
    divisor,
    divisor_class,
    extremal_length,
    failing_walls,
    find_wall,
    format_number,
    intersection_number,
    nef_value,
    picard_rank,
    positivity,
    ray_divisor,
    restrict_to_stratum,
    walls,
)
from .fan import Fan, as_cone, fan_isomorphic, star_fan


class PairError(ValueError):
    pass


@dataclass(frozen=True)
class LogFanoPair:
    fan: Fan
    boundary: tuple[int, ...]

    def __post_init__(self):
        b = tuple(self.boundary)
        if len(set(b)) != len(b):
            raise PairError(f"repeated boundary ray in {b}")
        if any(not 0 <= i < self.fan.n_rays for i in b):
            raise PairError(f"boundary {b} references a missing ray")
        object.__setattr__(self, "boundary", tuple(sorted(b)))

    @classmethod
    def from_labels(cls, fan: Fan, labels: Iterable[Hashable]) -> "LogFanoPair":
        return cls(fan, tuple(fan.index_of(lab) for lab in labels))

    @property
    def dimension(self) -> int:
        return self.fan.ambient_rank

    @cached_property
    def delta(self) -> ToricDivisor:
        return boundary_divisor(self.fan, self.boundary)

    @cached_property
    def L(self) -> ToricDivisor:
        """The polarization -K - Delta."""
        return -canonical_divisor(self.fan) - self.delta

    def boundary_labels(self) -> list:
        return [self.fan.label_of(i) for i in self.boundary]


def is_log_fano(fan: Fan, boundary: Iterable[int]) -> bool:
    pair = boundary if isinstance(boundary, LogFanoPair) else LogFanoPair(fan, tuple(boundary))
    return positivity(pair.L) is Positivity.AMPLE


def _is_lf(pair: LogFanoPair) -> bool:
    return positivity(pair.L) is Positivity.AMPLE


@dataclass(frozen=True)
class DualComplexRecord:
    vertices: tuple[int, ...]
    faces: tuple[tuple[int, ...], ...]

    @property
    def dimension(self) -> int:
        return max((len(f) for f in self.faces), default=0) - 1

    @property
    def is_simplex(self) -> bool:
        return len(self.faces) == 2 ** len(self.vertices) - 1


def dual_complex(pair: LogFanoPair) -> DualComplexRecord:
    faces = [s for k in range(1, len(pair.boundary) + 1)
             for s in combinations(pair.boundary, k) if pair.fan.is_cone(s)]
    return DualComplexRecord(pair.boundary, tuple(faces))


def maximality_conditions(pair: LogFanoPair) -> dict[str, bool]:
    """The two combinatorial forms of maximality, reported separately."""
    return {
        "n_components": len(pair.boundary) == pair.dimension,
        "zero_dim_stratum": len(pair.boundary) == pair.dimension and pair.fan.is_cone(pair.boundary),
    }


def is_maximal(pair: LogFanoPair) -> bool:
    cond = maximality_conditions(pair)
    if _is_lf(pair) and cond["n_components"] != cond["zero_dim_stratum"]:
        raise PairError(f"log Fano pair with {pair.dimension} components but no 0-dim stratum")
    return cond["n_components"]


# --- stratum lines ------------------------------------------------------------

@dataclass(frozen=True)
class StratumLine:
    omitted: int                      # the boundary component not containing the line
    cone: tuple[int, ...]             # the n-1 boundary rays cutting it out
    wall: Wall
    degrees: tuple[tuple[int, int], ...]  # (ray, D_ray . l) for each containing component
    L_degree: int

    @property
    def is_free(self) -> bool:
        return all(d >= 0 for _, d in self.degrees)


def _require_maximal(pair: LogFanoPair):
    if not maximality_conditions(pair)["zero_dim_stratum"]:
        raise PairError("operation needs a maximal pair (boundary spanning a maximal cone)")


def stratum_lines(pair: LogFanoPair) -> list[StratumLine]:
    _require_maximal(pair)
    out = []
    for i in pair.boundary:
        cone = tuple(r for r in pair.boundary if r != i)
        w = find_wall(pair.fan, cone)
        degrees = tuple((r, intersection_number(ray_divisor(pair.fan, r), w)) for r in cone)
        out.append(StratumLine(i, cone, w, degrees, intersection_number(pair.L, w)))
    return out


def free_lines(pair: LogFanoPair) -> list[StratumLine]:
    return [l for l in stratum_lines(pair) if l.is_free]


def complement(pair: LogFanoPair) -> ToricDivisor:
    """Gamma: every torus-invariant prime divisor outside the boundary, coefficient 1."""
    _require_maximal(pair)
    gamma = divisor(pair.fan, {i: 1 for i in range(pair.fan.n_rays) if i not in pair.boundary})
    total = canonical_divisor(pair.fan) + pair.delta + gamma
    if not divisor_class(total).is_zero():
        raise PairError("K + Delta + Gamma is not linearly trivial")
    return gamma


def complexity(fan: Fan, coefficients: ToricDivisor | Sequence) -> Fraction:
    """n + rho - (sum of coefficients)."""
    coeffs = coefficients.coeffs if isinstance(coefficients, ToricDivisor) else coefficients
    total = sum(Fraction(c) for c in coeffs)
    return Fraction(fan.ambient_rank + picard_rank(fan)) - total


# --- star pairs -----------------------------------------------------------------

def star_pair(pair: LogFanoPair, stratum: Iterable[int]) -> LogFanoPair:
    """The boundary stratum V(stratum) with the restricted boundary."""
    stratum = as_cone(stratum)
    if not set(stratum) <= set(pair.boundary):
        raise PairError(f"{stratum} is not a boundary stratum")
    star = star_fan(pair.fan, stratum)
    rest = [star.ray_map[r] for r in pair.boundary if r not in stratum]
    return LogFanoPair(star.fan, tuple(rest))


# --- Bott tower witness ---------------------------------------------------------

@dataclass(frozen=True)
class BottWitness:
    spec: BottTowerSpec
    labels: tuple                     # (stage, k) label for each ray of the pair's fan
    matrix: tuple[tuple[int, ...], ...]  # lattice map onto build_fan(spec)
    lines_used: tuple[int, ...]       # omitted component of the contracted line at each level


def _line_bundle_data(pair: LogFanoPair, line: StratumLine):
    """Fiber data of the contraction of a free line, or None if it does not look like a P^k-bundle."""
    fan = pair.fan
    deg = [intersection_number(ray_divisor(fan, r), line.wall) for r in range(fan.n_rays)]
    if any(d not in (0, 1) for d in deg):
        return None
    horizontal = [b for b in pair.boundary if deg[b] == 1]
    extra = [r for r in range(fan.n_rays) if deg[r] == 1 and r not in pair.boundary]
    if not horizontal or len(extra) != 1:
        return None
    return horizontal, extra[0]


def _witness(pair: LogFanoPair):
    fan = pair.fan
    if fan.ambient_rank == 0:
        return None, (), (), ()
    for line in free_lines(pair):
        data = _line_bundle_data(pair, line)
        if data is None:
            continue
        H, extra = data
        star = star_fan(fan, H)
        if star.fan.n_rays != fan.n_rays - len(H) - 1:
            continue
        base = LogFanoPair(star.fan, tuple(star.ray_map[r] for r in pair.boundary if r not in H))
        sub = _witness(base)
        if sub is None:
            continue
        base_spec, base_labels, used, _ = sub
        m = 1 if base_spec is None else base_spec.stages + 1
        labels: list = [None] * fan.n_rays
        for r, s in star.ray_map.items():
            labels[r] = base_labels[s]
        for k, r in enumerate(H, start=1):
            labels[r] = (m, k)
        labels[extra] = (m, 0)
        result = _spec_from_labels(fan, labels)
        if result is not None:
            spec, matrix = result
            return spec, tuple(labels), used + (line.omitted,), matrix
    return None


def _spec_from_labels(fan: Fan, labels: list):
    """Read a tower spec off the labelled rays and confirm it rebuilds the same fan."""
    dims: dict[int, int] = Counter(i for i, k in labels if k >= 1)
    m = max(dims)
    if sorted(dims) != list(range(1, m + 1)):
        return None
    dims_t = tuple(dims[i] for i in range(1, m + 1))
    basis_labels = [(i, k) for i in range(1, m + 1) for k in range(1, dims[i] + 1)]
    where = {lab: r for r, lab in enumerate(labels)}
    if len(where) != fan.n_rays or any(lab not in where for lab in basis_labels):
        return None
    B = [fan.rays[where[lab]] for lab in basis_labels]
    try:
        T = linalg.unimodular_inverse(linalg.transpose(B))
    except (ValueError, ZeroDivisionError):
        return None
    pos = {lab: p for p, lab in enumerate(basis_labels)}
    twists = []
    for i in range(2, m + 1):
        stage = []
        for k in range(1, dims[i] + 1):
            stage.append(tuple(linalg.matvec(T, fan.rays[where[(j, 0)]])[pos[(i, k)]]
                               for j in range(1, i)))
        twists.append(tuple(stage))
    spec = BottTowerSpec(dims_t, tuple(twists))
    target = build_fan(spec)
    for r, lab in enumerate(labels):
        if tuple(linalg.matvec(T, fan.rays[r])) != target.rays[target.index_of(lab)]:
            return None
    image = {as_cone(target.index_of(labels[r]) for r in c) for c in fan.max_cones}
    if image != set(target.max_cones):
        return None
    return spec, tuple(tuple(row) for row in T)


def bott_witness(pair: LogFanoPair) -> BottWitness | None:
    """Rebuild the pair as a generalized Bott tower by contracting free lines recursively.

    At each level a free stratum line whose contraction looks like a P^k-bundle
    (degrees 0/1, one non-boundary horizontal ray) is chosen; its section
    stratum is the base. Stage labels are assigned bottom up and the resulting
    spec is confirmed by rebuilding its fan and comparing ray by ray.
    """
    _require_maximal(pair)
    res = _witness(pair)
    if res is None or res[0] is None:
        return None
    spec, labels, used, matrix = res
    return BottWitness(spec, labels, matrix, used)


# --- the structure report -----------------------------------------------------

@dataclass
class StructureReport:
    checks: dict[str, bool] = field(default_factory=dict)
    witnesses: dict[str, object] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    def failed(self) -> list[str]:
        return [k for k, v in self.checks.items() if not v]


def _cone_decomposition(target: Sequence[int], gens: Sequence[Sequence[int]]):
    """Nonnegative rational coefficients expressing target over gens, or None.

    By Caratheodory it suffices to try linearly independent subsets.
    """
    if not any(target):
        return [Fraction(0)] * len(gens)
    for k in range(1, len(gens) + 1):
        for S in combinations(range(len(gens)), k):
            cols = [gens[s] for s in S]
            if linalg.rank(cols) != k:
                continue
            A = linalg.transpose(cols)
            x = linalg.solve(A, list(target))
            if x is None or any(v < 0 for v in x):
                continue
            out = [Fraction(0)] * len(gens)
            for s, v in zip(S, x):
                out[s] = v
            return out
    return None


def verify_structure(pair: LogFanoPair, adjunction: bool = True) -> StructureReport:
    """Check the structure theorem for maximal log Fano pairs on one instance."""
    rep = StructureReport()
    fan = pair.fan
    n = pair.dimension
    rho = picard_rank(fan)
    c, w = rep.checks, rep.witnesses

    c["log_fano"] = _is_lf(pair)
    cond = maximality_conditions(pair)
    c["maximal"] = cond["n_components"] and cond["zero_dim_stratum"]
    if not (c["log_fano"] and c["maximal"]):
        w["failing_walls"] = [[fan.label_of(i) for i in fw.cone] for fw in failing_walls(pair.L)]
        return rep

    dc = dual_complex(pair)
    c["dual_complex_simplex"] = dc.is_simplex and dc.dimension == n - 1

    gamma = complement(pair)
    c["complement"] = len(gamma.support) == rho
    w["gamma"] = [fan.label_of(i) for i in gamma.support]
    c["complexity_zero"] = complexity(fan, pair.delta + gamma) == 0

    lines = stratum_lines(pair)
    c["stratum_lines_L1"] = all(l.L_degree == 1 for l in lines)

    line_vecs = [curve_vector(fan, l.wall) for l in lines]
    decomp = {}
    for wl in walls(fan):
        x = _cone_decomposition(curve_vector(fan, wl), line_vecs)
        if x is None:
            decomp = None
            break
        decomp[wl.cone] = x
    c["mori_cone_generated"] = decomp is not None

    # the face contracted by the nef value morphism is spanned by trivial lines
    nv = nef_value(fan, pair.L)
    trivial = canonical_divisor(fan) + nv.tau * pair.L
    trivial_lines = [l for l in lines if intersection_number(trivial, l.wall) == 0]
    c["tau_gt_1"] = nv.tau > 1
    w["tau"] = format_number(nv.tau)
    tl_vecs = [curve_vector(fan, l.wall) for l in trivial_lines]
    c["trivial_face_spanned_by_lines"] = bool(trivial_lines) and all(
        _cone_decomposition(curve_vector(fan, tw), tl_vecs) is not None for tw in nv.trivial_walls)
    c["extremal_length_ge_2"] = all(extremal_length(fan, tw) >= 2 for tw in nv.trivial_walls)

    classes = [list(divisor_class(ray_divisor(fan, b)).coords) for b in pair.boundary]
    c["picard_generated_by_boundary"] = linalg.spans_lattice(classes, rho)

    nef_comps = []
    for b in pair.boundary:
        D = ray_divisor(fan, b)
        if positivity(D) is not Positivity.NOT_NEF and \
                positivity(restrict_to_stratum(D, [b])) is not Positivity.NOT_NEF:
            nef_comps.append(fan.label_of(b))
    c["nef_component"] = bool(nef_comps)
    w["nef_components"] = nef_comps

    free = [l for l in lines if l.is_free]
    c["free_line_exists"] = bool(free)
    w["free_lines"] = [fan.label_of(l.omitted) for l in free]

    dich = []
    for l in free:
        data = _line_bundle_data(pair, l)
        if data is None:
            dich.append(False)
            continue
        H, _ = data
        k = len(H)
        rho_d1 = picard_rank(star_fan(fan, [l.omitted]).fan)
        rho_section = picard_rank(star_fan(fan, H).fan)
        if k == 1:
            ok = H == [l.omitted] and rho == rho_d1 + 1
        else:
            ok = l.omitted in H and rho == rho_d1
        dich.append(ok and rho == rho_section + 1)
        w.setdefault("bundle", []).append(
            {"line": fan.label_of(l.omitted), "k": k,
             "section": [fan.label_of(h) for h in H]})
    c["bundle_dichotomy"] = bool(dich) and all(dich)

    bw = bott_witness(pair)
    c["bott_witness"] = bw is not None and bw.spec.stages == rho \
        and (rho == n) == all(d == 1 for d in bw.spec.dims)
    if bw is not None:
        w["bott_spec"] = bw.spec.to_dict()

    if adjunction:
        ok = True
        for k in range(1, n):
            for S in combinations(pair.boundary, k):
                sp = star_pair(pair, S)
                if not (_is_lf(sp) and maximality_conditions(sp)["zero_dim_stratum"]):
                    ok = False
        c["adjunction_closure"] = ok
    return rep


# --- classification -----------------------------------------------------------

class ClassificationLimitError(RuntimeError):
    pass


@dataclass(frozen=True)
class ClassificationEntry:
    spec: BottTowerSpec
    boundary: tuple[tuple[int, int], ...]
    rho: int
    tau: Fraction
    gamma_components: int
    free_lines: tuple[tuple[int, int], ...]
    presentations: int
    structure: dict | None = None

    @property
    def pair(self) -> LogFanoPair:
        return LogFanoPair.from_labels(build_fan(self.spec), self.boundary)

    def to_dict(self) -> dict:
        d = {
            "spec": self.spec.to_dict(),
            "boundary": [list(b) for b in self.boundary],
            "rho": self.rho,
            "tau": format_number(self.tau),
            "gamma_components": self.gamma_components,
            "free_lines": [list(b) for b in self.free_lines],
            "presentations": self.presentations,
        }
        if self.structure is not None:
            d["structure_report"] = self.structure
        return d


def candidate_count(n: int, bound: int) -> int:
    total = 0
    for dims in compositions(n):
        slots = sum(d * (i - 1) for i, d in enumerate(dims, start=1))
        cones = 1
        for d in dims:
            cones *= d + 1
        total += (2 * bound + 1) ** slots * cones
    return total


def pair_key(pair: LogFanoPair) -> tuple:
    """Serialization used for tie-breaking: canonical rays, cones and boundary."""
    can, new = pair.fan.canonical()
    return (can.rays, can.max_cones, tuple(sorted(new[b] for b in pair.boundary)))


def _certificate(pair: LogFanoPair) -> tuple:
    lines = stratum_lines(pair)
    nv = nef_value(pair.fan, pair.L)
    degs = tuple(sorted(tuple(sorted(d for _, d in l.degrees)) for l in lines))
    return (picard_rank(pair.fan), nv.tau, degs)


def _scan_spec(spec: BottTowerSpec) -> list[tuple]:
    """Maximal log Fano boundaries on one spec, with pruning certificates."""
    fan = build_fan(spec)
    out = []
    for cone in fan.max_cones:
        pair = LogFanoPair(fan, cone)
        if _is_lf(pair):
            out.append((spec, tuple(fan.labels[i] for i in cone), _certificate(pair)))
    return out


def _scan_chunk(specs: list[BottTowerSpec]) -> list[tuple]:
    return [item for s in specs for item in _scan_spec(s)]


def _colors(pair: LogFanoPair) -> dict[int, int]:
    return {i: int(i in pair.boundary) for i in range(pair.fan.n_rays)}


def pairs_isomorphic(p1: LogFanoPair, p2: LogFanoPair):
    return fan_isomorphic(p1.fan, p2.fan, _colors(p1), _colors(p2))


def classify(n: int, bound: int, workers: int = 1, verify: bool = True,
             max_candidates: int = 2_000_000) -> list[ClassificationEntry]:
    """Maximal log Fano pairs on generalized Bott towers with |twist| <= bound, up to pair isomorphism."""
    if n < 1 or bound < 0:
        raise ValueError("classify needs n >= 1 and bound >= 0")
    total = candidate_count(n, bound)
    if total > max_candidates:
        raise ClassificationLimitError(
            f"{total} (spec, boundary) candidates exceed the limit of {max_candidates}")
    specs = list(enumerate_specs(n, bound))
    if workers > 1:
        size = max(1, len(specs) // (4 * workers))
        chunks = [specs[i:i + size] for i in range(0, len(specs), size)]
        with ProcessPoolExecutor(max_workers=workers) as ex:
            found = [item for part in ex.map(_scan_chunk, chunks) for item in part]
    else:
        found = _scan_chunk(specs)

    # single-owner reduction: bucket by certificate, then exact pair isomorphism
    buckets: dict[tuple, list[list]] = defaultdict(list)
    for spec, labels, cert in found:
        pair = LogFanoPair.from_labels(build_fan(spec), labels)
        for cls in buckets[cert]:
            if pairs_isomorphic(pair, cls[0][1]) is not None:
                cls.append((spec, pair))
                break
        else:
            buckets[cert].append([(spec, pair)])

    entries = []
    for cert, classes in buckets.items():
        for cls in classes:
            spec, pair = min(cls, key=lambda sp: pair_key(sp[1]))
            rho, tau, _ = cert
            structure = None
            if verify:
                rep = verify_structure(pair)
                structure = {"checks": rep.checks, "ok": rep.ok}
            entries.append(ClassificationEntry(
                spec=spec,
                boundary=tuple(pair.boundary_labels()),
                rho=rho,
                tau=tau,
                gamma_components=pair.fan.n_rays - len(pair.boundary),
                free_lines=tuple(pair.fan.label_of(l.omitted) for l in free_lines(pair)),
                presentations=len(cls),
                structure=structure,
            ))
    entries.sort(key=lambda e: (e.rho, e.spec.dims, e.spec.twists, e.boundary))
    return entries


def classification_to_json(n: int, bound: int, entries: Sequence[ClassificationEntry]) -> str:
    data = {
        "dimension": n,
        "twist_bound": bound,
        "count": len(entries),
        "entries": [e.to_dict() for e in entries],
    }
    return json.dumps(data, indent=1, sort_keys=True) + "\n"


def classification_table(entries: Sequence[ClassificationEntry]) -> str:
    rows = [("#", "dims", "twists", "boundary", "rho", "tau", "free", "ok")]
    for i, e in enumerate(entries, start=1):
        ok = "-" if e.structure is None else ("yes" if e.structure["ok"] else "NO")
        rows.append((str(i), str(list(e.spec.dims)),
                     json.dumps([[list(v) for v in st] for st in e.spec.twists]),
                     " ".join(f"{a}:{b}" for a, b in e.boundary),
                     str(e.rho), format_number(e.tau),
                     " ".join(f"{a}:{b}" for a, b in e.free_lines), ok))
    widths = [max(len(r[c]) for r in rows) for c in range(len(rows[0]))]
    return "\n".join("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip()
                     for r in rows) + "\n"


def pair_certificate(pair: LogFanoPair) -> dict:
    """Everything known about one pair, in a JSON-friendly form."""
    fan = pair.fan
    out: dict = {
        "boundary": [fan.label_of(b) for b in pair.boundary],
        "rho": picard_rank(fan),
        "log_fano": _is_lf(pair),
        "maximal": maximality_conditions(pair)["zero_dim_stratum"],
    }
    if not out["log_fano"]:
        out["failing_walls"] = [[fan.label_of(i) for i in w.cone] for w in failing_walls(pair.L)]
        return out
    try:
        nv = nef_value(fan, pair.L)
        out["tau"] = format_number(nv.tau)
        out["trivial_walls"] = [[fan.label_of(i) for i in w.cone] for w in nv.trivial_walls]
    except DivisorError as exc:
        out["tau"] = None
        out["tau_error"] = str(exc)
    if out["maximal"]:
        gamma = complement(pair)
        out["gamma"] = [fan.label_of(i) for i in gamma.support]
        out["complexity"] = format_number(complexity(fan, pair.delta + gamma))
        out["stratum_lines"] = [
            {"omitted": fan.label_of(l.omitted),
             "degrees": [[fan.label_of(r), d] for r, d in l.degrees],
             "L_degree": l.L_degree, "free": l.is_free}
            for l in stratum_lines(pair)]
        rep = verify_structure(pair)
        out["structure_report"] = {"checks": rep.checks, "ok": rep.ok}
        out["structure_witnesses"] = rep.witnesses
    return out
