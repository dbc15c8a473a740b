"""Smooth complete fans in N = Z^n.

A :class:`Fan` stores primitive ray generators and its maximal cones as sorted
tuples of ray indices. Cones of lower dimension are never stored; a tuple of
ray indices is a cone of the fan when it is contained in some maximal cone.
"""
from __future__ import annotations

import json
import random
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations, permutations
from typing import Hashable, Iterable, Mapping, Sequence

from . import linalg

Ray = tuple[int, ...]
Cone = tuple[int, ...]


class FanError(ValueError):
    """Raised for malformed fans or invalid cone arguments."""


def as_cone(indices: Iterable[int]) -> Cone:
    return tuple(sorted(set(indices)))


@dataclass(frozen=True)
class Fan:
    ambient_rank: int
    rays: tuple[Ray, ...]
    max_cones: tuple[Cone, ...]
    # Optional names for the rays, e.g. the (stage, k) labels of a Bott tower.
    labels: tuple[Hashable, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        rays = tuple(tuple(int(x) for x in r) for r in self.rays)
        cones = tuple(as_cone(c) for c in self.max_cones)
        object.__setattr__(self, "rays", rays)
        object.__setattr__(self, "max_cones", cones)
        if self.labels is not None:
            labels = tuple(self.labels)
            if len(labels) != len(rays):
                raise FanError("one label per ray required")
            object.__setattr__(self, "labels", labels)
        for i, r in enumerate(rays):
            if len(r) != self.ambient_rank:
                raise FanError(f"ray {i} has length {len(r)}, expected {self.ambient_rank}")
        for c in cones:
            if any(not 0 <= i < len(rays) for i in c):
                raise FanError(f"cone {c} references a missing ray")

    @property
    def n_rays(self) -> int:
        return len(self.rays)

    @property
    def picard_rank(self) -> int:
        return self.n_rays - self.ambient_rank

    def index_of(self, label: Hashable) -> int:
        if self.labels is None:
            raise FanError("fan has no ray labels")
        try:
            return self.labels.index(label)
        except ValueError:
            raise FanError(f"no ray labelled {label!r}") from None

    def label_of(self, i: int) -> Hashable:
        return i if self.labels is None else self.labels[i]

    def ray_matrix(self, cone: Sequence[int]) -> list[list[int]]:
        """Rows are the ray generators of ``cone`` in the given order."""
        return [list(self.rays[i]) for i in cone]

    def cones_containing(self, tau: Iterable[int]) -> list[Cone]:
        t = set(tau)
        return [c for c in self.max_cones if t.issubset(c)]

    def is_cone(self, tau: Iterable[int]) -> bool:
        t = set(tau)
        return any(t.issubset(c) for c in self.max_cones)

    def with_labels(self, labels: Sequence[Hashable] | None) -> "Fan":
        return Fan(self.ambient_rank, self.rays, self.max_cones, labels)

    def canonical(self) -> tuple["Fan", list[int]]:
        """Rays sorted lexicographically, cones sorted; returns (fan, old->new index)."""
        order = sorted(range(self.n_rays), key=lambda i: self.rays[i])
        new_index = [0] * self.n_rays
        for new, old in enumerate(order):
            new_index[old] = new
        cones = sorted(as_cone(new_index[i] for i in c) for c in self.max_cones)
        labels = None if self.labels is None else [self.labels[i] for i in order]
        return Fan(self.ambient_rank, [self.rays[i] for i in order], cones, labels), new_index


@dataclass(frozen=True)
class LatticeMap:
    """Integer matrix acting on column vectors, with the induced ray bijection."""

    matrix: tuple[tuple[int, ...], ...]
    ray_map: tuple[int, ...]

    def __call__(self, v: Sequence[int]) -> tuple[int, ...]:
        return tuple(linalg.matvec(self.matrix, v))


# --- constructors -----------------------------------------------------------

def projective_space(n: int) -> Fan:
    """Fan of P^n: rays e_1..e_n, -(e_1+...+e_n); every n-subset is a cone."""
    if n < 1:
        raise FanError("P^n needs n >= 1")
    rays = [tuple(int(i == j) for j in range(n)) for i in range(n)]
    rays.append(tuple([-1] * n))
    return Fan(n, rays, list(combinations(range(n + 1), n)))


def product(f1: Fan, f2: Fan) -> Fan:
    n1, n2 = f1.ambient_rank, f2.ambient_rank
    rays = [r + (0,) * n2 for r in f1.rays] + [(0,) * n1 + r for r in f2.rays]
    off = f1.n_rays
    cones = [c1 + tuple(off + i for i in c2) for c1 in f1.max_cones for c2 in f2.max_cones]
    return Fan(n1 + n2, rays, cones)


# --- validation -------------------------------------------------------------

@dataclass
class ValidationReport:
    checks: dict[str, bool] = field(default_factory=dict)
    problems: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    def record(self, name: str, problems: list[str]):
        self.checks[name] = not problems
        self.problems.extend(f"{name}: {p}" for p in problems)

    def raise_if_failed(self):
        if not self.ok:
            raise FanError("; ".join(self.problems))


def wall_incidence(fan: Fan) -> dict[Cone, list[Cone]]:
    """Map each (n-1)-face of a maximal cone to the maximal cones containing it."""
    inc: dict[Cone, list[Cone]] = defaultdict(list)
    if fan.ambient_rank == 0:
        return {}
    for c in fan.max_cones:
        for w in combinations(c, len(c) - 1):
            inc[w].append(c)
    return dict(inc)


def _separated(fan: Fan, s1: Cone, s2: Cone) -> bool:
    """Whether s1 and s2 meet exactly in the cone over their common rays.

    Looks for a functional vanishing on the common rays, positive on the rest
    of s1 and negative on the rest of s2. Candidates come from an LP but are
    accepted only after exact verification.
    """
    common = set(s1) & set(s2)
    own = [i for i in s1 if i not in common]
    other = [j for j in s2 if j not in common]
    binv = linalg.unimodular_inverse(linalg.transpose(fan.ray_matrix(s1)))
    pos = {r: p for p, r in enumerate(s1)}
    # coords[j][i]: coefficient of ray i of s1 in ray j of s2
    coords = [linalg.matvec(binv, fan.rays[j]) for j in other]
    A = [[coords[j][pos[i]] for i in own] for j in range(len(other))]

    def works(w):
        return all(sum(a * x for a, x in zip(row, w)) < 0 for row in A)

    if works([1] * len(own)):
        return True
    from scipy.optimize import linprog

    res = linprog(
        c=[0] * len(own),
        A_ub=A,
        b_ub=[-1] * len(A),
        bounds=[(1, None)] * len(own),
        method="highs",
    )
    if res.status != 0:
        return False
    w = [Fraction(x).limit_denominator(10**6) for x in res.x]
    return all(x > 0 for x in w) and works(w)


def validate_fan(fan: Fan, seed: int = 0, samples: int = 16) -> ValidationReport:
    """Check that ``fan`` is a smooth complete simplicial fan.

    Completeness is certified by every wall lying in exactly two maximal
    cones, with the two cones on opposite sides, plus connectivity of the
    wall graph; a seeded point-location count (each sampled rational point
    in exactly one maximal cone) is an extra sanity check.
    """
    rep = ValidationReport()
    n = fan.ambient_rank

    rep.record("primitive", [f"ray {i} = {r}" for i, r in enumerate(fan.rays)
                             if n and not linalg.is_primitive(r)])
    dup = [r for r, k in Counter(fan.rays).items() if k > 1]
    rep.record("distinct_rays", [f"duplicate ray {r}" for r in dup])
    rep.record("distinct_cones", [f"duplicate cone {c}" for c, k in Counter(fan.max_cones).items() if k > 1])

    smooth = []
    for c in fan.max_cones:
        if len(c) != n:
            smooth.append(f"cone {c} has dimension {len(c)}")
        elif abs(linalg.det(fan.ray_matrix(c))) != 1:
            smooth.append(f"cone {c} is not unimodular")
    rep.record("smooth", smooth)
    if not rep.ok:
        return rep
    if n == 0:
        rep.record("walls", [] if len(fan.max_cones) == 1 else ["0-dim fan needs one cone"])
        return rep

    inc = wall_incidence(fan)
    rep.record("walls", [f"wall {w} lies in {len(cs)} maximal cone(s)"
                         for w, cs in inc.items() if len(cs) != 2])

    # connectivity of the wall-adjacency graph
    adj = defaultdict(set)
    for cs in inc.values():
        if len(cs) == 2:
            adj[cs[0]].add(cs[1])
            adj[cs[1]].add(cs[0])
    seen = {fan.max_cones[0]} if fan.max_cones else set()
    stack = list(seen)
    while stack:
        for d in adj[stack.pop()]:
            if d not in seen:
                seen.add(d)
                stack.append(d)
    rep.record("connected", [] if len(seen) == len(fan.max_cones)
               else [f"{len(fan.max_cones) - len(seen)} cone(s) unreachable"])

    # every pair of maximal cones meets in a common face
    bad = [f"cones {a} and {b} overlap" for a, b in combinations(fan.max_cones, 2)
           if not _separated(fan, a, b)]
    rep.record("face_intersections", bad)

    # point location: sampled points must lie in exactly one cone interior
    rng = random.Random(seed)
    inverses = [linalg.unimodular_inverse(linalg.transpose(fan.ray_matrix(c)))
                for c in fan.max_cones]
    loc = []
    tries = 0
    found = 0
    while found < samples and tries < 50 * samples:
        tries += 1
        p = [rng.randint(-97, 97) for _ in range(n)]
        coords = [linalg.matvec(inv, p) for inv in inverses]
        if any(0 in cs for cs in coords):
            continue
        found += 1
        hits = sum(all(x > 0 for x in cs) for cs in coords)
        if hits != 1:
            loc.append(f"point {p} lies in {hits} cones")
    rep.record("point_location", loc)
    return rep


# --- stars and subdivisions -------------------------------------------------

@dataclass(frozen=True)
class Star:
    """Star fan of a cone tau, living in N / (N cap span tau)."""

    fan: Fan
    tau: Cone
    ray_map: dict[int, int]
    projection: tuple[tuple[int, ...], ...]

    def project(self, v: Sequence[int]) -> tuple[int, ...]:
        return tuple(linalg.matvec(self.projection, v))


def star_fan(fan: Fan, tau: Iterable[int]) -> Star:
    tau = as_cone(tau)
    containing = fan.cones_containing(tau)
    if not containing:
        raise FanError(f"{tau} is not a cone of the fan")
    sigma = containing[0]
    binv = linalg.unimodular_inverse(linalg.transpose(fan.ray_matrix(sigma)))
    keep = [p for p, r in enumerate(sigma) if r not in tau]
    proj = [binv[p] for p in keep]
    adjacent = sorted({r for c in containing for r in c} - set(tau))
    ray_map = {r: k for k, r in enumerate(adjacent)}
    rays = [tuple(linalg.matvec(proj, fan.rays[r])) for r in adjacent]
    cones = [tuple(ray_map[r] for r in c if r not in tau) for c in containing]
    labels = None if fan.labels is None else [fan.labels[r] for r in adjacent]
    star = Fan(len(keep), rays, cones, labels)
    return Star(star, tau, ray_map, tuple(tuple(row) for row in proj))


def star_subdivision(fan: Fan, tau: Iterable[int]) -> Fan:
    """Blow up the orbit closure of the smooth cone tau (new ray = sum of its rays)."""
    tau = as_cone(tau)
    if len(tau) < 2:
        raise FanError("star subdivision of a cone of dimension <= 1 is trivial")
    if not fan.is_cone(tau):
        raise FanError(f"{tau} is not a cone of the fan")
    new = tuple(sum(fan.rays[i][k] for i in tau) for k in range(fan.ambient_rank))
    if not linalg.is_primitive(new):
        raise FanError(f"cone {tau} is not smooth")
    w = fan.n_rays
    cones = []
    for c in fan.max_cones:
        if set(tau).issubset(c):
            cones.extend(as_cone([x for x in c if x != t] + [w]) for t in tau)
        else:
            cones.append(c)
    labels = None
    if fan.labels is not None:
        labels = list(fan.labels) + [("E",) + tuple(fan.labels[i] for i in tau)]
    return Fan(fan.ambient_rank, list(fan.rays) + [new], cones, labels)


# --- isomorphism ------------------------------------------------------------

def _fingerprints(fan: Fan, colors: Mapping[int, Hashable] | None) -> list[tuple]:
    deg = Counter(i for c in fan.max_cones for i in c)
    nbrs = defaultdict(set)
    for c in fan.max_cones:
        for i in c:
            nbrs[i].update(c)
    out = []
    for i in range(fan.n_rays):
        color = None if colors is None else colors.get(i)
        out.append((color, deg[i], len(nbrs[i])))
    return out


def iter_isomorphisms(f1: Fan, f2: Fan,
                      colors1: Mapping[int, Hashable] | None = None,
                      colors2: Mapping[int, Hashable] | None = None):
    """Yield every unimodular map carrying f1 onto f2 (and colors onto colors)."""
    if f1.ambient_rank != f2.ambient_rank or f1.n_rays != f2.n_rays \
            or len(f1.max_cones) != len(f2.max_cones):
        return
    fp1, fp2 = _fingerprints(f1, colors1), _fingerprints(f2, colors2)
    if sorted(fp1) != sorted(fp2):
        return
    n = f1.ambient_rank
    if n == 0:
        yield LatticeMap((), ())
        return
    sigma = f1.max_cones[0]
    b1inv = linalg.unimodular_inverse(linalg.transpose(f1.ray_matrix(sigma)))
    index2 = {r: i for i, r in enumerate(f2.rays)}
    cones2 = set(f2.max_cones)
    for tau in f2.max_cones:
        for order in permutations(tau):
            if any(fp1[a] != fp2[b] for a, b in zip(sigma, order)):
                continue
            b2 = linalg.transpose(f2.ray_matrix(order))
            A = linalg.matmul(b2, b1inv)
            ray_map = []
            for i, r in enumerate(f1.rays):
                j = index2.get(tuple(linalg.matvec(A, r)))
                if j is None or fp1[i] != fp2[j]:
                    break
                ray_map.append(j)
            else:
                if all(as_cone(ray_map[i] for i in c) in cones2 for c in f1.max_cones):
                    yield LatticeMap(tuple(tuple(row) for row in A), tuple(ray_map))


def fan_isomorphic(f1: Fan, f2: Fan,
                   colors1: Mapping[int, Hashable] | None = None,
                   colors2: Mapping[int, Hashable] | None = None) -> LatticeMap | None:
    """First isomorphism f1 -> f2 found by exhaustive search, or None.

    Every isomorphism sends the first maximal cone of f1 to some maximal cone
    of f2 with some ordering of its rays, and is determined by that choice, so
    enumerating those choices is exhaustive. Optional colorings restrict the
    search to maps with colors2[map(i)] == colors1[i].
    """
    return next(iter_isomorphisms(f1, f2, colors1, colors2), None)


def check_isomorphism(f1: Fan, f2: Fan, phi: LatticeMap) -> bool:
    if f1.ambient_rank and abs(linalg.det(phi.matrix)) != 1:
        return False
    if sorted(phi.ray_map) != list(range(f2.n_rays)):
        return False
    if any(phi(r) != f2.rays[j] for r, j in zip(f1.rays, phi.ray_map)):
        return False
    return {as_cone(phi.ray_map[i] for i in c) for c in f1.max_cones} == set(f2.max_cones)


# --- serialization ----------------------------------------------------------

def _rows(rows: Iterable[Sequence[int]]) -> str:
    return ",\n".join("    " + json.dumps(list(r)) for r in rows)


def dumps(fan: Fan) -> str:
    """Canonical text form: rays sorted lexicographically, cones sorted."""
    can, _ = fan.canonical()
    return (
        "{\n"
        f'  "ambient_rank": {can.ambient_rank},\n'
        f'  "rays": [\n{_rows(can.rays)}\n  ],\n'
        f'  "cones": [\n{_rows(can.max_cones)}\n  ]\n'
        "}\n"
    )


def loads(text: str) -> Fan:
    data = json.loads(text)
    try:
        return Fan(int(data["ambient_rank"]), data["rays"], data["cones"])
    except KeyError as exc:
        raise FanError(f"fan file is missing {exc.args[0]!r}") from None
