"""Generalized Bott towers: integer specifications and their fans.

A tower with stages 1..m and fiber dimensions n_1..n_m lives in Z^n,
n = n_1 + ... + n_m, with basis e_i^k (stage i, 1 <= k <= n_i). Its rays are

    u_i^k = e_i^k                      (1 <= k <= n_i)
    u_i^0 = -sum_k e_i^k + sum_{j>i} sum_k a_{j,i}^(k) e_j^k

and a maximal cone omits exactly one ray from every stage. Rays carry the
label ``(i, k)``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from itertools import product
from typing import Sequence

from . import linalg
from .fan import Fan, fan_isomorphic, projective_space, star_subdivision


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class BottTowerSpec:
    """``twists[i - 2][k - 1][j - 1]`` is a_{i,j}^(k) for stage i >= 2."""

    dims: tuple[int, ...]
    twists: tuple[tuple[tuple[int, ...], ...], ...] = ()

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if not dims:
            raise SpecError("a tower needs at least one stage")
        for i, d in enumerate(dims, start=1):
            if d < 1:
                raise SpecError(f"stage {i}: fiber dimension {d} < 1")
        twists = tuple(tuple(tuple(int(a) for a in vec) for vec in stage)
                       for stage in self.twists)
        if len(twists) != len(dims) - 1:
            raise SpecError(f"expected twist entries for {len(dims) - 1} stage(s), got {len(twists)}")
        for i, stage in enumerate(twists, start=2):
            if len(stage) != dims[i - 1]:
                raise SpecError(f"stage {i}: expected {dims[i - 1]} twist vectors, got {len(stage)}")
            for k, vec in enumerate(stage, start=1):
                if len(vec) != i - 1:
                    raise SpecError(f"stage {i}, slot {k}: twist vector has length {len(vec)}, "
                                    f"expected {i - 1}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "twists", twists)

    @property
    def stages(self) -> int:
        return len(self.dims)

    @property
    def dimension(self) -> int:
        return sum(self.dims)

    def twist(self, i: int, j: int, k: int) -> int:
        """a_{i,j}^(k), the coefficient of e_i^k in u_j^0."""
        return self.twists[i - 2][k - 1][j - 1]

    def labels(self) -> list[tuple[int, int]]:
        return [(i, k) for i, d in enumerate(self.dims, start=1) for k in range(d + 1)]

    def truncate(self, i: int) -> "BottTowerSpec | None":
        """Stages 1..i, or None for the point (i == 0)."""
        if i == 0:
            return None
        return BottTowerSpec(self.dims[:i], self.twists[:i - 1])

    def extend(self, dim: int, twist: Sequence[Sequence[int]]) -> "BottTowerSpec":
        return BottTowerSpec(self.dims + (dim,), self.twists + (tuple(map(tuple, twist)),))

    def to_dict(self) -> dict:
        return {"dims": list(self.dims),
                "twists": [[list(v) for v in stage] for stage in self.twists]}

    @classmethod
    def from_dict(cls, data: dict) -> "BottTowerSpec":
        try:
            return cls(tuple(data["dims"]), tuple(data.get("twists", ())))
        except (KeyError, TypeError) as exc:
            raise SpecError(f"malformed spec: {exc}") from None


def dumps_spec(spec: BottTowerSpec) -> str:
    return json.dumps(spec.to_dict()) + "\n"


def loads_spec(text: str) -> BottTowerSpec:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"line {exc.lineno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise SpecError("spec file must hold an object with 'dims' and 'twists'")
    return BottTowerSpec.from_dict(data)


def hirzebruch_spec(a: int) -> BottTowerSpec:
    return BottTowerSpec((1, 1), (((a,),),))


def projective_spec(n: int) -> BottTowerSpec:
    return BottTowerSpec((n,))


def _offsets(dims: Sequence[int]) -> list[int]:
    out, acc = [], 0
    for d in dims:
        out.append(acc)
        acc += d
    return out


@lru_cache(maxsize=4096)
def build_fan(spec: BottTowerSpec) -> Fan:
    n = spec.dimension
    off = _offsets(spec.dims)
    rays, labels = [], []
    for i, d in enumerate(spec.dims, start=1):
        u0 = [0] * n
        for k in range(1, d + 1):
            u0[off[i - 1] + k - 1] = -1
        for j in range(i + 1, spec.stages + 1):
            for k in range(1, spec.dims[j - 1] + 1):
                u0[off[j - 1] + k - 1] = spec.twist(j, i, k)
        rays.append(tuple(u0))
        labels.append((i, 0))
        for k in range(1, d + 1):
            e = [0] * n
            e[off[i - 1] + k - 1] = 1
            rays.append(tuple(e))
            labels.append((i, k))
    index = {lab: p for p, lab in enumerate(labels)}
    cones = []
    for omitted in product(*(range(d + 1) for d in spec.dims)):
        cones.append(tuple(index[(i, k)] for i, d in enumerate(spec.dims, start=1)
                           for k in range(d + 1) if k != omitted[i - 1]))
    return Fan(n, rays, cones, labels)


@dataclass(frozen=True)
class StageProjection:
    source_spec: BottTowerSpec
    target_spec: BottTowerSpec | None
    matrix: tuple[tuple[int, ...], ...]

    def source_fan(self) -> Fan:
        return build_fan(self.source_spec)

    def target_fan(self) -> Fan | None:
        return None if self.target_spec is None else build_fan(self.target_spec)

    def is_toric_morphism(self) -> bool:
        """Every maximal cone of the source maps into a maximal cone of the target."""
        src, tgt = self.source_fan(), self.target_fan()
        if tgt is None:
            return all(not any(row) for row in self.matrix) or not self.matrix
        binvs = [linalg.unimodular_inverse(linalg.transpose(tgt.ray_matrix(c)))
                 for c in tgt.max_cones]
        images = [linalg.matvec(self.matrix, r) for r in src.rays]
        for c in src.max_cones:
            if not any(all(x >= 0 for i in c for x in linalg.matvec(binv, images[i]))
                       for binv in binvs):
                return False
        return True


def stage_projection(spec: BottTowerSpec, i: int) -> StageProjection:
    """The tower map X_m -> X_{i-1}, dropping the coordinates of stages >= i."""
    if not 1 <= i <= spec.stages:
        raise SpecError(f"stage {i} out of range 1..{spec.stages}")
    keep = sum(spec.dims[:i - 1])
    n = spec.dimension
    matrix = tuple(tuple(int(r == c) for c in range(n)) for r in range(keep))
    proj = StageProjection(spec, spec.truncate(i - 1), matrix)
    if not proj.is_toric_morphism():
        raise SpecError(f"stage {i} projection is not a toric morphism")
    return proj


@lru_cache(maxsize=None)
def blowup_point_spec(n: int) -> BottTowerSpec:
    """Two-stage spec (dims n-1, 1) whose fan is the blow-up of P^n at a fixed point.

    The twist is found by testing candidates against the star subdivision of
    the P^n fan with fan_isomorphic rather than by convention.
    """
    if n < 2:
        raise SpecError("blow-up of a point needs n >= 2")
    target = star_subdivision(projective_space(n), range(n))
    for t in (1, -1, 0, 2, -2):
        spec = BottTowerSpec((n - 1, 1), (((t,) ,),))
        if fan_isomorphic(build_fan(spec), target) is not None:
            return spec
    raise SpecError(f"no small twist realizes the blow-up of P^{n}")  # pragma: no cover


def blowup_point_boundary(n: int) -> list[tuple[int, int]]:
    """Labels of the boundary E + (n-1 hyperplanes through the point) on blowup_point_spec(n)."""
    spec = blowup_point_spec(n)
    fan = build_fan(spec)
    target = star_subdivision(projective_space(n), range(n))
    phi = fan_isomorphic(fan, target)
    inverse = {j: i for i, j in enumerate(phi.ray_map)}
    exceptional = inverse[target.n_rays - 1]
    hyperplanes = [inverse[j] for j in range(n - 1)]
    return [fan.labels[exceptional]] + [fan.labels[i] for i in hyperplanes]


def blowup_flag_fan(n: int) -> Fan:
    """P^n blown up along the flag P^0 < P^1 < ... < P^(n-2), strict transforms in turn.

    P^k is the orbit closure of the cone spanned by e_(k+1), ..., e_n, and the
    same ray subset names its strict transform after each subdivision.
    """
    if n < 1:
        raise SpecError("n >= 1 required")
    fan = projective_space(n)
    for k in range(n - 1):
        fan = star_subdivision(fan, range(k, n))
    return fan


def enumerate_specs(n: int, bound: int):
    """All specs of total dimension n with every twist entry in [-bound, bound]."""
    for dims in compositions(n):
        slots = sum(d * (i - 1) for i, d in enumerate(dims, start=1))
        for values in product(range(-bound, bound + 1), repeat=slots):
            it = iter(values)
            twists = tuple(tuple(tuple(next(it) for _ in range(i - 1)) for _ in range(d))
                           for i, d in enumerate(dims, start=1) if i >= 2)
            yield BottTowerSpec(dims, twists)


def compositions(n: int):
    """Ordered tuples of positive integers summing to n, in lexicographic order."""
    if n == 0:
        yield ()
        return
    for first in range(1, n + 1):
        for rest in compositions(n - first):
            yield (first,) + rest
