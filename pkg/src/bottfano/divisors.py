"""Torus-invariant divisors, curve classes of walls, and positivity.

On a smooth complete fan every torus-invariant divisor is Cartier, linear and
numerical equivalence agree, and the torus-invariant curves (one per wall)
generate the Mori cone. Everything below is exact.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from numbers import Rational
from typing import Iterable, Mapping, Sequence

from . import linalg
from .fan import Cone, Fan, FanError, as_cone, star_fan, wall_incidence


class DivisorError(ValueError):
    pass


def _num(x):
    """Keep integers as int, other rationals as Fraction."""
    x = Fraction(x)
    return x.numerator if x.denominator == 1 else x


@dataclass(frozen=True)
class ToricDivisor:
    fan: Fan
    coeffs: tuple

    def __post_init__(self):
        if len(self.coeffs) != self.fan.n_rays:
            raise DivisorError(f"{len(self.coeffs)} coefficients for {self.fan.n_rays} rays")
        object.__setattr__(self, "coeffs", tuple(_num(c) for c in self.coeffs))

    def _check(self, other):
        if other.fan != self.fan:
            raise DivisorError("divisors live on different fans")

    def __add__(self, other: "ToricDivisor") -> "ToricDivisor":
        self._check(other)
        return ToricDivisor(self.fan, [a + b for a, b in zip(self.coeffs, other.coeffs)])

    def __sub__(self, other: "ToricDivisor") -> "ToricDivisor":
        return self + (-other)

    def __neg__(self) -> "ToricDivisor":
        return ToricDivisor(self.fan, [-a for a in self.coeffs])

    def __mul__(self, k: Rational) -> "ToricDivisor":
        return ToricDivisor(self.fan, [k * a for a in self.coeffs])

    __rmul__ = __mul__

    @property
    def support(self) -> list[int]:
        return [i for i, a in enumerate(self.coeffs) if a != 0]

    def is_integral(self) -> bool:
        return all(isinstance(a, int) for a in self.coeffs)


def divisor(fan: Fan, coeffs: Mapping[int, Rational] | Sequence[Rational]) -> ToricDivisor:
    if isinstance(coeffs, Mapping):
        c = [0] * fan.n_rays
        for i, a in coeffs.items():
            c[i] = a
        coeffs = c
    return ToricDivisor(fan, list(coeffs))


def ray_divisor(fan: Fan, i: int) -> ToricDivisor:
    return divisor(fan, {i: 1})


def boundary_divisor(fan: Fan, rays: Iterable[int]) -> ToricDivisor:
    return divisor(fan, {i: 1 for i in rays})


def canonical_divisor(fan: Fan) -> ToricDivisor:
    return ToricDivisor(fan, [-1] * fan.n_rays)


def principal_divisor(fan: Fan, m: Sequence[int]) -> ToricDivisor:
    """div(chi^m) = sum_r <m, v_r> D_r."""
    return ToricDivisor(fan, [sum(a * b for a, b in zip(m, r)) for r in fan.rays])


# --- classes ------------------------------------------------------------------

def cartier_data(D: ToricDivisor, sigma: Sequence[int]) -> list:
    """The m_sigma with <m_sigma, v_r> = -a_r for every ray r of the maximal cone sigma."""
    binv = linalg.unimodular_inverse(D.fan.ray_matrix(sigma))
    return [_num(x) for x in linalg.matvec(binv, [-D.coeffs[r] for r in sigma])]


def reduce_divisor(D: ToricDivisor, pivot: Sequence[int] | None = None) -> ToricDivisor:
    """The representative of D's class vanishing on the pivot maximal cone."""
    sigma = D.fan.max_cones[0] if pivot is None else as_cone(pivot)
    m = cartier_data(D, sigma)
    out = D + ToricDivisor(D.fan, [sum(a * b for a, b in zip(m, r)) for r in D.fan.rays])
    assert all(out.coeffs[r] == 0 for r in sigma)
    return out


@dataclass(frozen=True)
class DivisorClass:
    """Class in Pic(X) = Z^rays / M, stored by its coordinates on the non-pivot rays."""

    fan: Fan
    pivot: Cone
    coords: tuple

    @property
    def basis_rays(self) -> list[int]:
        return [i for i in range(self.fan.n_rays) if i not in self.pivot]

    def is_zero(self) -> bool:
        return not any(self.coords)


def divisor_class(D: ToricDivisor, pivot: Sequence[int] | None = None) -> DivisorClass:
    sigma = D.fan.max_cones[0] if pivot is None else as_cone(pivot)
    red = reduce_divisor(D, sigma)
    coords = tuple(red.coeffs[i] for i in range(D.fan.n_rays) if i not in sigma)
    return DivisorClass(D.fan, sigma, coords)


def linearly_equivalent(D1: ToricDivisor, D2: ToricDivisor) -> bool:
    return divisor_class(D1 - D2).is_zero()


def picard_rank(fan: Fan) -> int:
    return fan.n_rays - fan.ambient_rank


# --- walls --------------------------------------------------------------------

@dataclass(frozen=True)
class Wall:
    """Torus-invariant curve V(cone); relation v + v' + sum_r b_r r = 0."""

    cone: Cone
    v: int
    v_prime: int
    relation: tuple[tuple[int, int], ...]

    def b(self, r: int) -> int:
        return dict(self.relation).get(r, 0)


@lru_cache(maxsize=8192)
def walls(fan: Fan) -> tuple[Wall, ...]:
    out = []
    for w, cones in sorted(wall_incidence(fan).items()):
        if len(cones) != 2:
            raise FanError(f"wall {w} lies in {len(cones)} maximal cone(s)")
        (v,) = set(cones[0]) - set(w)
        (vp,) = set(cones[1]) - set(w)
        basis = list(w) + [v]
        binv = linalg.unimodular_inverse(linalg.transpose(fan.ray_matrix(basis)))
        c = linalg.matvec(binv, fan.rays[vp])
        if c[-1] != -1:
            raise FanError(f"wall {w}: cones on the same side or not smooth")
        relation = tuple((r, -c[p]) for p, r in enumerate(w))
        out.append(Wall(w, min(v, vp), max(v, vp), relation))
    return tuple(out)


def find_wall(fan: Fan, cone: Iterable[int]) -> Wall:
    cone = as_cone(cone)
    for w in walls(fan):
        if w.cone == cone:
            return w
    raise FanError(f"{cone} is not a wall")


def intersection_number(D: ToricDivisor, w: Wall):
    a = D.coeffs
    return _num(a[w.v] + a[w.v_prime] + sum(b * a[r] for r, b in w.relation))


def curve_vector(fan: Fan, w: Wall) -> tuple[int, ...]:
    """(D_r . C_w) over all rays r: the numerical class of the wall curve."""
    vec = [0] * fan.n_rays
    vec[w.v] = 1
    vec[w.v_prime] = 1
    for r, b in w.relation:
        vec[r] = b
    return tuple(vec)


# --- positivity ---------------------------------------------------------------

class Positivity(enum.Enum):
    AMPLE = "ample"
    NEF = "nef-not-ample"
    NOT_NEF = "not-nef"


def positivity(D: ToricDivisor) -> Positivity:
    """Toric Kleiman criterion: signs of D . C over all wall curves."""
    values = [intersection_number(D, w) for w in walls(D.fan)]
    if all(x > 0 for x in values):
        return Positivity.AMPLE
    if all(x >= 0 for x in values):
        return Positivity.NEF
    return Positivity.NOT_NEF


def positivity_oracle(D: ToricDivisor) -> Positivity:
    """Convexity of the support function, independent of the wall data.

    D is nef iff each m_sigma satisfies <m_sigma, v_r> >= -a_r on every ray,
    and ample iff additionally the inequality is strict off sigma.
    """
    fan = D.fan
    nef, strict = True, True
    for sigma in fan.max_cones:
        m = cartier_data(D, sigma)
        for r, v in enumerate(fan.rays):
            if r in sigma:
                continue
            slack = sum(a * b for a, b in zip(m, v)) + D.coeffs[r]
            if slack < 0:
                nef = False
            elif slack == 0:
                strict = False
    if not nef:
        return Positivity.NOT_NEF
    return Positivity.AMPLE if strict else Positivity.NEF


def failing_walls(D: ToricDivisor) -> list[Wall]:
    return [w for w in walls(D.fan) if intersection_number(D, w) <= 0]


@dataclass(frozen=True)
class NefValue:
    tau: Fraction
    trivial_walls: tuple[Wall, ...]


def nef_value(fan: Fan, L: ToricDivisor) -> NefValue:
    """Least t >= 0 with K + tL nef, and the walls on which K + tau L vanishes."""
    if positivity(L) is not Positivity.AMPLE:
        raise DivisorError("nef value needs an ample polarization")
    K = canonical_divisor(fan)
    best, arg = None, []
    for w in walls(fan):
        k = intersection_number(K, w)
        if k >= 0:
            continue
        t = Fraction(-k) / intersection_number(L, w)
        if best is None or t > best:
            best, arg = t, [w]
        elif t == best:
            arg.append(w)
    if best is None:
        raise DivisorError("K is nef: every wall is K-nonnegative")
    return NefValue(best, tuple(arg))


def extremal_length(fan: Fan, w: Wall) -> int:
    """-K . C_w for a K-negative wall curve."""
    k = intersection_number(canonical_divisor(fan), w)
    if k >= 0:
        raise DivisorError(f"wall {w.cone} is not K-negative")
    return -k


# --- restriction to strata ------------------------------------------------------

def restrict_to_stratum(D: ToricDivisor, tau: Iterable[int]) -> ToricDivisor:
    """O(D)|_{V(tau)} as a divisor on the star fan of tau.

    D is first moved by a principal divisor so that it vanishes on a maximal
    cone containing tau; the result then meets V(tau) properly and restricts
    ray by ray. This also covers D containing V(tau), e.g. normal bundles.
    """
    tau = as_cone(tau)
    star = star_fan(D.fan, tau)
    sigma = D.fan.cones_containing(tau)[0]
    moved = reduce_divisor(D, sigma)
    coeffs = [0] * star.fan.n_rays
    for r, s in star.ray_map.items():
        coeffs[s] = moved.coeffs[r]
    return ToricDivisor(star.fan, coeffs)


# --- reports ------------------------------------------------------------------

def format_number(x) -> str:
    x = Fraction(x)
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def intersection_table(fan: Fan) -> dict:
    """Class basis (non-pivot rays) against every wall curve, in canonical ordering."""
    pivot = fan.max_cones[0]
    basis = [i for i in range(fan.n_rays) if i not in pivot]
    ws = walls(fan)
    return {
        "picard_rank": picard_rank(fan),
        "basis": [fan.label_of(i) for i in basis],
        "walls": [[fan.label_of(i) for i in w.cone] for w in ws],
        "matrix": [[format_number(intersection_number(ray_divisor(fan, i), w)) for w in ws]
                   for i in basis],
    }


def format_intersection_table(fan: Fan) -> str:
    table = intersection_table(fan)

    def name(lab):
        return ":".join(map(str, lab)) if isinstance(lab, tuple) else str(lab)

    header = ["D \\ C"] + ["<" + ",".join(name(x) for x in w) + ">" for w in table["walls"]]
    rows = [[name(b)] + row for b, row in zip(table["basis"], table["matrix"])]
    widths = [max(len(r[c]) for r in [header] + rows) for c in range(len(header))]
    lines = ["  ".join(cell.rjust(wd) for cell, wd in zip(r, widths)) for r in [header] + rows]
    return f"picard_rank {table['picard_rank']}\n" + "\n".join(lines) + "\n"
