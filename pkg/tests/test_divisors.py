import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from bottfano.bott import blowup_point_boundary, blowup_point_spec, build_fan
from bottfano.divisors import (
    DivisorError,
    Positivity,
    boundary_divisor,
    canonical_divisor,
    curve_vector,
    divisor,
    divisor_class,
    extremal_length,
    find_wall,
    format_intersection_table,
    intersection_number,
    intersection_table,
    linearly_equivalent,
    nef_value,
    picard_rank,
    positivity,
    positivity_oracle,
    principal_divisor,
    ray_divisor,
    restrict_to_stratum,
    walls,
)
from bottfano.fan import as_cone, product, projective_space, star_fan

from conftest import CORPUS, hirzebruch, ray

CORPUS_FANS = [build_fan(s) for s in CORPUS]
coeff = st.integers(-3, 3)


def blowup(n):
    """Fan, E, strict transforms D_2..D_n and the class H = D_2 + E."""
    f = build_fan(blowup_point_spec(n))
    labels = blowup_point_boundary(n)
    E = ray(f, labels[0])
    Ds = [ray(f, lab) for lab in labels[1:]]
    H = ray_divisor(f, Ds[0]) + ray_divisor(f, E)
    return f, E, Ds, H


def blowup_curves(n):
    """Walls of the fibre f (only stage-1 rays) and of a line s inside E."""
    f, E, _, _ = blowup(n)
    stage1 = {i for i, lab in enumerate(f.labels) if lab[0] == 1}
    fibres = [w for w in walls(f) if set(w.cone) <= stage1]
    lines_in_E = [w for w in walls(f) if E in w.cone and len(set(w.cone) & stage1) == n - 2]
    return fibres, lines_in_E


# --- canonical divisor and classes ------------------------------------------------

def test_canonical_coefficients(p2):
    K = canonical_divisor(p2)
    assert K.coeffs == (-1, -1, -1)
    assert linearly_equivalent(-K, 3 * ray_divisor(p2, 0))


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_blowup_canonical_class(n):
    f, E, Ds, H = blowup(n)
    K = canonical_divisor(f)
    Ediv = ray_divisor(f, E)
    assert linearly_equivalent(K, -(n + 1) * H + (n - 1) * Ediv)
    for D in Ds:
        assert linearly_equivalent(ray_divisor(f, D), H - Ediv)
    L = -K - boundary_divisor(f, [E] + Ds)
    assert linearly_equivalent(L, 2 * H - Ediv)
    assert picard_rank(f) == 2


def test_hirzebruch_fibre_anticanonical_degree():
    for l in range(5):
        f = hirzebruch(l)
        for k in (0, 1):
            w = find_wall(f, [ray(f, (1, k))])
            assert intersection_number(-canonical_divisor(f), w) == 2


@pytest.mark.parametrize("fan", CORPUS_FANS, ids=lambda f: str(f.labels))
def test_picard_rank_is_stage_count(fan):
    stages = len({lab[0] for lab in fan.labels})
    assert picard_rank(fan) == stages
    assert len(divisor_class(ray_divisor(fan, 0)).coords) == stages


def test_principal_divisors_are_trivial():
    f = CORPUS_FANS[8]
    assert divisor_class(principal_divisor(f, [1, -2, 5])).is_zero()
    assert not divisor_class(ray_divisor(f, 0)).is_zero()


# --- walls ----------------------------------------------------------------------

def test_p2_walls(p2):
    ws = walls(p2)
    assert len(ws) == 3
    for w in ws:
        assert [b for _, b in w.relation] == [1]
        assert extremal_length(p2, w) == 3


@pytest.mark.parametrize("l", [0, 1, 2, 3, 7])
def test_hirzebruch_section_relation(l):
    f = hirzebruch(l)
    assert len(walls(f)) == 4
    s = ray(f, (2, 1))
    w = find_wall(f, [s])
    # u_1^1 + u_1^0 + b u_2^1 = 0 gives b = -l, the self-intersection of s
    assert w.b(s) == -l
    assert intersection_number(ray_divisor(f, s), w) == -l
    assert intersection_number(-canonical_divisor(f), w) == 2 - l


def test_product_has_two_curve_classes():
    f = product(projective_space(1), projective_space(1))
    ws = walls(f)
    assert len(ws) == 4
    assert len({curve_vector(f, w) for w in ws}) == 2


@pytest.mark.parametrize("fan", CORPUS_FANS, ids=lambda f: str(f.labels))
def test_wall_relations_hold(fan):
    for w in walls(fan):
        total = [a + b for a, b in zip(fan.rays[w.v], fan.rays[w.v_prime])]
        for r, b in w.relation:
            total = [t + b * x for t, x in zip(total, fan.rays[r])]
        assert not any(total)


# --- intersection numbers ---------------------------------------------------------

@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_blowup_intersections(n):
    f, E, Ds, _ = blowup(n)
    K = canonical_divisor(f)
    L = -K - boundary_divisor(f, [E] + Ds)
    fibres, lines = blowup_curves(n)
    assert fibres and lines
    for w in fibres:
        assert intersection_number(K, w) == -2
        assert intersection_number(L, w) == 1
    for w in lines:
        assert intersection_number(K, w) == -(n - 1)
        assert intersection_number(L, w) == 1


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(CORPUS_FANS), st.data())
def test_intersections_are_class_invariant(fan, data):
    D = divisor(fan, data.draw(st.lists(coeff, min_size=fan.n_rays, max_size=fan.n_rays)))
    m = data.draw(st.lists(st.integers(-5, 5), min_size=fan.ambient_rank, max_size=fan.ambient_rank))
    P = principal_divisor(fan, m)
    for w in walls(fan):
        assert intersection_number(D + P, w) == intersection_number(D, w)
        assert intersection_number(P, w) == 0
    assert divisor_class(D + P) == divisor_class(D)


# --- positivity ------------------------------------------------------------------

def test_p2_two_lines_polarization_ample(p2):
    L = -canonical_divisor(p2) - boundary_divisor(p2, [0, 1])
    assert positivity(L) is Positivity.AMPLE


@pytest.mark.parametrize("l", [1, 2, 3])
def test_positive_section_boundary_not_ample(l):
    f = hirzebruch(l)
    L = -canonical_divisor(f) - boundary_divisor(f, [ray(f, (2, 0)), ray(f, (1, 1))])
    assert positivity(L) is not Positivity.AMPLE
    assert intersection_number(L, find_wall(f, [ray(f, (2, 1))])) <= 0


def test_zero_divisor_nef(p2):
    assert positivity(divisor(p2, [0, 0, 0])) is Positivity.NEF
    assert positivity_oracle(divisor(p2, [0, 0, 0])) is Positivity.NEF


@settings(max_examples=150, deadline=None)
@given(st.sampled_from(CORPUS_FANS), st.data())
def test_positivity_oracle_agrees(fan, data):
    D = divisor(fan, data.draw(st.lists(coeff, min_size=fan.n_rays, max_size=fan.n_rays)))
    assert positivity(D) is positivity_oracle(D)


# --- nef value -------------------------------------------------------------------

def test_nef_value_p2(p2):
    L = -canonical_divisor(p2) - boundary_divisor(p2, [0, 1])
    assert nef_value(p2, L).tau == 3


@pytest.mark.parametrize("l", range(0, 11))
def test_nef_value_hirzebruch(l):
    f = hirzebruch(l)
    L = -canonical_divisor(f) - boundary_divisor(f, [ray(f, (2, 1)), ray(f, (1, 1))])
    assert nef_value(f, L).tau == 2


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_nef_value_blowup(n):
    f, E, Ds, H = blowup(n)
    K = canonical_divisor(f)
    L = -K - boundary_divisor(f, [E] + Ds)
    nv = nef_value(f, L)
    assert nv.tau == max(2, n - 1)
    adjoint = K + nv.tau * L
    if n == 2:
        assert linearly_equivalent(adjoint, H - ray_divisor(f, E))
    elif n == 3:
        assert divisor_class(adjoint).is_zero()
        assert len(nv.trivial_walls) == len(walls(f))
    else:
        assert linearly_equivalent(adjoint, (n - 3) * H)


def _minimal(fan, L, tau):
    K = canonical_divisor(fan)
    eps = Fraction(1, 10**6)
    return positivity(K + tau * L) is not Positivity.NOT_NEF and \
        positivity(K + (tau - eps) * L) is Positivity.NOT_NEF


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(CORPUS_FANS), st.data())
def test_nef_value_is_minimal(fan, data):
    # ample test divisors: -K plus a small nef perturbation along a nef ray divisor
    L = -canonical_divisor(fan)
    extra = data.draw(st.lists(st.integers(0, 2), min_size=fan.n_rays, max_size=fan.n_rays))
    cand = L + divisor(fan, extra)
    if positivity(cand) is Positivity.AMPLE:
        L = cand
    if positivity(L) is not Positivity.AMPLE:
        return
    nv = nef_value(fan, L)
    assert _minimal(fan, L, nv.tau)
    adjoint = canonical_divisor(fan) + nv.tau * L
    assert all(intersection_number(adjoint, w) == 0 for w in nv.trivial_walls)


def test_nef_value_requires_ample():
    f = hirzebruch(2)
    with pytest.raises(DivisorError):
        nef_value(f, ray_divisor(f, 0))


def test_extremal_lengths():
    f = hirzebruch(4)
    assert extremal_length(f, find_wall(f, [ray(f, (1, 1))])) == 2
    with pytest.raises(DivisorError):
        extremal_length(f, find_wall(f, [ray(f, (2, 1))]))
    _, lines = blowup_curves(3)
    f3 = build_fan(blowup_point_spec(3))
    assert all(extremal_length(f3, w) == 2 for w in lines)


# --- restriction -------------------------------------------------------------------

def _degree_on_p1(D):
    assert D.fan.ambient_rank == 1
    return sum(D.coeffs)


def test_self_restriction_of_negative_section():
    for l in range(5):
        f = hirzebruch(l)
        s = ray(f, (2, 1))
        assert _degree_on_p1(restrict_to_stratum(ray_divisor(f, s), [s])) == -l


def test_line_restricted_to_line(p2):
    assert _degree_on_p1(restrict_to_stratum(ray_divisor(p2, 0), [1])) == 1


def test_product_restrictions():
    f = product(projective_space(1), projective_space(1))
    a = f.rays.index((1, 0))
    a_opp = f.rays.index((-1, 0))
    b = f.rays.index((0, 1))
    assert _degree_on_p1(restrict_to_stratum(ray_divisor(f, a), [b])) == 1
    assert _degree_on_p1(restrict_to_stratum(ray_divisor(f, a), [a])) == 0
    assert _degree_on_p1(restrict_to_stratum(ray_divisor(f, a_opp), [a])) == 0


def test_restriction_rejects_non_cone():
    f = hirzebruch(1)
    with pytest.raises(Exception):
        restrict_to_stratum(ray_divisor(f, 0), [ray(f, (1, 0)), ray(f, (1, 1))])


def _compatible(fan, D, tau):
    star = star_fan(fan, tau)
    R = restrict_to_stratum(D, tau)
    back = {s: r for r, s in star.ray_map.items()}
    for w in walls(star.fan):
        ambient = find_wall(fan, as_cone(list(tau) + [back[i] for i in w.cone]))
        if intersection_number(R, w) != intersection_number(D, ambient):
            return False
    return True


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([f for f in CORPUS_FANS if f.ambient_rank >= 2]), st.data())
def test_restriction_wall_compatibility(fan, data):
    D = divisor(fan, data.draw(st.lists(coeff, min_size=fan.n_rays, max_size=fan.n_rays)))
    rng = random.Random(data.draw(st.integers(0, 10**6)))
    sigma = rng.choice(fan.max_cones)
    k = rng.randint(1, fan.ambient_rank - 1)
    tau = tuple(sorted(rng.sample(sigma, k)))
    assert _compatible(fan, D, tau)


# --- report ------------------------------------------------------------------------

def test_intersection_table_hirzebruch():
    f = hirzebruch(1)
    t = intersection_table(f)
    assert t["picard_rank"] == 2
    assert len(t["walls"]) == 4 and len(t["matrix"]) == 2
    text = format_intersection_table(f)
    assert text.splitlines()[0] == "picard_rank 2"
    assert format_intersection_table(f) == text
