import json
from fractions import Fraction
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from bottfano.bott import blowup_point_boundary, blowup_point_spec, build_fan
from bottfano.divisors import canonical_divisor, divisor_class, picard_rank
from bottfano.fan import projective_space
from bottfano.logfano import (
    ClassificationLimitError,
    LogFanoPair,
    PairError,
    bott_witness,
    candidate_count,
    classification_table,
    classification_to_json,
    classify,
    complement,
    complexity,
    dual_complex,
    free_lines,
    is_log_fano,
    is_maximal,
    maximality_conditions,
    pair_certificate,
    pairs_isomorphic,
    star_pair,
    stratum_lines,
    verify_structure,
)

from conftest import CORPUS, hirzebruch, ray
from oracles import oracle_classification, oracle_isomorphic, oracle_log_fano

GOLDEN = Path(__file__).parent / "golden"


def hirz_pair(l):
    f = hirzebruch(l)
    return LogFanoPair.from_labels(f, [(2, 1), (1, 1)])


def p2_pair():
    return LogFanoPair(projective_space(2), (0, 1))


# --- pairs and maximality ---------------------------------------------------------

def test_pair_validation(p2):
    with pytest.raises(PairError):
        LogFanoPair(p2, (0, 0))
    with pytest.raises(PairError):
        LogFanoPair(p2, (0, 7))
    assert LogFanoPair(p2, (1, 0)).boundary == (0, 1)


def test_surface_examples():
    assert is_log_fano(projective_space(2), (0, 1))
    assert is_maximal(p2_pair())
    for l in range(6):
        assert is_log_fano(hirz_pair(l).fan, hirz_pair(l).boundary)
    f = hirzebruch(2)
    assert not is_log_fano(f, [ray(f, (2, 0)), ray(f, (1, 1))])


def test_maximality_conditions(p2):
    assert maximality_conditions(LogFanoPair(p2, (0,))) == {"n_components": False, "zero_dim_stratum": False}
    f = hirzebruch(1)
    # two fibres: two components, no common point
    fibres = LogFanoPair.from_labels(f, [(1, 0), (1, 1)])
    assert maximality_conditions(fibres) == {"n_components": True, "zero_dim_stratum": False}


def test_dual_complex_is_simplex():
    dc = dual_complex(p2_pair())
    assert dc.is_simplex and dc.dimension == 1
    fibres = LogFanoPair.from_labels(hirzebruch(1), [(1, 0), (1, 1)])
    assert not dual_complex(fibres).is_simplex


def test_stratum_lines_on_hirzebruch():
    for l in range(5):
        pair = hirz_pair(l)
        lines = stratum_lines(pair)
        assert len(lines) == 2
        assert all(x.L_degree == 1 for x in lines)
        by_omitted = {pair.fan.label_of(x.omitted): x for x in lines}
        # the fibre (cut out by the section) has degree 1 on the section
        assert by_omitted[(1, 1)].degrees[0][1] == -l
        assert by_omitted[(2, 1)].is_free


def test_complement_and_complexity():
    pair = hirz_pair(3)
    gamma = complement(pair)
    assert len(gamma.support) == picard_rank(pair.fan)
    assert complexity(pair.fan, pair.delta + gamma) == 0
    assert complexity(pair.fan, pair.delta) == 2
    assert complexity(pair.fan, [Fraction(1, 2)] * 4) == 2


def test_lines_need_maximal_pair(p2):
    with pytest.raises(PairError):
        stratum_lines(LogFanoPair(p2, (0,)))


def test_star_pair_is_log_fano():
    spec = blowup_point_spec(4)
    f = build_fan(spec)
    pair = LogFanoPair.from_labels(f, blowup_point_boundary(4))
    for b in pair.boundary:
        sp = star_pair(pair, [b])
        assert sp.dimension == 3 and len(sp.boundary) == 3
        assert is_log_fano(sp.fan, sp.boundary)
    with pytest.raises(PairError):
        star_pair(pair, [next(i for i in range(f.n_rays) if i not in pair.boundary)])


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_blowup_pair_structure(n):
    f = build_fan(blowup_point_spec(n))
    pair = LogFanoPair.from_labels(f, blowup_point_boundary(n))
    rep = verify_structure(pair)
    assert rep.ok, rep.failed()
    assert rep.witnesses["tau"] == str(max(2, n - 1))


@pytest.mark.parametrize("pair", [hirz_pair(4), p2_pair()], ids=["F4", "P2"])
def test_bott_witness_rebuilds_fan(pair):
    bw = bott_witness(pair)
    assert bw is not None and bw.spec.stages == picard_rank(pair.fan)
    target = build_fan(bw.spec)
    for i, v in enumerate(pair.fan.rays):
        image = tuple(sum(m * x for m, x in zip(row, v)) for row in bw.matrix)
        assert target.rays[target.index_of(bw.labels[i])] == image


def test_structure_report_on_non_log_fano():
    f = hirzebruch(2)
    rep = verify_structure(LogFanoPair.from_labels(f, [(2, 0), (1, 1)]))
    assert not rep.ok
    assert rep.witnesses["failing_walls"] == [[(2, 1)]]


# --- invariants over the corpus ----------------------------------------------------

def _maximal_lf_pairs():
    out = []
    for spec in CORPUS:
        f = build_fan(spec)
        for cone in f.max_cones:
            if is_log_fano(f, cone):
                out.append(LogFanoPair(f, cone))
    return out


MAXIMAL = _maximal_lf_pairs()


def test_corpus_has_pairs():
    assert len(MAXIMAL) >= 10


@pytest.mark.parametrize("pair", MAXIMAL, ids=lambda p: f"{p.fan.n_rays}r{p.boundary}")
def test_corpus_structure(pair):
    rep = verify_structure(pair)
    assert rep.ok, rep.failed()
    # K + Delta + Gamma ~ 0
    total = canonical_divisor(pair.fan) + pair.delta + complement(pair)
    assert divisor_class(total).is_zero()
    assert free_lines(pair)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(CORPUS), st.data())
def test_log_fano_matches_oracle(spec, data):
    f = build_fan(spec)
    boundary = data.draw(st.sets(st.integers(0, f.n_rays - 1), max_size=f.ambient_rank))
    assert is_log_fano(f, boundary) == oracle_log_fano(f, boundary)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(MAXIMAL))
def test_strata_of_maximal_pairs_are_maximal(pair):
    for b in pair.boundary:
        sp = star_pair(pair, [b])
        assert is_log_fano(sp.fan, sp.boundary)
        assert maximality_conditions(sp)["zero_dim_stratum"]


# --- classification -----------------------------------------------------------------

def test_classify_curves():
    entries = classify(1, 5)
    assert len(entries) == 1
    assert entries[0].spec.dims == (1,) and entries[0].rho == 1


def test_classify_surfaces_identified():
    entries = classify(2, 10)
    assert len(entries) == 12
    p2 = [e for e in entries if e.rho == 1]
    assert len(p2) == 1 and p2[0].tau == 3
    hirz = [e for e in entries if e.rho == 2]
    found = set()
    for e in hirz:
        assert e.tau == 2
        matches = [a for a in range(11) if oracle_isomorphic(
            e.pair.fan, e.pair.boundary, hirz_pair(a).fan, hirz_pair(a).boundary)]
        assert len(matches) == 1
        found.add(matches[0])
    assert found == set(range(11))


@pytest.mark.parametrize("n,bound", [(2, 10), (3, 1), (3, 2)])
def test_classify_matches_oracle(n, bound):
    entries = classify(n, bound, verify=False)
    oracle = oracle_classification(n, bound)
    assert len(entries) == len(oracle)
    assert sorted(e.presentations for e in entries) == sorted(len(c) for c in oracle)
    for e in entries:
        p = e.pair
        owners = [c for c in oracle if oracle_isomorphic(p.fan, p.boundary, c[0][0], c[0][1])]
        assert len(owners) == 1


def test_classify_counts_grow_with_bound():
    counts = [len(classify(2, a, verify=False)) for a in range(4)]
    assert counts == [2, 3, 4, 5]
    # untwisted threefolds: P^3, P^2 x P^1, (P^1)^3
    assert len(oracle_classification(3, 0)) == 3
    assert [len(classify(3, a, verify=False)) for a in range(3)] == [3, 12, 33]


@pytest.mark.parametrize("n,bound", [(2, 10), (3, 2)])
def test_golden_classification(n, bound):
    expected = (GOLDEN / f"classify_{n}_{bound}.json").read_text()
    assert classification_to_json(n, bound, classify(n, bound)) == expected
    data = json.loads(expected)
    assert all(e["structure_report"]["ok"] for e in data["entries"])


def test_classification_entries_are_distinct():
    entries = classify(3, 2, verify=False)
    pairs = [e.pair for e in entries]
    for i in range(len(pairs)):
        for j in range(i + 1, len(pairs)):
            assert pairs_isomorphic(pairs[i], pairs[j]) is None


def test_classify_parallel_matches_serial():
    a = classification_to_json(3, 1, classify(3, 1))
    b = classification_to_json(3, 1, classify(3, 1, workers=2))
    assert a == b


def test_classify_limit():
    assert candidate_count(2, 10) == 3 + 21 * 4
    with pytest.raises(ClassificationLimitError):
        classify(4, 5, max_candidates=1000)
    with pytest.raises(ValueError):
        classify(0, 1)


def test_classification_table_lists_entries():
    text = classification_table(classify(2, 1))
    lines = text.splitlines()
    assert lines[0].split()[:3] == ["#", "dims", "twists"]
    assert len(lines) == 4
    assert all(line.rstrip().endswith("yes") for line in lines[1:])


def test_pair_certificate_is_json():
    cert = pair_certificate(hirz_pair(2))
    json.dumps(cert)
    assert cert["log_fano"] and cert["maximal"] and cert["rho"] == 2
