import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from rationalcons.core import (MINUS_INF, TOP, CrashSpec, InvalidGranularity, InvalidPattern,
                               InvalidPreference, PreferenceOrder, ScenarioError, SymbolicValue,
                               canonicalize, count_failure_patterns, enumerate_failure_patterns,
                               failure_free, join_value, make_types, pattern_from_json, split_value,
                               symbolic_tops, value_bits, variant_by_name)

from conftest import patterns


def test_is_delivered_partial_crash():
    F = canonicalize({1: (2, {2})}, 3, 2)
    assert F.is_delivered(1, 2, 2)
    assert not F.is_delivered(1, 3, 2)
    assert not F.is_delivered(1, 2, 3)
    assert F.is_delivered(1, 3, 1)


def test_failure_free_delivers_everything():
    F = failure_free(4, 2)
    assert all(F.is_delivered(i, j, r) for i in range(1, 5) for j in range(1, 5) for r in range(1, 6))


def test_deliverable_triple_count():
    F = canonicalize({2: (1, set())}, 3, 1)
    triples = [(i, j, r) for r in range(1, 4) for i in range(1, 4) for j in range(1, 4) if i != j]
    assert len(triples) == 18
    assert sum(F.is_delivered(*m) for m in triples if m[0] == 2) == 0
    assert sum(F.is_delivered(*m) for m in triples) == 12


def test_canonicalize_full_delivery_moves_a_round():
    F = canonicalize({1: (2, {2, 3, 4})}, 4, 2)
    assert F.crash_of(1) == CrashSpec(3, frozenset())


def test_canonicalize_keeps_proper_subsets():
    F = canonicalize({1: (2, {2})}, 4, 2)
    assert F.crash_of(1) == CrashSpec(2, frozenset({2}))


def test_canonicalize_rejects_too_many_crashes():
    with pytest.raises(InvalidPattern):
        canonicalize({1: (1, set()), 2: (1, set())}, 4, 1)


@pytest.mark.parametrize("raw", [{0: (1, set())}, {1: (0, set())}, {1: (1, {7})}])
def test_canonicalize_rejects_garbage(raw):
    with pytest.raises(InvalidPattern):
        canonicalize(raw, 3, 2)


@given(patterns(4, 3, 5))
def test_canonicalize_idempotent(F):
    again = canonicalize({a: (c.crash_round, c.delivered) for a, c in F.crashes}, F.n, F.declared_f)
    assert again == F


@given(patterns(4, 3, 5), st.integers(1, 4), st.integers(1, 4), st.integers(1, 7))
def test_missed_send_silences_later_rounds(F, i, j, r):
    if i == j or F.is_delivered(i, j, r):
        return
    for j2 in range(1, 5):
        for r2 in range(r + 1, r + 4):
            assert not F.is_delivered(i, j2, r2)


def test_enumeration_count_small():
    pats = list(enumerate_failure_patterns(3, 1, 2))
    assert len(pats) == 19 == count_failure_patterns(3, 1, 2)
    assert len(set(pats)) == len(pats)
    assert failure_free(3, 1) in pats


def test_enumeration_no_crashes_allowed():
    pats = list(enumerate_failure_patterns(3, 0, 5))
    assert len(pats) == 1 and pats[0].crashes == ()


def test_enumeration_coarse_count():
    assert len(list(enumerate_failure_patterns(4, 2, 1, "coarse"))) == 11


@pytest.mark.parametrize("n,f,h", [(3, 2, 2), (4, 2, 2), (4, 1, 3)])
def test_enumeration_matches_formula_and_contains_coarse(n, f, h):
    fine = list(enumerate_failure_patterns(n, f, h))
    coarse = set(enumerate_failure_patterns(n, f, h, "coarse"))
    assert len(fine) == count_failure_patterns(n, f, h)
    assert coarse <= set(fine)
    # every enumerated pattern is already canonical
    for F in fine[:200]:
        assert canonicalize({a: (c.crash_round, c.delivered) for a, c in F.crashes}, n, f) == F


def test_enumeration_rejects_bad_arguments():
    with pytest.raises(InvalidPattern):
        list(enumerate_failure_patterns(3, 1, 0))
    with pytest.raises(InvalidGranularity):
        list(enumerate_failure_patterns(3, 1, 2, "medium"))


def test_pattern_json_roundtrip():
    F = canonicalize({1: (2, {3}), 4: (1, set())}, 4, 2)
    assert pattern_from_json(F.to_json()) == F
    with pytest.raises(InvalidPattern):
        pattern_from_json({"n": 3})


def test_preferences():
    p = PreferenceOrder((2, 0, 1))
    assert p.top == 2
    assert p.prefers(0, 1) and not p.prefers(1, 2)
    assert p.utility(2) == 3 and p.utility(1) == 1
    with pytest.raises(InvalidPreference):
        PreferenceOrder((0, 0, 1))
    assert [t.top for t in make_types([(1, 0, 2), (0, 1, 2)])] == [1, 0]


@given(st.permutations(range(4)))
def test_utility_strictly_decreases_with_rank(r):
    p = PreferenceOrder(tuple(r))
    us = [p.utility(v) for v in p.ranking]
    assert all(a > b for a, b in zip(us, us[1:]))
    assert all(MINUS_INF < u for u in us)


def test_minus_infinity_sentinel():
    assert MINUS_INF < 0 and MINUS_INF <= MINUS_INF and not MINUS_INF > -10**9
    assert not (MINUS_INF < MINUS_INF)
    assert repr(MINUS_INF) == "-inf"


@pytest.mark.parametrize("m", [3, 4, 5, 8, 9])
def test_value_split_roundtrip(m):
    b = value_bits(m)
    assert b >= 2
    for v in range(m):
        hi, lo = split_value(v, m)
        assert join_value(hi, lo, m) == v


def test_symbolic_values():
    tops = symbolic_tops(5, [{4, 5}])
    assert tops[3] == tops[4] != tops[2]
    assert all(isinstance(t, SymbolicValue) for t in tops)
    hi, lo = split_value(tops[0], 4)
    assert join_value(hi, lo, 4) == tops[0]
    assert TOP != tops[0]


def test_variant_lookup():
    v = variant_by_name("RandNewEpoch2", 16)
    assert v.randomized and v.tag_bits == 16 and v.first_epoch_round == 2
    assert variant_by_name("NewEpoch").first_epoch_round == 1
    with pytest.raises(ScenarioError):
        variant_by_name("Paxos")
    with pytest.raises(ScenarioError):
        variant_by_name("RandNewEpoch2", 0)


@pytest.mark.parametrize("n,f,h", [(3, 1, 2), (3, 2, 2), (4, 2, 1)])
def test_enumeration_against_raw_descriptions(n, f, h):
    # oracle: every raw description (full delivery allowed), canonicalised,
    # kept when it still crashes within the horizon
    def raw_specs(a):
        others = [j for j in range(1, n + 1) if j != a]
        subs = [frozenset(c) for k in range(len(others) + 1) for c in itertools.combinations(others, k)]
        return [(r, d) for r in range(1, h + 1) for d in subs]

    want = set()
    for k in range(f + 1):
        for crashed in itertools.combinations(range(1, n + 1), k):
            for combo in itertools.product(*[raw_specs(a) for a in crashed]):
                F = canonicalize(dict(zip(crashed, combo)), n, max(f, 1))
                if all(c.crash_round <= h for _, c in F.crashes):
                    want.add(F.crashes)
    got = [F.crashes for F in enumerate_failure_patterns(n, f, h)]
    assert len(got) == len(set(got))
    assert set(got) == want
