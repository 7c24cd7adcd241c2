import itertools
import random

import pytest

from rationalcons.adversary import ce_fixture, make_plan
from rationalcons.core import (MINUS_INF, NEWEPOCH, NEWEPOCH2, RAND_NEWEPOCH2, canonicalize,
                               enumerate_failure_patterns, failure_free, make_types, symbolic_tops)
from rationalcons.verify import (InvalidRange, check_benefit, check_consensus, check_legality, concrete_benefit,
                                 explore, find_dictator, legal_with_benefit, make_engine, resilience_sweep,
                                 run_fixture, run_plan, sweep_runs, utility)

from conftest import random_pattern


def behaviour(t):
    """What a run looks like from outside: who heard whom when, and who decided what."""
    heard = tuple((r, s, q) for r, recs in enumerate(t.rounds, 1) for s, q, _ in sorted(recs, key=lambda x: x[:2]))
    return heard, tuple(sorted((a, repr(o.decision), o.decide_round) for a, o in t.outcomes.items()))


# ---------------------------------------------------------------- consensus and utility

def test_consensus_report_on_honest_run():
    t, _ = run_plan(NEWEPOCH, failure_free(3, 1), (0, 1, 2), 8)
    rep = check_consensus(t, (0, 1, 2))
    assert rep.ok and rep.violations == []


def test_consensus_report_failures():
    fx = ce_fixture("Fig1b")
    t, _ = run_fixture(fx)
    rep = check_consensus(t, fx.tops)
    assert not rep.agreement and any("disagreement" in v for v in rep.violations)
    t, _ = run_plan(NEWEPOCH2, failure_free(4, 2), symbolic_tops(4), 2)
    rep = check_consensus(t, symbolic_tops(4))
    assert not rep.termination and "correct agent 2 never decided" in rep.violations
    fx = ce_fixture("CE2")
    t, _ = run_fixture(fx, variant=fx.alt_variant)
    rep = check_consensus(t, fx.tops)
    assert not rep.top_free and not rep.ok


def test_validity_needs_somebodys_top():
    t, _ = run_plan(NEWEPOCH, failure_free(3, 1), (0, 1, 2), 8)
    rep = check_consensus(t, (1, 1, 2))
    assert not rep.validity


def test_utility_rules():
    types = make_types([(2, 0, 1), (0, 1, 2), (1, 2, 0)])
    tops = (2, 0, 1)
    t, _ = run_plan(NEWEPOCH, canonicalize({1: (1, set())}, 3, 1), tops, 8)  # agent 2 becomes dictator
    assert t.decisions()[2] == 0
    assert utility(1, t, types) == 0  # crashed
    assert utility(2, t, types) == 3
    assert utility(3, t, types) == 1  # 0 is its last choice
    fx = ce_fixture("Fig1b")
    tb, _ = run_fixture(fx)
    assert utility(2, tb, fx.types) is MINUS_INF


# ---------------------------------------------------------------- exploration

@pytest.mark.parametrize("variant,n,f,crm", [
    (NEWEPOCH, 3, 1, 3), (NEWEPOCH2, 3, 2, 3), (RAND_NEWEPOCH2, 3, 1, 4), (NEWEPOCH, 4, 2, 2),
])
def test_explorer_covers_every_pattern(variant, n, f, crm):
    tops = symbolic_tops(n)
    horizon = 3 * f + 6
    brute = {behaviour(run_plan(variant, F, tops, horizon)[0]) for F in enumerate_failure_patterns(n, f, crm)}
    seen = set()
    explore(make_engine(variant, n, f, tops, horizon), f, crm, lambda e: seen.add(behaviour(e.transcript())))
    assert seen == brute


def test_symbolic_run_stands_for_every_type_vector():
    rng = random.Random(2)
    for _ in range(25):
        F = random_pattern(rng, 3, 2, 5)
        sym, _ = run_plan(NEWEPOCH2, F, symbolic_tops(3), 12)
        for tops in itertools.product(range(3), repeat=3):
            conc, _ = run_plan(NEWEPOCH2, F, tops, 12, domain_size=3)
            image = {a: None if d is None else tops[int(d.token[1:]) - 1] for a, d in sym.decisions().items()}
            assert conc.decisions() == image


def test_sweep_rows_do_not_depend_on_jobs():
    a = sweep_runs(NEWEPOCH, 3, 2, max_crashes=2, crash_round_max=3)
    b = sweep_runs(NEWEPOCH, 3, 2, max_crashes=2, crash_round_max=3, jobs=3)
    assert [(r.pattern, r.ok, r.max_decide) for r in a] == [(r.pattern, r.ok, r.max_decide) for r in b]
    assert all(r.ok for r in a)


def test_scope_cannot_exceed_f():
    with pytest.raises(InvalidRange):
        check_legality(NEWEPOCH, (), 4, 1, max_crashes=2)


# ---------------------------------------------------------------- legality and benefit

def test_empty_plan_is_legal():
    rep = check_legality(NEWEPOCH, (), 4, 2, crash_round_max=3)
    assert rep.legal and rep.counterexample is None and rep.patterns_checked > 100


def test_pure_colluders_change_nothing():
    plan = make_plan("noop", {2, 3})
    legal, beneficial, leg, ben = legal_with_benefit(NEWEPOCH, plan, 4, 2, crash_round_max=3)
    assert legal and beneficial is False and leg.deviating_runs == 0


def test_pretended_crash_is_illegal_with_f_below_n_minus_one():
    plan = make_plan("quiet", {2}, {2: ("pretend_crash", {"trigger": "round", "round": 1})})
    rep = check_legality(NEWEPOCH, plan, 4, 2, prefer=lambda r: any("exceed f" in v for v in r.violations))
    assert not rep.legal
    F, crep = rep.counterexample
    assert any("decided TOP (3 apparent crashes exceed f=2)" in v for v in crep.violations)
    # the counterexample replays
    t, _ = run_plan(NEWEPOCH, F, symbolic_tops(4), rep.horizon, plans=plan)
    assert check_consensus(t, symbolic_tops(4)).violations == crep.violations


def test_hints_are_tried_first():
    plan = make_plan("quiet", {2}, {2: ("pretend_crash", {"trigger": "round", "round": 1})})
    hint = canonicalize({1: (1, set()), 3: (2, set())}, 4, 2)
    rep = check_legality(NEWEPOCH, plan, 4, 2, hints=[hint])
    assert not rep.legal and rep.patterns_checked == 1 and rep.counterexample[0] == hint


def test_ce2_is_legal_and_beneficial():
    fx = ce_fixture("CE2")
    legal, beneficial, leg, ben = legal_with_benefit(fx.variant, fx.plans, fx.n, fx.f, fx.horizon,
                                                     **fx.sweep, hints=[fx.pattern])
    assert legal and beneficial
    w = ben.witness
    assert w["agent"] in fx.colluders and w["after"] > w["before"]
    utils, _, _ = concrete_benefit(fx.variant, w["pattern"], w["types"], fx.plans, fx.horizon)
    assert utils[w["agent"]] == (w["before"], w["after"])


def test_benefit_witness_uses_fixture_types():
    fx = ce_fixture("ImpDemo")
    utils, tb, tc = concrete_benefit(fx.variant, fx.pattern, fx.types, fx.plans, fx.horizon)
    before, after = utils[2]
    assert after > before


def test_no_benefit_from_a_cheat_that_never_fires():
    plan = make_plan("late", {3}, {3: ("pretend_crash", {"trigger": "round", "round": 30})})
    rep = check_benefit(NEWEPOCH, plan, 4, 2, crash_round_max=3)
    assert not rep.beneficial and rep.witness is None


# ---------------------------------------------------------------- dictators

def test_failure_free_dictator_is_one():
    for variant in (NEWEPOCH, NEWEPOCH2, RAND_NEWEPOCH2):
        assert find_dictator(variant, failure_free(4, 2), 4).dictator == 1


def test_min_id_successor():
    res = find_dictator(NEWEPOCH, canonicalize({1: (1, {2})}, 3, 1), 3, sample_count=27)
    assert res.dictator == 3 and res.runs == 28 and res.witness is None


def test_every_small_pattern_has_a_dictator():
    for F in enumerate_failure_patterns(3, 2, 3):
        res = find_dictator(NEWEPOCH2, F, 3)
        assert res.dictator is not None, F.describe()


def test_single_crash_successor_rule():
    # agent 1 crashes in round 1 and reaches exactly D: the new dictator is the
    # smallest agent outside D
    n = 4
    for k in range(0, n - 1):
        for D in itertools.combinations(range(2, n + 1), k):
            F = canonicalize({1: (1, set(D))}, n, 2)
            want = min(set(range(2, n + 1)) - set(D))
            assert find_dictator(NEWEPOCH, F, n).dictator == want


def test_no_dictator_when_nobody_decides():
    res = find_dictator(NEWEPOCH2, failure_free(4, 2), 4, horizon=1)
    assert res.dictator is None and res.witness is not None


# ---------------------------------------------------------------- resilience

def test_resilience_not_falsified_below_n_minus_one():
    s = resilience_sweep(NEWEPOCH, 2, 2, 4)
    assert s.falsified_by is None and len(s.entries) == 112
    assert "not falsified by catalog" in s.render()


def test_resilience_sweep_reports_the_falsifying_plan():
    fx = ce_fixture("ImpDemo")
    s = resilience_sweep(fx.variant, 2, fx.f, fx.n, fx.plans, fx.horizon, hints=[fx.pattern], **fx.sweep)
    assert s.falsified_by == "ImpDemo"
    assert s.render().endswith("falsified by ImpDemo")
