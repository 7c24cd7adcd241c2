import dataclasses
import random

import pytest

from rationalcons.adversary import ce_fixture, make_plan
from rationalcons.consistency import (REPLAY_CACHE, ReplayCache, check_consistency, reconstruct_pattern,
                                      replay)
from rationalcons.core import (NEWEPOCH, NEWEPOCH2, RAND_NEWEPOCH2, TOP, CrashSpec, canonicalize,
                               failure_free, symbolic_tops)
from rationalcons.msggraph import NS, S, GraphView, MsgGraph
from rationalcons.protocols import AgentMachine, assemble
from rationalcons.simnet import RoundEngine
from rationalcons.verify import run_fixture, run_plan

from conftest import random_pattern


def graph(owner, n, labels, as_of):
    g = MsgGraph(owner, n)
    g.labels = dict(labels)
    g.as_of = as_of
    for (a, _, r), lv in labels.items():
        if lv == NS:
            g.min_ns[a] = min(r, g.min_ns.get(a, r))
    return g


# ---------------------------------------------------------------- reconstruction

def test_failure_free_run_reconstructs_failure_free():
    # stop before agent 1 terminates, which would look like a crash
    _, eng = run_plan(NEWEPOCH, failure_free(4, 2), symbolic_tops(4), 2)
    for m in eng.machines.values():
        F, why = reconstruct_pattern(m.graph, 2)
        assert F is not None and F.crashes == () and why == ""


def test_reconstruction_reads_crash_round_and_receivers():
    g = graph(3, 4, {(1, 2, 1): NS, (1, 3, 1): S, (1, 4, 1): S}, 2)
    F, _ = reconstruct_pattern(g, 2)
    assert F.crash_of(1) == CrashSpec(1, frozenset({3, 4}))


def test_sent_after_not_sent_is_rejected():
    g = graph(3, 3, {(1, 2, 1): NS, (1, 3, 2): S}, 2)
    F, why = reconstruct_pattern(g, 2)
    assert F is None and "silent in round 1 but heard in round 2" in why


def test_too_many_apparent_crashes():
    g = graph(3, 4, {(1, 2, 1): NS, (2, 3, 1): NS}, 1)
    F, why = reconstruct_pattern(g, 1)
    assert F is None and "exceed f=1" in why
    assert reconstruct_pattern(g, 2)[0] is not None


def test_pretended_crash_is_caught_by_the_crash_count():
    # agent 1 really crashes, agent 2 goes quiet in round 2: two crashes with f=1
    plan = make_plan("quiet", {2}, {2: ("pretend_crash", {"round": 2})})
    t, _ = run_plan(NEWEPOCH, canonicalize({1: (1, set())}, 3, 1), symbolic_tops(3), 10, plans=plan)
    o = t.outcomes[3]
    assert o.decision is TOP and "2 apparent crashes exceed f=1" in o.top_reason


# ---------------------------------------------------------------- replay

@pytest.mark.parametrize("variant", [NEWEPOCH, NEWEPOCH2, RAND_NEWEPOCH2])
def test_honest_runs_never_punish(variant):
    rng = random.Random(5)
    for i in range(40):
        F = random_pattern(rng, 4, 3, 8)
        t, eng = run_plan(variant, F, symbolic_tops(4), 3 * 3 + 6, seed=i)
        assert not any(o.decision is TOP for o in t.outcomes.values()), F.describe()
        # and a fresh check on the final state agrees
        for m in eng.machines.values():
            if m.round and not F.crash_round(m.agent):
                assert check_consistency(m, ReplayCache()).ok


def test_replay_reproduces_own_history():
    F = canonicalize({2: (2, {3})}, 4, 2)
    _, eng = run_plan(NEWEPOCH2, F, symbolic_tops(4), 12)
    m = eng.machines[4]
    steps = replay(NEWEPOCH2, 4, 2, F, m.round, cache=ReplayCache())
    for r, st in enumerate(steps, start=1):
        sim = st.rows[4]
        real = m.mhist[r - 1]
        assert sim.keys() == real.keys()
        assert all(sim[j].graph.labels == real[j].graph.labels for j in real)


def test_replay_cache_hits_and_evicts():
    cache = ReplayCache(capacity=3)
    F = failure_free(3, 1)
    replay(NEWEPOCH, 3, 1, F, 4, cache=cache)
    misses = cache.misses
    again = replay(NEWEPOCH, 3, 1, F, 4, cache=cache)
    assert cache.misses == misses and len(again) == 4
    cache.clear()
    assert cache.get((NEWEPOCH.name, 3, 1, 1, F.prefix(1))) is None
    assert REPLAY_CACHE is not cache


class LabelHider(AgentMachine):
    """Honest except that from `start` on it leaves one sent label out."""

    hide = (1, 3, 1)
    start = 3

    def step_send(self):
        out = super().step_send()
        if self.round + 1 < self.start:
            return out
        res = {}
        for j, p in out.items():
            labels = {m: lv for m, lv in p.graph.labels.items() if m != self.hide}
            res[j] = dataclasses.replace(p, graph=GraphView(p.graph.owner, p.graph.as_of, labels, p.graph.tags))
        return res


def test_hidden_label_is_punished():
    ms = assemble(NEWEPOCH, 4, 2, (), tops=symbolic_tops(4))
    cheat = LabelHider(2, 4, 2, NEWEPOCH, ms[1].top, ms[1].domain_size)
    cheat.check_consistency = False
    ms[1] = cheat
    F = canonicalize({1: (1, {3})}, 4, 2)  # keeps everybody busy past round 2
    eng = RoundEngine(ms, 4, 2, 8, colluders={2})
    t = eng.run(F)
    punished = [a for a in (3, 4) if t.outcomes[a].decision is TOP]
    assert punished and all("labels differ" in t.outcomes[a].top_reason for a in punished)
    assert all(t.outcomes[a].decide_round == 3 for a in punished)


def test_faked_receipt_under_random_tags():
    fx = ce_fixture("CE2")
    t, _ = run_fixture(fx, seed=0, variant=fx.alt_variant)
    o = t.outcomes[3]
    assert o.decision is TOP and o.top_reason.startswith("tag conflict")
    # the same cheat is invisible without tags
    t, _ = run_fixture(fx, seed=0)
    assert not any(o.decision is TOP for o in t.outcomes.values())
