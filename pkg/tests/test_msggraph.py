import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rationalcons import protocols
from rationalcons.core import NEWEPOCH, NEWEPOCH2, RAND_NEWEPOCH2, canonicalize, symbolic_tops
from rationalcons.msggraph import (NK, NS, S, U, GraphView, MsgGraph, NegativeRound, NotAChainStart,
                                   apply_labeling_closure, decode_view, encode_view, merge_tags,
                                   message_chains, outgoing_view)
from rationalcons.verify import run_plan

from conftest import patterns, random_pattern


# ---------------------------------------------------------------- oracles

def brute_chains(labels, m, r_now, n):
    """Every sequence satisfying the chain definition, found by filtering
    all sequences of messages with consecutive rounds."""
    by_round = {r: [(p, q, r) for p in range(1, n + 1) for q in range(1, n + 1) if p != q]
                for r in range(m[2], r_now + 1)}
    out = set()
    for length in range(1, r_now - m[2] + 2):
        rounds = range(m[2] + 1, m[2] + length)
        for tail in itertools.product(*[by_round[r] for r in rounds]):
            seq = (m,) + tail
            ok = True
            for a, b in zip(seq, seq[1:]):
                if b[0] not in (a[0], a[1]):
                    ok = False
                    break
            if not ok or any(labels.get(x, U) != U for x in seq[:-1]):
                continue
            last = seq[-1]
            if last[2] == r_now or labels.get(last, U) != U:
                out.add(seq)
    return out


def naive_closure(prev: MsgGraph, received: dict, live, k: int, rng: random.Random) -> dict:
    """Apply one rule to one message at a time, in random order, until
    nothing changes. Returns the final label map."""
    n, me = prev.n, prev.owner
    lab = dict(prev.labels)
    live = set(live)
    msgs = [(p, q, r) for r in range(1, k + 1) for p in range(1, n + 1) for q in range(1, n + 1) if p != q]

    def rules(m):
        p, q, r = m
        out = []
        if q == me and r == k and p in live:
            out.append(S)
        if p == me:
            out.append(S)
        if any(g.labels.get(m) == S for g in received.values()):
            out.append(S)
        if q == me and r == k and p not in live:
            out.append(NS)
        if r > 1 and any(lab.get((p, j, r - 1)) == NS for j in range(1, n + 1) if j != p):
            out.append(NS)
        if any(g.labels.get(m) == NS for g in received.values()):
            out.append(NS)
        prev_ok = r == 1 or all(lab.get((p, j, r - 1)) in (S, NK) for j in range(1, n + 1) if j != p)
        if prev_ok:
            chains = brute_chains(lab, m, k, n)
            if chains and all(lab.get(c[-1], U) in (NS, NK) for c in chains):
                out.append(NK)
        return out

    while True:
        cands = [(m, lv) for m in msgs if m not in lab for lv in rules(m)]
        if not cands:
            return lab
        m, lv = rng.choice(cands)
        lab[m] = lv


def capture_closures(variant, F, horizon, monkeypatch, seed=0):
    seen = []
    real = protocols.apply_labeling_closure

    def spy(g, received, live, k, own_sent=None):
        res = real(g, received, live, k, own_sent)
        seen.append((g.copy(), dict(received), frozenset(live), k, res))
        return res

    monkeypatch.setattr(protocols, "apply_labeling_closure", spy)
    run_plan(variant, F, symbolic_tops(F.n), horizon, seed)
    monkeypatch.undo()
    return seen


# ---------------------------------------------------------------- chains

def test_chain_of_current_round_message_is_itself():
    g = MsgGraph(1, 4)
    assert message_chains(g, (2, 3, 3), 3) == [((2, 3, 3),)]


def test_chain_argument_checks():
    g = MsgGraph(1, 3)
    with pytest.raises(NegativeRound):
        message_chains(g, (1, 2, 0), 2)
    with pytest.raises(NotAChainStart):
        message_chains(g, (1, 2, 3), 2)


@given(st.integers(0, 10_000), st.integers(3, 4), st.integers(1, 3))
def test_chains_match_brute_force(seed, n, depth):
    rng = random.Random(seed)
    r_now = 1 + depth
    labels = {}
    for r in range(1, r_now + 1):
        for p in range(1, n + 1):
            for q in range(1, n + 1):
                if p != q and rng.random() < 0.4:
                    labels[(p, q, r)] = rng.choice([S, NS, NK])
    g = MsgGraph(1, n)
    g.labels = labels
    p = rng.randint(1, n)
    m = (p, rng.choice([x for x in range(1, n + 1) if x != p]), 1)
    labels.pop(m, None)
    got = set(message_chains(g, m, r_now))
    assert got == brute_chains(labels, m, r_now, n)


def staggered_pattern():
    # 1 misses 2 and 4 in round 1, 2 misses 4 in round 2, 3 misses 4 in round 3
    return canonicalize({1: (1, {3}), 2: (2, {1, 3}), 3: (3, {1, 2})}, 4, 3)


def test_staggered_example_labels_never_known():
    t, eng = run_plan(NEWEPOCH, staggered_pattern(), symbolic_tops(4), 4, trace=True)
    # end of round 3: 3 may still have reached 1 or 2, so one chain is open
    g3 = eng.trace[4][2].labels
    assert (1, 2, 1) not in g3 and (3, 1, 3) not in g3 and g3[(3, 4, 3)] == NS
    g = MsgGraph(4, 4)
    g.labels = g3
    chains = message_chains(g, (1, 2, 1), 3)
    assert ((1, 2, 1), (2, 3, 2), (3, 1, 3)) in chains
    # one round later every chain ends in a lost message
    g4 = eng.trace[4][3].labels
    assert g4[(1, 2, 1)] == NK
    g.labels = {m: lv for m, lv in g4.items() if m != (1, 2, 1)}
    chains = message_chains(g, (1, 2, 1), 4)
    assert chains and all(g.labels.get(c[-1]) in (NS, NK) for c in chains)
    # so 4 moves straight from 1 to itself while 3 had already picked 2
    assert [d for d, _ in eng.trace[4][3].chain] == [1, 4]
    assert [d for d, _ in eng.trace[3][1].chain] == [1, 2]


# ---------------------------------------------------------------- closure

def test_failure_free_round_two_labels_round_one_sent():
    t, eng = run_plan(NEWEPOCH, canonicalize({}, 4, 2), symbolic_tops(4), 2, trace=True)
    for a in range(1, 5):
        lab = eng.trace[a][1].labels
        assert all(lab[(p, q, 1)] == S for p in range(1, 5) for q in range(1, 5) if p != q)


def test_own_receipts_and_sends():
    g = MsgGraph(2, 3)
    res = apply_labeling_closure(g, {1: GraphView(1, 0, {})}, {1}, 1)
    lab = res.graph.labels
    assert lab[(1, 2, 1)] == S and lab[(3, 2, 1)] == NS
    assert lab[(2, 1, 1)] == S and lab[(2, 3, 1)] == S
    assert res.live == frozenset({1})


def test_closure_round_must_follow_graph():
    with pytest.raises(ValueError):
        apply_labeling_closure(MsgGraph(1, 3), {}, set(), 2)


def test_conflicting_peers_are_reported():
    g = MsgGraph(3, 3)
    g.as_of = 1
    g.labels = {(1, 3, 1): S, (2, 3, 1): S, (3, 1, 1): S, (3, 2, 1): S}
    res = apply_labeling_closure(g, {1: GraphView(1, 1, {(2, 1, 1): S}), 2: GraphView(2, 1, {(2, 1, 1): NS})},
                                 {1, 2}, 2)
    assert [c.msg for c in res.conflicts] == [(2, 1, 1)]


@pytest.mark.parametrize("variant", [NEWEPOCH, NEWEPOCH2, RAND_NEWEPOCH2])
def test_closure_equals_naive_oracle(variant, monkeypatch):
    rng = random.Random(11)
    checked = 0
    for _ in range(12):
        F = random_pattern(rng, 4, 3, 4)
        for prev, received, live, k, res in capture_closures(variant, F, 5, monkeypatch):
            for order_seed in range(3):
                want = naive_closure(prev, received, live, k, random.Random(order_seed))
                assert res.graph.labels == want, (F.describe(), prev.owner, k)
            checked += 1
    assert checked > 50


@settings(max_examples=25)
@given(patterns(4, 3, 4), st.integers(0, 3))
def test_closure_oracle_property(F, order_seed):
    import _pytest.monkeypatch

    mp = _pytest.monkeypatch.MonkeyPatch()
    try:
        for prev, received, live, k, res in capture_closures(NEWEPOCH, F, 5, mp):
            assert res.graph.labels == naive_closure(prev, received, live, k, random.Random(order_seed))
    finally:
        mp.undo()


# ---------------------------------------------------------------- tags and wire format

def test_merge_tags_direct_and_peer():
    g = MsgGraph(2, 4, with_tags=True)
    assert merge_tags(g, {}, {}) == [] and g.tags == {}
    c = merge_tags(g, {(1, 2, 3): 77}, {4: GraphView(4, 2, {}, {(3, 4, 2): 5})})
    assert c == [] and g.tags == {(1, 2, 3): 77, (3, 4, 2): 5}
    # the same tag from two peers is fine, a different one is a conflict
    assert merge_tags(g, {}, {1: GraphView(1, 2, {}, {(3, 4, 2): 5})}) == []
    c = merge_tags(g, {}, {1: GraphView(1, 2, {}, {(3, 4, 2): 6})})
    assert len(c) == 1 and c[0].msg == (3, 4, 2)


def test_merge_tags_without_tag_support():
    g = MsgGraph(1, 3)
    assert merge_tags(g, {(2, 1, 1): 3}, {}) == [] and g.tags is None


def test_outgoing_view_strips_own_tags():
    g = MsgGraph(1, 3, with_tags=True)
    g.tags = {(1, 2, 1): 9, (1, 3, 1): 8}
    assert outgoing_view(g).tags == {}
    h = MsgGraph(2, 3, with_tags=True)  # the receiver forwards what it got
    h.tags = {(1, 2, 1): 9, (2, 3, 1): 4}
    assert outgoing_view(h).tags == {(1, 2, 1): 9}
    d = MsgGraph(1, 3)
    d.labels = {(1, 2, 1): S}
    v = outgoing_view(d)
    assert v.tags is None and v.labels == d.labels


def test_randomized_honest_runs_have_no_tag_conflicts():
    rng = random.Random(3)
    for i in range(40):
        F = random_pattern(rng, 4, 3, 6)
        t, _ = run_plan(RAND_NEWEPOCH2, F, symbolic_tops(4), 15, seed=i)
        assert all(o.top_reason is None for o in t.outcomes.values())


@given(st.dictionaries(st.tuples(st.integers(1, 5), st.integers(1, 5), st.integers(1, 9)),
                       st.sampled_from([S, NS, NK]), max_size=30),
       st.one_of(st.none(), st.dictionaries(st.tuples(st.integers(1, 5), st.integers(1, 5), st.integers(1, 9)),
                                            st.one_of(st.none(), st.integers(0, 2**64 - 1)), max_size=10)))
def test_view_encoding_roundtrip(labels, tags):
    v = GraphView(3, 9, labels, tags)
    data = encode_view(v)
    back, off = decode_view(data)
    assert off == len(data)
    assert back == v
    assert encode_view(back) == data
