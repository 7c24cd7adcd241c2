"""Detecting deviations.

At the end of every round an agent rebuilds the failure pattern implied
by its own labels, checks that it is a legal pattern, replays the honest
protocol under it, and compares what it would have received with what it
actually received.

The replay tracks structure only. Which messages exist, their labels,
whether they carry a proposal (and which half), termination, and which
tags they mention never depend on proposal values or tag values, so one
replay serves every agent and every type vector. Tag values are then
checked against the tags the checking agent knows itself.
"""

from __future__ import annotations

import threading
from collections import OrderedDict
from dataclasses import dataclass

from .core import CrashSpec, FailurePattern, ProtocolVariant
from .msggraph import NK, NS, S, MsgGraph


@dataclass(frozen=True)
class Verdict:
    ok: bool
    reason: str = ""
    round: int | None = None


OK = Verdict(True)


def reconstruct_pattern(g: MsgGraph, f: int):
    """Pattern implied by g's labels, or a reason it cannot be one."""
    n, lab = g.n, g.labels
    crashes = []
    for p in range(1, n + 1):
        r0 = g.min_ns.get(p)
        if r0 is None:
            continue
        delivered = frozenset(q for q in range(1, n + 1) if q != p and lab.get((p, q, r0)) != NS)
        crashes.append((p, CrashSpec(r0, delivered)))
    for p, c in crashes:
        for r in range(c.crash_round + 1, g.as_of + 1):
            for q in range(1, n + 1):
                if q != p:
                    lv = lab.get((p, q, r))
                    if lv == S or lv == NK:
                        return None, f"agent {p} silent in round {c.crash_round} but heard in round {r}"
    if len(crashes) > f:
        return None, f"{len(crashes)} apparent crashes exceed f={f}"
    return FailurePattern(n, f, tuple(crashes)), ""


# ---------------------------------------------------------------- replay

class ReplayCache:
    """Honest replay states keyed by the pattern prefix that produced them."""

    def __init__(self, capacity: int = 6000):
        self.capacity = capacity
        self.data: OrderedDict = OrderedDict()
        self.hits = 0
        self.misses = 0
        self.lock = threading.Lock()

    def get(self, key):
        with self.lock:
            v = self.data.get(key)
            if v is not None:
                self.data.move_to_end(key)
                self.hits += 1
            return v

    def put(self, key, value):
        with self.lock:
            self.data[key] = value
            self.data.move_to_end(key)
            if len(self.data) > self.capacity:
                self.data.popitem(last=False)

    def clear(self):
        self.data.clear()
        self.hits = self.misses = 0


REPLAY_CACHE = ReplayCache()


@dataclass
class _Step:
    machines: list  # state after the round
    rows: dict  # receiver -> {sender: payload} for the round
    alive: frozenset  # agents still running after the round


def _initial(variant: ProtocolVariant, n: int, f: int, domain_size: int) -> _Step:
    from .protocols import AgentMachine

    ms = [AgentMachine(i, n, f, variant, None, domain_size, rng=None,
                       check_consistency=False, keep_history=False) for i in range(1, n + 1)]
    return _Step(ms, {}, frozenset(range(1, n + 1)))


def _advance(prev: _Step, F: FailurePattern, r: int) -> _Step:
    ms = [m.clone() for m in prev.machines]
    sends = {}
    for m in ms:
        a = m.agent
        if a in prev.alive and not m.terminated and F.sends_in(a, r):
            sends[a] = m.step_send()
    rows = {}
    alive = set()
    for m in ms:
        a = m.agent
        if a not in prev.alive or m.terminated or not F.receives_in(a, r):
            continue
        row = {}
        for s, out in sends.items():
            p = out.get(a)
            if p is not None and F.is_delivered(s, a, r):
                row[s] = p
        if a in sends:
            m.step_recv(row)
        rows[a] = row
        if not m.terminated:
            alive.add(a)
    return _Step(ms, rows, frozenset(alive))


def replay(variant: ProtocolVariant, n: int, f: int, F: FailurePattern, k: int,
           domain_size: int = 4, cache: ReplayCache | None = None) -> list:
    """Honest value-free replay under F; returns the steps for rounds 1..k."""
    cache = REPLAY_CACHE if cache is None else cache
    base = (variant.name, n, f)
    keys = [base + (r, F.prefix(r)) for r in range(1, k + 1)]
    steps = [None] * (k + 1)
    start = 0
    for r in range(k, 0, -1):
        st = cache.get(keys[r - 1])
        if st is not None:
            steps[r] = st
            start = r
            break
    if start == 0:
        steps[0] = _initial(variant, n, f, domain_size)
    for r in range(start + 1, k + 1):
        cache.misses += 1
        steps[r] = _advance(steps[r - 1], F, r)
        cache.put(keys[r - 1], steps[r])
    for r in range(start - 1, 0, -1):
        st = cache.get(keys[r - 1])
        if st is None:
            # evicted; rebuild the whole prefix
            return _replay_fresh(variant, n, f, F, k, domain_size, cache)
        steps[r] = st
    return steps[1:]


def _replay_fresh(variant, n, f, F, k, domain_size, cache):
    steps = [_initial(variant, n, f, domain_size)]
    base = (variant.name, n, f)
    for r in range(1, k + 1):
        steps.append(_advance(steps[-1], F, r))
        cache.put(base + (r, F.prefix(r)), steps[-1])
    return steps[1:]


def _same_payload(real, sim, known_tags) -> str | None:
    rg, sg = real.graph, sim.graph
    if rg.labels != sg.labels:
        return "labels differ"
    rn, sn = real.newepoch, sim.newepoch
    if (rn is None) != (sn is None):
        return "proposal presence differs"
    if rn is not None and (rn.part != sn.part or rn.epoch_sender != sn.epoch_sender):
        return "proposal part differs"
    if sg.tags is not None:
        if rg.tags is None or rg.tags.keys() != sg.tags.keys():
            return "tag set differs"
        if known_tags:
            for m, t in rg.tags.items():
                kt = known_tags.get(m)
                if kt is not None and t != kt:
                    return f"tag value for {m} differs"
    if real.side is not None:
        return "unexpected side block"
    return None


def compare_history(machine, steps, F: FailurePattern) -> Verdict:
    me = machine.agent
    randomized = machine.variant.randomized
    known = machine.graph.tags if randomized else None
    for r, st in enumerate(steps, start=1):
        key = (r, F.prefix(r))
        if not randomized and key in machine.verified:
            continue
        real = machine.mhist[r - 1]
        sim = st.rows.get(me)
        if sim is None:
            return Verdict(False, f"replay has agent {me} silent in round {r}", r)
        if real.keys() != sim.keys():
            return Verdict(False, f"round {r}: senders {sorted(real)} but expected {sorted(sim)}", r)
        for j in real:
            why = _same_payload(real[j], sim[j], known)
            if why:
                return Verdict(False, f"round {r}, message from {j}: {why}", r)
        if not randomized:
            machine.verified.add(key)
    return OK


def check_consistency(machine, cache: ReplayCache | None = None) -> Verdict:
    """Run the full check for `machine` at the end of its current round."""
    F, why = reconstruct_pattern(machine.graph, machine.f)
    if F is None:
        return Verdict(False, why, machine.round)
    steps = replay(machine.variant, machine.n, machine.f, F, machine.round, machine.domain_size, cache)
    return compare_history(machine, steps, F)
