"""Checking runs: consensus, utilities, exhaustive sweeps over failure
patterns, legality and benefit of colluder plans, and dictator search."""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .core import (
    MINUS_INF,
    TOP,
    FailurePattern,
    PreferenceOrder,
    ScenarioError,
    SymbolicValue,
    is_value,
    symbolic_tops,
)
from .dictator import UNKNOWN
from .simnet import RoundEngine, RunTranscript


class InvalidRange(ScenarioError):
    pass


# ---------------------------------------------------------------- consensus

@dataclass
class ConsensusReport:
    termination: bool
    agreement: bool
    validity: bool
    top_free: bool
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.termination and self.agreement and self.validity and self.top_free


def check_consensus(t: RunTranscript, tops: Sequence) -> ConsensusReport:
    """Termination for correct agents, uniform agreement, validity, no ⊤."""
    viol = []
    term = agree = valid = topfree = True
    decided = {}
    for a, o in sorted(t.outcomes.items()):
        d = o.decision
        if d is TOP:
            topfree = False
            viol.append(f"agent {a} decided TOP ({o.top_reason})")
            continue
        if d is None:
            if not o.crashed:
                term = False
                viol.append(f"correct agent {a} never decided")
            continue
        if d is UNKNOWN or not is_value(d):
            valid = False
            viol.append(f"agent {a} decided a non-value {d!r}")
            continue
        if d not in tops:
            valid = False
            viol.append(f"agent {a} decided {d!r}, nobody's top")
        decided[a] = d
    if len(set(decided.values())) > 1:
        agree = False
        viol.append("disagreement: " + ", ".join(f"{a}={v!r}" for a, v in decided.items()))
    return ConsensusReport(term, agree, valid, topfree, viol)


def utility(agent: int, t: RunTranscript, types: Sequence[PreferenceOrder], report: ConsensusReport | None = None):
    if report is None:
        report = check_consensus(t, tuple(x.top for x in types))
    if not report.ok:
        return MINUS_INF
    o = t.outcomes[agent]
    if o.crashed:
        return 0
    return types[agent - 1].utility(o.decision)


# ---------------------------------------------------------------- exploration

def _subsets(items):
    items = sorted(items)
    for k in range(len(items) + 1):
        for c in itertools.combinations(items, k):
            yield frozenset(c)


def crash_choices(eng: RoundEngine, sends: dict, budget: int):
    """Behaviourally distinct crash events for the next round.

    A crashing agent's delivered set only matters on receivers that get
    its message and are still up, so one representative per restriction
    is enough. Delivering to every other agent is the same pattern as a
    silent crash one round later and is skipped.
    """
    yield {}
    if budget <= 0:
        return
    n = eng.n
    running = [a for a in sorted(eng.machines) if eng.running(a)]
    for size in range(1, min(budget, len(running)) + 1):
        for crash_set in itertools.combinations(running, size):
            cs = frozenset(crash_set)
            per = []
            for a in crash_set:
                targets = set(sends.get(a, {})) - cs
                targets = {q for q in targets if eng.running(q)}
                opts = [d for d in _subsets(targets) if len(d) < n - 1]
                per.append(opts)
            for combo in itertools.product(*per):
                yield dict(zip(crash_set, combo))


@dataclass
class ExploreStats:
    leaves: int = 0
    nodes: int = 0
    pruned: int = 0
    seconds: float = 0.0


class StopExploring(Exception):
    pass


def explore(root: RoundEngine, max_crashes: int, crash_round_max: int,
            on_leaf: Callable[[RoundEngine], None],
            prune: Callable[[RoundEngine], bool] | None = None,
            order: Callable | None = None) -> ExploreStats:
    """Depth-first walk over every behaviourally distinct failure pattern.

    `on_leaf` sees each finished engine; raising StopExploring ends the
    walk early. `prune` may cut subtrees known to be uninteresting.
    """
    st = ExploreStats()
    t0 = time.time()

    def rec(eng: RoundEngine):
        st.nodes += 1
        if eng.done:
            st.leaves += 1
            on_leaf(eng)
            return
        if prune is not None and prune(eng):
            st.pruned += 1
            return
        k = eng.k + 1
        sends = eng.collect_sends()
        budget = max_crashes - len(eng.crashes) if k <= crash_round_max else 0
        opts = list(crash_choices(eng, sends, budget))
        if order is not None:
            opts = order(eng, opts)
        last = len(opts) - 1
        for i, choice in enumerate(opts):
            e2 = eng if i == last else eng.clone()
            e2.step(choice)
            rec(e2)

    try:
        rec(root)
    except StopExploring:
        pass
    st.seconds = time.time() - t0
    return st


# ---------------------------------------------------------------- single runs

def build_machines(variant, n: int, f: int, tops, seed: int = 0, domain_size: int | None = None,
                   plans=(), rounds: int | None = None) -> list:
    """Honest machines for the given tops, with colluders swapped in."""
    from .adversary import wrap
    from .protocols import assemble, assemble_flood

    if variant is None:
        ms = assemble_flood(n, list(tops), rounds)
    else:
        ms = assemble(variant, n, f, (), seed=seed, domain_size=domain_size, tops=tops)
    if plans:
        ms = wrap(ms, plans, seed)
    return ms


def make_engine(variant, n, f, tops, horizon, seed=0, domain_size=None, plans=(), header=None,
                trace=False, rounds=None) -> RoundEngine:
    from .adversary import CheaterPlan, cheat_engine_hooks

    if isinstance(plans, CheaterPlan):
        plans = (plans,)
    ms = build_machines(variant, n, f, tops, seed, domain_size, plans, rounds)
    colluders = frozenset().union(*[p.colluders for p in plans]) if plans else frozenset()
    eng = RoundEngine(ms, n, f, horizon, colluders, header, trace)
    eng.hooks = cheat_engine_hooks(plans) if plans else ()
    return eng


def run_plan(variant, F: FailurePattern, tops, horizon: int, seed: int = 0, domain_size=None,
             plans=(), header=None, trace=False, rounds=None):
    """One run under F; returns (transcript, engine)."""
    eng = make_engine(variant, F.n, F.declared_f, tops, horizon, seed, domain_size, plans, header,
                      trace, rounds)
    t = eng.run(F)
    return t, eng


def run_fixture(fx, seed: int = 0, variant=None, cheat: bool = True, trace: bool = False):
    v = fx.variant if variant is None else variant
    F = fx.pattern_for(v)
    header = {"fixture": fx.name, "variant": v.name if v else "FloodMin", "seed": seed,
              "cheat": cheat, "pattern": F.to_json()}
    dom = len(fx.types[0].ranking)
    return run_plan(v, F, fx.tops, fx.horizon, seed, dom, fx.plans if cheat else (),
                    header, trace, rounds=fx.horizon if v is None else None)


# ---------------------------------------------------------------- legality and benefit
#
# Honest code never compares proposal values; it only moves them around.
# A run with one symbolic token per agent (colluders sharing one) therefore
# stands for every type vector at once: the concrete decision is always the
# image of the symbolic one. Legality over all type vectors reduces to one
# symbolic run per failure pattern, and benefit to comparing which token
# wins with and without the cheat.

@dataclass
class LegalityReport:
    legal: bool
    counterexample: tuple | None  # (FailurePattern, ConsensusReport)
    patterns_checked: int
    deviating_runs: int
    pruned: int
    horizon: int
    scope: dict
    seconds: float = 0.0

    def summary(self) -> str:
        head = "legal within bounds" if self.legal else "ILLEGAL"
        s = (f"{head}: {self.patterns_checked} pattern classes, {self.deviating_runs} with a deviation, "
             f"{self.pruned} dormant subtrees cut, horizon {self.horizon}, scope {self.scope}")
        if self.counterexample:
            F, rep = self.counterexample
            s += f"; counterexample {F.describe()}: {'; '.join(rep.violations)}"
        return s


@dataclass
class BenefitReport:
    beneficial: bool
    witness: dict | None
    patterns_checked: int
    scope: dict
    seconds: float = 0.0

    def summary(self) -> str:
        if not self.beneficial:
            return f"no benefit found over {self.patterns_checked} pattern classes, scope {self.scope}"
        w = self.witness
        return (f"beneficial: agent {w['agent']} moves from utility {w['before']} to {w['after']} "
                f"under {w['pattern'].describe()}")


def _cheaters(eng):
    return [m for m in eng.machines.values() if getattr(m, "is_cheater", False)]


def dormant(eng) -> bool:
    """No colluder has deviated and none ever will in this run."""
    for ch in _cheaters(eng):
        if ch.deviated:
            return False
        if eng.running(ch.agent) and not ch.strategy.dormant(ch):
            return False
    return True


def deviated(eng) -> bool:
    return any(ch.deviated for ch in _cheaters(eng))


def _scope(f, max_crashes, crash_round_max, horizon):
    if max_crashes is None:
        max_crashes = f
    if crash_round_max is None:
        crash_round_max = 2 * f + 3
    if horizon is None:
        horizon = 3 * f + 6
    if max_crashes > f:
        raise InvalidRange(f"max_crashes {max_crashes} exceeds f={f}")
    return max_crashes, crash_round_max, horizon


def _plans(plans):
    from .adversary import CheaterPlan

    return (plans,) if isinstance(plans, CheaterPlan) else tuple(plans)


def _sym_tops(n, plans):
    return symbolic_tops(n, [p.colluders for p in plans])


def check_legality(variant, plans, n: int, f: int, horizon: int | None = None,
                   max_crashes: int | None = None, crash_round_max: int | None = None,
                   seed: int = 0, domain_size: int = 4, hints=(), prefer=None) -> LegalityReport:
    """Bounded exhaustive legality check over every behaviourally distinct
    failure pattern, for all type vectors at once (symbolic values).

    `hints` are patterns tried first, so a known counterexample is
    reported without walking the whole space. With `prefer`, the walk goes
    on past counterexamples the predicate rejects, and reports the first
    one it accepts (or the first one found if none is accepted).
    """
    plans = _plans(plans)
    eff = next((p.effective_f for p in plans if p.effective_f is not None), None)
    if max_crashes is None and eff is not None:
        max_crashes = eff
    max_crashes, crash_round_max, horizon = _scope(f, max_crashes, crash_round_max, horizon)
    tops = _sym_tops(n, plans)
    root = make_engine(variant, n, f, tops, horizon, seed, domain_size, plans)
    found = []
    dev = [0]

    def leaf(eng):
        if deviated(eng):
            dev[0] += 1
        rep = check_consensus(eng.transcript(), tops)
        if not rep.ok:
            found.append((eng.pattern(), rep))
            if prefer is None or prefer(rep):
                raise StopExploring

    t0 = time.time()
    for F in hints:
        if len(F.crashes) > max_crashes:
            continue
        t, eng = run_plan(variant, F, tops, horizon, seed, domain_size, plans)
        rep = check_consensus(t, tops)
        if not rep.ok and (prefer is None or prefer(rep)):
            scope = {"max_crashes": max_crashes, "crash_round_max": crash_round_max}
            return LegalityReport(False, (F, rep), 1, int(deviated(eng)), 0, horizon, scope,
                                  time.time() - t0)
    prune = dormant if plans else None
    st = explore(root, max_crashes, crash_round_max, leaf, prune)
    scope = {"max_crashes": max_crashes, "crash_round_max": crash_round_max}
    if prefer is not None:
        found.sort(key=lambda x: not prefer(x[1]))
    return LegalityReport(not found, found[0] if found else None, st.leaves, dev[0], st.pruned,
                          horizon, scope, st.seconds)


def _common_decision(t):
    ds = {o.decision for o in t.outcomes.values() if o.decision is not None}
    return next(iter(ds)) if len(ds) == 1 else None


def _witness_types(n, plans, tops, good, bad, domain_size):
    """Concrete preference orders where the colluders rank token `good`
    above token `bad` and every colluder top is shared."""
    from .core import PreferenceOrder

    tokens = sorted({t.token for t in tops})
    ctok = {tops[min(p.colluders) - 1].token for p in plans}
    order = [t for t in tokens if t in ctok] + [good.token, bad.token]
    order += [t for t in tokens if t not in order]
    seen = []
    for t in order:
        if t not in seen:
            seen.append(t)
    val = {t: min(i, domain_size - 1) for i, t in enumerate(seen)}
    conc = tuple(val[t.token] for t in tops)
    types = []
    for a in range(1, n + 1):
        top = conc[a - 1]
        if any(a in p.colluders for p in plans):
            pref = [top, val[good.token], val[bad.token]]
        else:
            pref = [top]
        rest = [v for v in range(domain_size) if v not in pref]
        r = []
        for v in pref + rest:
            if v not in r:
                r.append(v)
        types.append(PreferenceOrder(tuple(r)))
    return tuple(types)


def concrete_benefit(variant, F, types, plans, horizon, seed=0):
    """Utilities of every colluder with and without the cheat under F."""
    tops = tuple(t.top for t in types)
    dom = len(types[0].ranking)
    tb, _ = run_plan(variant, F, tops, horizon, seed, dom)
    tc, _ = run_plan(variant, F, tops, horizon, seed, dom, plans)
    rb, rc = check_consensus(tb, tops), check_consensus(tc, tops)
    out = {}
    for p in plans:
        for a in sorted(p.colluders):
            out[a] = (utility(a, tb, types, rb), utility(a, tc, types, rc))
    return out, tb, tc


def check_benefit(variant, plans, n: int, f: int, horizon: int | None = None,
                  max_crashes: int | None = None, crash_round_max: int | None = None,
                  seed: int = 0, domain_size: int = 4, hints=()) -> BenefitReport:
    """Search failure patterns for one where some colluder strictly gains
    against the honest run on the same pattern and types.

    `hints` are patterns tried before the exhaustive walk.
    """
    plans = _plans(plans)
    eff = next((p.effective_f for p in plans if p.effective_f is not None), None)
    if max_crashes is None and eff is not None:
        max_crashes = eff
    max_crashes, crash_round_max, horizon = _scope(f, max_crashes, crash_round_max, horizon)
    tops = _sym_tops(n, plans)
    ctoks = {tops[min(p.colluders) - 1] for p in plans}
    scope = {"max_crashes": max_crashes, "crash_round_max": crash_round_max}
    t0 = time.time()
    checked = [0]
    found = []

    def consider(F, tc):
        checked[0] += 1
        if not check_consensus(tc, tops).ok:
            return
        good = _common_decision(tc)
        tb, _ = run_plan(variant, F, tops, horizon, seed, domain_size)
        bad = _common_decision(tb)
        if good is None or bad is None or good == bad or bad in ctoks:
            return
        if domain_size < 3:
            return
        types = _witness_types(n, plans, tops, good, bad, domain_size)
        utils, _, _ = concrete_benefit(variant, F, types, plans, horizon, seed)
        for a, (before, after) in sorted(utils.items()):
            if _gt(after, before):
                found.append({"pattern": F, "types": types, "agent": a, "before": before, "after": after,
                              "symbolic": (bad, good)})
                raise StopExploring

    try:
        for F in hints:
            tc, _ = run_plan(variant, F, tops, horizon, seed, domain_size, plans)
            consider(F, tc)
    except StopExploring:
        pass
    if not found:
        root = make_engine(variant, n, f, tops, horizon, seed, domain_size, plans)

        def leaf(eng):
            if deviated(eng):
                consider(eng.pattern(), eng.transcript())

        explore(root, max_crashes, crash_round_max, leaf, dormant)
    return BenefitReport(bool(found), found[0] if found else None, checked[0], scope, time.time() - t0)


def _gt(a, b) -> bool:
    if a is MINUS_INF:
        return False
    if b is MINUS_INF:
        return True
    return a > b


def legal_with_benefit(variant, plans, n, f, horizon=None, max_crashes=None, crash_round_max=None,
                       seed=0, domain_size=4, hints=()):
    """(legal, beneficial, LegalityReport, BenefitReport or None)."""
    leg = check_legality(variant, plans, n, f, horizon, max_crashes, crash_round_max, seed, domain_size, hints)
    if not leg.legal:
        return False, None, leg, None
    ben = check_benefit(variant, plans, n, f, horizon, max_crashes, crash_round_max, seed, domain_size, hints)
    return True, ben.beneficial, leg, ben


# ---------------------------------------------------------------- dictators

@dataclass
class DictatorResult:
    dictator: int | None
    runs: int
    witness: tuple | None = None  # two runs with different decided owners


def find_dictator(variant, F: FailurePattern, n: int, value_domain: int = 3, sample_count: int = 0,
                  horizon: int | None = None, seed: int = 0) -> DictatorResult:
    """Whose top value the honest protocol decides under F.

    With sample_count == 0 the answer comes from one symbolic run (it holds
    for every type vector); otherwise that many concrete top vectors are
    checked as well, enumerating all of them when there are few enough.
    """
    import numpy as np

    horizon = 3 * F.declared_f + 6 if horizon is None else horizon
    tops = symbolic_tops(n)
    t, _ = run_plan(variant, F, tops, horizon, seed, max(value_domain, 4))
    d = _common_decision(t)
    if d is None or not isinstance(d, SymbolicValue):
        return DictatorResult(None, 1, (t.decisions(), None))
    owner = int(d.token[1:])
    runs = 1
    if sample_count:
        total = value_domain ** n
        if total <= sample_count:
            vectors = itertools.product(range(value_domain), repeat=n)
        else:
            rng = np.random.default_rng(seed)
            vectors = (tuple(int(x) for x in rng.integers(0, value_domain, n)) for _ in range(sample_count))
        for vec in vectors:
            tc, _ = run_plan(variant, F, vec, horizon, seed, value_domain)
            runs += 1
            dc = _common_decision(tc)
            if dc != vec[owner - 1]:
                return DictatorResult(None, runs, (vec, tc.decisions()))
    return DictatorResult(owner, runs)


# ---------------------------------------------------------------- resilience

@dataclass
class SweepEntry:
    plan: str
    legal: bool
    beneficial: bool | None
    note: str


@dataclass
class SweepSummary:
    variant: str
    n: int
    f: int
    c: int
    entries: list
    falsified_by: str | None

    def render(self) -> str:
        lines = [f"resilience sweep {self.variant} n={self.n} f={self.f} c={self.c}"]
        for e in self.entries:
            lines.append(f"  {e.plan}: legal={e.legal} beneficial={e.beneficial} {e.note}")
        if self.falsified_by:
            lines.append(f"falsified by {self.falsified_by}")
        else:
            lines.append("not falsified by catalog (this is not a proof of resilience)")
        return "\n".join(lines)


def resilience_sweep(variant, c: int, f: int, n: int, strategy_family=None, horizon: int | None = None,
                     max_crashes=None, crash_round_max=None, seed: int = 0, domain_size: int = 4,
                     stop_at_first: bool = False, hints=()) -> SweepSummary:
    """Falsification harness: look for a plan of at most c colluders from
    the family that is both legal and beneficial."""
    from .adversary import catalog

    if strategy_family is None:
        strategy_family = catalog(n, c, horizon or 3 * f + 6)
    entries, falsified = [], None
    for plan in strategy_family:
        if len(plan.colluders) > c:
            continue
        leg, ben, lr, br = legal_with_benefit(variant, plan, n, f, horizon, max_crashes, crash_round_max,
                                              seed, domain_size, hints)
        note = lr.summary() if not leg else (br.summary() if br else "")
        entries.append(SweepEntry(plan.name, leg, ben, note))
        if leg and ben and falsified is None:
            falsified = plan.name
            if stop_at_first:
                break
    return SweepSummary(variant.name, n, f, c, entries, falsified)


# ---------------------------------------------------------------- sweeps

@dataclass
class SweepRow:
    pattern: FailurePattern
    crashes: int
    ok: bool
    violations: list
    tops: int
    max_decide: int | None
    max_terminate: int | None
    messages: int
    max_payload: int | None
    deviated: bool = False


class _Sizer:
    """Encoded payload sizes, memoised per payload object."""

    def __init__(self):
        self.memo = {}

    def __call__(self, p) -> int:
        hit = self.memo.get(id(p))
        if hit is not None and hit[0] is p:
            return hit[1]
        from .protocols import FloodPayload, encode_payload

        size = len(p.values) * 8 if isinstance(p, FloodPayload) else len(encode_payload(p))
        self.memo[id(p)] = (p, size)
        return size


def _row(eng, tops, sizer=None) -> SweepRow:
    t = eng.transcript()
    rep = check_consensus(t, tops)
    dec = [o.decide_round for o in t.outcomes.values() if o.decide_round is not None and not o.crashed]
    ter = [o.terminate_round for o in t.outcomes.values() if o.terminate_round is not None and not o.crashed]
    size = None
    if sizer is not None:
        size = max((sizer(p) for recs in t.rounds for _, _, p in recs), default=0)
    ntop = sum(1 for o in t.outcomes.values() if o.decision is TOP)
    return SweepRow(eng.pattern(), len(eng.crashes), rep.ok, rep.violations, ntop,
                    max(dec, default=None), max(ter, default=None), t.messages, size, deviated(eng))


def sweep_runs(variant, n: int, f: int, horizon: int | None = None, max_crashes: int | None = None,
               crash_round_max: int | None = None, tops=None, plans=(), jobs: int = 1,
               measure_size: bool = False, seed: int = 0, domain_size: int = 4) -> list:
    """One row per behaviourally distinct failure pattern, in a fixed order.

    With jobs > 1 the first-round subtrees are walked on worker threads and
    the rows are put back together in subtree order.
    """
    from concurrent.futures import ThreadPoolExecutor

    plans = _plans(plans) if plans else ()
    max_crashes, crash_round_max, horizon = _scope(f, max_crashes, crash_round_max, horizon)
    if tops is None:
        tops = _sym_tops(n, plans) if plans else symbolic_tops(n)
    root = make_engine(variant, n, f, tops, horizon, seed, domain_size, plans)
    sends = root.collect_sends()
    opts = list(crash_choices(root, sends, max_crashes if crash_round_max >= 1 else 0))

    def walk(choice):
        eng = root.clone()
        eng.step(choice)
        rows = []
        sizer = _Sizer() if measure_size else None
        explore(eng, max_crashes, crash_round_max, lambda e: rows.append(_row(e, tops, sizer)))
        return rows

    if jobs <= 1:
        parts = [walk(c) for c in opts]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            parts = list(ex.map(walk, opts))
    return [r for part in parts for r in part]
