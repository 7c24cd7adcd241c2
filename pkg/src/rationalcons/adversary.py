"""Colluding agents and their deviations.

A colluder runs an honest machine internally (without the consistency
check, since it would only punish its friends) and a strategy that edits
what it sends, what it lets its internal machine see, and what it
finally decides. Colluders share a top value and may talk to each other
through a side block carried on ordinary round messages. A separate
instantaneous channel between rounds exists only for plans that ask for
it.
"""

from __future__ import annotations

import copy
import dataclasses
from dataclasses import dataclass, field

from .consistency import reconstruct_pattern, replay
from .core import (
    FailurePattern,
    ProtocolVariant,
    ScenarioError,
    canonicalize,
    is_value,
    split_value,
)
from .dictator import Part, NewEpochMsg
from .msggraph import GraphView, outgoing_view
from .protocols import AgentMachine, FloodPayload, Payload, agent_streams, draw_tag
from .simnet import RoundEdit


class InvalidPlan(ScenarioError):
    pass


class UnknownFixture(ScenarioError):
    pass


@dataclass(frozen=True)
class SideBlock:
    """What colluders tell each other inside ordinary messages."""

    decision: object = None
    tags: tuple = ()  # ((msg, tag), ...) the sender generated itself
    note: object = None


@dataclass(frozen=True)
class CheaterPlan:
    name: str
    colluders: frozenset
    roles: tuple = ()  # ((agent, strategy name, ((param, value), ...)), ...)
    private_channel: bool = False
    effective_f: int | None = None

    def role_of(self, agent: int):
        for a, s, params in self.roles:
            if a == agent:
                return s, dict(params)
        return "colluder", {}

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "colluders": sorted(self.colluders),
            "roles": [{"agent": a, "strategy": s, "params": dict(p)} for a, s, p in self.roles],
            "private_channel": self.private_channel,
            "effective_f": self.effective_f,
        }


def make_plan(name, colluders, roles=None, private_channel=False, effective_f=None) -> CheaterPlan:
    roles = roles or {}
    items = []
    for a in sorted(roles):
        s, params = roles[a] if isinstance(roles[a], tuple) else (roles[a], {})
        items.append((a, s, tuple(sorted(params.items()))))
    plan = CheaterPlan(name, frozenset(colluders), tuple(items), private_channel, effective_f)
    for a, s, _ in plan.roles:
        if a not in plan.colluders:
            raise InvalidPlan(f"role for non-colluder {a}")
        if s not in STRATEGIES:
            raise InvalidPlan(f"unknown strategy {s!r}")
    return plan


def plan_from_json(obj) -> CheaterPlan:
    try:
        roles = {r["agent"]: (r["strategy"], dict(r.get("params", {}))) for r in obj.get("roles", [])}
        return make_plan(obj.get("name", "plan"), obj["colluders"], roles,
                         bool(obj.get("private_channel", False)), obj.get("effective_f"))
    except (KeyError, TypeError) as e:
        raise InvalidPlan(f"malformed plan: {e}") from None


def validate_plan(plan: CheaterPlan, tops, n: int) -> None:
    if not plan.colluders:
        raise InvalidPlan("a plan needs at least one colluder")
    if any(not (1 <= a <= n) for a in plan.colluders):
        raise InvalidPlan("colluder out of range")
    ct = {tops[a - 1] for a in plan.colluders}
    if len(ct) != 1:
        raise InvalidPlan("colluders must share their top value")


# ---------------------------------------------------------------- strategies

class Strategy:
    """Honest behaviour; subclasses override the hooks they need."""

    name = "colluder"
    pretends = False

    def __init__(self, **params):
        self.params = params
        self.triggered = False

    def clone(self):
        return copy.copy(self)

    def before_send(self, ch, k: int) -> None:
        pass

    def on_send(self, ch, k: int, honest: dict) -> RoundEdit | None:
        return None

    def on_recv(self, ch, k: int, view: dict) -> dict:
        return view

    def after_recv(self, ch, k: int) -> None:
        pass

    def on_private(self, ch, k: int, peers: dict) -> None:
        pass

    def dormant(self, ch) -> bool:
        """True once this strategy can no longer deviate in this run.

        A plain colluder only relays to partners, which is invisible unless
        some partner deviates.
        """
        return True


class PretendCrash(Strategy):
    """Go completely silent from some round on while still listening.

    trigger: "round" (param `round`), "missed_dictator" (the current
    dictator's message did not arrive), or "missed_final_half" (the
    dictator's second proposal half did not arrive).
    """

    name = "pretend_crash"
    pretends = True

    def after_recv(self, ch, k):
        if self.triggered:
            return
        trig = self.params.get("trigger", "round")
        inner = ch.inner
        fire = False
        if trig == "round":
            return
        if trig in ("missed_dictator", "missed_final_half"):
            d = ch.dictator_before
            got = ch.observed[-1]
            if d != ch.agent and d not in got and d in ch.live_before:
                if trig == "missed_dictator":
                    fire = True
                else:
                    first = inner.ne_received.get((d, k - 1))
                    fire = first is not None and first.part == Part.FIRST
        if fire:
            self.triggered = True
            ch.start_pretending(k + 1)

    def before_send(self, ch, k):
        if not self.triggered and self.params.get("trigger", "round") == "round" \
                and k >= int(self.params.get("round", 1)):
            self.triggered = True
            ch.start_pretending(k)

    def dormant(self, ch):
        return not self.triggered and ch.inner.terminated


class DropRelay(Strategy):
    """Leave out the message to one receiver in one round."""

    name = "drop_relay"

    def on_send(self, ch, k, honest):
        r = int(self.params.get("round", 1))
        tgt = int(self.params.get("target", 0))
        if k == r and tgt in honest:
            self.triggered = True
            return RoundEdit(ch.agent, k, drop=frozenset([tgt]), reads_round=k - 1)
        return None

    def dormant(self, ch):
        return ch.round >= int(self.params.get("round", 1))


class FakeReceipt(Strategy):
    """Act as if the current dictator's missing message had arrived.

    Works only when the dictator is a colluder, so that its proposal value
    is known. The fabricated message is what the honest protocol would
    have sent under the failure pattern the cheater's own labels imply;
    tags it cannot know are guessed.
    """

    name = "fake_receipt"

    def on_recv(self, ch, k, view):
        inner = ch.inner
        d = inner.dstate.dictator
        me = ch.agent
        if d == me or d in view or d not in inner.live or d not in ch.plan.colluders:
            return view
        if self.params.get("trigger", "missed_final_half") == "missed_final_half":
            first = inner.ne_received.get((d, k - 1))
            if first is None or first.part != Part.FIRST:
                return view
        if not _clean(inner, view, d, k):
            return view
        fake = fabricate(ch, d, k)
        if fake is None:
            return view
        self.triggered = True
        ch.deviated = True
        out = dict(view)
        out[d] = fake
        return out

    def dormant(self, ch):
        return ch.inner.terminated


def _clean(inner, view, d, k) -> bool:
    """Only the dictator can have failed so far, and it reached everyone
    in round k-1. Then its view is exactly what the replay gives, and the
    fabricated message cannot contradict anything an honest agent learns."""
    me = inner.agent
    others = [j for j in range(1, inner.n + 1) if j not in (me, d)]
    lab = inner.graph.labels
    for j in others:
        p = view.get(j)
        if p is None or p.graph is None:
            return False
        if any(lab.get((j, me, r)) != 1 for r in range(1, k)):
            return False
        if p.graph.labels.get((d, j, k - 1)) != 1:
            return False
    return True


class PrivatePretense(Strategy):
    """After hearing over the private channel that a fellow colluder missed
    the dictator's message of this round (so the dictator crashed), act as
    if our own copy had been lost too."""

    name = "private_pretense"

    def on_private(self, ch, k, peers):
        d = ch.dictator_before
        got = ch.observed[-1]
        if d == ch.agent or d not in got or d in ch.plan.colluders:
            return
        missed = [c for c, obs in peers.items() if c != d and d not in obs]
        if not missed:
            return
        self.triggered = True
        ch.deviated = True
        view = {j: p for j, p in ch.last_view.items() if j != d}
        ch.redo_last_round(view)

    def dormant(self, ch):
        return not self.triggered and ch.inner.terminated


class CE1Pretender(Strategy):
    """The early-deciding silent colluder against the whole-proposal
    protocol with n=5, f=4 (colluders 4 and 5, agent 5 goes silent).

    Trigger, after round 3: agent 1's round-1 message reached 3, 4 and 5
    but not 2, agent 4 knows that loss, and agent 3 does not. Then agent 5
    stops sending and decides from what agents 3 and 4 reveal.
    """

    name = "ce1_pretender"
    pretends = True

    def __init__(self, **params):
        super().__init__(**params)
        self.wait_for_four = False
        self.three_gone = False

    def after_recv(self, ch, k):
        if ch.own_decision is not None:
            return
        obs = ch.observed[-1]
        m = (1, 2, 1)
        if k == 3 and not self.triggered:
            p4, p3 = obs.get(4), obs.get(3)
            if p4 is None or p3 is None:
                return
            if p4.graph.label(m) != 2 or p3.graph.label(m) != 0 or ch.graph_before.label(m) != 0:
                return
            if p3.graph.label((1, 3, 1)) != 1 or p4.graph.label((1, 4, 1)) != 1:
                return
            if (1, 1) not in ch.inner.ne_received:
                return
            self.triggered = True
            ch.start_pretending(4)
            return
        if not self.triggered:
            return
        if k == 4:
            p3 = obs.get(3)
            if p3 is None:
                # 3 crashed in round 4; it cannot have decided before then
                self.three_gone = True
            elif p3.graph.label((4, 3, 3)) == 2:
                # 4 never reached 3, so 3 can only ever decide 1's proposal
                ch.decide(ch.ne_value(1, 1), k)
                return
            elif p3.newepoch is not None and p3.newepoch.epoch_sender == 3:
                if 4 not in obs:
                    ch.decide(p3.newepoch.payload, k)
                else:
                    self.wait_for_four = True
                return
        if k == 5 and self.wait_for_four:
            p4 = obs.get(4)
            if p4 is not None and p4.graph.label((3, 4, 4)) == 2:
                ch.decide(ch.colluder_top, k)
            else:
                ch.decide(ch.ne_value(3, 4), k)
            return
        if self.three_gone and 4 not in obs and not any(sb.decision is not None for sb in ch.side_seen.values()):
            # everybody else is gone and nobody decided
            ch.decide(ch.colluder_top, k)

    def dormant(self, ch):
        if self.triggered:
            return False
        if ch.round >= 3:
            return True
        if ch.round >= 1 and (1, 1) not in ch.inner.ne_received:
            return True
        # the trigger needs both 1 and 2 gone by round 2
        return ch.round >= 2 and (1 in ch.observed[1] or 2 in ch.observed[1])


class FloodDropLow(Strategy):
    """Min-flood cheat: leave the lowest value out of the round-2 message
    to `target`; if it then looks like nobody else has it, decide the
    smallest remaining value."""

    name = "flood_drop_low"

    def on_send(self, ch, k, honest):
        low = int(self.params.get("value", 0))
        tgt = int(self.params.get("target", 3))
        p = honest.get(tgt)
        if k == 2 and p is not None and low in p.values:
            self.triggered = True
            ch.deviated = True
            return RoundEdit(ch.agent, k, replace={tgt: FloodPayload(p.values - {low})}, reads_round=1)
        return None

    def after_recv(self, ch, k):
        _decide_without_low(self, ch, k)


def _decide_without_low(st, ch, k):
    # the holder of the low value is gone and the target never saw it
    low = int(st.params.get("value", 0))
    tgt = int(st.params.get("target", 3))
    if k != ch.inner.rounds or not st.triggered:
        return
    obs = ch.observed[-1]
    holder = int(st.params.get("holder", 1))
    if holder not in obs and (tgt not in obs or low not in obs[tgt].values):
        rest = [v for v in ch.inner.known if v != low]
        if rest:
            ch.decide(min(rest), k)


class FloodPretendCrash(Strategy):
    """Min-flood cheat: send nothing from round `round` on."""

    name = "flood_pretend_crash"
    pretends = True

    def on_send(self, ch, k, honest):
        if k >= int(self.params.get("round", 2)):
            self.triggered = True
            ch.deviated = True
            return RoundEdit(ch.agent, k, drop=frozenset(honest), reads_round=k - 1)
        return None

    def after_recv(self, ch, k):
        _decide_without_low(self, ch, k)


STRATEGIES = {
    "colluder": Strategy,
    "pretend_crash": PretendCrash,
    "drop_relay": DropRelay,
    "fake_receipt": FakeReceipt,
    "private_pretense": PrivatePretense,
    "ce1_pretender": CE1Pretender,
    "flood_drop_low": FloodDropLow,
    "flood_pretend_crash": FloodPretendCrash,
}


def fabricate(ch, src: int, k: int):
    """The round-k message `src` would have sent us, rebuilt by replaying
    the honest protocol under the pattern our labels imply."""
    inner = ch.inner
    F, _ = reconstruct_pattern(inner.graph, inner.f)
    if F is None:
        return None
    steps = replay(inner.variant, inner.n, inner.f, F, k, inner.domain_size)
    sim = steps[-1].rows.get(ch.agent, {}).get(src)
    if sim is None:
        return None
    ne = sim.newepoch
    if ne is not None:
        top = ch.colluder_top
        if ne.part == Part.WHOLE:
            payload = top
        else:
            hi, lo = split_value(top, inner.domain_size)
            payload = hi if ne.part == Part.FIRST else lo
        ne = NewEpochMsg(ne.part, payload, src)
    tags = None
    if sim.graph.tags is not None:
        known = dict(inner.graph.tags)
        known.update(ch.colluder_tags)
        tags = {}
        for m in sim.graph.tags:
            t = known.get(m)
            tags[m] = t if t is not None else ch.guess_tag()
    view = GraphView(src, k - 1, dict(sim.graph.labels), tags)
    direct = ch.guess_tag() if inner.variant.randomized else None
    return Payload(view, ne, direct)


# ---------------------------------------------------------------- cheater

class Cheater:
    """A colluder: honest inner machine plus a strategy."""

    is_cheater = True

    def __init__(self, inner, plan: CheaterPlan, strategy: Strategy, guess_rng, colluder_top):
        self.inner = inner
        self.agent = inner.agent
        self.plan = plan
        self.strategy = strategy
        self.guess_rng = guess_rng
        self.colluder_top = colluder_top
        self.round = 0
        self.last_edit = None
        self.observed: list = []
        self.last_view: dict = {}
        self.side_seen: dict = {}
        self.colluder_tags: dict = {}
        self.own_decision = None
        self.own_decide_round = None
        self.pretend_from = None
        self.done = False
        self.done_round = None
        self.deviated = False
        self.withheld = None  # round whose decision waits to be relayed
        self.pre_recv = None
        self.dictator_before = 1
        self.live_before = frozenset()
        self.graph_before = None

    def clone(self):
        c = copy.copy(self)
        c.inner = self.inner.clone()
        c.strategy = self.strategy.clone()
        c.observed = list(self.observed)
        c.side_seen = dict(self.side_seen)
        c.colluder_tags = dict(self.colluder_tags)
        if self.guess_rng is not None:
            c.guess_rng = copy.deepcopy(self.guess_rng)
        if self.pre_recv is not None:
            c.pre_recv = self.pre_recv.clone()
        return c

    # machine-like surface
    @property
    def decision(self):
        if self.own_decision is not None:
            return self.own_decision
        if self.withheld is not None:
            return None
        return self.inner.decision

    @property
    def decide_round(self):
        if self.own_decision is not None:
            return self.own_decide_round
        if self.withheld is not None:
            return None
        return self.inner.decide_round

    @property
    def terminated(self):
        if self.done:
            return True
        return self.inner.terminated and self.pretend_from is None

    @property
    def terminate_round(self):
        if self.done:
            return self.done_round
        return self.inner.terminate_round

    @property
    def top_reason(self):
        return None

    @property
    def mhist(self):
        return self.inner.mhist

    @property
    def source(self):
        return getattr(self.inner, "source", None)

    # helpers for strategies
    def guess_tag(self) -> int:
        return draw_tag(self.guess_rng, self.inner.variant.tag_bits)

    def start_pretending(self, r0: int):
        self.pretend_from = r0
        self.deviated = True
        if isinstance(self.inner, AgentMachine):
            self.inner.shadow_from = r0

    def decide(self, v, k):
        if v is None:
            return
        self.own_decision = v
        self.own_decide_round = k

    def ne_rounds(self):
        return {(s, self.agent, r) for (s, r) in self.inner.ne_received}

    def ne_value(self, sender, rnd):
        ne = self.inner.ne_received.get((sender, rnd))
        if ne is None:
            return None
        return ne.payload if ne.part == Part.WHOLE else None

    def redo_last_round(self, view: dict):
        """Replace the last round's processing with a different view."""
        if self.pre_recv is None:
            return
        inner = self.pre_recv.clone()
        inner.step_recv(view)
        self.inner = inner
        self.last_view = view

    # rounds
    def step_send(self) -> dict:
        k = self.round + 1
        inner = self.inner
        self.strategy.before_send(self, k)
        honest = {} if inner.terminated else inner.step_send()
        edit = self.strategy.on_send(self, k, honest)
        drop = set(edit.drop) if edit else set()
        replace = dict(edit.replace) if edit else {}
        add = dict(edit.add) if edit else {}
        if self.pretend_from is not None and k >= self.pretend_from:
            drop |= set(honest)
            replace, add = {}, {}
            if isinstance(inner, AgentMachine):
                inner.sent_to[k] = frozenset()
        elif isinstance(inner, AgentMachine) and not inner.terminated:
            side = self._side()
            quiet = None
            for c in sorted(self.plan.colluders):
                if c == self.agent or c in drop:
                    continue
                if c in honest:
                    if side is not None:
                        replace[c] = dataclasses.replace(replace.get(c, honest[c]), side=side)
                else:
                    # keep a quiet colluder informed
                    if quiet is None:
                        base = next(iter(honest.values()), None)
                        quiet = base if base is not None else Payload(outgoing_view(inner.graph))
                        quiet = dataclasses.replace(quiet, side=side, tag=None)
                    add[c] = quiet
        e = RoundEdit(self.agent, k, frozenset(drop), replace, add, reads_round=k - 1)
        self.last_edit = None if e.empty else e
        return honest

    def _side(self):
        d = self.inner.decision
        tags = ()
        inner = self.inner
        if inner.variant.randomized and inner.graph.tags:
            me = self.agent
            tags = tuple(sorted((m, t) for m, t in inner.graph.tags.items() if m[0] == me or m[1] == me))
        if d is None and not tags:
            return None
        return SideBlock(decision=d if is_value(d) else None, tags=tags)

    def step_recv(self, delivered: dict) -> None:
        k = self.round + 1
        self.observed.append(delivered)
        view = {}
        for j, p in delivered.items():
            side = getattr(p, "side", None)
            if side is not None and j in self.plan.colluders:
                self.side_seen[j] = side
                for m, t in side.tags:
                    self.colluder_tags[m] = t
                p = dataclasses.replace(p, side=None)
            view[j] = p
        inner = self.inner
        self.dictator_before = getattr(getattr(inner, "dstate", None), "dictator", 1)
        self.live_before = getattr(inner, "live", frozenset())
        self.graph_before = getattr(inner, "graph", None)
        view = self.strategy.on_recv(self, k, view)
        self.last_view = view
        if not inner.terminated:
            if self.plan.private_channel:
                self.pre_recv = inner.clone()
            inner.step_recv(view)
        self.round = k
        self.strategy.after_recv(self, k)
        self._settle(k)

    def _hold(self, k):
        # A colluder that decides while a partner is silent only counts the
        # decision once it has survived the round that relays it.
        if self.withheld is not None and k > self.withheld:
            self.decide(self.inner.decision, k)
            self.withheld = None
            return
        inner = self.inner
        if self.own_decision is None and self.withheld is None and inner.decide_round == k \
                and is_value(inner.decision):
            quiet = [c for c in self.plan.colluders if c != self.agent and c not in self.observed[-1]]
            if quiet:
                self.withheld = k

    def _settle(self, k):
        if self.pretend_from is None:
            if isinstance(self.inner, AgentMachine):
                self._hold(k)
            return
        if self.own_decision is None:
            d = self.inner.decision
            if is_value(d):
                self.decide(d, self.inner.decide_round)
            else:
                for c in sorted(self.side_seen):
                    v = self.side_seen[c].decision
                    if v is not None:
                        self.decide(v, k)
                        break
        if self.own_decision is not None and not self.done:
            self.done = True
            self.done_round = k

    def after_private(self, k, peers):
        self.strategy.on_private(self, k, peers)
        self._settle(k)


def private_exchange(engine, k):
    """Instantaneous colluder channel between rounds: every colluder
    learns which senders the others heard from in round k."""
    cheaters = {a: m for a, m in engine.machines.items() if getattr(m, "is_cheater", False)}
    obs = {}
    for a, m in cheaters.items():
        if engine.running(a) or (m.observed and m.round == k):
            obs[a] = frozenset(m.observed[-1]) if m.observed and m.round == k else None
    for a, m in cheaters.items():
        if obs.get(a) is None:
            continue
        peers = {c: o for c, o in obs.items() if c != a and o is not None}
        m.after_private(k, peers)


def wrap(machines: list, plans, seed: int = 0) -> list:
    """Replace colluders' honest machines with cheaters.

    `plans` is one plan or a sequence of independent plans (groups that
    do not cooperate, possibly with different tops).
    """
    if isinstance(plans, CheaterPlan):
        plans = [plans]
    n = len(machines)
    streams = agent_streams(seed, n)
    tops = [m.top for m in machines]
    owner = {}
    for plan in plans:
        validate_plan(plan, tops, n)
        for a in plan.colluders:
            if a in owner:
                raise InvalidPlan(f"agent {a} belongs to two plans")
            owner[a] = plan
    out = []
    for m in machines:
        plan = owner.get(m.agent)
        if plan is None:
            out.append(m)
            continue
        if isinstance(m, AgentMachine):
            m.check_consistency = False
        sname, params = plan.role_of(m.agent)
        strat = STRATEGIES[sname](**params)
        ctop = tops[min(plan.colluders) - 1]
        out.append(Cheater(m, plan, strat, streams[n + m.agent - 1], ctop))
    return out


def cheat_engine_hooks(plans) -> tuple:
    if isinstance(plans, CheaterPlan):
        plans = [plans]
    return (private_exchange,) if any(p.private_channel for p in plans) else ()


def plan_edits(plan: CheaterPlan, joint_state: dict, k: int) -> dict:
    """Round-k edits of every colluder, computed from its own state.

    `joint_state` maps colluders to their Cheater objects; each one only
    reads its own fields. Calling this performs the colluders' sends.
    """
    out = {}
    for a in sorted(plan.colluders):
        ch = joint_state.get(a)
        if ch is None or ch.terminated:
            continue
        if ch.round != k - 1:
            raise InvalidPlan(f"colluder {a} is at round {ch.round}, not {k - 1}")
        ch.step_send()
        if ch.last_edit is not None:
            out[a] = ch.last_edit
    return out


# ---------------------------------------------------------------- fixtures

@dataclass(frozen=True)
class Fixture:
    """A fully pinned scenario: protocol, pattern, types, and cheat."""

    name: str
    variant: ProtocolVariant | None  # None: the min-flood baseline
    n: int
    f: int
    pattern: FailurePattern
    types: tuple
    plans: tuple
    horizon: int
    note: str = ""
    alt_variant: ProtocolVariant | None = None
    alt_pattern: FailurePattern | None = None  # same story for alt_variant
    sweep: dict = field(default_factory=dict)

    @property
    def tops(self):
        return tuple(t.top for t in self.types)

    def pattern_for(self, variant) -> FailurePattern:
        if self.alt_pattern is not None and variant is not None and self.variant is not None \
                and variant.name != self.variant.name:
            return self.alt_pattern
        return self.pattern

    @property
    def plan(self) -> CheaterPlan:
        return self.plans[0]

    @property
    def colluders(self) -> frozenset:
        out = frozenset()
        for p in self.plans:
            out |= p.colluders
        return out


def _types(rankings):
    from .core import PreferenceOrder

    return tuple(PreferenceOrder(tuple(r)) for r in rankings)


def _pattern(n, f, raw):
    return canonicalize({a: (r, frozenset(d)) for a, (r, d) in raw.items()}, n, f)


def _flood_fixtures():
    # agent i proposes i-1 and ranks it first
    types = _types([(0, 1, 2), (1, 0, 2), (2, 1, 0)])
    drop2 = make_plan("drop-low-2", {2}, {2: ("flood_drop_low", {"target": 3, "value": 0, "holder": 1})})
    drop3 = make_plan("drop-low-3", {3}, {3: ("flood_drop_low", {"target": 2, "value": 0, "holder": 1})})
    silent2 = make_plan("pretend-crash-2", {2}, {2: ("flood_pretend_crash", {"round": 2, "target": 3, "value": 0, "holder": 1})})
    return {
        "Fig1a": Fixture("Fig1a", None, 3, 2, _pattern(3, 2, {1: (1, {2})}), types, (drop2,), 2,
                         "agent 1 reaches only agent 2 in round 1; agent 2 hides v1 from agent 3"),
        "Fig1b": Fixture("Fig1b", None, 3, 2, _pattern(3, 2, {1: (2, {2})}), types, (drop2, drop3), 2,
                         "agent 1 reaches only agent 2 in round 2; agents 2 and 3 both hide v1"),
        "Fig1c": Fixture("Fig1c", None, 3, 2, _pattern(3, 2, {}), types, (drop2,), 2,
                         "no crash; agent 3 hears agent 1 in round 2 but gets no v1 from agent 2"),
        "Fig1d": Fixture("Fig1d", None, 3, 2, _pattern(3, 2, {1: (1, {2})}), types, (silent2,), 2,
                         "agent 1 reaches only agent 2 in round 1; agent 2 goes silent in round 2"),
    }


def _fixtures():
    from .core import NEWEPOCH, NEWEPOCH2, RAND_NEWEPOCH2

    out = _flood_fixtures()
    # values 0..3; colluders share a top and rank the protocol's likely
    # alternatives so that a change of outcome is visible in utilities
    t1 = _types([(0, 1, 2, 3), (1, 0, 2, 3), (2, 0, 1, 3), (3, 0, 2, 1), (3, 0, 2, 1)])
    out["CE1"] = Fixture(
        "CE1", NEWEPOCH, 5, 4,
        _pattern(5, 4, {1: (1, {3, 4, 5}), 2: (2, {4}), 4: (3, {5})}),
        t1, (make_plan("CE1", {4, 5}, {5: "ce1_pretender"}),), 3 * 4 + 6,
        "agent 5 learns from agent 4 that 1->2 in round 1 was lost while agent 3 does not know; "
        "it goes silent and decides from what 3 and 4 show in rounds 4 and 5",
        alt_variant=NEWEPOCH2, sweep={"max_crashes": 4, "crash_round_max": 11},
    )
    t2 = _types([(0, 2, 1, 3), (0, 2, 1, 3), (2, 1, 0, 3), (0, 2, 1, 3)])
    out["CE2"] = Fixture(
        "CE2", NEWEPOCH2, 4, 2,
        _pattern(4, 2, {1: (2, {3, 4}), 2: (4, set())}),
        t2, (make_plan("CE2", {1, 2, 4}, {2: ("fake_receipt", {"trigger": "missed_final_half"})}),), 3 * 2 + 6,
        "agent 2 misses the second half of agent 1's proposal and fabricates it",
        alt_variant=RAND_NEWEPOCH2.with_tag_bits(16),
        alt_pattern=_pattern(4, 2, {1: (3, {3, 4}), 2: (5, set())}), sweep={"max_crashes": 2, "crash_round_max": 7},
    )
    t3 = _types([(0, 1, 2, 3), (1, 0, 2, 3), (2, 0, 1, 3), (1, 0, 2, 3), (1, 0, 2, 3)])
    out["CE3"] = Fixture(
        "CE3", RAND_NEWEPOCH2, 5, 4,
        _pattern(5, 4, {1: (3, {3, 4, 5}), 2: (5, {4, 5})}),
        t3, (make_plan("CE3", {2, 4, 5}, {2: ("pretend_crash", {"trigger": "missed_final_half"})},
                       effective_f=2),), 3 * 4 + 6,
        "agent 2 has the dictator's first half but not the second; it goes silent and "
        "its partners relay the decision",
        sweep={"max_crashes": 2, "crash_round_max": 7},
    )
    t4 = _types([(0, 1, 2, 3), (1, 2, 0, 3), (2, 1, 0, 3), (1, 2, 0, 3)])
    out["ImpDemo"] = Fixture(
        "ImpDemo", NEWEPOCH2, 4, 2,
        _pattern(4, 2, {1: (1, {2})}),
        t4, (make_plan("ImpDemo", {2, 4}, {2: "private_pretense"}, private_channel=True),), 3 * 2 + 6,
        "agent 4 tells agent 2 privately that the dictator's message did not arrive; "
        "agent 2 then acts as if its own copy was lost",
        sweep={"max_crashes": 2, "crash_round_max": 7},
    )
    return out


FIXTURE_NAMES = ("Fig1a", "Fig1b", "Fig1c", "Fig1d", "CE1", "CE2", "CE3", "ImpDemo")


def ce_fixture(name: str) -> Fixture:
    fx = _fixtures().get(name)
    if fx is None:
        raise UnknownFixture(f"unknown fixture {name!r}; known: {', '.join(FIXTURE_NAMES)}")
    return fx


def catalog(n: int, max_colluders: int, horizon: int, colluder_sets=None) -> list:
    """Built-in plans: pretend-crash at each trigger and start round, and
    fake receipt, for every colluder set of size up to `max_colluders`
    (or the given sets)."""
    import itertools

    if colluder_sets is None:
        colluder_sets = [frozenset(c) for size in range(1, max_colluders + 1)
                         for c in itertools.combinations(range(1, n + 1), size)]
    plans = []
    for cs in colluder_sets:
        tag = "".join(map(str, sorted(cs)))
        for a in sorted(cs):
            for r in range(1, min(horizon, 4) + 1):
                plans.append(make_plan(f"pretend@{r}/{a}/{tag}", cs, {a: ("pretend_crash", {"trigger": "round", "round": r})}))
            for trig in ("missed_dictator", "missed_final_half"):
                plans.append(make_plan(f"pretend-{trig}/{a}/{tag}", cs, {a: ("pretend_crash", {"trigger": trig})}))
            plans.append(make_plan(f"fake/{a}/{tag}", cs, {a: ("fake_receipt", {"trigger": "missed_dictator"})}))
    return plans


# ---------------------------------------------------------------- baseline oracle

def flood_view_explainable(agent: int, mhist: list, values, rounds: int, f: int | None = None) -> bool:
    """Could an all-honest min-flood run produce exactly this view for
    `agent`? Brute force over every failure pattern."""
    from .core import enumerate_failure_patterns
    from .protocols import assemble_flood
    from .simnet import run as run_engine

    n = len(values)
    f = n - 1 if f is None else f
    want = [{j: frozenset(p.values) for j, p in row.items()} for row in mhist]
    for F in enumerate_failure_patterns(n, f, rounds):
        if F.crash_round(agent) is not None and F.crash_round(agent) <= len(mhist):
            continue
        ms = assemble_flood(n, values, rounds)
        _, eng = run_engine(ms, F, rounds)
        got = [{j: frozenset(p.values) for j, p in row.items()} for row in eng.machines[agent].mhist]
        if got == want:
            return True
    return False
