"""Agent state machines for the three NEWEPOCH variants, plus the plain
min-value flooding protocol used as a baseline."""

from __future__ import annotations

import copy
import struct
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .core import (
    TOP,
    PreferenceOrder,
    ProtocolVariant,
    ScenarioError,
    tops_of,
)
from .dictator import (
    DictatorState,
    NewEpochMsg,
    decode_newepoch,
    encode_newepoch,
    phase1_send,
    phase2_update,
    proposal_well_formed,
)
from .msggraph import GraphView, Label, MsgGraph, apply_labeling_closure, decode_view, encode_view, merge_tags, outgoing_view

RNG_ALGORITHM = "PCG64"


class WellFormednessViolation(RuntimeError):
    """send and recv were called out of order."""


@dataclass(frozen=True)
class Payload:
    """One round message: graph, optional proposal, optional tag, and an
    optional side block that only colluders read."""

    graph: GraphView | None
    newepoch: NewEpochMsg | None = None
    tag: int | None = None
    side: object = None


def _block(b: bytes) -> bytes:
    return struct.pack(">I", len(b)) + b


def encode_payload(p: Payload) -> bytes:
    """[graph][proposal][tag][side], each length-prefixed."""
    g = b"" if p.graph is None else encode_view(p.graph)
    t = b"" if p.tag is None else struct.pack(">Q", p.tag)
    side = b"" if p.side is None else repr(p.side).encode()
    return _block(g) + _block(encode_newepoch(p.newepoch)) + _block(t) + _block(side)


def decode_payload(data: bytes) -> Payload:
    blocks = []
    off = 0
    for _ in range(4):
        (ln,) = struct.unpack_from(">I", data, off)
        off += 4
        blocks.append(data[off:off + ln])
        off += ln
    g = decode_view(blocks[0])[0] if blocks[0] else None
    ne = decode_newepoch(blocks[1])
    tag = struct.unpack(">Q", blocks[2])[0] if blocks[2] else None
    side = blocks[3].decode() if blocks[3] else None
    return Payload(g, ne, tag, side)


def agent_streams(seed: int, n: int):
    """Independent per-agent generators: tags for agent i, then a second
    family used for adversarial guesses."""
    kids = np.random.SeedSequence(seed).spawn(2 * n)
    return [np.random.Generator(np.random.PCG64(s)) for s in kids]


def draw_tag(gen, bits: int) -> int:
    return int(gen.bit_generator.random_raw()) >> (64 - bits)


class AgentMachine:
    """One agent running a NEWEPOCH variant.

    Replay machines (value-free) carry top=None and no generator; they
    produce the same message structure as real ones with values and tag
    values left out.
    """

    def __init__(self, agent: int, n: int, f: int, variant: ProtocolVariant, top, domain_size: int,
                 rng=None, check_consistency: bool = True, keep_history: bool = True):
        self.agent = agent
        self.n = n
        self.f = f
        self.variant = variant
        self.top = top
        self.domain_size = domain_size
        self.rng = rng
        self.check_consistency = check_consistency
        self.keep_history = keep_history
        self.round = 0
        self.graph = MsgGraph(agent, n, with_tags=variant.randomized)
        self.live = frozenset(j for j in range(1, n + 1) if j != agent)
        self.dstate = DictatorState()
        self.decision = None
        self.decide_round = None
        self.source = None
        self.terminated = False
        self.terminate_round = None
        self.top_reason = None
        self.mhist: list = []
        self.ne_received: dict = {}
        self.shadow_from = None  # round from which own messages are known not to go out
        self.sent_to: dict = {}
        self.verified: set = set()
        self._sent_round = 0

    # -- copying, used by the explorer and the replay cache
    def clone(self) -> "AgentMachine":
        m = copy.copy(self)
        m.graph = self.graph.copy()
        m.dstate = self.dstate.copy()
        m.mhist = list(self.mhist)
        m.ne_received = dict(self.ne_received)
        m.sent_to = dict(self.sent_to)
        m.verified = set(self.verified)
        if self.rng is not None:
            m.rng = copy.deepcopy(self.rng)
        return m

    @property
    def decided(self) -> bool:
        return self.decide_round is not None

    @property
    def shadow(self) -> bool:
        return self.shadow_from is not None and self.round + 1 >= self.shadow_from

    def step_send(self) -> dict:
        k = self.round + 1
        if self.terminated:
            raise WellFormednessViolation(f"agent {self.agent} already terminated")
        if self._sent_round == k:
            raise WellFormednessViolation(f"agent {self.agent} sent twice in round {k}")
        ne = None
        if not self.shadow:
            ne = phase1_send(self.dstate, self.agent, self.top, k, self.variant, self.domain_size, self.decided)
        view = outgoing_view(self.graph)
        out = {}
        me = self.agent
        for j in sorted(self.live):
            tag = None
            if self.variant.randomized:
                if self.rng is not None:
                    tag = draw_tag(self.rng, self.variant.tag_bits)
                self.graph.tags[(me, j, k)] = tag
            out[j] = Payload(view, ne, tag)
        self._sent_round = k
        return out

    def _malformed(self, j: int, p, k: int) -> str | None:
        if not isinstance(p, Payload) or p.graph is None:
            return f"payload from {j} is not a protocol message"
        g = p.graph
        if g.owner != j or g.as_of != k - 1:
            return f"graph from {j} has wrong owner or round"
        n = self.n
        for m, lv in g.labels.items():
            if len(m) != 3:
                return f"bad message id from {j}"
            a, b, r = m
            if not (1 <= a <= n and 1 <= b <= n and a != b and 1 <= r <= k - 1):
                return f"bad message id {m} from {j}"
            if lv not in (Label.SENT, Label.NOT_SENT, Label.NEVER_KNOWN):
                return f"bad label from {j}"
        if self.variant.randomized:
            if g.tags is None or (self.rng is not None and p.tag is None):
                return f"missing tags from {j}"
            if p.tag is not None and not (0 <= p.tag < (1 << self.variant.tag_bits)):
                return f"tag out of range from {j}"
            for m in g.tags:
                if len(m) != 3 or not (1 <= m[2] <= k - 1) or m[0] == j:
                    return f"bad tag key {m} from {j}"
        elif g.tags is not None or p.tag is not None:
            return f"unexpected tags from {j}"
        if p.newepoch is not None and not proposal_well_formed(p.newepoch, self.variant, self.domain_size, j):
            return f"malformed proposal from {j}"
        if p.side is not None:
            return f"unexpected side block from {j}"
        return None

    def step_recv(self, delivered: Mapping[int, Payload]) -> None:
        k = self.round + 1
        if self._sent_round != k:
            raise WellFormednessViolation(f"agent {self.agent} received before sending in round {k}")
        me = self.agent
        delivered = {j: p for j, p in delivered.items() if j != me}
        if self.keep_history:
            self.mhist.append(delivered)
        problems = []
        if self.check_consistency:
            for j in sorted(delivered):
                why = self._malformed(j, delivered[j], k)
                if why:
                    problems.append(why)
        graphs = {j: p.graph for j, p in delivered.items() if p.graph is not None}
        own_sent = None
        if self.shadow_from is not None and k >= self.shadow_from:
            own_sent = self.sent_to.get(k, frozenset())
        res = apply_labeling_closure(self.graph, graphs, delivered.keys(), k, own_sent)
        self.graph = res.graph
        problems.extend(f"label conflict {c.msg}" for c in res.conflicts)
        if self.variant.randomized:
            direct = {(j, me, k): p.tag for j, p in delivered.items()}
            problems.extend(f"tag conflict {c.msg}" for c in merge_tags(self.graph, direct, graphs))
        for j, p in delivered.items():
            if p.newepoch is not None:
                self.ne_received[(j, k)] = p.newepoch
        ph = phase2_update(self.dstate, self.graph, res.live, self.ne_received, k, me, self.top,
                           self.variant, self.domain_size, self.decide_round, shadow=self.shadow)
        self.round = k
        self.live = res.live
        if ph.terminate:
            self.terminated = True
            self.terminate_round = k
            return
        if ph.decide is not None:
            self.decision = ph.decide
            self.decide_round = k
            self.source = ph.source
        if ph.missing_half:
            problems.append("second proposal half missing")
        if not self.check_consistency:
            return
        if not problems:
            from .consistency import check_consistency

            verdict = check_consistency(self)
            if not verdict.ok:
                problems.append(verdict.reason)
        if problems:
            self.decision = TOP
            self.decide_round = k
            self.source = None
            self.top_reason = problems[0]
            self.terminated = True
            self.terminate_round = k


def assemble(variant: ProtocolVariant, n: int, f: int, types: Sequence, seed: int = 0,
             domain_size: int | None = None, tops: Sequence | None = None) -> list:
    """Honest machines for agents 1..n.

    `types` is a type vector; `tops` may replace it (for symbolic runs).
    """
    if tops is None:
        if len(types) != n:
            raise ScenarioError(f"type vector has {len(types)} entries for n={n}")
        for t in types:
            if not isinstance(t, PreferenceOrder):
                raise ScenarioError("type vector entries must be preference orders")
        tops = tops_of(types)
        if domain_size is None:
            domain_size = len(types[0].ranking)
        if any(len(t.ranking) != domain_size for t in types):
            raise ScenarioError("all preference orders must rank the same domain")
    else:
        tops = tuple(tops)
        if len(tops) != n:
            raise ScenarioError(f"{len(tops)} tops for n={n}")
        if domain_size is None:
            ints = [t for t in tops if isinstance(t, int)]
            domain_size = max([4] + [t + 1 for t in ints])
    if domain_size < 3:
        raise ScenarioError(f"need at least 3 values, got {domain_size}")
    if n < 3:
        raise ScenarioError(f"need n >= 3, got n={n}")
    if not (1 <= f <= n - 1):
        raise ScenarioError(f"need 1 <= f <= n-1, got f={f}, n={n}")
    streams = agent_streams(seed, n)
    return [
        AgentMachine(i, n, f, variant, tops[i - 1], domain_size,
                     rng=streams[i - 1] if variant.randomized else None)
        for i in range(1, n + 1)
    ]


# ---------------------------------------------------------------- baseline

@dataclass(frozen=True)
class FloodPayload:
    values: frozenset


class FloodMinMachine:
    """Send every value seen so far to everybody for `rounds` rounds, then
    decide the smallest."""

    def __init__(self, agent: int, n: int, value: int, rounds: int | None = None):
        self.agent = agent
        self.n = n
        self.top = value
        self.rounds = n - 1 if rounds is None else rounds
        self.known = {value}
        self.round = 0
        self.decision = None
        self.decide_round = None
        self.source = None
        self.terminated = False
        self.terminate_round = None
        self.top_reason = None
        self.mhist: list = []
        self._sent_round = 0

    def clone(self):
        m = copy.copy(self)
        m.known = set(self.known)
        m.mhist = list(self.mhist)
        return m

    def step_send(self) -> dict:
        k = self.round + 1
        if self.terminated or self._sent_round == k:
            raise WellFormednessViolation(f"agent {self.agent} cannot send in round {k}")
        self._sent_round = k
        p = FloodPayload(frozenset(self.known))
        return {j: p for j in range(1, self.n + 1) if j != self.agent}

    def step_recv(self, delivered) -> None:
        k = self.round + 1
        if self._sent_round != k:
            raise WellFormednessViolation(f"agent {self.agent} received before sending")
        self.mhist.append(dict(delivered))
        for p in delivered.values():
            self.known |= set(p.values)
        self.round = k
        if k == self.rounds:
            self.decision = min(self.known)
            self.decide_round = k
            self.terminated = True
            self.terminate_round = k


def assemble_flood(n: int, values: Sequence[int], rounds: int | None = None) -> list:
    return [FloodMinMachine(i, n, values[i - 1], rounds) for i in range(1, n + 1)]
