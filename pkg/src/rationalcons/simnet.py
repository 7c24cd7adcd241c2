"""Lock-step round engine with crash injection and transcripts."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Mapping

from .core import TOP, CrashSpec, FailurePattern, SymbolicValue
from .dictator import UNKNOWN


class IllegalEdit(RuntimeError):
    pass


@dataclass(frozen=True)
class RoundEdit:
    """Changes a colluder makes to its own outgoing messages in one round.

    `reads_round` is the latest round whose incoming messages the edit
    depends on; it must be earlier than the round being sent.
    """

    agent: int
    round: int
    drop: frozenset = frozenset()
    replace: Mapping = field(default_factory=dict)
    add: Mapping = field(default_factory=dict)
    reads_round: int = 0

    @property
    def empty(self) -> bool:
        return not (self.drop or self.replace or self.add)


def inject(colluders, k: int, sends: dict, edits) -> dict:
    """Apply colluder edits to the round-k outgoing messages."""
    out = {a: dict(m) for a, m in sends.items()}
    for e in edits:
        if e.agent not in colluders:
            raise IllegalEdit(f"agent {e.agent} is not a colluder")
        if e.round != k:
            raise IllegalEdit(f"edit for round {e.round} applied in round {k}")
        if e.reads_round >= k:
            raise IllegalEdit(f"edit for round {k} reads incoming messages of round {e.reads_round}")
        mine = out.setdefault(e.agent, {})
        for j in list(e.drop):
            mine.pop(j, None)
        for j, p in e.replace.items():
            if j not in mine:
                raise IllegalEdit(f"replacing a message to {j} that is not sent")
            mine[j] = p
        for j, p in e.add.items():
            if j == e.agent:
                raise IllegalEdit("self messages are not part of the model")
            mine[j] = p
    return out


@dataclass
class AgentOutcome:
    agent: int
    decision: object
    decide_round: int | None
    terminate_round: int | None
    crashed: bool
    crash_round: int | None
    top_reason: str | None = None


@dataclass
class RunTranscript:
    header: dict
    rounds: list  # per round: tuple of (sender, receiver, payload) actually delivered
    outcomes: dict  # agent -> AgentOutcome
    horizon_exhausted: bool
    rounds_run: int
    messages: int

    def decisions(self) -> dict:
        return {a: o.decision for a, o in self.outcomes.items()}

    def digest(self) -> str:
        return hashlib.sha256(self.render().encode()).hexdigest()

    def render(self) -> str:
        from .protocols import FloodPayload, encode_payload

        lines = ["# transcript", "header " + json.dumps(self.header, sort_keys=True)]
        for r, recs in enumerate(self.rounds, start=1):
            for s, q, p in sorted(recs, key=lambda x: (x[0], x[1])):
                if isinstance(p, FloodPayload):
                    body = ",".join(map(str, sorted(p.values)))
                else:
                    body = encode_payload(p).hex()
                lines.append(f"deliver {r} {s} {q} {body}")
        for a in sorted(self.outcomes):
            o = self.outcomes[a]
            lines.append(
                f"outcome {a} decision={format_value(o.decision)} decided={o.decide_round} "
                f"terminated={o.terminate_round} crashed={o.crash_round}"
                + (f" reason={o.top_reason!r}" if o.top_reason else "")
            )
        lines.append(f"verdict horizon_exhausted={self.horizon_exhausted} rounds={self.rounds_run}")
        return "\n".join(lines) + "\n"

    def write(self, path) -> str:
        text = self.render()
        d = hashlib.sha256(text.encode()).hexdigest()
        with open(path, "w") as fh:
            fh.write(text)
            fh.write(f"digest {d}\n")
        return d


def format_value(v) -> str:
    if v is None:
        return "none"
    if v is TOP:
        return "TOP"
    if v is UNKNOWN:
        return "?"
    if isinstance(v, SymbolicValue):
        return v.token
    return str(v)


@dataclass
class RoundSnapshot:
    """What one agent held at the end of a round (trace mode)."""

    labels: dict
    chain: tuple
    dictator: int
    decision: object
    live: frozenset
    ne_sender: int | None  # own proposal sent this round


class RoundEngine:
    """Runs machines in lock-step rounds: everybody sends, then everybody
    who is still up receives what the failure pattern lets through."""

    def __init__(self, machines, n: int, f: int, horizon: int, colluders=frozenset(),
                 header: dict | None = None, trace: bool = False):
        self.machines = {m.agent: m for m in machines}
        self.n = n
        self.f = f
        self.horizon = horizon
        self.colluders = frozenset(colluders)
        self.k = 0
        self.crashes: dict = {}
        self.rounds: list = []
        self.messages = 0
        self.header = header or {}
        self.trace = {} if trace else None
        self.sends_cache = None
        self.hooks: tuple = ()  # callables (engine, k) run after each round

    def clone(self) -> "RoundEngine":
        e = RoundEngine.__new__(RoundEngine)
        e.__dict__.update(self.__dict__)
        e.machines = {a: m.clone() for a, m in self.machines.items()}
        e.crashes = dict(self.crashes)
        e.rounds = list(self.rounds)
        e.trace = None if self.trace is None else {a: list(v) for a, v in self.trace.items()}
        return e

    def running(self, a) -> bool:
        m = self.machines[a]
        return a not in self.crashes and not m.terminated

    @property
    def done(self) -> bool:
        return self.k >= self.horizon or not any(self.running(a) for a in self.machines)

    def collect_sends(self) -> dict:
        """Round k+1 outgoing messages after colluder edits (idempotent)."""
        if self.sends_cache is not None:
            return self.sends_cache
        k = self.k + 1
        sends, edits = {}, []
        for a in sorted(self.machines):
            if not self.running(a):
                continue
            m = self.machines[a]
            sends[a] = m.step_send()
            e = getattr(m, "last_edit", None)
            if e is not None and e.round == k:
                edits.append(e)
        if edits:
            sends = inject(self.colluders, k, sends, edits)
        self.sends_cache = sends
        return sends

    def step(self, crashing: Mapping[int, frozenset] | None = None) -> None:
        """Finish round k+1; `crashing` maps agents that crash in it to the
        receivers their messages still reach."""
        k = self.k + 1
        sends = self.collect_sends()
        crashing = dict(crashing or {})
        for a, d in crashing.items():
            if a in self.crashes:
                raise ValueError(f"agent {a} crashes twice")
            self.crashes[a] = CrashSpec(k, frozenset(d))
        recs = []
        inbox = {a: {} for a in self.machines}
        for s, out in sends.items():
            lim = crashing.get(s)
            for q, p in out.items():
                if lim is not None and q not in lim:
                    continue
                if q in self.crashes and self.crashes[q].crash_round <= k:
                    continue
                if self.machines[q].terminated:
                    continue
                inbox[q][s] = p
                recs.append((s, q, p))
        self.messages += len(recs)
        for a in sorted(self.machines):
            if a in self.crashes or self.machines[a].terminated or a not in sends:
                continue
            self.machines[a].step_recv(inbox[a])
            if self.trace is not None:
                self._snap(a, sends.get(a))
        self.rounds.append(tuple(recs))
        self.k = k
        self.sends_cache = None
        for h in self.hooks:
            h(self, k)

    def _snap(self, a, out):
        m = self.machines[a]
        inner = getattr(m, "inner", m)
        g = getattr(inner, "graph", None)
        ne = None
        if out:
            p = next(iter(out.values()))
            ne_msg = getattr(p, "newepoch", None)
            ne = a if ne_msg is not None else None
        ds = getattr(inner, "dstate", None)
        self.trace.setdefault(a, []).append(RoundSnapshot(
            labels=dict(g.labels) if g is not None else {},
            chain=tuple(ds.chain) if ds else (),
            dictator=ds.dictator if ds else 0,
            decision=m.decision,
            live=getattr(inner, "live", frozenset()),
            ne_sender=ne,
        ))

    def crashes_for_round(self, F: FailurePattern, k: int) -> dict:
        return {a: c.delivered for a, c in F.crashes if c.crash_round == k}

    def run(self, F: FailurePattern) -> RunTranscript:
        while not self.done:
            self.step(self.crashes_for_round(F, self.k + 1))
        return self.transcript(F)

    def transcript(self, F: FailurePattern | None = None) -> RunTranscript:
        outcomes = {}
        exhausted = False
        for a, m in sorted(self.machines.items()):
            if F is not None:
                cr = F.crash_round(a)
            else:
                cr = self.crashes[a].crash_round if a in self.crashes else None
            crashed = cr is not None
            if not crashed and m.decide_round is None:
                exhausted = True
            outcomes[a] = AgentOutcome(a, m.decision, m.decide_round, m.terminate_round, crashed, cr,
                                       getattr(m, "top_reason", None))
        return RunTranscript(self.header, self.rounds, outcomes, exhausted, self.k, self.messages)

    def pattern(self) -> FailurePattern:
        return FailurePattern(self.n, self.f, tuple(sorted(self.crashes.items())))


def run(machines, F: FailurePattern, horizon: int, colluders=frozenset(), header=None,
        trace: bool = False):
    """Run to completion; returns (transcript, engine)."""
    eng = RoundEngine(machines, F.n, F.declared_f, horizon, colluders, header, trace)
    t = eng.run(F)
    return t, eng
