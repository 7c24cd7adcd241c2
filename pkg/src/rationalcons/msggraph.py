"""Per-agent knowledge about which messages were delivered.

Every ordered pair of distinct agents and every round names one message.
An agent labels each message it has an opinion about; the closure below
is the only way labels are added, and a label never changes once set.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Mapping, NamedTuple


class Label(IntEnum):
    UNCERTAIN = 0
    SENT = 1
    NOT_SENT = 2
    NEVER_KNOWN = 3


U, S, NS, NK = Label.UNCERTAIN, Label.SENT, Label.NOT_SENT, Label.NEVER_KNOWN
_DONE = (NS, NK)  # labels that end a message chain well


class MessageId(NamedTuple):
    sender: int
    receiver: int
    round: int


class NegativeRound(ValueError):
    pass


class NotAChainStart(ValueError):
    pass


@dataclass(frozen=True)
class LabelConflict:
    msg: tuple
    labels: tuple  # the clashing labels
    reason: str


@dataclass(frozen=True)
class TagConflict:
    msg: tuple
    tags: tuple


@dataclass(frozen=True, eq=True)
class GraphView:
    """Immutable snapshot of a graph as shipped inside a message.

    `tags` is None for protocols without tags. Tag values may be None in
    value-free replays, in which case only the key set carries meaning.
    """

    owner: int
    as_of: int
    labels: Mapping
    tags: Mapping | None = None

    def label(self, m) -> Label:
        return self.labels.get(tuple(m), U)


class MsgGraph:
    """Mutable graph owned by one agent."""

    __slots__ = ("owner", "n", "as_of", "labels", "tags", "min_ns")

    def __init__(self, owner: int, n: int, with_tags: bool = False):
        self.owner = owner
        self.n = n
        self.as_of = 0
        self.labels: dict = {}
        self.tags: dict | None = {} if with_tags else None
        self.min_ns: dict = {}  # sender -> earliest round with a NotSent label

    def copy(self) -> "MsgGraph":
        g = MsgGraph.__new__(MsgGraph)
        g.owner, g.n, g.as_of = self.owner, self.n, self.as_of
        g.labels = dict(self.labels)
        g.tags = None if self.tags is None else dict(self.tags)
        g.min_ns = dict(self.min_ns)
        return g

    def label(self, m) -> Label:
        return self.labels.get(tuple(m), U)

    def uncertain(self, upto: int | None = None):
        k = self.as_of if upto is None else upto
        n, lab = self.n, self.labels
        for r in range(1, k + 1):
            for p in range(1, n + 1):
                for q in range(1, n + 1):
                    if p != q and (p, q, r) not in lab:
                        yield (p, q, r)

    def round_labels(self, sender: int, rnd: int):
        lab = self.labels
        return [lab.get((sender, j, rnd), U) for j in range(1, self.n + 1) if j != sender]

    def view(self) -> GraphView:
        return outgoing_view(self)


def outgoing_view(g: MsgGraph) -> GraphView:
    tags = None
    if g.tags is not None:
        me = g.owner
        tags = {m: t for m, t in g.tags.items() if m[0] != me}
    return GraphView(g.owner, g.as_of, dict(g.labels), tags)


def successors(m, n: int):
    p, q, r = m
    for s in (p, q):
        for x in range(1, n + 1):
            if x != s:
                yield (s, x, r + 1)


def message_chains(g, m, current_round: int, n: int | None = None) -> list:
    """All maximal chains starting at `m` in `g` (a MsgGraph or GraphView).

    A chain follows successors through uncertain messages and stops at the
    first labelled message or at a message of `current_round`.
    """
    m = tuple(m)
    if m[2] < 1 or current_round < 0:
        raise NegativeRound(m)
    if m[2] > current_round:
        raise NotAChainStart(f"{m} is later than round {current_round}")
    if n is None:
        n = g.n if isinstance(g, MsgGraph) else max(max(x[0], x[1]) for x in list(g.labels) + [m])
    lab = g.labels
    if lab.get(m, U) != U:
        return [(m,)]
    chains = []
    stack = [(m,)]
    while stack:
        path = stack.pop()
        last = path[-1]
        if last[2] == current_round:
            chains.append(path)
            continue
        for s in successors(last, n):
            if lab.get(s, U) != U:
                chains.append(path + (s,))
            else:
                stack.append(path + (s,))
    return chains


@dataclass
class ClosureResult:
    graph: MsgGraph
    live: frozenset
    conflicts: list = field(default_factory=list)


def apply_labeling_closure(
    g: MsgGraph,
    received: Mapping[int, GraphView],
    live: Iterable[int],
    k: int,
    own_sent: Iterable[int] | None = None,
) -> ClosureResult:
    """Graph of agent g.owner at the end of round k.

    `received` maps each sender heard from in round k to the graph it
    shipped, `live` is the set of those senders. `own_sent` restricts
    which own round-k messages count as sent (used by agents that know
    they went quiet); None means all of them.
    """
    if k != g.as_of + 1:
        raise ValueError(f"closure for round {k} on a graph as of round {g.as_of}")
    me, n = g.owner, g.n
    out = g.copy()
    out.as_of = k
    lab = out.labels
    live = frozenset(live) - {me}
    conflicts: list = []

    def put(m, lv):
        if lv == NS:
            p, r = m[0], m[2]
            if r < out.min_ns.get(p, 1 << 30):
                out.min_ns[p] = r
        lab[m] = lv

    # own receipts and own sends of this round
    for j in range(1, n + 1):
        if j == me:
            continue
        put((j, me, k), S if j in live else NS)
    sent_to = None if own_sent is None else frozenset(own_sent)
    for x in range(1, n + 1):
        if x != me:
            put((me, x, k), S if sent_to is None or x in sent_to else NS)

    # what peers already knew
    evidence: dict = {}
    for j in sorted(received):
        for m, lv in received[j].labels.items():
            if lv != S and lv != NS:
                continue
            cur = lab.get(m)
            if cur is not None:
                if cur != lv:
                    conflicts.append(LabelConflict(m, (cur, lv), f"peer {j} disagrees"))
                continue
            prev = evidence.get(m)
            if prev is None:
                evidence[m] = lv
            elif prev != lv:
                conflicts.append(LabelConflict(m, (prev, lv), "peers disagree"))
                evidence[m] = NS
    for m, lv in evidence.items():
        put(m, lv)

    # a sender that skipped a message is silent from the next round on
    for p, r0 in list(out.min_ns.items()):
        for r in range(r0 + 1, k + 1):
            for q in range(1, n + 1):
                if q != p and (p, q, r) not in lab:
                    lab[(p, q, r)] = NS

    _never_known(out, k)
    return ClosureResult(out, live, conflicts)


def _never_known(g: MsgGraph, k: int) -> None:
    """Mark uncertain messages that nobody alive can ever learn about."""
    n, lab = g.n, g.labels
    while True:
        unc = [m for m in g.uncertain(k)]
        if not unc:
            return
        by_round: dict = {}
        for m in unc:
            by_round.setdefault(m[2], []).append(m)
        good: dict = {}
        for r in sorted(by_round, reverse=True):
            for m in by_round[r]:
                if r == k:
                    good[m] = False
                    continue
                ok = True
                p, q, _ = m
                for s in (p, q):
                    for x in range(1, n + 1):
                        if x == s:
                            continue
                        sm = (s, x, r + 1)
                        lv = lab.get(sm, U)
                        if lv == NS or lv == NK:
                            continue
                        if lv == S or not good.get(sm, False):
                            ok = False
                            break
                    if not ok:
                        break
                good[m] = ok
        new = []
        for m in unc:
            if not good[m]:
                continue
            p, _, r = m
            if r > 1:
                prev_ok = True
                for j in range(1, n + 1):
                    if j != p:
                        lv = lab.get((p, j, r - 1), U)
                        if lv != S and lv != NK:
                            prev_ok = False
                            break
                if not prev_ok:
                    continue
            new.append(m)
        if not new:
            return
        for m in new:
            lab[m] = NK


def merge_tags(g: MsgGraph, direct: Mapping, peers: Mapping[int, GraphView]) -> list:
    """Fold newly learned tags into g.tags in place; return conflicts."""
    if g.tags is None:
        return []
    conflicts = []
    tags = g.tags

    def add(m, t):
        cur = tags.get(m, _MISSING)
        if cur is _MISSING or cur is None:
            tags[m] = t
        elif t is not None and cur != t:
            conflicts.append(TagConflict(m, (cur, t)))

    for m, t in direct.items():
        add(tuple(m), t)
    for j in sorted(peers):
        pt = peers[j].tags
        if pt:
            for m, t in pt.items():
                add(m, t)
    return conflicts


_MISSING = object()


# ---------------------------------------------------------------- wire format

_ENTRY = struct.Struct(">HBBB")
_TAG_ENTRY = struct.Struct(">HBBB")
_HDR = struct.Struct(">BHI")


def encode_view(v: GraphView) -> bytes:
    """Labels sorted by (round, sender, receiver), then the tag map."""
    parts = [_HDR.pack(v.owner, v.as_of, len(v.labels))]
    for (p, q, r) in sorted(v.labels, key=lambda m: (m[2], m[0], m[1])):
        parts.append(_ENTRY.pack(r, p, q, int(v.labels[(p, q, r)])))
    if v.tags is None:
        parts.append(b"\x00")
    else:
        parts.append(b"\x01" + struct.pack(">I", len(v.tags)))
        for (p, q, r) in sorted(v.tags, key=lambda m: (m[2], m[0], m[1])):
            t = v.tags[(p, q, r)]
            parts.append(_TAG_ENTRY.pack(r, p, q, 0 if t is None else 1))
            if t is not None:
                parts.append(struct.pack(">Q", t))
    return b"".join(parts)


def decode_view(data: bytes, offset: int = 0):
    """Inverse of encode_view; returns (view, new_offset)."""
    owner, as_of, count = _HDR.unpack_from(data, offset)
    offset += _HDR.size
    labels = {}
    for _ in range(count):
        r, p, q, lv = _ENTRY.unpack_from(data, offset)
        offset += _ENTRY.size
        labels[(p, q, r)] = Label(lv)
    flag = data[offset]
    offset += 1
    tags = None
    if flag:
        (tc,) = struct.unpack_from(">I", data, offset)
        offset += 4
        tags = {}
        for _ in range(tc):
            r, p, q, has = _TAG_ENTRY.unpack_from(data, offset)
            offset += _TAG_ENTRY.size
            t = None
            if has:
                (t,) = struct.unpack_from(">Q", data, offset)
                offset += 8
            tags[(p, q, r)] = t
    return GraphView(owner, as_of, labels, tags), offset
