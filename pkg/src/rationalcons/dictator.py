"""Dictator selection and the NEWEPOCH proposal messages.

Agent 1 starts as everybody's dictator. A dictator broadcasts its value
(whole, or in two halves over consecutive rounds) and decides it. The
others adopt the value once every message the dictator sent in its
proposal round(s) is known to be delivered or can never be learned, and
move on to the next dictator when the current one is known to have gone
quiet.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import IntEnum

from .core import ProtocolVariant, SymbolicHalf, SymbolicValue, join_value, split_value, value_bits
from .msggraph import NK, NS, S, U, MsgGraph


class Part(IntEnum):
    WHOLE = 0
    FIRST = 1
    SECOND = 2


class MissingHalf(RuntimeError):
    """Both proposal rounds look complete but one half never arrived."""


class MalformedProposal(ValueError):
    pass


@dataclass(frozen=True)
class NewEpochMsg:
    part: Part
    payload: object  # value, (bits, width) half, symbolic half, or None in replays
    epoch_sender: int


@dataclass
class DictatorState:
    dictator: int = 1
    chain: list = field(default_factory=lambda: [(1, 0)])  # (agent, round adopted)
    epoch_start: int | None = None  # round of our own first proposal message

    def copy(self) -> "DictatorState":
        return DictatorState(self.dictator, list(self.chain), self.epoch_start)


@dataclass
class PhaseTwo:
    decide: object = None
    source: int | None = None
    terminate: bool = False
    missing_half: bool = False


def phase1_send(st: DictatorState, me: int, top, k: int, variant: ProtocolVariant,
                domain_size: int, decided: bool) -> NewEpochMsg | None:
    """Proposal to attach to this round's messages, if any."""
    if decided or st.dictator != me or k < variant.first_epoch_round:
        return None
    if not variant.split:
        return NewEpochMsg(Part.WHOLE, top, me)
    hi, lo = split_value(top, domain_size)
    if st.epoch_start is None:
        st.epoch_start = k
        return NewEpochMsg(Part.FIRST, hi, me)
    if k == st.epoch_start + 1:
        return NewEpochMsg(Part.SECOND, lo, me)
    return None


def _all_known(g: MsgGraph, d: int, r: int) -> bool:
    lab = g.labels
    for j in range(1, g.n + 1):
        if j != d:
            lv = lab.get((d, j, r), U)
            if lv != S and lv != NK:
                return False
    return True


def _none_uncertain(g: MsgGraph, d: int, r: int) -> bool:
    lab = g.labels
    return all((d, j, r) in lab for j in range(1, g.n + 1) if j != d)


def decide_condition(g: MsgGraph, ne_received: dict, d: int, k: int):
    """Value to adopt from dictator d's whole proposal, or None."""
    rounds = sorted(r for (s, r), ne in ne_received.items() if s == d and r < k and ne.part == Part.WHOLE)
    for r in rounds:
        if _all_known(g, d, r):
            v = ne_received[(d, r)].payload
            return UNKNOWN if v is None else v
    return None


def decide_condition_split(g: MsgGraph, ne_received: dict, d: int, k: int, domain_size: int):
    """Value to adopt from d's two-part proposal, or None.

    Raises MissingHalf when the labels say both rounds are complete yet
    the second half is not in hand.
    """
    firsts = sorted(r for (s, r), ne in ne_received.items() if s == d and ne.part == Part.FIRST)
    for r in firsts:
        if r + 1 >= k:
            continue
        if not (_all_known(g, d, r) and _all_known(g, d, r + 1)):
            continue
        second = ne_received.get((d, r + 1))
        if second is None or second.part != Part.SECOND:
            raise MissingHalf(f"dictator {d}: second half for round {r + 1} missing")
        first = ne_received[(d, r)].payload
        if first is None or second.payload is None:
            return UNKNOWN
        return join_value(first, second.payload, domain_size)
    return None


class _Unknown:
    def __repr__(self):
        return "?"


UNKNOWN = _Unknown()  # decided, but the value is not tracked (value-free replays)


def phase2_update(st: DictatorState, g: MsgGraph, live, ne_received: dict, k: int, me: int, top,
                  variant: ProtocolVariant, domain_size: int, decide_round: int | None,
                  shadow: bool = False) -> PhaseTwo:
    """End-of-round dictator bookkeeping after the graph closure.

    `shadow` is for an agent that knows its own messages stopped getting
    through: it never decides its own proposal.
    """
    out = PhaseTwo()
    if decide_round is not None:
        if decide_round == k - 1:
            out.terminate = True
        return out
    if k < variant.first_epoch_round:
        return out
    if st.dictator == me and not shadow:
        if not variant.split or (st.epoch_start is not None and k == st.epoch_start + 1):
            out.decide, out.source = (UNKNOWN if top is None else top), me
        return out
    seen = {st.dictator}
    while True:
        d = st.dictator
        if d != me:
            if variant.split:
                try:
                    v = decide_condition_split(g, ne_received, d, k, domain_size)
                except MissingHalf:
                    out.missing_half = True
                    return out
            else:
                v = decide_condition(g, ne_received, d, k)
            if v is not None:
                out.decide, out.source = v, d
                return out
        if d in live:
            break
        r = g.min_ns.get(d)
        if r is None:
            break
        if r > 1 and not _none_uncertain(g, d, r - 1):
            break
        if not _none_uncertain(g, d, r):
            break
        nxt = min(j for j in range(1, g.n + 1) if j != d and g.labels.get((d, j, r)) == NS)
        if nxt in seen:  # only reachable with contradictory labels
            break
        seen.add(nxt)
        st.dictator = nxt
        st.chain.append((nxt, k))
    return out


# ---------------------------------------------------------------- wire format

def encode_newepoch(ne: NewEpochMsg | None) -> bytes:
    """part (1 byte), epoch sender (2 bytes), then a length-prefixed body."""
    if ne is None:
        return b""
    p = ne.payload
    if p is None:
        body = b"\x00"
    elif isinstance(p, (SymbolicValue, SymbolicHalf)):
        tok = p.token.encode()
        part = p.part if isinstance(p, SymbolicHalf) else 0
        body = b"\x02" + struct.pack(">BH", part, len(tok)) + tok
    else:
        bits, width = (p, None) if isinstance(p, int) else p
        if width is None:
            body = b"\x01" + struct.pack(">BQ", 0, bits)
        else:
            body = b"\x01" + struct.pack(">BQ", width, bits)
    return struct.pack(">BH", int(ne.part), ne.epoch_sender) + struct.pack(">H", len(body)) + body


def decode_newepoch(data: bytes) -> NewEpochMsg | None:
    if not data:
        return None
    try:
        part, sender = struct.unpack_from(">BH", data, 0)
        (ln,) = struct.unpack_from(">H", data, 3)
        body = data[5:5 + ln]
        kind = body[0]
        if kind == 0:
            payload = None
        elif kind == 2:
            hp, tl = struct.unpack_from(">BH", body, 1)
            tok = body[4:4 + tl].decode()
            payload = SymbolicHalf(tok, hp) if hp else SymbolicValue(tok)
        elif kind == 1:
            width, bits = struct.unpack_from(">BQ", body, 1)
            payload = bits if width == 0 else (bits, width)
        else:
            raise MalformedProposal(f"unknown payload kind {kind}")
        return NewEpochMsg(Part(part), payload, sender)
    except (struct.error, IndexError, ValueError) as e:
        raise MalformedProposal(str(e)) from None


def proposal_well_formed(ne: NewEpochMsg, variant: ProtocolVariant, domain_size: int, sender: int) -> bool:
    """Structural check of a received proposal against the variant."""
    if ne.epoch_sender != sender:
        return False
    p = ne.payload
    if not variant.split:
        if ne.part != Part.WHOLE:
            return False
        if p is None or isinstance(p, SymbolicValue):
            return True
        return isinstance(p, int) and not isinstance(p, bool) and 0 <= p < domain_size
    if ne.part not in (Part.FIRST, Part.SECOND):
        return False
    if p is None:
        return True
    if isinstance(p, SymbolicHalf):
        return p.part == int(ne.part)
    if not (isinstance(p, tuple) and len(p) == 2):
        return False
    bits, width = p
    b = value_bits(domain_size)
    want = b - b // 2 if ne.part == Part.FIRST else b // 2
    return width == want and isinstance(bits, int) and 0 <= bits < (1 << width)
