"""Basic vocabulary shared by every module: agents, values, preferences,
failure patterns and decisions."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence


class ScenarioError(ValueError):
    """Raised for anything that does not describe a valid scenario."""


class InvalidPreference(ScenarioError):
    pass


class InvalidPattern(ScenarioError):
    pass


class InvalidGranularity(ScenarioError):
    pass


# ---------------------------------------------------------------- values

@dataclass(frozen=True)
class SymbolicValue:
    """Opaque stand-in for "the top value of this group of agents".

    Runs made with symbolic tops never compare values, so one run answers
    the question for every concrete type vector with the same grouping.
    """

    token: str

    def __repr__(self):
        return f"<{self.token}>"


@dataclass(frozen=True)
class SymbolicHalf:
    token: str
    part: int


class _Top:
    """The punishment outcome. Equal only to itself."""

    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self):
        return "TOP"

    def __reduce__(self):
        return (_Top, ())


TOP = _Top()


def is_value(x) -> bool:
    return isinstance(x, (int, SymbolicValue)) and not isinstance(x, bool)


def value_bits(domain_size: int) -> int:
    """Bits used to carry a value on the wire, at least 2 so both halves
    of a split proposal are non-empty."""
    if domain_size < 2:
        raise ScenarioError("value domain needs at least 2 values")
    return max(2, math.ceil(math.log2(domain_size)))


def split_value(v, domain_size: int):
    """Split a value into (high, low) halves as (bits, width) pairs."""
    if v is None:
        return None, None
    if isinstance(v, SymbolicValue):
        return SymbolicHalf(v.token, 1), SymbolicHalf(v.token, 2)
    b = value_bits(domain_size)
    lo_w = b // 2
    hi_w = b - lo_w
    return (v >> lo_w, hi_w), (v & ((1 << lo_w) - 1), lo_w)


def join_value(first, second, domain_size: int):
    if first is None or second is None:
        return None
    if isinstance(first, SymbolicHalf):
        if not isinstance(second, SymbolicHalf) or first.token != second.token:
            raise ValueError("halves do not belong to the same value")
        return SymbolicValue(first.token)
    (hi, hi_w), (lo, lo_w) = first, second
    b = value_bits(domain_size)
    if hi_w != b - b // 2 or lo_w != b // 2:
        raise ValueError("half widths do not match the value domain")
    v = (hi << lo_w) | lo
    if v >= domain_size:
        raise ValueError("joined value outside the domain")
    return v


# ---------------------------------------------------------------- preferences

@dataclass(frozen=True)
class PreferenceOrder:
    """Strict ranking of the value domain, best first."""

    ranking: tuple

    def __post_init__(self):
        r = tuple(self.ranking)
        object.__setattr__(self, "ranking", r)
        if sorted(r) != list(range(len(r))):
            raise InvalidPreference(f"not a permutation of 0..{len(r) - 1}: {r}")

    @property
    def top(self) -> int:
        return self.ranking[0]

    def rank(self, v) -> int:
        return self.ranking.index(v)

    def prefers(self, a, b) -> bool:
        return self.rank(a) < self.rank(b)

    def utility(self, v) -> int:
        return len(self.ranking) - self.rank(v)


TypeVector = tuple  # tuple[PreferenceOrder, ...], index 0 is agent 1


def make_types(rankings: Sequence[Sequence[int]]) -> tuple:
    return tuple(PreferenceOrder(tuple(r)) for r in rankings)


def tops_of(types: Sequence[PreferenceOrder]) -> tuple:
    return tuple(t.top for t in types)


def symbolic_tops(n: int, groups: Iterable[Iterable[int]] = ()) -> tuple:
    """One symbolic token per agent, shared inside each group."""
    tok = {a: f"v{a}" for a in range(1, n + 1)}
    for g in groups:
        g = sorted(g)
        if not g:
            continue
        name = "v" + "+".join(str(a) for a in g)
        for a in g:
            tok[a] = name
    return tuple(SymbolicValue(tok[a]) for a in range(1, n + 1))


# ---------------------------------------------------------------- utilities

class _MinusInfinity:
    """Utility of everybody when consensus is violated."""

    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self):
        return "-inf"

    def __lt__(self, other):
        return other is not self

    def __le__(self, other):
        return True

    def __gt__(self, other):
        return False

    def __ge__(self, other):
        return other is self

    def __reduce__(self):
        return (_MinusInfinity, ())


MINUS_INF = _MinusInfinity()


# ---------------------------------------------------------------- failures

@dataclass(frozen=True)
class CrashSpec:
    """Agent crashes in `crash_round`; its messages of that round reach
    only `delivered`."""

    crash_round: int
    delivered: frozenset = frozenset()


@dataclass(frozen=True)
class FailurePattern:
    n: int
    declared_f: int
    crashes: tuple = ()  # ((agent, CrashSpec), ...) sorted by agent
    _index: dict = field(default=None, compare=False, hash=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", dict(self.crashes))

    @property
    def faulty(self) -> frozenset:
        return frozenset(self._index)

    def crash_of(self, agent):
        return self._index.get(agent)

    def crash_round(self, agent):
        c = self._index.get(agent)
        return None if c is None else c.crash_round

    def is_delivered(self, sender: int, receiver: int, rnd: int) -> bool:
        c = self._index.get(sender)
        if c is None or rnd < c.crash_round:
            return True
        return rnd == c.crash_round and receiver in c.delivered

    def sends_in(self, agent, rnd) -> bool:
        c = self._index.get(agent)
        return c is None or rnd <= c.crash_round

    def receives_in(self, agent, rnd) -> bool:
        c = self._index.get(agent)
        return c is None or rnd < c.crash_round

    def prefix(self, rnd: int) -> tuple:
        """Hashable summary of the pattern as seen up to round `rnd`."""
        return tuple(
            (a, c.crash_round, tuple(sorted(c.delivered)))
            for a, c in self.crashes
            if c.crash_round <= rnd
        )

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "f": self.declared_f,
            "crashes": [
                {"agent": a, "round": c.crash_round, "delivered": sorted(c.delivered)}
                for a, c in self.crashes
            ],
        }

    def describe(self) -> str:
        if not self.crashes:
            return "failure-free"
        return "; ".join(
            f"{a}@{c.crash_round}->{{{','.join(map(str, sorted(c.delivered)))}}}"
            for a, c in self.crashes
        )


def canonicalize(raw, n: int, declared_f: int) -> FailurePattern:
    """Build a canonical pattern from {agent: (round, delivered)}.

    A crash that still delivers to every other agent is the same as a
    silent crash one round later.
    """
    if not (1 <= declared_f <= n - 1):
        raise InvalidPattern(f"need 1 <= f <= n-1, got f={declared_f}, n={n}")
    items = raw.items() if isinstance(raw, Mapping) else raw
    out = {}
    for a, spec in items:
        if isinstance(spec, CrashSpec):
            r, d = spec.crash_round, spec.delivered
        else:
            r, d = spec
        if not (1 <= a <= n):
            raise InvalidPattern(f"agent {a} out of range")
        if a in out:
            raise InvalidPattern(f"agent {a} crashes twice")
        if r < 1:
            raise InvalidPattern(f"crash round must be >= 1, got {r}")
        d = frozenset(d) - {a}
        if any(not (1 <= j <= n) for j in d):
            raise InvalidPattern("delivered set names unknown agents")
        if len(d) == n - 1:
            r, d = r + 1, frozenset()
        out[a] = CrashSpec(r, d)
    if len(out) > declared_f:
        raise InvalidPattern(f"{len(out)} crashes exceed f={declared_f}")
    return FailurePattern(n, declared_f, tuple(sorted(out.items())))


def failure_free(n: int, declared_f: int) -> FailurePattern:
    return canonicalize({}, n, declared_f)


def pattern_from_json(obj) -> FailurePattern:
    try:
        raw = {c["agent"]: (c["round"], c.get("delivered", [])) for c in obj.get("crashes", [])}
        return canonicalize(raw, int(obj["n"]), int(obj["f"]))
    except (KeyError, TypeError) as e:
        raise InvalidPattern(f"malformed failure pattern: {e}") from None


def _delivered_choices(n, a, granularity):
    others = [j for j in range(1, n + 1) if j != a]
    if granularity == "coarse":
        return [frozenset()]
    subs = []
    for size in range(len(others)):
        subs.extend(frozenset(c) for c in itertools.combinations(others, size))
    return subs


def enumerate_failure_patterns(n: int, f: int, horizon: int, granularity: str = "fine") -> Iterator[FailurePattern]:
    """Every canonical pattern with at most f crashes in rounds 1..horizon."""
    if granularity not in ("fine", "coarse"):
        raise InvalidGranularity(granularity)
    if not (0 <= f <= n - 1):
        raise InvalidPattern(f"need 0 <= f <= n-1, got f={f}, n={n}")
    if horizon < 1:
        raise InvalidPattern(f"horizon must be >= 1, got {horizon}")
    per_agent = {a: _delivered_choices(n, a, granularity) for a in range(1, n + 1)}
    rounds = range(1, horizon + 1)
    for k in range(0, f + 1):
        for crashed in itertools.combinations(range(1, n + 1), k):
            options = [
                [CrashSpec(r, d) for r in rounds for d in per_agent[a]] for a in crashed
            ]
            for combo in itertools.product(*options):
                yield FailurePattern(n, f, tuple(zip(crashed, combo)))


def count_failure_patterns(n: int, f: int, horizon: int, granularity: str = "fine") -> int:
    per = horizon * (1 if granularity == "coarse" else 2 ** (n - 1) - 1)
    return sum(math.comb(n, k) * per**k for k in range(f + 1))


# ---------------------------------------------------------------- variants

@dataclass(frozen=True)
class ProtocolVariant:
    """Which member of the NEWEPOCH family an agent runs.

    split: the proposal travels in two halves over two rounds.
    randomized: every message carries a random tag and round 1 only
    exchanges graphs and tags.
    """

    name: str
    split: bool = False
    randomized: bool = False
    tag_bits: int = 64

    @property
    def first_epoch_round(self) -> int:
        return 2 if self.randomized else 1

    def with_tag_bits(self, bits: int) -> "ProtocolVariant":
        return ProtocolVariant(self.name, self.split, self.randomized, bits)


NEWEPOCH = ProtocolVariant("NewEpoch")
NEWEPOCH2 = ProtocolVariant("NewEpoch2", split=True)
RAND_NEWEPOCH2 = ProtocolVariant("RandNewEpoch2", split=True, randomized=True)
VARIANTS = {v.name: v for v in (NEWEPOCH, NEWEPOCH2, RAND_NEWEPOCH2)}


def variant_by_name(name: str, tag_bits: int | None = None) -> ProtocolVariant:
    try:
        v = VARIANTS[name]
    except KeyError:
        raise ScenarioError(f"unknown protocol variant {name!r}") from None
    if tag_bits is not None and v.randomized:
        if not (1 <= tag_bits <= 64):
            raise ScenarioError("tag_bits must be in 1..64")
        v = v.with_tag_bits(tag_bits)
    return v
