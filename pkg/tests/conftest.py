import os
import random

from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from rationalcons.core import canonicalize

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=400, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def random_pattern(rng: random.Random, n: int, f: int, max_round: int):
    """A uniformly drawn crash count, then random crash rounds and delivered sets."""
    k = rng.randint(0, f)
    raw = {}
    for a in rng.sample(range(1, n + 1), k):
        others = [j for j in range(1, n + 1) if j != a]
        d = frozenset(j for j in others if rng.random() < 0.5)
        raw[a] = (rng.randint(1, max_round), d)
    return canonicalize(raw, n, f)


@st.composite
def patterns(draw, n: int, f: int, max_round: int):
    k = draw(st.integers(0, f))
    crashed = draw(st.lists(st.integers(1, n), min_size=k, max_size=k, unique=True))
    raw = {}
    for a in crashed:
        r = draw(st.integers(1, max_round))
        others = [j for j in range(1, n + 1) if j != a]
        d = draw(st.frozensets(st.sampled_from(others)))
        raw[a] = (r, d)
    return canonicalize(raw, n, f)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS):
        verdict, info = mod.RESULTS[k]
        terminalreporter.write_line(f"criterion {k:2d}: {verdict}  {info['detail']}")
