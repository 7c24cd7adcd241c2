"""Figures for run transcripts and sweeps (matplotlib, written to files)."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .core import TOP  # noqa: E402

_COLORS = {"ok": "#1b7837", "top": "#b2182b", "none": "#999999", "cheat": "#e08214"}


def _label(v) -> str:
    if v is None:
        return "-"
    if v is TOP:
        return "TOP"
    tok = getattr(v, "token", None)
    return str(tok if tok is not None else v)


def spacetime(t, path, colluders=frozenset(), title: str | None = None) -> str:
    """Space-time diagram: one horizontal line per agent, one arrow per
    delivered message, crash and decision markers."""
    n = len(t.outcomes)
    rounds = max(t.rounds_run, 1)
    fig, ax = plt.subplots(figsize=(1.2 + 0.9 * rounds, 0.8 + 0.55 * n))
    for a in range(1, n + 1):
        o = t.outcomes[a]
        end = o.crash_round if o.crashed else (o.terminate_round or rounds)
        color = _COLORS["cheat"] if a in colluders else "black"
        ax.plot([0, end], [a, a], color=color, lw=1.2)
        if o.crashed:
            ax.plot([o.crash_round], [a], marker="x", color=_COLORS["top"], ms=8)
        if o.decide_round is not None:
            c = _COLORS["top"] if o.decision is TOP else _COLORS["ok"]
            ax.plot([o.decide_round], [a], marker="o", color=c, ms=6)
            ax.annotate(_label(o.decision), (o.decide_round, a), textcoords="offset points",
                        xytext=(4, 5), fontsize=7, color=c)
    for r, recs in enumerate(t.rounds, start=1):
        for s, q, _ in recs:
            ax.annotate("", xy=(r, q), xytext=(r - 1, s),
                        arrowprops=dict(arrowstyle="->", lw=0.5, color="#4d4d4d", alpha=0.45))
    ax.set_xlim(-0.2, rounds + 0.6)
    ax.set_ylim(n + 0.6, 0.4)
    ax.set_yticks(range(1, n + 1))
    ax.set_yticklabels([f"p{a}" for a in range(1, n + 1)])
    ax.set_xticks(range(0, rounds + 1))
    ax.set_xlabel("round")
    if title:
        ax.set_title(title, fontsize=9)
    for side in ("top", "right"):
        ax.spines[side].set_visible(False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def decision_rounds(rows, path, bound=None, title: str | None = None) -> str:
    """Max decision round against the number of actual crashes.

    `rows` holds (crashes, max_decision_round) pairs; `bound` maps a crash
    count to the allowed round, drawn as a step line.
    """
    by = {}
    for fp, r in rows:
        if r is not None:
            by.setdefault(fp, []).append(r)
    fig, ax = plt.subplots(figsize=(4.2, 3.0))
    xs = sorted(by)
    if xs:
        ax.boxplot([by[x] for x in xs], positions=xs, widths=0.5, showfliers=False)
        ax.plot(xs, [max(by[x]) for x in xs], "o-", color=_COLORS["ok"], ms=4, label="measured max")
        if bound is not None:
            ax.step(xs, [bound(x) for x in xs], where="mid", color=_COLORS["top"], ls="--", label="bound")
        ax.legend(fontsize=7, frameon=False)
    ax.set_xlabel("actual crashes f'")
    ax.set_ylabel("decision round")
    if title:
        ax.set_title(title, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def verdict_bars(counts: dict, path, title: str | None = None) -> str:
    """Bar chart of outcome kinds (e.g. ok / TOP / violation) in a sweep."""
    fig, ax = plt.subplots(figsize=(4.0, 2.6))
    keys = list(counts)
    ax.bar(range(len(keys)), [counts[k] for k in keys],
           color=[_COLORS.get(k, "#4393c3") for k in keys])
    ax.set_xticks(range(len(keys)))
    ax.set_xticklabels(keys, fontsize=8)
    ax.set_ylabel("runs")
    if title:
        ax.set_title(title, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def ensure_dir(d) -> str:
    os.makedirs(d, exist_ok=True)
    return d
