"""Scenario-driven command line: single runs, sweeps, legality, benefit,
dictatorship, and the built-in fixtures.

Exit codes: 0 every consensus report passes, 2 consensus violated,
3 an agent decided TOP, 4 horizon exhausted, 64 invalid scenario.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from collections import Counter
from dataclasses import dataclass, field, replace
from importlib import resources

from . import plotting
from .adversary import (FIXTURE_NAMES, ce_fixture, flood_view_explainable, plan_from_json,
                        validate_plan)
from .core import (MINUS_INF, TOP, FailurePattern, PreferenceOrder, ScenarioError,
                   enumerate_failure_patterns, failure_free, pattern_from_json, variant_by_name)
from .simnet import format_value
from .verify import (check_benefit, check_consensus, check_legality, find_dictator, resilience_sweep,
                     run_plan, sweep_runs, utility)

EXIT_OK, EXIT_VIOLATED, EXIT_TOP, EXIT_HORIZON, EXIT_INVALID = 0, 2, 3, 4, 64
OUT_ENV = "RATIONALCONS_OUT"
FLOOD = "FloodMin"


@dataclass
class Scenario:
    name: str
    variant: object  # ProtocolVariant, or None for the min-flood baseline
    n: int
    f: int
    types: tuple
    pattern: object  # FailurePattern or "enumerate"
    plans: tuple = ()
    seed: int = 0
    horizon: int = 0
    cheat: bool = True
    sweep: dict = field(default_factory=dict)
    note: str = ""
    out: str | None = None

    @property
    def tops(self) -> tuple:
        return tuple(t.top for t in self.types)

    @property
    def value_domain(self) -> int:
        return len(self.types[0].ranking)

    @property
    def variant_name(self) -> str:
        return self.variant.name if self.variant is not None else FLOOD

    @property
    def colluders(self) -> frozenset:
        return frozenset().union(*[p.colluders for p in self.plans]) if self.plans else frozenset()

    @property
    def active_plans(self) -> tuple:
        return self.plans if self.cheat else ()

    def to_json(self) -> dict:
        d = {"name": self.name, "variant": self.variant_name}
        if self.variant is not None and self.variant.randomized:
            d["tag_bits"] = self.variant.tag_bits
        d.update(n=self.n, f=self.f, value_domain=self.value_domain,
                 types=[list(t.ranking) for t in self.types])
        if isinstance(self.pattern, FailurePattern):
            d["pattern"] = {"crashes": self.pattern.to_json()["crashes"]}
        else:
            d["pattern"] = self.pattern
        d["plans"] = [p.to_json() for p in self.plans]
        d.update(seed=self.seed, horizon=self.horizon, cheat=self.cheat)
        if self.sweep:
            d["sweep"] = dict(self.sweep)
        if self.note:
            d["note"] = self.note
        return d


# ---------------------------------------------------------------- scenario files

def _ranking_from_top(top: int, m: int) -> tuple:
    return (top,) + tuple(v for v in range(m) if v != top)


def _types(spec, n: int, m: int, plans) -> tuple:
    if isinstance(spec, list):
        if spec and isinstance(spec[0], int):
            rankings = [_ranking_from_top(t, m) for t in spec]
        else:
            rankings = [tuple(r) for r in spec]
    elif isinstance(spec, dict) and "tops" in spec:
        rankings = [_ranking_from_top(t, m) for t in spec["tops"]]
    elif isinstance(spec, dict) and spec.get("generator") == "latin":
        shift = int(spec.get("shift", 0))
        rankings = [tuple((a - 1 + shift + j) % m for j in range(m)) for a in range(1, n + 1)]
        # colluders act as one: they take the lowest member's preferences
        for p in plans:
            lead = rankings[min(p.colluders) - 1]
            for a in p.colluders:
                rankings[a - 1] = lead
    else:
        raise ScenarioError(f"cannot read types from {spec!r}")
    if len(rankings) != n:
        raise ScenarioError(f"{len(rankings)} preference orders for n={n}")
    types = tuple(PreferenceOrder(tuple(r)) for r in rankings)
    if any(len(t.ranking) != m for t in types):
        raise ScenarioError(f"preference orders must rank all {m} values")
    return types


def _pattern(spec, n: int, f: int):
    if spec is None or spec == "failure-free":
        return failure_free(n, f)
    if spec == "enumerate":
        return "enumerate"
    if isinstance(spec, dict):
        return pattern_from_json({"n": n, "f": f, "crashes": spec.get("crashes", [])})
    if isinstance(spec, list):
        return pattern_from_json({"n": n, "f": f, "crashes": spec})
    raise ScenarioError(f"cannot read a failure pattern from {spec!r}")


def scenario_from_fixture(name: str, variant=None) -> Scenario:
    fx = ce_fixture(name)
    v = fx.variant if variant is None else variant
    return Scenario(fx.name, v, fx.n, fx.f, fx.types, fx.pattern_for(v), fx.plans, 0, fx.horizon,
                    True, dict(fx.sweep), fx.note)


def parse_scenario(obj: dict, base: Scenario | None = None) -> Scenario:
    """Build and validate a scenario; raises ScenarioError on any problem."""
    if not isinstance(obj, dict):
        raise ScenarioError("a scenario is a JSON object")
    try:
        if "fixture" in obj:
            vname = obj.get("variant")
            v = None
            if vname is not None and vname != FLOOD:
                v = variant_by_name(vname, obj.get("tag_bits"))
            base = scenario_from_fixture(obj["fixture"], v)
        if base is not None:
            d = base.to_json()
            d.update({k: v for k, v in obj.items() if k != "fixture"})
            if "pattern" not in obj and isinstance(base.pattern, FailurePattern):
                d["pattern"] = {"crashes": base.pattern.to_json()["crashes"]}
            obj = d
        vname = obj["variant"]
        variant = None if vname == FLOOD else variant_by_name(vname, obj.get("tag_bits"))
        n, f = int(obj["n"]), int(obj["f"])
        if not (1 <= f <= n - 1):
            raise ScenarioError(f"need 1 <= f <= n-1, got f={f}, n={n}")
        plans_raw = obj.get("plans", [])
        if isinstance(plans_raw, dict):
            plans_raw = [plans_raw]
        plans = tuple(plan_from_json(p) for p in plans_raw)
        m = int(obj.get("value_domain", 3))
        if m < 1:
            raise ScenarioError("value_domain must be positive")
        types = _types(obj["types"], n, m, plans)
        tops = tuple(t.top for t in types)
        for p in plans:
            validate_plan(p, tops, n)
        horizon = int(obj.get("horizon") or (f + 1 if variant is None else 3 * f + 6))
        if horizon < 1:
            raise ScenarioError("horizon must be positive")
        sweep = obj.get("sweep", {})
        if not isinstance(sweep, dict):
            raise ScenarioError("sweep must be an object")
        return Scenario(str(obj.get("name", "scenario")), variant, n, f, types, _pattern(obj.get("pattern"), n, f),
                        plans, int(obj.get("seed", 0)), horizon, bool(obj.get("cheat", True)), dict(sweep),
                        str(obj.get("note", "")), obj.get("out"))
    except ScenarioError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise ScenarioError(f"malformed scenario: {e!r}") from None


def load_scenario(path: str) -> Scenario:
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except OSError as e:
        raise ScenarioError(f"cannot read {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise ScenarioError(f"{path} is not valid JSON: {e}") from None
    return parse_scenario(obj)


def fixture_file_names() -> list:
    return sorted(p.name for p in resources.files("rationalcons").joinpath("fixtures").iterdir()
                  if p.name.endswith(".json"))


def fixture_path(name: str) -> str:
    fname = name if name.endswith(".json") else name + ".json"
    p = resources.files("rationalcons").joinpath("fixtures", fname)
    if not p.is_file():
        raise ScenarioError(f"no shipped scenario {name!r}; known: {', '.join(fixture_file_names())}")
    return str(p)


def builtin_scenarios() -> dict:
    """Every shipped scenario file name mapped to its contents."""
    from .core import NEWEPOCH, NEWEPOCH2, RAND_NEWEPOCH2

    out = {}
    for name in FIXTURE_NAMES:
        out[name] = scenario_from_fixture(name)
    out["CE1_NewEpoch2"] = replace(scenario_from_fixture("CE1", NEWEPOCH2), name="CE1_NewEpoch2")
    out["CE2_Rand"] = replace(scenario_from_fixture("CE2", RAND_NEWEPOCH2.with_tag_bits(16)), name="CE2_Rand")
    ce3 = scenario_from_fixture("CE3")
    out["CE3_f4"] = replace(ce3, name="CE3_f4", plans=tuple(replace(p, effective_f=4) for p in ce3.plans),
                            sweep={"max_crashes": 4, "crash_round_max": 6})
    out["Honest_NewEpoch_n4"] = Scenario(
        "Honest_NewEpoch_n4", NEWEPOCH, 4, 2, _types({"generator": "latin"}, 4, 3, ()), "enumerate",
        horizon=12, note="every fine-grained pattern, honest agents")
    return {k: s.to_json() for k, s in out.items()}


# ---------------------------------------------------------------- helpers

def _num(u):
    return "-inf" if u is MINUS_INF else u


def _exit_for(reports, transcripts) -> int:
    if any(o.decision is TOP for t in transcripts for o in t.outcomes.values()):
        return EXIT_TOP
    if any(t.horizon_exhausted for t in transcripts):
        return EXIT_HORIZON
    if any(not r.ok for r in reports):
        return EXIT_VIOLATED
    return EXIT_OK


def _exit_for_violations(violations) -> int:
    if any("TOP" in v for v in violations):
        return EXIT_TOP
    if any("never decided" in v for v in violations):
        return EXIT_HORIZON
    return EXIT_VIOLATED if violations else EXIT_OK


def _exit_for_rows(rows) -> int:
    if any(r.tops for r in rows):
        return EXIT_TOP
    if any(any("never decided" in v for v in r.violations) for r in rows):
        return EXIT_HORIZON
    if any(not r.ok for r in rows):
        return EXIT_VIOLATED
    return EXIT_OK


def _need_protocol(sc: Scenario, what: str):
    if sc.variant is None:
        raise ScenarioError(f"{what} needs a protocol variant, not the {FLOOD} baseline")


def _need_pattern(sc: Scenario) -> FailurePattern:
    if not isinstance(sc.pattern, FailurePattern):
        raise ScenarioError("this command needs an explicit failure pattern")
    return sc.pattern


def _header(sc: Scenario, cheat: bool) -> dict:
    return {"scenario": sc.name, "variant": sc.variant_name, "seed": sc.seed, "cheat": cheat,
            "horizon": sc.horizon, "types": [list(t.ranking) for t in sc.types],
            "pattern": sc.pattern.to_json() if isinstance(sc.pattern, FailurePattern) else sc.pattern,
            "plans": [p.to_json() for p in sc.plans] if cheat else []}


def execute(sc: Scenario, cheat: bool, trace: bool = False):
    F = _need_pattern(sc)
    plans = sc.plans if cheat else ()
    return run_plan(sc.variant, F, sc.tops, sc.horizon, sc.seed, sc.value_domain, plans, _header(sc, cheat),
                    trace, rounds=sc.horizon if sc.variant is None else None)


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _emit(args, report: dict, lines: list):
    if args.format == "structured":
        print(json.dumps(report, indent=2, sort_keys=True, default=str))
    else:
        for line in lines:
            print(line)


# ---------------------------------------------------------------- commands

def cmd_run(sc: Scenario, args) -> int:
    if sc.pattern == "enumerate":
        return cmd_sweep(sc, args)
    out = plotting.ensure_dir(args.out)
    cheat = bool(sc.active_plans)
    t, eng = execute(sc, cheat, trace=False)
    rep = check_consensus(t, sc.tops)
    digest = t.write(os.path.join(out, "transcript.txt"))
    plotting.spacetime(t, os.path.join(out, "spacetime.png"), sc.colluders if cheat else frozenset(),
                       f"{sc.name} ({sc.variant_name}, seed {sc.seed})")
    reports, transcripts = [rep], [t]
    base = brep = None
    benefit = {}
    if cheat:
        base, _ = execute(sc, False)
        brep = check_consensus(base, sc.tops)
        base.write(os.path.join(out, "baseline_transcript.txt"))
        for a in sorted(sc.colluders):
            before, after = utility(a, base, sc.types, brep), utility(a, t, sc.types, rep)
            if after is not MINUS_INF and (before is MINUS_INF or after > before):
                benefit[a] = (_num(before), _num(after))
    detect = None
    if sc.variant is None and cheat:
        # flood baseline: can an honest agent tell that no honest run explains its view?
        detect = [a for a in range(1, sc.n + 1)
                  if a not in sc.colluders and a not in eng.crashes
                  and not flood_view_explainable(a, eng.machines[a].mhist, list(sc.tops), sc.horizon, sc.f)]
    code = _exit_for(reports, transcripts)
    with open(os.path.join(out, "outcomes.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["agent", "top", "colluder", "decision", "decide_round", "terminate_round", "crash_round",
                    "top_reason", "baseline_decision", "utility_baseline", "utility"])
        for a, o in sorted(t.outcomes.items()):
            bo = base.outcomes[a] if base is not None else None
            w.writerow([a, sc.tops[a - 1], int(a in sc.colluders), format_value(o.decision), o.decide_round or "",
                        o.terminate_round or "", o.crash_round or "", o.top_reason or "",
                        format_value(bo.decision) if bo else "",
                        _num(utility(a, base, sc.types, brep)) if base is not None else "",
                        _num(utility(a, t, sc.types, rep))])
    report = {
        "command": "run", "scenario": sc.name, "variant": sc.variant_name, "seed": sc.seed,
        "pattern": _need_pattern(sc).describe(), "cheat": cheat, "digest": digest,
        "consensus": {"ok": rep.ok, "violations": rep.violations},
        "decisions": {a: format_value(o.decision) for a, o in t.outcomes.items()},
        "horizon_exhausted": t.horizon_exhausted, "rounds": t.rounds_run, "messages": t.messages,
        "exit_code": code,
    }
    if cheat:
        report["baseline"] = {"ok": brep.ok, "violations": brep.violations,
                              "decisions": {a: format_value(o.decision) for a, o in base.outcomes.items()}}
        report["benefit"] = {"flagged": bool(benefit), "agents": benefit}
    if detect is not None:
        report["inconsistency_detected_by"] = detect
    _write_json(os.path.join(out, "report.json"), report)
    lines = [f"{sc.name} [{sc.variant_name}] seed={sc.seed} pattern: {report['pattern']}",
             "decisions: " + " ".join(f"{a}={d}" for a, d in report["decisions"].items()),
             "consensus: " + ("ok" if rep.ok else "; ".join(rep.violations))]
    if cheat:
        lines.append("baseline decisions: " + " ".join(f"{a}={d}" for a, d in report["baseline"]["decisions"].items()))
        lines.append("benefit: " + (", ".join(f"agent {a} {b} -> {c}" for a, (b, c) in benefit.items())
                                   if benefit else "none"))
    if detect is not None:
        lines.append("inconsistency detected by: " + (", ".join(map(str, detect)) if detect else "nobody"))
    lines.append(f"digest {digest}")
    lines.append(f"exit {code}")
    with open(os.path.join(out, "report.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    _emit(args, report, lines)
    return code


def _bounds(variant):
    if variant is None:
        return None
    if variant.randomized:
        return lambda fp: 3 * fp + 4
    if variant.split:
        return lambda fp: 3 * fp + 3
    return lambda fp: 2 * fp + 2


def cmd_sweep(sc: Scenario, args) -> int:
    out = plotting.ensure_dir(args.out)
    mc = sc.sweep.get("max_crashes")
    crm = sc.sweep.get("crash_round_max")
    rows = sweep_runs(sc.variant, sc.n, sc.f, sc.horizon, mc, crm, sc.tops, sc.active_plans, args.jobs,
                      measure_size=True, seed=sc.seed, domain_size=sc.value_domain)
    with open(os.path.join(out, "sweep.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "pattern", "crashes", "ok", "tops", "max_decide_round", "max_terminate_round",
                    "messages", "max_payload_bytes", "deviated", "violations"])
        for i, r in enumerate(rows):
            w.writerow([i, r.pattern.describe(), r.crashes, int(r.ok), r.tops, r.max_decide or "",
                        r.max_terminate or "", r.messages, r.max_payload, int(r.deviated), " | ".join(r.violations)])
    kinds = Counter("ok" if r.ok else ("top" if r.tops else "violation") for r in rows)
    counts = {k: kinds.get(k, 0) for k in ("ok", "top", "violation")}
    plotting.verdict_bars(counts, os.path.join(out, "verdicts.png"), f"{sc.name}: {len(rows)} patterns")
    plotting.decision_rounds([(r.crashes, r.max_decide) for r in rows], os.path.join(out, "decision_rounds.png"),
                             _bounds(sc.variant), f"{sc.name} ({sc.variant_name})")
    per_f = {}
    for r in rows:
        if r.max_decide is not None:
            per_f[r.crashes] = max(per_f.get(r.crashes, 0), r.max_decide)
    code = _exit_for_rows(rows)
    report = {"command": "sweep", "scenario": sc.name, "variant": sc.variant_name, "patterns": len(rows),
              "verdicts": counts, "max_decide_round_by_crashes": per_f,
              "max_messages": max((r.messages for r in rows), default=0),
              "max_payload_bytes": max((r.max_payload or 0 for r in rows), default=0),
              "first_failure": next((f"{r.pattern.describe()}: {'; '.join(r.violations)}"
                                     for r in rows if not r.ok), None),
              "exit_code": code}
    _write_json(os.path.join(out, "report.json"), report)
    lines = [f"{sc.name} [{sc.variant_name}] sweep over {len(rows)} pattern classes",
             "verdicts: " + " ".join(f"{k}={v}" for k, v in counts.items()),
             "max decision round by crashes: " + " ".join(f"{k}:{v}" for k, v in sorted(per_f.items())),
             f"max messages {report['max_messages']}, max payload {report['max_payload_bytes']} bytes"]
    if report["first_failure"]:
        lines.append(f"first failure: {report['first_failure']}")
    lines.append(f"exit {code}")
    with open(os.path.join(out, "report.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    _emit(args, report, lines)
    return code


def _scope_args(sc: Scenario) -> dict:
    return {"max_crashes": sc.sweep.get("max_crashes"), "crash_round_max": sc.sweep.get("crash_round_max")}


def _hints(sc: Scenario) -> tuple:
    return (sc.pattern,) if isinstance(sc.pattern, FailurePattern) else ()


def cmd_legality(sc: Scenario, args) -> int:
    _need_protocol(sc, "legality")
    if not sc.plans:
        raise ScenarioError("legality needs a cheater plan")
    out = plotting.ensure_dir(args.out)
    lr = check_legality(sc.variant, sc.plans, sc.n, sc.f, sc.horizon, seed=sc.seed,
                        domain_size=max(sc.value_domain, 4), hints=_hints(sc), **_scope_args(sc))
    code = EXIT_OK
    report = {"command": "legality", "scenario": sc.name, "variant": sc.variant_name, "legal": lr.legal,
              "patterns_checked": lr.patterns_checked, "deviating_runs": lr.deviating_runs,
              "pruned": lr.pruned, "horizon": lr.horizon, "scope": lr.scope, "summary": lr.summary()}
    if lr.counterexample:
        F, rep = lr.counterexample
        t, _ = run_plan(sc.variant, F, sc.tops, sc.horizon, sc.seed, sc.value_domain, sc.plans,
                        _header(replace(sc, pattern=F), True))
        crep = check_consensus(t, sc.tops)
        report["counterexample"] = {"pattern": F.describe(), "violations": rep.violations,
                                    "replay_violations": crep.violations, "digest": t.write(os.path.join(out, "counterexample.txt"))}
        plotting.spacetime(t, os.path.join(out, "counterexample.png"), sc.colluders, f"{sc.name}: counterexample")
        code = _exit_for_violations(rep.violations)
    report["exit_code"] = code
    _write_json(os.path.join(out, "report.json"), report)
    lines = [f"{sc.name} [{sc.variant_name}] {lr.summary()}", f"exit {code}"]
    with open(os.path.join(out, "report.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    _emit(args, report, lines)
    return code


def cmd_benefit(sc: Scenario, args) -> int:
    _need_protocol(sc, "benefit")
    if not sc.plans:
        raise ScenarioError("benefit needs a cheater plan")
    out = plotting.ensure_dir(args.out)
    br = check_benefit(sc.variant, sc.plans, sc.n, sc.f, sc.horizon, seed=sc.seed,
                       domain_size=max(sc.value_domain, 4), hints=_hints(sc), **_scope_args(sc))
    report = {"command": "benefit", "scenario": sc.name, "variant": sc.variant_name,
              "beneficial": br.beneficial, "patterns_checked": br.patterns_checked, "scope": br.scope,
              "summary": br.summary(), "exit_code": EXIT_OK}
    if br.witness:
        w = br.witness
        report["witness"] = {"pattern": w["pattern"].describe(), "agent": w["agent"],
                             "before": _num(w["before"]), "after": _num(w["after"]),
                             "types": [list(t.ranking) for t in w["types"]]}
        wsc = replace(sc, pattern=w["pattern"], types=w["types"])
        t, _ = execute(wsc, True)
        report["witness"]["digest"] = t.write(os.path.join(out, "witness.txt"))
        plotting.spacetime(t, os.path.join(out, "witness.png"), sc.colluders, f"{sc.name}: benefit witness")
    _write_json(os.path.join(out, "report.json"), report)
    lines = [f"{sc.name} [{sc.variant_name}] {br.summary()}", "exit 0"]
    with open(os.path.join(out, "report.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    _emit(args, report, lines)
    return EXIT_OK


def cmd_dictator(sc: Scenario, args) -> int:
    _need_protocol(sc, "dictator")
    out = plotting.ensure_dir(args.out)
    if isinstance(sc.pattern, FailurePattern):
        patterns = [sc.pattern]
    else:
        mc = sc.sweep.get("crash_round_max", sc.horizon)
        patterns = list(enumerate_failure_patterns(sc.n, sc.f, mc))
    rows, missing = [], 0
    for F in patterns:
        res = find_dictator(sc.variant, F, sc.n, sc.value_domain, args.samples, sc.horizon, sc.seed)
        rows.append((F, res))
        missing += res.dictator is None
    with open(os.path.join(out, "dictators.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["pattern", "dictator", "runs"])
        for F, res in rows:
            w.writerow([F.describe(), res.dictator or "", res.runs])
    code = EXIT_OK if not missing else EXIT_VIOLATED
    hist = Counter(res.dictator for _, res in rows)
    report = {"command": "dictator", "scenario": sc.name, "variant": sc.variant_name, "patterns": len(rows),
              "without_dictator": missing, "dictators": {str(k): v for k, v in sorted(hist.items(), key=str)},
              "exit_code": code}
    if len(rows) == 1:
        report["dictator"] = rows[0][1].dictator
    _write_json(os.path.join(out, "report.json"), report)
    plotting.verdict_bars({f"p{k}" if k else "none": v for k, v in sorted(hist.items(), key=lambda x: x[0] or 0)},
                          os.path.join(out, "dictators.png"), f"{sc.name}: dictator per pattern")
    lines = [f"{sc.name} [{sc.variant_name}] {len(rows)} patterns, {missing} without a dictator",
             "dictators: " + " ".join(f"{k}:{v}" for k, v in report["dictators"].items()), f"exit {code}"]
    with open(os.path.join(out, "report.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    _emit(args, report, lines)
    return code


def cmd_resilience(sc: Scenario, args) -> int:
    _need_protocol(sc, "resilience")
    out = plotting.ensure_dir(args.out)
    fam = list(sc.plans) if sc.plans else None
    summ = resilience_sweep(sc.variant, args.c, sc.f, sc.n, fam, sc.horizon, seed=sc.seed,
                            domain_size=max(sc.value_domain, 4), hints=_hints(sc), **_scope_args(sc))
    text = summ.render()
    with open(os.path.join(out, "report.txt"), "w") as fh:
        fh.write(text + "\n")
    report = {"command": "resilience", "variant": summ.variant, "n": summ.n, "f": summ.f, "c": summ.c,
              "falsified_by": summ.falsified_by,
              "entries": [{"plan": e.plan, "legal": e.legal, "beneficial": e.beneficial, "note": e.note}
                          for e in summ.entries], "exit_code": EXIT_OK}
    _write_json(os.path.join(out, "report.json"), report)
    _emit(args, report, text.splitlines())
    return EXIT_OK


def cmd_fixtures(args) -> int:
    if args.action == "export":
        d = plotting.ensure_dir(args.dir)
        for name, obj in builtin_scenarios().items():
            _write_json(os.path.join(d, name + ".json"), obj)
        print(f"wrote {len(builtin_scenarios())} scenarios to {d}")
        return EXIT_OK
    rows = []
    for fname in fixture_file_names():
        with open(fixture_path(fname)) as fh:
            obj = json.load(fh)
        rows.append((fname[:-5], obj.get("variant"), obj.get("note", "")))
    if args.format == "structured":
        print(json.dumps([{"name": a, "variant": b, "note": c} for a, b, c in rows], indent=2))
    else:
        for a, b, c in rows:
            print(f"{a:20s} {b:14s} {c}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "legality": cmd_legality, "benefit": cmd_benefit,
            "dictator": cmd_dictator, "resilience": cmd_resilience}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", metavar="PATH", help="scenario file (JSON)")
    src.add_argument("--fixture", metavar="NAME", help="shipped scenario, e.g. CE2 or CE2_Rand")
    common.add_argument("--seed", type=int, help="override the scenario seed")
    common.add_argument("--horizon", type=int, help="override the round horizon")
    common.add_argument("--out", default=os.environ.get(OUT_ENV, "out"),
                        help=f"output directory (default ${OUT_ENV} or ./out)")
    common.add_argument("--jobs", type=int, default=1, help="worker threads for sweeps")
    common.add_argument("--format", choices=("text", "structured"), default="text")
    common.add_argument("--no-cheat", action="store_true", help="drop the cheater plans")

    p = argparse.ArgumentParser(prog="rationalcons", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="one run (or a sweep if the pattern is 'enumerate')")
    sub.add_parser("sweep", parents=[common], help="every failure pattern in scope")
    sub.add_parser("legality", parents=[common], help="does the cheat keep consensus on every pattern?")
    sub.add_parser("benefit", parents=[common], help="does some colluder gain on some pattern?")
    d = sub.add_parser("dictator", parents=[common], help="whose top value wins under each pattern")
    d.add_argument("--samples", type=int, default=0, help="concrete top vectors to check as well")
    r = sub.add_parser("resilience", parents=[common], help="legal-and-beneficial search over the catalog")
    r.add_argument("-c", type=int, default=2, help="largest colluder group")
    fx = sub.add_parser("fixtures", help="shipped scenarios")
    fx.add_argument("action", choices=("list", "export"))
    fx.add_argument("dir", nargs="?", default="fixtures")
    fx.add_argument("--format", choices=("text", "structured"), default="text")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "fixtures":
        return cmd_fixtures(args)
    try:
        sc = load_scenario(args.scenario if args.scenario else fixture_path(args.fixture))
        if args.seed is not None:
            sc = replace(sc, seed=args.seed)
        if args.horizon is not None:
            if args.horizon < 1:
                raise ScenarioError("horizon must be positive")
            sc = replace(sc, horizon=args.horizon)
        if args.no_cheat:
            sc = replace(sc, cheat=False)
        if args.jobs < 1:
            raise ScenarioError("--jobs must be at least 1")
        if sc.out and args.out == os.environ.get(OUT_ENV, "out"):
            args.out = sc.out
        return COMMANDS[args.command](sc, args)
    except ScenarioError as e:
        print(f"invalid scenario: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
