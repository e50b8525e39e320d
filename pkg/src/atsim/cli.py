"""Command-line runner: ``atsim run | sweep | baseline``.

Exit status is 0 when every verdict passes, 1 when some verdict fails and
2 when the scenario cannot be loaded or is invalid.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

from .checker.suite import CHECK_MODES, evaluate
from .metrics import analytic_quorum_messages, metrics
from .sim.engine import BoundExceeded, enumerate_schedules, run
from .sim.scenario import BROADCAST_MODES, ConfigError, Scenario

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def parse_seeds(text: str) -> range:
    """``"a..b"`` is the half-open range [a, b); a single number is one seed."""
    if ".." in text:
        a, b = text.split("..", 1)
        lo, hi = int(a), int(b)
        if hi <= lo:
            raise ConfigError(f"empty seed range {text!r}")
        return range(lo, hi)
    n = int(text)
    return range(n, n + 1)


def _load(args) -> Scenario:
    s = Scenario.load(args.scenario)
    if getattr(args, "broadcast", None):
        d = s.to_dict()
        d["broadcast"] = {"mode": args.broadcast, "f": s.f}
        s = Scenario.from_dict(d)
    return s


def _traces_enabled() -> bool:
    return os.environ.get("ATSIM_TRACE", "1") != "0"


def _write(out: Optional[str], name: str, trace, result: dict) -> None:
    if not out:
        return
    d = Path(out)
    d.mkdir(parents=True, exist_ok=True)
    if _traces_enabled() and trace is not None:
        trace.write(d / f"{name}.jsonl")
    (d / f"{name}.json").write_text(json.dumps(result, indent=2, sort_keys=True, default=str))


def run_one(s: Scenario, check: str = "exact") -> tuple[dict, object]:
    trace = run(s)
    verdict = evaluate(s, trace, check)
    result = {"scenario": s.id, "seed": s.policy.seed, "pass": verdict["pass"],
              "verdicts": verdict["verdicts"], "metrics": metrics(trace)}
    return result, trace


def cmd_run(args) -> int:
    s = _load(args)
    if args.seed is not None:
        s = s.with_seed(args.seed)
    result, trace = run_one(s, args.check)
    _write(args.out, f"{s.id}-{s.policy.seed}", trace, result)
    status = "PASS" if result["pass"] else "FAIL"
    failed = [k for k, v in result["verdicts"].items() if not v["pass"]]
    print(f"{s.id} seed={s.policy.seed}: {status}" + (f" ({', '.join(failed)})" if failed else ""))
    m = result["metrics"]
    print(f"  messages={m['messages_total']} broadcasts={m['broadcasts']} "
          f"successful_transfers={m['successful_transfers']} "
          f"rejected_forgeries={m['rejected_forgeries']} stalled={len(m['stalled_ops'])}")
    return EXIT_OK if result["pass"] else EXIT_FAIL


def sweep(s: Scenario, seeds=None, exhaustive: bool = False, check: str = "exact",
          out: Optional[str] = None) -> dict:
    passed, total, failures = 0, 0, []
    messages, per_transfer, latencies = [], [], []
    if exhaustive:
        source = ((i, t) for i, t in enumerate(enumerate_schedules(s)))
    else:
        source = ((seed, run(s.with_seed(seed))) for seed in seeds)
    for key, trace in source:
        sc = s if exhaustive else s.with_seed(key)
        v = evaluate(sc, trace, check)
        m = metrics(trace)
        total += 1
        passed += v["pass"]
        messages.append(m["messages_total"])
        if "messages_per_successful_transfer" in m:
            per_transfer.append(m["messages_per_successful_transfer"])
        if m["latency"]["mean"] is not None:
            latencies.append(m["latency"]["mean"])
        if not v["pass"]:
            failures.append(key)
            _write(out, f"{s.id}-{'schedule' if exhaustive else 'seed'}-{key}", trace,
                   {"scenario": s.id, "key": key, **v, "metrics": m})
    summary = {
        "scenario": s.id, "mode": "exhaustive" if exhaustive else "seeds",
        "runs": total, "passed": passed, "failures": failures[:50],
        "mean_messages": sum(messages) / total if total else 0,
        "mean_messages_per_successful_transfer":
            sum(per_transfer) / len(per_transfer) if per_transfer else None,
        "mean_latency": sum(latencies) / len(latencies) if latencies else None,
    }
    return summary


def cmd_sweep(args) -> int:
    s = _load(args)
    if not args.exhaustive and not args.seeds:
        raise ConfigError("sweep needs --seeds a..b or --exhaustive")
    seeds = None if args.exhaustive else parse_seeds(args.seeds)
    summary = sweep(s, seeds, args.exhaustive, args.check, args.out)
    unit = "interleavings" if args.exhaustive else "seeds"
    print(f"{s.id}: {summary['passed']}/{summary['runs']} {unit} pass")
    if summary["mean_messages"] and summary["mean_messages_per_successful_transfer"] is not None:
        print(f"  mean messages per successful transfer: "
              f"{summary['mean_messages_per_successful_transfer']:.2f}")
    if args.baseline:
        report = baseline_report(s, seeds[0] if seeds else s.policy.seed)
        summary["baseline"] = report
        _print_baseline(report)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / f"{s.id}-sweep.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK if summary["passed"] == summary["runs"] else EXIT_FAIL


def baseline_report(s: Scenario, seed: Optional[int] = None) -> dict:
    """Message counts of the broadcast protocol and the sequencer baseline on the same ops."""
    if s.model != "message_passing":
        raise ConfigError("the baseline comparison needs a message-passing scenario")
    seed = s.policy.seed if seed is None else seed
    ours = s.with_seed(seed) if s.algorithm == "fig4" else replace(s.with_seed(seed), algorithm="fig4")
    theirs = replace(ours, algorithm="baseline")
    theirs.validate()
    rows = {}
    for label, sc in (("broadcast", ours), ("sequencer", theirs)):
        trace = run(sc)
        m = metrics(trace)
        v = evaluate(sc, trace, "monitors-only")
        rows[label] = {"messages_total": m["messages_total"], "messages_by_kind": m["messages_by_kind"],
                       "successful_transfers": m["successful_transfers"],
                       "messages_per_successful_transfer": m.get("messages_per_successful_transfer"),
                       "pass": v["pass"]}
    a = rows["broadcast"]["messages_per_successful_transfer"]
    b = rows["sequencer"]["messages_per_successful_transfer"]
    report = {"scenario": s.id, "seed": seed, "n": s.n, "broadcast_mode": s.broadcast, **rows,
              "ratio_sequencer_over_broadcast": (b / a) if a and b else None}
    if s.broadcast == "quorum":
        report["analytic_quorum_messages_per_broadcast"] = analytic_quorum_messages(s.n)
    return report


def _print_baseline(report: dict) -> None:
    for label in ("broadcast", "sequencer"):
        r = report[label]
        per = r["messages_per_successful_transfer"]
        per_s = f"{per:.2f}" if per is not None else "n/a"
        print(f"  {label:9s}: {r['messages_total']} messages, {r['successful_transfers']} successful "
              f"transfers, {per_s} per transfer")
    if report["ratio_sequencer_over_broadcast"] is not None:
        print(f"  sequencer/broadcast ratio: {report['ratio_sequencer_over_broadcast']:.3f}")


def cmd_baseline(args) -> int:
    s = _load(args)
    report = baseline_report(s, args.seed)
    _print_baseline(report)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / f"{s.id}-baseline.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK if report["broadcast"]["pass"] else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="atsim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--scenario", required=True, help="scenario JSON file or bundled scenario name")
        sp.add_argument("--broadcast", choices=BROADCAST_MODES, help="override the broadcast mode")
        sp.add_argument("--check", choices=CHECK_MODES, default="exact")
        sp.add_argument("--out", help="directory for trace (.jsonl) and result (.json) files")

    r = sub.add_parser("run", help="run one seed and check it")
    common(r)
    r.add_argument("--seed", type=int)
    r.set_defaults(func=cmd_run)

    sw = sub.add_parser("sweep", help="run many seeds, or every interleaving")
    common(sw)
    g = sw.add_mutually_exclusive_group()
    g.add_argument("--seeds", help="half-open seed range a..b")
    g.add_argument("--exhaustive", action="store_true")
    sw.add_argument("--baseline", action="store_true", help="also report the sequencer baseline")
    sw.set_defaults(func=cmd_sweep)

    b = sub.add_parser("baseline", help="compare message counts with a sequencer baseline")
    common(b)
    b.add_argument("--seed", type=int)
    b.set_defaults(func=cmd_baseline)
    return p


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, BoundExceeded) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
