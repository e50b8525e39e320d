"""All verdicts for one run of a scenario."""
from __future__ import annotations

from ..sim.scenario import Scenario
from .history import history_from_trace
from .linearizability import KConsensusSpec, SearchBoundExceeded, check_linearizable
from .monitors import monitors, stalled_accounts
from .relaxed import check_relaxed

CHECK_MODES = ("exact", "monitors-only")


def consensus_verdict(s: Scenario, trace) -> dict:
    """Agreement, validity, termination and winner identification for the consensus reduction."""
    decided = {r["node"]: r["data"]["resp"] for r in trace.of_kind("respond")}
    proposed = {r["node"]: r["data"]["call"][1] for r in trace.of_kind("invoke")}
    crashed = set(trace.end.get("crashed", []))
    problems = []
    if len(set(decided.values())) > 1:
        problems.append({"what": "agreement", "decided": decided})
    for p, v in decided.items():
        if v not in proposed.values():
            problems.append({"what": "validity", "pid": p, "value": v})
    if trace.end.get("quiescent"):
        missing = sorted(p for p in proposed if p not in decided and p not in crashed)
        if missing:
            problems.append({"what": "termination", "undecided": missing})
    winners = {r["node"] for r in trace.of_kind("fig2") if r["data"]["transfer"] is True}
    winners |= {r["node"] for r in trace.of_kind("sm")
                if r["data"].get("obj") == "AT" and r["data"]["op"][0] == "transfer"
                and r["data"].get("resp") is True}
    winners |= {r["data"]["tx"][3] for r in trace.of_kind("decide") if r["data"]["result"] == "success"}
    if len(winners) > 1:
        problems.append({"what": "two successful withdrawals", "winners": sorted(winners)})
    for r in trace.of_kind("fig2"):
        if r["data"]["balance"] not in winners:
            problems.append({"what": "balance does not name the winner", "pid": r["node"],
                             "balance": r["data"]["balance"], "winners": sorted(winners)})
    lin = check_linearizable(history_from_trace(trace), spec=KConsensusSpec(None))
    if not lin.ok:
        problems.append({"what": "not linearizable as consensus", "violation": lin.violation})
    return {"pass": not problems, "problems": problems, "decided": {str(p): v for p, v in decided.items()},
            "winners": sorted(winners)}


def liveness_verdict(s: Scenario, trace) -> dict:
    """Every invoked operation of a correct process completed (blocked accounts excepted).

    A shared account is blocked when its sequence service is compromised or
    one of its owners is faulty: a faulty owner can hold a sequence number
    it never broadcasts.
    """
    end = trace.end
    blocked = {a for a, svc in s.services.items() if svc.get("mode") == "compromised"}
    blocked |= {a for a, ps in s.owners.items() if len(ps) > 1 and set(ps) & s.faults.faulty}
    calls = {r["data"]["op"]: r for r in trace.of_kind("invoke")}
    done = {r["data"]["op"] for r in trace.of_kind("respond")}
    stalled = []
    for opid, r in calls.items():
        if opid in done or r["node"] not in s.correct:
            continue
        call = r["data"]["call"]
        if call[0] == "transfer" and call[1] in blocked:
            continue
        stalled.append(opid)
    ok = not end.get("bound_hit") and not stalled
    return {"pass": ok, "stalled": sorted(stalled), "bound_hit": bool(end.get("bound_hit")),
            "stalled_accounts": {str(a): pos for a, pos in sorted(stalled_accounts(trace, s.correct).items())}}


def evaluate(s: Scenario, trace, check: str = "exact", foreign: str = "transfers") -> dict:
    """Run the checks that apply to ``s`` on ``trace``; ``pass`` is true iff all pass."""
    if check not in CHECK_MODES:
        raise ValueError(f"unknown check mode {check!r}")
    verdicts: dict[str, dict] = {}
    if s.model == "shared_memory":
        if s.algorithm == "fig2":
            verdicts["consensus"] = consensus_verdict(s, trace)
        elif check == "exact":
            try:
                verdicts["linearizable"] = check_linearizable(
                    history_from_trace(trace), s.q0, s.mu).to_json()
            except SearchBoundExceeded as exc:
                verdicts["linearizable"] = {"pass": False, "error": str(exc)}
        v = monitors(trace, set(s.pids), s.correct)
        verdicts["monitors"] = {"pass": not v, "violations": v}
        if trace.end.get("bound_hit"):
            verdicts["termination"] = {"pass": False, "bound_hit": True}
    else:
        if check == "exact":
            try:
                verdicts["relaxed"] = check_relaxed(trace, s.q0, s.mu, s.correct, s.benign,
                                                    foreign=foreign).to_json()
            except SearchBoundExceeded as exc:
                verdicts["relaxed"] = {"pass": False, "error": str(exc)}
        v = monitors(trace, s.benign, s.correct, s.q0)
        verdicts["monitors"] = {"pass": not v, "violations": v}
        verdicts["liveness"] = liveness_verdict(s, trace)
    return {"pass": all(v["pass"] for v in verdicts.values()), "verdicts": verdicts}
