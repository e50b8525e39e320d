"""Run metrics, recomputed from a trace alone."""
from __future__ import annotations

from collections import Counter
from statistics import mean


def analytic_quorum_messages(n: int) -> int:
    """Messages one quorum broadcast costs when every process is correct.

    N SENDs, N ACKs back to the sender, N CERT relays, and N READYs from
    each of the N processes.
    """
    return 3 * n + n * n


def metrics(trace) -> dict:
    sends = trace.of_kind("send")
    by_kind = Counter(r["data"]["kind"] for r in sends)
    invokes = {r["data"]["op"]: r for r in trace.of_kind("invoke")}
    responses = {r["data"]["op"]: r for r in trace.of_kind("respond")}
    latency = [responses[o]["data"]["tick"] - invokes[o]["data"]["tick"]
               for o in responses if o in invokes and responses[o]["data"]["tick"] is not None]
    successes = sum(1 for o, r in responses.items()
                    if o in invokes and invokes[o]["data"]["call"][0] == "transfer"
                    and r["data"]["resp"] is True)
    bcasts = trace.of_kind("bcast")
    applied = trace.of_kind("apply")
    out = {
        "messages_total": len(sends),
        "messages_by_kind": dict(sorted(by_kind.items())),
        "broadcasts": len(bcasts),
        "successful_transfers": successes,
        "delivered_transfers": len({tuple(r["data"]["record"]) for r in applied}),
        "applications": len(applied),
        "latency": {"count": len(latency), "mean": mean(latency) if latency else None,
                    "max": max(latency) if latency else None},
        "stalled_ops": sorted(trace.end.get("pending", {}).values()),
        "rejected_forgeries": len(trace.of_kind("reject")),
        "dropped_messages": len(trace.of_kind("drop")),
    }
    if successes:
        out["messages_per_successful_transfer"] = len(sends) / successes
        out["broadcasts_per_successful_transfer"] = len(bcasts) / successes
    return out
