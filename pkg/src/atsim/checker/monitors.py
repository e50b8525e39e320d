"""Trace monitors for broadcast properties and ledger invariants.

Each monitor is a pure function of the trace (and the scenario's fault
sets) returning a list of violation dicts. Properties that only make sense
at the end of a run (agreement, validity) are checked only when the run
reached quiescence.
"""
from __future__ import annotations

from collections import defaultdict
from typing import Callable, Optional

from ..core import TransferRecord, balance_of


def _v(monitor: str, **detail) -> dict:
    return {"monitor": monitor, **detail}


def _deliveries(trace, nodes: set) -> dict[int, list[dict]]:
    out: dict[int, list[dict]] = defaultdict(list)
    for r in trace:
        if r["kind"] == "deliver" and r["node"] in nodes:
            out[r["node"]].append(r["data"])
    return out


def integrity(trace, benign: set, correct: set) -> list[dict]:
    """No duplicate deliveries; a benign origin's messages were really broadcast by it."""
    out = []
    sent = {(r["data"]["origin"], r["data"]["digest"]) for r in trace if r["kind"] == "bcast"}
    for node, ds in sorted(_deliveries(trace, benign).items()):
        seen = set()
        for d in ds:
            if d["digest"] in seen:
                out.append(_v("integrity", node=node, digest=d["digest"], what="delivered twice"))
            seen.add(d["digest"])
            if d["origin"] in benign and (d["origin"], d["digest"]) not in sent:
                out.append(_v("integrity", node=node, digest=d["digest"], what="never broadcast"))
    return out


def order(trace, benign: set, correct: set) -> list[dict]:
    """Per key, deliveries come in gap-free seq order and agree on content across nodes."""
    out = []
    content: dict[tuple, tuple] = {}
    for node, ds in sorted(_deliveries(trace, benign).items()):
        nxt: dict[tuple, int] = defaultdict(lambda: 1)
        for d in ds:
            key = tuple(d["key"])
            if d["seq"] != nxt[key]:
                out.append(_v("source_order", node=node, key=list(key), seq=d["seq"],
                              expected=nxt[key]))
            nxt[key] = max(nxt[key], d["seq"] + 1)
            pos = (key, d["seq"])
            if pos in content and content[pos][1] != d["digest"]:
                out.append(_v("source_order", node=node, key=list(key), seq=d["seq"],
                              what="conflicting payloads at one position",
                              other_node=content[pos][0]))
            content.setdefault(pos, (node, d["digest"]))
    return out


def agreement(trace, benign: set, correct: set) -> list[dict]:
    """At quiescence, a message delivered by one correct process is delivered by all."""
    if not _quiescent(trace):
        return []
    dl = _deliveries(trace, correct)
    got = {p: {d["digest"] for d in dl.get(p, [])} for p in correct}
    everything = set().union(*got.values()) if got else set()
    return [_v("agreement", node=p, missing=sorted(everything - got[p]))
            for p in sorted(correct) if everything - got[p]]


def stalled_accounts(trace, correct: set) -> dict[int, int]:
    """Shared accounts whose account-order stream has a hole: account -> first missing position.

    A position no correct process ever delivered (a faulty owner took the
    number and never completed its broadcast) blocks every later position.
    """
    delivered: dict[int, set] = defaultdict(set)
    top: dict[int, int] = {}
    for r in trace:
        if r["kind"] not in ("bcast", "deliver") or r["data"].get("key", [None])[0] != "acct":
            continue
        a = r["data"]["key"][1]
        top[a] = max(top.get(a, 0), r["data"]["seq"])
        if r["kind"] == "deliver" and r["node"] in correct:
            delivered[a].add(r["data"]["seq"])
    out = {}
    for a, hi in top.items():
        holes = [s for s in range(1, hi + 1) if s not in delivered[a]]
        if holes:
            out[a] = holes[0]
    return out


def validity(trace, benign: set, correct: set) -> list[dict]:
    """At quiescence, every broadcast of a correct process is delivered by every correct process.

    Broadcasts queued behind a hole in a shared account's stream are exempt:
    account order forbids delivering them.
    """
    if not _quiescent(trace):
        return []
    dl = _deliveries(trace, correct)
    got = {p: {d["digest"] for d in dl.get(p, [])} for p in correct}
    stalled = stalled_accounts(trace, correct)
    out = []
    for r in trace:
        if r["kind"] == "bcast" and r["node"] in correct:
            key = r["data"].get("key") or [None]
            if key[0] == "acct" and key[1] in stalled and r["data"]["seq"] > stalled[key[1]]:
                continue
            missing = [p for p in sorted(correct) if r["data"]["digest"] not in got[p]]
            if missing:
                out.append(_v("validity", origin=r["node"], digest=r["data"]["digest"], missing=missing))
    return out


def _applied(trace, benign: set) -> dict[int, list[dict]]:
    out: dict[int, list[dict]] = defaultdict(list)
    for r in trace:
        if r["kind"] == "apply" and r["node"] in benign:
            out[r["node"]].append(r["data"])
    return out


def ledger(trace, benign: set, correct: set, q0: Optional[dict] = None) -> list[dict]:
    """Applied transfers: unique and gap-free per source, prefix-related across nodes,
    never driving an account negative, and conserving the total amount of money."""
    out = []
    per_source: dict[int, dict[int, list[tuple]]] = {}
    for node, applies in sorted(_applied(trace, benign).items()):
        seen: dict[tuple, tuple] = {}
        by_src: dict[int, list[tuple]] = defaultdict(list)
        hist: dict[int, set] = defaultdict(set)
        union: set = set()
        for a in applies:
            src, dst, amt, seq, issuer = a["record"]
            uid = (src, seq)
            if uid in seen:
                out.append(_v("double_spend", node=node, source=src, seq=seq,
                              records=[list(seen[uid]), [src, dst, amt, seq]]))
            seen[uid] = (src, dst, amt, seq)
            by_src[src].append((src, dst, amt, seq))
            if q0 is not None:
                t = TransferRecord(src, dst, amt, uid, issuer)
                deps = {TransferRecord(d[0], d[1], d[2], (d[0], d[3]), d[4]) for d in a.get("deps", [])}
                hist[src] |= deps | {t}
                union |= deps | {t}
                if src in q0 and balance_of(src, hist[src], q0) < 0:
                    out.append(_v("negative_balance", node=node, account=src,
                                  balance=balance_of(src, hist[src], q0)))
        for src, recs in by_src.items():
            seqs = [r[3] for r in recs]
            if seqs != list(range(1, len(seqs) + 1)):
                out.append(_v("seq_gap", node=node, source=src, seqs=seqs))
        if q0 is not None:
            known = [a for a in q0]
            total = sum(balance_of(a, union, q0) for a in known)
            if total != sum(q0.values()):
                out.append(_v("conservation", node=node, total=total, expected=sum(q0.values())))
        per_source[node] = by_src
    nodes = sorted(per_source)
    for i, p in enumerate(nodes):
        for q in nodes[i + 1:]:
            for src in set(per_source[p]) | set(per_source[q]):
                a, b = per_source[p].get(src, []), per_source[q].get(src, [])
                short, long_ = (a, b) if len(a) <= len(b) else (b, a)
                if long_[:len(short)] != short:
                    out.append(_v("prefix_agreement", nodes=[p, q], source=src))
    return out


def kconsensus(trace, benign: set, correct: set) -> list[dict]:
    """No k-consensus object is invoked more than k times."""
    out = []
    for r in trace:
        d = r["data"]
        if r["kind"] == "kc" and d["count"] > d["k"]:
            out.append(_v("kconsensus", obj=d["obj"], count=d["count"], k=d["k"]))
    return out


def _quiescent(trace) -> bool:
    ends = [r for r in trace if r["kind"] == "end"]
    return bool(ends) and bool(ends[-1]["data"].get("quiescent"))


MONITORS: dict[str, Callable] = {
    "integrity": integrity,
    "order": order,
    "agreement": agreement,
    "validity": validity,
    "kconsensus": kconsensus,
}


def monitors(trace, benign: set, correct: set, q0: Optional[dict] = None) -> list[dict]:
    """Run every monitor; the result is a deterministic list of violations."""
    out = []
    for name, fn in MONITORS.items():
        out.extend(fn(trace, benign, correct))
    out.extend(ledger(trace, benign, correct, q0))
    return out
