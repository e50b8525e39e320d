"""The relaxed correctness condition for asset transfer in message passing.

Part 1: successful transfers of correct processes are linearizable.
Part 2: for every correct process p there is a legal sequential history
S_p that contains the other correct processes' operations and agrees with
p's own operations in p's order (sequential consistency for p's reads and
failed transfers).

S_p is built constructively from p's application order with p's own reads
and failed transfers slotted in at the earliest state that explains their
responses; if that fails, a bounded search looks for any S_p.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..core import AssetTransferError, Transfer, replay_legal, same_response, seq_step
from .history import Call, History, history_from_trace
from .linearizability import SearchBoundExceeded, Verdict, check_linearizable

FOREIGN_MODES = ("transfers", "strict")


@dataclass
class RelaxedVerdict:
    ok: bool
    part1: Verdict
    part2: dict[int, Verdict] = field(default_factory=dict)

    def __bool__(self) -> bool:
        return self.ok

    def to_json(self) -> dict:
        return {"pass": self.ok, "part1": self.part1.to_json(),
                "part2": {str(p): v.to_json() for p, v in sorted(self.part2.items())}}


def _applies(trace) -> dict[int, list[tuple]]:
    """Per node, the applied records in order as ``(src, dst, amt, seq, issuer, origin)``."""
    out: dict[int, list[tuple]] = {}
    for r in trace:
        if r["kind"] == "apply":
            src, dst, amt, seq, issuer = r["data"]["record"]
            out.setdefault(r["node"], []).append((src, dst, amt, seq, issuer, r["data"]["origin"]))
    return out


def _issued(trace) -> dict[str, tuple]:
    return {r["data"]["op"]: tuple(r["data"]["uid"]) for r in trace if r["kind"] == "issue"}


def _is_success(c: Call) -> bool:
    resp = c.response if c.complete else c.effect
    return isinstance(c.op, Transfer) and resp is True


def _required(c: Call) -> bool:
    return c.complete or c.effect is not None


def part1(history: History, applies: dict, correct: set, q0: dict, mu,
          invoked_at: dict, max_states: int = 2_000_000) -> Verdict:
    calls = [c for c in history if c.pid in correct and _is_success(c)]
    seen = set()
    for node, recs in sorted(applies.items()):
        for src, dst, amt, seq, issuer, origin in recs:
            if issuer in correct or (src, dst, amt, seq) in seen:
                continue
            seen.add((src, dst, amt, seq))
            calls.append(Call(f"ext:{src}:{seq}:{dst}:{amt}", issuer, Transfer(src, dst, amt), True,
                              invoked_at.get((src, seq), -1), None, True, optional=True))
    return check_linearizable(History(calls), q0, mu, max_states=max_states)


def _prefix_states(seq: list[tuple], q0: dict, mu) -> Optional[list[dict]]:
    states = [dict(q0)]
    state = dict(q0)
    try:
        for p, op, resp in seq:
            state, r = seq_step(state, p, op, mu)
            if not same_response(r, resp):
                return None
            states.append(state)
    except AssetTransferError:
        return None
    return states


def _fits(state: dict, p: int, c: Call, mu) -> bool:
    try:
        _, r = seq_step(state, p, c.op, mu)
    except AssetTransferError:
        return False
    return same_response(r, c.response)


def build_sp(p: int, history: History, applied: list[tuple], issued: dict, correct: set,
             all_applies: dict, q0: dict, mu, foreign: str = "transfers") -> tuple[Optional[list], str]:
    """Constructive S_p; returns ``(sequence, "")`` or ``(None, reason)``."""
    base = [(issuer, Transfer(src, dst, amt), True) for src, dst, amt, seq, issuer, _ in applied]
    uid_index = {(src, seq): i for i, (src, dst, amt, seq, issuer, _) in enumerate(applied)}
    # transfers of other correct processes that p has not applied yet, in some node's apply order
    present = {(r[0], r[3]) for r in applied}
    extra: list[tuple] = []
    for node in sorted(all_applies):
        for src, dst, amt, seq, issuer, _ in all_applies[node]:
            if (src, seq) not in present and issuer in correct and issuer != p:
                present.add((src, seq))
                extra.append((issuer, Transfer(src, dst, amt), True))
    states = _prefix_states(base + extra, q0, mu)
    if states is None:
        return None, "application order is not legal"
    inserts: dict[int, list] = {}
    ptr = 0
    for c in history.of(p):
        if not _required(c):
            continue
        if _is_success(c):
            uid = issued.get(c.id)
            k = uid_index.get(uid) if uid is not None else None
            if k is None or k < ptr:
                return None, f"own transfer {c.id} is not applied in order"
            ptr = k + 1
            continue
        j = next((j for j in range(ptr, len(states)) if _fits(states[j], p, c, mu)), None)
        if j is None:
            return None, f"no state explains {c.id} -> {c.response!r}"
        inserts.setdefault(j, []).append((p, c.op, c.response))
        ptr = j
    if foreign == "strict":
        for c in history:
            if c.pid == p or c.pid not in correct or not _required(c) or _is_success(c):
                continue
            j = next((j for j in range(len(states)) if _fits(states[j], c.pid, c, mu)), None)
            if j is None:
                return None, f"no state explains foreign {c.id} -> {c.response!r}"
            inserts.setdefault(j, []).append((c.pid, c.op, c.response))
    seq: list[tuple] = []
    full = base + extra
    for i in range(len(full) + 1):
        seq.extend(inserts.get(i, []))
        if i < len(full):
            seq.append(full[i])
    return seq, ""


def _search_sp(p: int, history: History, applied: list[tuple], correct: set, all_applies: dict,
               q0: dict, mu, foreign: str, max_states: int) -> Verdict:
    """Bounded search for S_p: p's own operations keep their order, nothing else is constrained."""
    calls: list[Call] = []
    t = 0
    for c in history.of(p):
        if _required(c):
            resp = c.response if c.complete else c.effect
            calls.append(Call(c.id, p, c.op, resp, t, t + 0.5))
            t += 1
    own = {(r[0], r[3]) for r in applied if r[5] == p}
    seen = set()
    for node in sorted(all_applies):
        for src, dst, amt, seq, issuer, origin in all_applies[node]:
            key = (src, dst, amt, seq)
            if key in seen or (origin == p and (src, seq) in own):
                continue
            seen.add(key)
            mandatory = issuer in correct and issuer != p
            calls.append(Call(f"t:{src}:{seq}:{dst}:{amt}", issuer, Transfer(src, dst, amt), True,
                              -1, None, True, optional=not mandatory))
    if foreign == "strict":
        for c in history:
            if c.pid != p and c.pid in correct and _required(c) and not _is_success(c):
                calls.append(Call(c.id, c.pid, c.op, c.response, -1, None, c.response))
    return check_linearizable(History(calls), q0, mu, max_states=max_states, minimize=False)


def part2(p: int, history: History, applies: dict, issued: dict, correct: set, q0: dict, mu,
          foreign: str = "transfers", max_states: int = 200_000) -> Verdict:
    applied = applies.get(p, [])
    seq, reason = build_sp(p, history, applied, issued, correct, applies, q0, mu, foreign)
    if seq is not None and replay_legal(seq, q0, mu):
        return Verdict(True, witness=[[q, op.to_json(), r] for q, op, r in seq],
                       detail={"method": "constructive"})
    try:
        v = _search_sp(p, history, applied, correct, applies, q0, mu, foreign, max_states)
    except SearchBoundExceeded as exc:
        return Verdict(False, violation={"reason": reason or "constructed sequence not legal",
                                         "search": str(exc)})
    if v.ok:
        v.detail = {"method": "search", "constructive_failure": reason}
        return v
    return Verdict(False, violation={"reason": reason or "constructed sequence not legal",
                                     "search": "no legal S_p"}, explored=v.explored)


def check_relaxed(trace, q0: dict, mu, correct: set, benign: Optional[set] = None,
                  foreign: str = "transfers", max_states: int = 2_000_000) -> RelaxedVerdict:
    """Check both parts of the relaxed condition on a message-passing trace.

    ``foreign="transfers"`` requires S_p to contain the other correct
    processes' successful transfers; ``"strict"`` additionally requires their
    reads and failed transfers with the responses they actually returned.
    """
    if foreign not in FOREIGN_MODES:
        raise ValueError(f"unknown foreign-operation mode {foreign!r}")
    benign = set(correct) if benign is None else set(benign)
    history = history_from_trace(trace, pids=benign)
    applies = {n: recs for n, recs in _applies(trace).items() if n in benign}
    issued = _issued(trace)
    invoked_at = {}
    calls = history.by_id()
    for opid, uid in issued.items():
        if opid in calls:
            invoked_at[uid] = calls[opid].invoked
    v1 = part1(history, applies, set(correct), q0, mu, invoked_at, max_states)
    v2 = {p: part2(p, history, applies, issued, set(correct), q0, mu, foreign)
          for p in sorted(correct)}
    return RelaxedVerdict(v1.ok and all(v.ok for v in v2.values()), v1, v2)


__all__ = ["FOREIGN_MODES", "RelaxedVerdict", "build_sp", "check_relaxed", "part1", "part2"]
