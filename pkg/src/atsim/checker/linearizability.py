"""Exact linearizability checking by completion-aware depth-first search.

The search extends a linearization one call at a time, only choosing calls
none of whose real-time predecessors are still outstanding, and memoizes
``(linearized set, object state)`` pairs that are known dead ends. It is
exponential in the worst case and intended for histories of a few dozen
calls.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, Optional, Protocol, Sequence, Union

from ..core import AssetTransferError, OwnershipMap, same_response, seq_step
from ..primitives import BOTTOM
from .history import Call, History


class SearchBoundExceeded(RuntimeError):
    """The search visited more states than allowed."""


@dataclass
class Verdict:
    ok: bool
    witness: Optional[list] = None
    violation: Optional[dict] = None
    explored: int = 0
    detail: dict = field(default_factory=dict)

    def __bool__(self) -> bool:
        return self.ok

    def to_json(self) -> dict:
        out = {"pass": self.ok, "explored": self.explored}
        if self.witness is not None:
            out["witness"] = self.witness
        if self.violation is not None:
            out["violation"] = self.violation
        if self.detail:
            out["detail"] = self.detail
        return out


class SequentialSpec(Protocol):
    def initial(self) -> Any: ...

    def apply(self, state: Any, call: Call) -> tuple[Any, Any]: ...

    def matches(self, expected: Any, actual: Any) -> bool: ...


class AssetTransferSpec:
    """The asset-transfer type; states are balance tuples in account order."""

    def __init__(self, q0: dict, mu):
        self.accounts = sorted(q0)
        self.q0 = dict(q0)
        self.mu = mu if isinstance(mu, OwnershipMap) else OwnershipMap(mu)

    def initial(self) -> tuple:
        return tuple(self.q0[a] for a in self.accounts)

    def apply(self, state: tuple, call: Call) -> tuple[tuple, Any]:
        new, resp = seq_step(dict(zip(self.accounts, state)), call.pid, call.op, self.mu)
        return tuple(new[a] for a in self.accounts), resp

    def matches(self, expected, actual) -> bool:
        return same_response(expected, actual)


class RegisterSpec:
    """Calls are ``("write", v)`` or ``("read",)``."""

    def __init__(self, initial: Any = BOTTOM):
        self._initial = initial

    def initial(self):
        return self._initial

    def apply(self, state, call: Call):
        if call.op[0] == "write":
            return call.op[1], None
        if call.op[0] == "read":
            return state, state
        raise ValueError(f"not a register operation: {call.op!r}")

    def matches(self, expected, actual) -> bool:
        return expected == actual


class SnapshotSpec:
    """Calls are ``("update", v)`` (on the caller's cell) or ``("snapshot",)``."""

    def __init__(self, n: int):
        self.n = n

    def initial(self):
        return (BOTTOM,) * self.n

    def apply(self, state, call: Call):
        if call.op[0] == "update":
            cells = list(state)
            cells[call.pid - 1] = call.op[1]
            return tuple(cells), None
        if call.op[0] == "snapshot":
            return state, state
        raise ValueError(f"not a snapshot operation: {call.op!r}")

    def matches(self, expected, actual) -> bool:
        if expected is None or actual is None:
            return expected is actual
        return tuple(expected) == tuple(actual)


class KConsensusSpec:
    """``("propose", v)``: the first k proposals get the first value, the rest get ⊥.

    With ``k=None`` this is plain consensus: every proposal gets the first value.
    """

    _UNSET = ("<unset>",)

    def __init__(self, k: Optional[int] = None):
        self.k = k

    def initial(self):
        return (self._UNSET, 0)

    def apply(self, state, call: Call):
        if call.op[0] != "propose":
            raise ValueError(f"not a consensus operation: {call.op!r}")
        decided, count = state
        if decided == self._UNSET:
            decided = call.op[1]
        count += 1
        resp = decided if self.k is None or count <= self.k else BOTTOM
        return (decided, count), resp

    def matches(self, expected, actual) -> bool:
        return expected == actual


def _spec_for(spec, q0, mu) -> SequentialSpec:
    if spec is not None:
        return spec
    if q0 is None:
        raise ValueError("need either a sequential spec or q0/mu for the asset-transfer type")
    return AssetTransferSpec(q0, mu or {})


def _search(calls: Sequence[Call], spec: SequentialSpec, max_states: int) -> tuple[Optional[list], int]:
    m = len(calls)
    ends = [c.end for c in calls]
    pred = []
    for i, c in enumerate(calls):
        mask = 0
        for j in range(m):
            if ends[j] < c.invoked:
                mask |= 1 << j
        pred.append(mask)
    required = 0
    for i, c in enumerate(calls):
        if not c.optional:
            required |= 1 << i
    dead: set = set()
    order: list[str] = []
    explored = 0

    def dfs(mask: int, state) -> bool:
        nonlocal explored
        if mask & required == required:
            return True
        key = (mask, state)
        if key in dead:
            return False
        explored += 1
        if explored > max_states:
            raise SearchBoundExceeded(f"more than {max_states} search states")
        for i in range(m):
            if mask >> i & 1 or pred[i] & ~mask:
                continue
            c = calls[i]
            try:
                new, resp = spec.apply(state, c)
            except (AssetTransferError, KeyError, TypeError, ValueError):
                continue
            if c.response is not None or not c.optional:
                if not spec.matches(resp, c.response):
                    continue
            order.append(c.id)
            if dfs(mask | 1 << i, new):
                return True
            order.pop()
        dead.add(key)
        return False

    found = dfs(0, spec.initial())
    return (list(order) if found else None), explored


def _prefix(calls: Sequence[Call], t: float) -> list[Call]:
    """The history as it stood at time ``t``: later responses become optional pending calls."""
    out = []
    for c in calls:
        if c.invoked > t:
            continue
        if c.end <= t:
            out.append(c)
        else:
            out.append(Call(c.id, c.pid, c.op, c.response, c.invoked, None, c.effect, True))
    return out


def check_linearizable(history: Union[History, Iterable[Call]], q0: Optional[dict] = None,
                       mu=None, spec: Optional[SequentialSpec] = None, pending: str = "effect",
                       max_states: int = 2_000_000, minimize: bool = True) -> Verdict:
    """Decide whether ``history`` is linearizable with respect to ``spec``.

    By default the asset-transfer type with initial balances ``q0`` and
    ownership ``mu`` is used. Pending calls are completed according to
    ``pending`` (see :meth:`History.completion`). On success the verdict's
    witness is a legal order of call ids; on failure the violation holds
    the shortest failing prefix of the history (when ``minimize``).
    """
    spec = _spec_for(spec, q0, mu)
    h = history if isinstance(history, History) else History(list(history))
    calls = h.completion(pending)
    order, explored = _search(calls, spec, max_states)
    if order is not None:
        return Verdict(True, witness=order, explored=explored)
    violation: dict = {"calls": [c.id for c in calls], "reason": "no legal linearization"}
    if minimize:
        cuts = sorted({c.responded for c in calls if c.responded is not None})
        for t in cuts:
            sub = _prefix(calls, t)
            if _search(sub, spec, max_states)[0] is None:
                violation = {"calls": [c.id for c in sub if not c.optional],
                             "pending": [c.id for c in sub if c.optional],
                             "cut": t, "reason": "no legal linearization of this prefix"}
                break
    return Verdict(False, violation=violation, explored=explored)


def witness_sequence(calls: Iterable[Call], order: Sequence[str]) -> list[tuple]:
    """The ``(pid, op, response)`` triples of a witness order, for replay."""
    by_id = {c.id: c for c in calls}
    return [(by_id[i].pid, by_id[i].op, by_id[i].response) for i in order]


__all__ = [
    "AssetTransferSpec", "KConsensusSpec", "RegisterSpec", "SearchBoundExceeded", "SequentialSpec",
    "SnapshotSpec", "Verdict", "check_linearizable", "witness_sequence",
]
