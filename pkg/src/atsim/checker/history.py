"""Histories of invocations and responses, extracted from traces."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, Optional

from ..core import operation_from_json

INF = float("inf")


@dataclass
class Call:
    """One operation of one process.

    ``invoked``/``responded`` are positions in a common timeline; a call
    with ``responded=None`` is pending. ``effect`` is the response a pending
    call must be completed with because its effect is visible (None if no
    effect was observed). ``optional`` calls may be left out of a
    linearization altogether; an optional call with ``response=None``
    accepts any response.
    """

    id: str
    pid: int
    op: Any
    response: Any = None
    invoked: float = 0
    responded: Optional[float] = None
    effect: Any = None
    optional: bool = False

    @property
    def complete(self) -> bool:
        return self.responded is not None

    @property
    def end(self) -> float:
        return INF if self.responded is None else self.responded

    def to_json(self) -> dict:
        op = self.op.to_json() if hasattr(self.op, "to_json") else list(self.op)
        return {"id": self.id, "pid": self.pid, "op": op, "response": self.response,
                "invoked": self.invoked, "responded": self.responded,
                "effect": self.effect, "optional": self.optional}


def op_from_call(call: list) -> Any:
    if call and call[0] in ("transfer", "read"):
        return operation_from_json(call)
    return tuple(call)


@dataclass
class History:
    calls: list[Call] = field(default_factory=list)

    def __iter__(self):
        return iter(self.calls)

    def __len__(self) -> int:
        return len(self.calls)

    def by_id(self) -> dict[str, Call]:
        return {c.id: c for c in self.calls}

    def of(self, pid: int) -> list[Call]:
        return sorted((c for c in self.calls if c.pid == pid), key=lambda c: c.invoked)

    @property
    def pids(self) -> list[int]:
        return sorted({c.pid for c in self.calls})

    def well_formed(self) -> bool:
        """Per process, each call responds before the next is invoked."""
        for p in self.pids:
            calls = self.of(p)
            for a, b in zip(calls, calls[1:]):
                if a.responded is None or a.responded > b.invoked:
                    return False
        return True

    def restrict(self, pred) -> "History":
        return History([c for c in self.calls if pred(c)])

    def completion(self, pending: str = "effect") -> list[Call]:
        """Complete calls plus completed pending ones.

        ``pending="effect"``: a pending call whose effect was observed is
        completed with that effect; other pending calls are dropped.
        ``pending="any"``: pending calls without an observed effect become
        optional with an unconstrained response.
        """
        out = []
        for c in self.calls:
            if c.complete or c.optional:
                out.append(c)
            elif c.effect is not None:
                out.append(Call(c.id, c.pid, c.op, c.effect, c.invoked, None, c.effect, False))
            elif pending == "any":
                out.append(Call(c.id, c.pid, c.op, None, c.invoked, None, None, True))
            elif pending != "effect":
                raise ValueError(f"unknown pending-call mode {pending!r}")
        return out


def _call_index(trace: Iterable[dict], pids: Optional[set]) -> dict[str, Call]:
    calls: dict[str, Call] = {}
    for r in trace:
        kind, data = r["kind"], r["data"]
        if kind == "invoke" and (pids is None or r["node"] in pids):
            calls[data["op"]] = Call(data["op"], r["node"], op_from_call(data["call"]), None,
                                     r["step"], None)
        elif kind == "respond" and data["op"] in calls:
            c = calls[data["op"]]
            c.response = data["resp"]
            c.responded = r["step"]
    return calls


def history_from_trace(trace, pids: Optional[Iterable[int]] = None) -> History:
    """History of the operations recorded in ``trace``, with effect annotations.

    Effects come from ``effect`` records (shared memory: a transfer's update
    became visible, or a decided transfer was published) and from ``issue``
    plus ``apply`` records (message passing: some process applied the
    transfer's message).
    """
    pid_set = set(pids) if pids is not None else None
    records = list(trace)
    calls = _call_index(records, pid_set)
    announced: dict[tuple, str] = {}
    issued: dict[tuple, str] = {}
    for r in records:
        kind, data = r["kind"], r["data"]
        if kind == "announce":
            announced[tuple(data["tx"])] = data["op"]
        elif kind == "issue":
            issued[tuple(data["uid"])] = data["op"]
        elif kind == "effect":
            if "tx" in data:
                opid = announced.get(tuple(data["tx"]))
                value = data.get("result") == "success"
            else:
                opid, value = data.get("op"), True
            c = calls.get(opid)
            if c is not None and c.effect is None:
                c.effect = value
        elif kind == "apply":
            src, _, _, seq, _ = data["record"]
            opid = issued.get((src, seq))
            c = calls.get(opid)
            if c is not None and c.effect is None and data.get("origin") == c.pid:
                c.effect = True
    return History(sorted(calls.values(), key=lambda c: c.invoked))


__all__ = ["Call", "History", "INF", "history_from_trace", "op_from_call"]
