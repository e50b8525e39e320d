"""Linearizable shared-memory objects.

Every method is atomic: in simulation mode the scheduler runs one method per
step, and in real-thread mode an internal lock serializes calls. Objects
optionally report each access to a ``recorder`` callable taking
``(pid, kind, data)``.
"""
from __future__ import annotations

import threading
from typing import Any, Callable, Hashable, Optional

BOTTOM = None  # the initial "empty" value of registers and snapshot cells

Recorder = Callable[[int, str, dict], None]


class NotWriter(Exception):
    pass


class Register:
    """Single-writer multi-reader atomic register."""

    def __init__(self, name: str, writer: int, initial: Any = BOTTOM,
                 recorder: Optional[Recorder] = None):
        self.name = name
        self.writer = writer
        self._value = initial
        self._lock = threading.Lock()
        self._rec = recorder

    def write(self, p: int, v: Any) -> None:
        if p != self.writer:
            raise NotWriter(f"process {p} cannot write {self.name} (writer is {self.writer})")
        with self._lock:
            self._value = v
        if self._rec:
            self._rec(p, "sm", {"obj": self.name, "op": "write"})

    def read(self, p: int) -> Any:
        with self._lock:
            v = self._value
        if self._rec:
            self._rec(p, "sm", {"obj": self.name, "op": "read"})
        return v


class AtomicSnapshot:
    """N single-writer cells with atomic update and atomic whole-vector scan.

    Cells are indexed by pid ``1..n``; :meth:`snapshot` returns a tuple whose
    position ``i`` holds the cell of pid ``i + 1``.
    """

    def __init__(self, n: int, name: str = "AS", recorder: Optional[Recorder] = None):
        self.n = n
        self.name = name
        self._cells: list = [BOTTOM] * n
        self._lock = threading.Lock()
        self._rec = recorder

    def update(self, p: int, v: Any) -> None:
        if not 1 <= p <= self.n:
            raise IndexError(f"no cell for process {p}")
        with self._lock:
            self._cells[p - 1] = v
        if self._rec:
            self._rec(p, "sm", {"obj": self.name, "op": "update"})

    def snapshot(self, p: int) -> tuple:
        with self._lock:
            view = tuple(self._cells)
        if self._rec:
            self._rec(p, "sm", {"obj": self.name, "op": "snapshot"})
        return view


class KConsensus:
    """The first ``k`` proposals return the first proposed value; later ones get ⊥.

    Invocations past capacity are counted and reported as a diagnostic so
    callers that overuse the object can be caught.
    """

    def __init__(self, k: int, name: str = "kC", recorder: Optional[Recorder] = None):
        if k < 1:
            raise ValueError("k must be at least 1")
        self.k = k
        self.name = name
        self.decided: Any = BOTTOM
        self.invocations = 0
        self.proposers: list[int] = []
        self._lock = threading.Lock()
        self._rec = recorder

    def propose(self, p: int, v: Hashable) -> Any:
        with self._lock:
            self.invocations += 1
            self.proposers.append(p)
            if self.invocations == 1:
                self.decided = v
            result = self.decided if self.invocations <= self.k else BOTTOM
            count = self.invocations
        if self._rec:
            self._rec(p, "kc", {"obj": self.name, "k": self.k, "count": count,
                                "bottom": result is BOTTOM})
            if count > self.k:
                self._rec(p, "diag", {"what": "kconsensus_overuse", "obj": self.name,
                                      "count": count, "k": self.k})
        return result


class AtomicLedger:
    """An atomic asset-transfer object: the sequential specification behind a lock."""

    def __init__(self, q0, mu, name: str = "AT", recorder: Optional[Recorder] = None):
        from .core import seq_step

        self._step = seq_step
        self.state = dict(q0)
        self.mu = mu
        self.name = name
        self._lock = threading.Lock()
        self._rec = recorder

    def apply(self, p: int, op) -> Any:
        with self._lock:
            self.state, resp = self._step(self.state, p, op, self.mu)
        if self._rec:
            self._rec(p, "sm", {"obj": self.name, "op": op.to_json(), "resp": resp})
        return resp
