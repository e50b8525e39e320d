"""Shared-memory asset transfer and the consensus reductions around it.

Algorithms are written as generators over process steps: each ``yield``
immediately precedes exactly one access to a shared object, so a scheduler
that resumes one generator at a time interleaves processes at the
granularity of atomic memory accesses. :func:`drive` runs a generator to
completion for callers that do not care about interleaving (real threads,
solo runs).

Three algorithms live here:

* :class:`WaitFreeTransfer` -- single-owner asset transfer from an atomic
  snapshot only (consensus number 1).
* :class:`ConsensusFromTransfer` -- consensus among ``k`` processes from one
  ``k``-shared asset-transfer object and registers.
* :class:`KSharedTransfer` -- ``k``-shared asset transfer from ``k``-consensus
  objects, registers and an atomic snapshot.
"""
from __future__ import annotations

from typing import Any, Generator, Mapping, Optional

from .core import (
    AccountId,
    Amount,
    OwnershipMap,
    Pid,
    Read,
    Transfer,
    TransferRecord,
    UnknownAccount,
    balance_of,
)
from .primitives import BOTTOM, AtomicLedger, AtomicSnapshot, KConsensus, Recorder, Register

Steps = Generator[None, None, Any]

SUCCESS = "success"
FAILURE = "failure"


def drive(gen: Steps) -> Any:
    """Run a step generator to completion and return its result."""
    try:
        while True:
            next(gen)
    except StopIteration as stop:
        return stop.value


def _noop(pid: int, kind: str, data: dict) -> None:
    pass


class _Base:
    def __init__(self, n: int, q0: Mapping[AccountId, Amount], mu, recorder: Optional[Recorder]):
        if n < 1:
            raise ValueError("need at least one process")
        self.n = n
        self.q0 = {int(a): int(v) for a, v in q0.items()}
        self.mu = mu if isinstance(mu, OwnershipMap) else OwnershipMap(mu)
        for a in self.q0:
            self.mu.setdefault(a, frozenset())
        if set(self.mu) != set(self.q0):
            raise ValueError("ownership map and initial balances cover different accounts")
        self.rec = recorder or _noop

    def _check(self, *accounts: AccountId) -> None:
        for a in accounts:
            if a not in self.q0:
                raise UnknownAccount(a)

    def run(self, p: Pid, op) -> Steps:
        if isinstance(op, Transfer):
            return self.transfer(p, op.a, op.b, op.x)
        if isinstance(op, Read):
            return self.read(p, op.a)
        raise TypeError(f"unsupported operation {op!r}")


class WaitFreeTransfer(_Base):
    """Single-owner asset transfer over an atomic snapshot of per-process op sets.

    Cell ``p`` of the snapshot holds every successful transfer issued by
    ``p``. A transfer succeeds when the snapshot shows enough balance; since
    only the owner debits an account, no later write can invalidate that.
    """

    def __init__(self, n: int, q0, mu, recorder: Optional[Recorder] = None,
                 check_balance: bool = True):
        super().__init__(n, q0, mu, recorder)
        if self.mu.sharing > 1:
            raise ValueError("WaitFreeTransfer requires at most one owner per account")
        self.snap = AtomicSnapshot(n, "AS", recorder)
        self.ops = {p: frozenset() for p in range(1, n + 1)}
        self._issued = {p: 0 for p in range(1, n + 1)}
        # mutation hook for checker self-tests
        self.check_balance = check_balance

    def balance(self, a: AccountId, view) -> int:
        records = [r for cell in view if cell is not BOTTOM for r in cell]
        return balance_of(a, records, self.q0)

    def transfer(self, p: Pid, a: AccountId, b: AccountId, x: Amount) -> Steps:
        self._check(a, b)
        yield
        view = self.snap.snapshot(p)
        if p not in self.mu[a] or (self.check_balance and self.balance(a, view) < x):
            return False
        self._issued[p] += 1
        self.ops[p] = self.ops[p] | {TransferRecord(a, b, x, (p, self._issued[p]), p)}
        yield
        self.snap.update(p, self.ops[p])
        self.rec(p, "effect", {})
        return True

    def read(self, p: Pid, a: AccountId) -> Steps:
        self._check(a)
        yield
        view = self.snap.snapshot(p)
        return self.balance(a, view)


class ConsensusFromTransfer:
    """Wait-free consensus for processes ``1..k`` from one ``k``-shared transfer object.

    Account ``a`` starts with ``2k`` and process ``p`` withdraws ``2k - p``:
    any two withdrawals exceed ``2k``, so exactly one succeeds and the
    remaining balance names the winner, whose register holds the decision.

    ``backend="atomic"`` uses an atomic ledger object (one step per
    operation); ``backend="kshared"`` builds the transfer object from
    k-consensus with :class:`KSharedTransfer`.
    """

    ACCOUNT = 1
    SINK = 2

    def __init__(self, k: int, recorder: Optional[Recorder] = None, backend: str = "atomic"):
        if k < 1:
            raise ValueError("k must be at least 1")
        self.k = k
        self.rec = recorder or _noop
        self.q0 = {self.ACCOUNT: 2 * k, self.SINK: 0}
        self.mu = OwnershipMap({self.ACCOUNT: range(1, k + 1), self.SINK: ()})
        self.R = {i: Register(f"R[{i}]", i, BOTTOM, recorder) for i in range(1, k + 1)}
        self.backend = backend
        if backend == "atomic":
            self.at = AtomicLedger(self.q0, self.mu, "AT", recorder)
        elif backend == "kshared":
            self.at = KSharedTransfer(k, self.q0, self.mu, recorder)
        else:
            raise ValueError(f"unknown backend {backend!r}")
        self.proposals: dict[int, Any] = {}

    def _apply(self, p: Pid, op) -> Steps:
        if self.backend == "atomic":
            yield
            return self.at.apply(p, op)
        return (yield from self.at.run(p, op))

    def propose(self, p: Pid, v: Any) -> Steps:
        if not 1 <= p <= self.k:
            raise ValueError(f"process ids must lie in 1..{self.k}, got {p}")
        if p in self.proposals:
            raise RuntimeError(f"process {p} already proposed")
        self.proposals[p] = v
        yield
        self.R[p].write(p, v)
        ok = yield from self._apply(p, Transfer(self.ACCOUNT, self.SINK, 2 * self.k - p))
        winner = yield from self._apply(p, Read(self.ACCOUNT))
        self.rec(p, "fig2", {"transfer": ok, "balance": winner})
        if winner not in self.R:
            raise AssertionError(f"balance {winner} does not name a process")
        yield
        return self.R[winner].read(p)

    def run(self, p: Pid, op) -> Steps:
        return self.propose(p, op)


def _tx_record(tx: tuple) -> TransferRecord:
    a, b, x, proposer, rnd = tx
    return TransferRecord(a, b, x, tx, proposer)


class KSharedTransfer(_Base):
    """``k``-shared asset transfer from k-consensus objects.

    Owners of an account announce transfers in per-owner registers, then walk
    a per-account list of k-consensus objects, one per round, agreeing on
    (transfer, success/failure) pairs for the oldest announced transfer. A
    process never invokes the same object twice, so no object sees more than
    ``k`` invocations.
    """

    def __init__(self, n: int, q0, mu, recorder: Optional[Recorder] = None):
        super().__init__(n, q0, mu, recorder)
        self.k = max(1, self.mu.sharing)
        self.snap = AtomicSnapshot(n, "AS", recorder)
        self.R = {a: {p: Register(f"R_{a}[{p}]", p, BOTTOM, recorder) for p in sorted(ps)}
                  for a, ps in self.mu.items()}
        self.kc: dict[AccountId, list[KConsensus]] = {a: [] for a in self.mu}
        self.hist = {p: frozenset() for p in range(1, n + 1)}
        self.committed = {p: {a: set() for a in self.mu} for p in range(1, n + 1)}
        self.round = {p: {a: 0 for a in self.mu} for p in range(1, n + 1)}
        self._visible: set = set()

    def _object(self, a: AccountId, i: int) -> KConsensus:
        objs = self.kc[a]
        while len(objs) <= i:
            objs.append(KConsensus(self.k, f"kC_{a}[{len(objs)}]", self.rec))
        return objs[i]

    def balance(self, a: AccountId, view) -> int:
        records = {_tx_record(tx) for cell in view if cell is not BOTTOM
                   for tx, result in cell if result == SUCCESS}
        return balance_of(a, records, self.q0)

    def transfer(self, p: Pid, a: AccountId, b: AccountId, x: Amount) -> Steps:
        self._check(a, b)
        if p not in self.mu[a]:
            return False
        tx = (a, b, x, p, self.round[p][a])
        yield
        self.R[a][p].write(p, tx)
        self.rec(p, "announce", {"tx": list(tx)})
        collected = set()
        for i in self.R[a]:
            yield
            announced = self.R[a][i].read(p)
            if announced is not BOTTOM:
                collected.add(announced)
        committed = self.committed[p][a]
        collected -= committed
        while tx in collected:
            # oldest = lowest announcement round, ties broken by pid
            req = min(collected, key=lambda t: (t[4], t[3]))
            yield
            view = self.snap.snapshot(p)
            prop = (req, SUCCESS if self.balance(a, view) >= req[2] else FAILURE)
            rnd = self.round[p][a]
            yield
            decision = self._object(a, rnd).propose(p, prop)
            if decision is BOTTOM:
                raise AssertionError(f"kC_{a}[{rnd}] returned bottom to process {p}")
            self.hist[p] = self.hist[p] | {decision}
            yield
            self.snap.update(p, self.hist[p])
            for t, result in self.hist[p]:
                if (t, result) not in self._visible:
                    self._visible.add((t, result))
                    self.rec(p, "effect", {"tx": list(t), "result": result})
            committed.add(decision[0])
            collected -= committed
            self.rec(p, "decide", {"account": a, "round": rnd,
                                   "tx": list(decision[0]), "result": decision[1]})
            self.round[p][a] = rnd + 1
        return (tx, SUCCESS) in self.hist[p]

    def read(self, p: Pid, a: AccountId) -> Steps:
        self._check(a)
        yield
        view = self.snap.snapshot(p)
        return self.balance(a, view)
