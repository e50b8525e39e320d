"""Domain types and the sequential asset-transfer specification.

A ledger state maps every account to a non-negative integer balance. The
transition function :func:`seq_step` is the executable form of the
asset-transfer relation and is the oracle every checker in the package
replays against.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Sequence, Tuple, Union

AccountId = int
Pid = int
Amount = int

# Balances behave like unsigned 64-bit counters: exceeding this is an error.
MAX_AMOUNT = 2**64 - 1


class AssetTransferError(Exception):
    """Base class for errors raised by the asset-transfer domain."""


class UnknownAccount(AssetTransferError, KeyError):
    def __str__(self) -> str:
        return f"unknown account {self.args[0]!r}"


class ArithmeticOverflow(AssetTransferError, OverflowError):
    pass


class NotOwner(AssetTransferError):
    pass


def checked_add(x: int, y: int) -> int:
    r = x + y
    if r > MAX_AMOUNT or r < -MAX_AMOUNT:
        raise ArithmeticOverflow(f"{x} + {y} leaves the representable range")
    return r


def checked_sub(x: int, y: int) -> int:
    return checked_add(x, -y)


@dataclass(frozen=True)
class Transfer:
    a: AccountId
    b: AccountId
    x: Amount

    def __post_init__(self) -> None:
        if not isinstance(self.x, int) or isinstance(self.x, bool) or self.x < 0:
            raise ValueError(f"amount must be a non-negative integer, got {self.x!r}")

    def to_json(self) -> list:
        return ["transfer", self.a, self.b, self.x]


@dataclass(frozen=True)
class Read:
    a: AccountId

    def to_json(self) -> list:
        return ["read", self.a]


Operation = Union[Transfer, Read]
# Transfers answer with a bool, reads with a balance. bool is a subclass of
# int in Python, so responses must be compared with same_response().
Response = Union[bool, int]


def same_response(r1: object, r2: object) -> bool:
    return type(r1) is type(r2) and r1 == r2


def operation_from_json(obj: Sequence) -> Operation:
    kind = obj[0]
    if kind == "transfer":
        return Transfer(int(obj[1]), int(obj[2]), int(obj[3]))
    if kind == "read":
        return Read(int(obj[1]))
    raise ValueError(f"unknown operation kind {kind!r}")


@dataclass(frozen=True)
class TransferRecord:
    """One money movement plus the tag that keeps repeated transfers distinct.

    ``uid`` is any hashable tag unique within an execution. The shared-memory
    algorithms use ``(issuer, counter)``; the message-passing algorithm uses
    ``(source, seq)``. ``issuer`` is metadata and does not take part in
    equality.
    """

    source: AccountId
    dest: AccountId
    amount: Amount
    uid: Hashable
    issuer: Pid = field(default=0, compare=False)

    def to_json(self) -> list:
        uid = list(self.uid) if isinstance(self.uid, tuple) else self.uid
        return [self.source, self.dest, self.amount, uid, self.issuer]

    @classmethod
    def from_json(cls, obj: Sequence) -> "TransferRecord":
        source, dest, amount, uid, issuer = obj
        if isinstance(uid, list):
            uid = tuple(uid)
        if not isinstance(amount, int) or amount < 0:
            raise ValueError(f"bad amount {amount!r}")
        return cls(int(source), int(dest), amount, uid, int(issuer))


class OwnershipMap(dict):
    """Account -> frozenset of owner pids."""

    def __init__(self, owners: Mapping[AccountId, Iterable[Pid]] = ()):
        super().__init__((int(a), frozenset(int(p) for p in ps)) for a, ps in dict(owners).items())

    def owns(self, p: Pid, a: AccountId) -> bool:
        return p in self.get(a, ())

    @property
    def sharing(self) -> int:
        """The largest number of owners of one account (k of k-shared)."""
        return max((len(ps) for ps in self.values()), default=0)

    def accounts_of(self, p: Pid) -> list[AccountId]:
        return sorted(a for a, ps in self.items() if p in ps)


LedgerState = Mapping[AccountId, Amount]


def _require(state: LedgerState, a: AccountId) -> None:
    if a not in state:
        raise UnknownAccount(a)


def seq_step(state: LedgerState, p: Pid, op: Operation,
             mu: Mapping[AccountId, Iterable[Pid]]) -> Tuple[dict, Response]:
    """Apply ``op`` issued by ``p`` to ``state``; return the new state and response.

    The input state is never mutated. Self-transfers are permitted and leave
    the state unchanged when they succeed.
    """
    if isinstance(op, Read):
        _require(state, op.a)
        return dict(state), state[op.a]
    if isinstance(op, Transfer):
        _require(state, op.a)
        _require(state, op.b)
        if p not in mu.get(op.a, ()) or state[op.a] < op.x:
            return dict(state), False
        new = dict(state)
        new[op.a] = checked_sub(new[op.a], op.x)
        new[op.b] = checked_add(new[op.b], op.x)
        return new, True
    raise TypeError(f"not an operation: {op!r}")


def balance_of(a: AccountId, records: Iterable[TransferRecord], q0: LedgerState) -> int:
    """Initial balance plus incoming minus outgoing amounts over ``records``.

    The result is signed on purpose: a negative value exposes an illegal set.
    """
    _require(q0, a)
    total = q0[a]
    for r in records:
        if r.dest == a:
            total = checked_add(total, r.amount)
        if r.source == a:
            total = checked_sub(total, r.amount)
    return total


def replay_legal(seq: Iterable[Tuple[Pid, Operation, Response]], q0: LedgerState,
                 mu: Mapping[AccountId, Iterable[Pid]]) -> bool:
    """True iff replaying ``seq`` from ``q0`` reproduces every recorded response."""
    state: Mapping[AccountId, Amount] = q0
    try:
        for p, op, resp in seq:
            state, expected = seq_step(state, p, op, mu)
            if not same_response(expected, resp):
                return False
    except (AssetTransferError, TypeError, ValueError):
        return False
    return True


def total_money(state: LedgerState) -> int:
    return sum(state.values())
