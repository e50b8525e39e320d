"""Byzantine message-passing asset transfer on top of secure broadcast.

:class:`TransferNode` is the per-process state machine: a transfer is one
secure broadcast carrying the transfer, its per-account sequence number and
the incoming transfers it depends on; every receiver validates it against
its local view before applying it. Accounts owned by several processes get
their sequence numbers (and a quorum certificate) from a per-account
:class:`SequenceService` and travel on account-ordered broadcast.

:class:`BaselineNode` is a total-order comparison point: every transfer is
routed through one sequencer that orders it globally before broadcasting.
"""
from __future__ import annotations

from collections import defaultdict
from typing import Any, Iterable, Optional

from .broadcast import (
    Endpoint,
    Envelope,
    digest_of,
    quorum_certificate_ok,
    quorum_size,
)
from .core import (
    AssetTransferError,
    NotOwner,
    OwnershipMap,
    Transfer,
    TransferRecord,
    UnknownAccount,
    balance_of,
    seq_step,
)


class PendingOperation(AssetTransferError):
    pass


class SequencerUnavailable(AssetTransferError):
    pass


# -- wire payload ------------------------------------------------------------


def record_json(r: TransferRecord) -> list:
    return [r.source, r.dest, r.amount, r.uid[1], r.issuer]


def record_from_json(obj) -> TransferRecord:
    src, dst, amt, seq, issuer = obj
    for v in (src, dst, amt, seq, issuer):
        if not isinstance(v, int) or isinstance(v, bool):
            raise ValueError(f"non-integer field in {obj!r}")
    if amt < 0 or seq < 1:
        raise ValueError(f"bad amount or sequence number in {obj!r}")
    return TransferRecord(src, dst, amt, (src, seq), issuer)


def transfer_payload(record: TransferRecord, deps: Iterable[TransferRecord], cert=None) -> dict:
    body = {
        "source_account": record.source,
        "dest_account": record.dest,
        "amount": record.amount,
        "seq": record.uid[1],
        "issuer": record.issuer,
        "deps": sorted(record_json(d) for d in deps),
    }
    if cert is not None:
        body["cert"] = [list(c) for c in cert]
    return body


def certified_part(payload: dict) -> dict:
    return {k: v for k, v in payload.items() if k != "cert"}


def parse_payload(payload: Any) -> tuple[TransferRecord, frozenset, Optional[list]]:
    """Decode a transfer message; raises ValueError on malformed input."""
    if not isinstance(payload, dict):
        raise ValueError("payload is not a mapping")
    try:
        t = record_from_json([payload["source_account"], payload["dest_account"],
                              payload["amount"], payload["seq"], payload["issuer"]])
        deps = frozenset(record_from_json(d) for d in payload["deps"])
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed transfer payload: {exc!r}") from exc
    cert = payload.get("cert")
    return t, deps, cert


def cert_message(payload: dict) -> str:
    return "cert:" + digest_of(certified_part(payload))


def certified(auth, payload: Any, mu: OwnershipMap) -> bool:
    """True iff ``payload`` carries a valid owner-quorum certificate for its source account."""
    try:
        t, _, cert = parse_payload(payload)
    except ValueError:
        return False
    owners = sorted(mu.get(t.source, ()))
    if cert is None or len(owners) < 2:
        return False
    try:
        return quorum_certificate_ok(auth, digest_of(certified_part(payload)), cert,
                                     owners, quorum_size(len(owners)), tag="cert:")
    except (TypeError, ValueError):
        return False


def account_admission(auth, mu: OwnershipMap):
    """Admission rule for account-ordered broadcast positions."""
    def admit(env) -> bool:
        if not certified(auth, env.payload, mu):
            return False
        return env.payload["source_account"] == env.key[1] and env.payload["seq"] == env.seq
    return admit


# -- the transfer node ---------------------------------------------------------


class TransferNode:
    """Per-process state of the broadcast-based asset-transfer algorithm.

    Local variables are keyed by *stream*: for a single-owner account the
    stream is the owner's pid (equal to the account id); for a shared
    account it is the account id, whose messages travel on account order.

    ``validation_balance`` selects how the sufficiency check reads the
    issuer's history: ``"with_deps"`` (default) counts the dependencies the
    message carries, ``"literal"`` uses only the already-validated history.
    ``read_view`` selects what a read of account ``a`` sees: ``"validated"``
    (default) counts every transfer this process has validated, while
    ``"literal"`` only counts ``hist[a]`` plus the local dependency set, so
    incoming transfers another account has not yet declared are invisible.
    ``check_balance``/``check_seq`` exist for mutation testing only; the
    former drops the balance check both when issuing and when validating.
    """

    def __init__(self, pid: int, q0: dict, mu: OwnershipMap, net, *,
                 validation_balance: str = "with_deps", read_view: str = "validated",
                 check_balance: bool = True, check_seq: bool = True):
        self.pid = pid
        self.q0 = dict(q0)
        self.mu = mu
        self.net = net
        self.endpoint: Optional[Endpoint] = None
        self.seq: dict[int, int] = defaultdict(int)
        self.rec: dict[int, int] = defaultdict(int)
        self.hist: dict[int, set] = defaultdict(set)
        self.deps: set[TransferRecord] = set()
        self.incoming: dict[int, set] = defaultdict(set)
        self.to_validate: list[tuple[int, dict]] = []
        self.pending: Optional[dict] = None
        if validation_balance not in ("with_deps", "literal"):
            raise ValueError(f"unknown validation_balance {validation_balance!r}")
        self.validation_balance = validation_balance
        if read_view not in ("validated", "literal"):
            raise ValueError(f"unknown read_view {read_view!r}")
        self.read_view = read_view
        self.applied: set[TransferRecord] = set()
        self.check_balance = check_balance
        self.check_seq = check_seq
        self.dropped = 0

    # helpers
    def shared(self, a: int) -> bool:
        return len(self.mu.get(a, ())) > 1

    def _view(self, a: int) -> set:
        view = set(self.hist[a])
        if a == self.pid:
            view |= self.deps
        if self.shared(a) and self.pid in self.mu[a]:
            view |= self.incoming[a]
        return view

    def balance(self, a: int) -> int:
        return balance_of(a, self._view(a), self.q0)

    def _require(self, *accounts: int) -> None:
        for a in accounts:
            if a not in self.q0:
                raise UnknownAccount(a)

    # operations
    def read(self, a: int) -> int:
        self._require(a)
        if self.read_view == "validated":
            return balance_of(a, self.applied, self.q0)
        return self.balance(a)

    def transfer(self, a: int, b: int, x: int, opid: Any = None) -> Optional[bool]:
        """Start a transfer. Returns False at once, or None while it is in flight."""
        self._require(a, b)
        if self.pending is not None:
            raise PendingOperation(f"process {self.pid} already has a transfer in flight")
        if self.pid not in self.mu.get(a, ()):
            raise NotOwner(f"process {self.pid} does not own account {a}")
        if self.shared(a):
            return self._request_sequence(a, b, x, opid)
        if a != self.pid:
            raise NotOwner(f"single-owner account {a} must be owned by process {a}")
        if self.check_balance and self.balance(a) < x:
            return False
        s = self.seq[self.pid] + 1
        t = TransferRecord(a, b, x, (a, s), self.pid)
        payload = transfer_payload(t, self.deps)
        self.pending = {"op": opid, "uid": t.uid}
        self.net.note(self.pid, "issue", {"op": opid, "uid": list(t.uid)})
        self.deps = set()
        self.endpoint.broadcast(payload)
        return None

    def _request_sequence(self, a: int, b: int, x: int, opid: Any) -> None:
        self.pending = {"op": opid, "uid": None, "account": a, "dest": b, "amount": x}
        body = {"account": a, "dest": b, "amount": x, "issuer": self.pid,
                "deps": sorted(record_json(r) for r in self.incoming[a])}
        self.net.send(self.pid, service_name(a), "SEQREQ", body,
                      {"account": a, "dest": b, "amount": x})
        return None

    def on_sequence(self, body: dict) -> None:
        """Handle the sequence service's answer.

        A refusal names the last number the service handed out. The owner
        first applies the account's transfers up to that number, then fails
        only if its own view agrees the funds are short; otherwise it asks
        again, passing on the credits it has seen.
        """
        if self.pending is None or self.pending.get("account") != body.get("account"):
            return None
        if not body.get("ok"):
            self.pending["await"] = int(body.get("upto", 0))
            self._settle_refusal()
            return None
        payload = body["msg"]
        self.pending["uid"] = (payload["source_account"], payload["seq"])
        self.net.note(self.pid, "issue", {"op": self.pending["op"], "uid": list(self.pending["uid"])})
        self.endpoint.broadcast(payload, key=("acct", payload["source_account"]), seq=payload["seq"])
        return None

    def _settle_refusal(self) -> None:
        pend = self.pending
        if pend is None or "await" not in pend:
            return
        a = pend["account"]
        if self.seq[a] < pend["await"]:
            return
        if balance_of(a, self.applied, self.q0) < pend["amount"]:
            self.pending = None
            self.net.respond(self.pid, pend["op"], False)
        else:
            self.net.note(self.pid, "diag", {"what": "sequence_retry", "account": a,
                                             "op": pend["op"]})
            self._request_sequence(a, pend["dest"], pend["amount"], pend["op"])

    # delivery and validation
    def on_deliver(self, env: Envelope) -> set:
        try:
            t, _, _ = parse_payload(env.payload)
        except ValueError:
            self.dropped += 1
            self.net.note(self.pid, "drop", {"reason": "malformed", "origin": env.sender})
            return set()
        stream = env.sender if env.key[0] == "src" else env.key[1]
        s = t.uid[1]
        if s == self.rec[stream] + 1:
            self.rec[stream] += 1
            self.to_validate.append((env.sender, env.payload))
        else:
            self.dropped += 1
            self.net.note(self.pid, "drop", {"reason": "seq", "origin": env.sender,
                                             "seq": s, "expected": self.rec[stream] + 1})
        return self.validate_and_apply()

    def _stream_of(self, origin: int, t: TransferRecord) -> int:
        return t.source if self.shared(t.source) else origin

    def valid(self, origin: int, payload: dict):
        """True/False for the validity predicate, or "discard" for ownership failures."""
        t, h, cert = parse_payload(payload)
        c = t.source
        if self.shared(c):
            if origin not in self.mu[c] or t.issuer != origin:
                return "discard"
            if not certified(self.net.auth, payload, self.mu):
                return "discard"
        elif origin != c or t.issuer != origin:
            return "discard"
        stream = self._stream_of(origin, t)
        if self.check_seq and t.uid[1] != self.seq[stream] + 1:
            return False
        basis = self.hist[c] | h if self.validation_balance == "with_deps" else self.hist[c]
        if self.check_balance and balance_of(c, basis, self.q0) < t.amount:
            return False
        return all(d in self.hist.get(d.source, ()) for d in h)

    def validate_and_apply(self) -> set:
        applied: set = set()
        progress = True
        while progress:
            progress = False
            keep = []
            for origin, payload in self.to_validate:
                try:
                    verdict = self.valid(origin, payload)
                except (ValueError, KeyError):
                    verdict = "discard"
                if verdict == "discard":
                    self.net.note(self.pid, "reject", {"reason": "ownership", "origin": origin,
                                                       "payload": payload})
                elif verdict:
                    self._apply(origin, payload)
                    applied.add(parse_payload(payload)[0])
                    progress = True
                else:
                    keep.append((origin, payload))
            self.to_validate = keep
        return applied

    def _apply(self, origin: int, payload: dict) -> None:
        t, h, _ = parse_payload(payload)
        stream = self._stream_of(origin, t)
        self.hist[t.source] |= h | {t}
        self.applied.add(t)
        self.seq[stream] = t.uid[1]
        if t.dest == self.pid:
            self.deps.add(t)
        if self.shared(t.dest) and self.pid in self.mu[t.dest]:
            self.incoming[t.dest].add(t)
        self.net.note(self.pid, "apply", {"record": record_json(t), "origin": origin,
                                          "deps": sorted(record_json(d) for d in h)})
        if origin == self.pid and self.pending and self.pending.get("uid") == t.uid:
            opid = self.pending["op"]
            self.pending = None
            self.net.respond(self.pid, opid, True)
        elif self.pending and self.pending.get("await") is not None:
            self._settle_refusal()


def service_name(account: int) -> str:
    return f"svc{account}"


class SequenceService:
    """Per-account sequencer standing in for a BFT cluster run by the account's owners.

    ``mode="correct"`` assigns gap-free increasing numbers to transfers the
    account can afford and certifies them with a quorum of owner signatures.
    ``mode="compromised"`` follows ``strategy``: ``"equivocate"`` hands the
    same number to pairs of requests and certifies anything; ``"stall"``
    never answers.
    """

    def __init__(self, account: int, q0: dict, mu: OwnershipMap, net,
                 mode: str = "correct", strategy: str = "equivocate"):
        self.account = account
        self.name = service_name(account)
        self.q0 = dict(q0)
        self.owners = sorted(mu[account])
        self.net = net
        self.mode = mode
        self.strategy = strategy
        self.next = 1
        self.requests = 0
        self.known_deps: set[TransferRecord] = set()
        self.included: set[TransferRecord] = set()
        self.assigned: list[TransferRecord] = []

    def _certify(self, payload: dict) -> list:
        msg = cert_message(payload)
        signers = self.owners[:quorum_size(len(self.owners))] if self.mode == "correct" else self.owners
        return [[p, self.net.auth.sign(p, msg)] for p in signers]

    def receive(self, src, kind: str, body: dict) -> None:
        if kind != "SEQREQ":
            return
        self.requests += 1
        if self.mode == "compromised" and self.strategy == "stall":
            self.net.note(self.name, "diag", {"what": "sequencer_stalled", "account": self.account})
            return
        issuer = body.get("issuer")
        reply = {"account": self.account, "ok": False, "upto": self.next - 1}
        try:
            deps = {record_from_json(d) for d in body.get("deps", [])}
        except (ValueError, TypeError):
            deps = set()
        deps = {d for d in deps if d.dest == self.account}
        if src != issuer or issuer not in self.owners:
            self.net.send(self.name, src, "SEQRESP", reply, {"account": self.account, "ok": False})
            return
        self.known_deps |= deps
        x = body["amount"]
        if self.mode == "compromised":
            s = (self.requests + 1) // 2
        else:
            funds = balance_of(self.account, self.known_deps | set(self.assigned), self.q0)
            if funds < x:
                self.net.send(self.name, src, "SEQRESP", reply, {"account": self.account, "ok": False})
                return
            s = self.next
            self.next += 1
        h = self.known_deps - self.included
        self.included |= h
        t = TransferRecord(self.account, body["dest"], x, (self.account, s), issuer)
        self.assigned.append(t)
        payload = transfer_payload(t, h)
        payload["cert"] = self._certify(payload)
        reply = {"account": self.account, "ok": True, "msg": payload}
        self.net.send(self.name, src, "SEQRESP", reply, {"account": self.account, "ok": True, "seq": s})


class BaselineNode:
    """Total-order baseline: one sequencer orders every transfer, then broadcasts it."""

    def __init__(self, pid: int, q0: dict, mu: OwnershipMap, net, sequencer: int):
        self.pid = pid
        self.mu = mu
        self.net = net
        self.sequencer = sequencer
        self.state = dict(q0)
        self.authoritative = dict(q0)
        self.next_index = 1
        self.applied_from: dict[int, int] = defaultdict(int)
        self.endpoint: Optional[Endpoint] = None
        self.pending: Optional[Any] = None

    def read(self, a: int) -> int:
        if a not in self.state:
            raise UnknownAccount(a)
        return self.state[a]

    def transfer(self, a: int, b: int, x: int, opid: Any = None) -> Optional[bool]:
        if self.pending is not None:
            raise PendingOperation(f"process {self.pid} already has a transfer in flight")
        self.pending = opid
        self.net.send(self.pid, self.sequencer, "REQ", {"op": [a, b, x], "issuer": self.pid},
                      {"op": [a, b, x]})
        return None

    def receive_request(self, src, body: dict) -> None:
        if self.pid != self.sequencer or src != body.get("issuer"):
            return
        a, b, x = body["op"]
        self.authoritative, ok = seq_step(self.authoritative, body["issuer"], Transfer(a, b, x), self.mu)
        order = {"index": self.next_index, "op": [a, b, x], "issuer": body["issuer"], "ok": ok}
        self.next_index += 1
        self.endpoint.broadcast(order)

    def on_deliver(self, env: Envelope) -> None:
        order = env.payload
        if env.sender != self.sequencer:
            return
        a, b, x = order["op"]
        if order["ok"]:
            self.state, _ = seq_step(self.state, order["issuer"], Transfer(a, b, x), self.mu)
            self.applied_from[a] += 1
            self.net.note(self.pid, "apply", {"record": [a, b, x, self.applied_from[a], order["issuer"]],
                                              "origin": order["issuer"], "deps": [],
                                              "index": order["index"]})
        if order["issuer"] == self.pid and self.pending is not None:
            opid, self.pending = self.pending, None
            if order["ok"]:
                self.net.note(self.pid, "issue", {"op": opid, "uid": [a, self.applied_from[a]]})
            self.net.respond(self.pid, opid, bool(order["ok"]))


__all__ = [
    "BaselineNode", "PendingOperation", "account_admission", "certified", "SequenceService", "SequencerUnavailable", "TransferNode",
    "parse_payload", "record_from_json", "record_json", "service_name", "transfer_payload",
]
