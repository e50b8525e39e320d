"""Byzantine process strategies for the message-passing model.

Attackers act below the asset-transfer API: they craft broadcast payloads
and protocol messages directly. Apart from :data:`Silent`, every attacker
colludes at the broadcast layer by acknowledging any SEND it sees, which
is the most helpful thing a Byzantine process can do for a conflicting
message trying to gather a quorum.
"""
from __future__ import annotations

from typing import Optional

from .broadcast import Endpoint, IdealEndpoint, QuorumEndpoint, RawEndpoint, signed_envelope
from .core import OwnershipMap, TransferRecord
from .mp import service_name, transfer_payload

STRATEGIES = ("Equivocate", "DoubleSpendRace", "BadSeq", "ForgeOwner", "StaleDeps", "Silent")


class ByzantineNode:
    def __init__(self, pid: int, strategy: str, q0: dict, mu: OwnershipMap, net,
                 benign: list[int]):
        if strategy not in STRATEGIES:
            raise ValueError(f"unknown Byzantine strategy {strategy!r}")
        self.pid = pid
        self.strategy = strategy
        self.q0 = dict(q0)
        self.mu = mu
        self.net = net
        self.benign = [p for p in benign if p != pid]
        self.endpoint: Optional[Endpoint] = None
        self.attacks = 0

    # the destinations two conflicting transfers pay into
    def _targets(self) -> tuple[int, int]:
        accts = [p for p in self.benign if p in self.q0] or [a for a in self.q0 if a != self.pid]
        return accts[0], accts[-1] if len(accts) > 1 else accts[0]

    def _payload(self, source: int, dest: int, amount: int, seq: int, deps=(), issuer=None) -> dict:
        t = TransferRecord(source, dest, amount, (source, seq), self.pid if issuer is None else issuer)
        return transfer_payload(t, deps)

    def attack(self) -> None:
        self.attacks += 1
        if self.attacks > 1 or self.strategy == "Silent":
            return
        getattr(self, "_" + self.strategy.lower())()

    def _own_balance(self) -> int:
        return self.q0.get(self.pid, 0)

    def _owns_single(self) -> bool:
        return self.mu.get(self.pid) == frozenset({self.pid})

    def _shared_owned(self) -> list[int]:
        return [a for a, ps in sorted(self.mu.items()) if len(ps) > 1 and self.pid in ps]

    def _request_shared(self) -> None:
        d1, d2 = self._targets()
        dests = [d1, d2]
        for a in self._shared_owned():
            body = {"account": a, "dest": dests[self.pid % 2], "amount": self.q0[a],
                    "issuer": self.pid, "deps": []}
            self.net.send(self.pid, service_name(a), "SEQREQ", body,
                          {"account": a, "dest": body["dest"], "amount": body["amount"]})

    # strategies
    def _equivocate(self) -> None:
        self._request_shared()
        if not self._owns_single():
            return
        d1, d2 = self._targets()
        b = self._own_balance()
        m1 = self._payload(self.pid, d1, b, 1)
        m2 = self._payload(self.pid, d2, b, 1)
        ep = self.endpoint
        key = ("src", self.pid)
        ep._src_seq = max(ep._src_seq, 1)
        e1 = signed_envelope(self.net.auth, self.pid, key, 1, m1)
        e2 = signed_envelope(self.net.auth, self.pid, key, 1, m2)
        for e in (e1, e2):
            self.net.note(self.pid, "bcast", {**e.summary(), "equivocation": True})
        pids = list(self.net.pids)
        half = len(pids) // 2
        group_a, group_b = pids[:half], pids[half:]
        if isinstance(ep, IdealEndpoint):
            ep.oracle.submit(e1)
            ep.oracle.submit(e2)
        elif isinstance(ep, QuorumEndpoint):
            ep.mine[e1.digest] = e1
            ep.mine[e2.digest] = e2
            for q in pids:
                if q in group_a or q not in self.benign:
                    self.net.send(self.pid, q, "SEND", e1, e1.summary())
                if q in group_b or q not in self.benign:
                    self.net.send(self.pid, q, "SEND", e2, e2.summary())
        elif isinstance(ep, RawEndpoint):
            for q in group_a:
                self.net.send(self.pid, q, "RAW", e1, e1.summary())
            for q in group_b:
                self.net.send(self.pid, q, "RAW", e2, e2.summary())

    def _doublespendrace(self) -> None:
        self._request_shared()
        if not self._owns_single():
            return
        d1, d2 = self._targets()
        b = self._own_balance()
        self.endpoint.broadcast(self._payload(self.pid, d1, b, 1))
        self.endpoint.broadcast(self._payload(self.pid, d2, b, 2))

    def _badseq(self) -> None:
        if not self._owns_single():
            return
        d1, d2 = self._targets()
        x = min(1, self._own_balance())
        self.endpoint.broadcast(self._payload(self.pid, d1, x, 2))
        self.endpoint.broadcast(self._payload(self.pid, d1, x, 1))
        self.endpoint.broadcast(self._payload(self.pid, d2, x, 1))

    def _forgeowner(self) -> None:
        victim = self.benign[0] if self.benign else self.pid
        if victim not in self.q0:
            return
        self.endpoint.broadcast(self._payload(victim, self.pid, self.q0[victim], 1, issuer=victim))

    def _staledeps(self) -> None:
        if not self._owns_single():
            return
        d1, d2 = self._targets()
        fake = TransferRecord(d1, self.pid, 1000, (d1, 99), d1)
        self.endpoint.broadcast(self._payload(self.pid, d2, self._own_balance() + 1000, 1, deps=[fake]))
        # an affordable follow-up that is only valid if s=1 is skipped
        self.endpoint.broadcast(self._payload(self.pid, d1, min(1, self._own_balance()), 2))

    def _silent(self) -> None:
        pass

    # message handling
    def receive(self, src, kind: str, body) -> None:
        if self.strategy == "Silent":
            return
        if kind == "SEQRESP":
            if body.get("ok"):
                msg = body["msg"]
                self.endpoint.broadcast(msg, key=("acct", msg["source_account"]), seq=msg["seq"])
            return
        if kind == "SEND" and isinstance(self.endpoint, QuorumEndpoint):
            env = body
            sig = self.net.auth.sign(self.pid, "ack:" + env.digest)
            self.net.send(self.pid, env.sender, "ACK", (env.digest, self.pid, sig),
                          {"digest": env.digest, "signer": self.pid})
            return
        self.endpoint.receive(src, kind, body)

    def on_deliver(self, env) -> None:
        pass
