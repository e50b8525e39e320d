"""Secure broadcast over the simulated network.

Three interchangeable implementations share one endpoint interface
(:meth:`broadcast`, :meth:`receive`, plus an ``on_deliver`` callback):

* :class:`IdealEndpoint` backed by a trusted :class:`IdealizedBroadcast`
  oracle that fixes one payload per ordering position.
* :class:`QuorumEndpoint`, an echo-quorum protocol: SEND to all, collect
  more than ``2N/3`` signed ACKs, send the certified message (CERT) to all,
  then READY amplification so that either every correct process delivers or
  none does, even if the sender crashes.
* :class:`RawEndpoint`, unprotected best-effort channels, kept as a negative
  control for the monitors.

Ordering positions are ``(key, seq)`` where ``key`` is ``("src", sender)``
for per-sender source order or ``("acct", account)`` for account order.
Receivers release each key's messages in ascending ``seq``.
"""
from __future__ import annotations

import hashlib
import hmac
import json
import random
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Optional, Protocol

Key = tuple  # ("src", pid) or ("acct", account)


def digest_of(obj: Any) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=list)
    return hashlib.sha256(blob.encode()).hexdigest()[:20]


# -- authentication ---------------------------------------------------------


class Authenticator(Protocol):
    def sign(self, pid: int, message: str) -> str: ...

    def verify(self, pid: int, message: str, tag: str) -> bool: ...


class StubAuthenticator:
    """Simulation-grade tags: unforgeable because the registry remembers who signed what.

    Simulated processes only ever call :meth:`sign` with their own pid, the
    same guarantee a trusted network layer gives for sender identities.
    """

    def __init__(self) -> None:
        self._issued: set[tuple[int, str, str]] = set()
        self._nonce = 0

    def sign(self, pid: int, message: str) -> str:
        self._nonce += 1
        tag = f"{pid}:{self._nonce}"
        self._issued.add((pid, message, tag))
        return tag

    def verify(self, pid: int, message: str, tag: str) -> bool:
        return (pid, message, tag) in self._issued


class HmacAuthenticator:
    """Keyed-MAC tags with one secret per process, derived from a seed."""

    def __init__(self, seed: int = 0) -> None:
        self._seed = seed
        self._keys: dict[int, bytes] = {}

    def _key(self, pid: int) -> bytes:
        if pid not in self._keys:
            self._keys[pid] = random.Random(f"key:{self._seed}:{pid}").randbytes(32)
        return self._keys[pid]

    def sign(self, pid: int, message: str) -> str:
        return hmac.new(self._key(pid), message.encode(), hashlib.sha256).hexdigest()[:32]

    def verify(self, pid: int, message: str, tag: str) -> bool:
        return hmac.compare_digest(self.sign(pid, message), tag)


def make_authenticator(scheme: str = "stub", seed: int = 0) -> Authenticator:
    if scheme == "stub":
        return StubAuthenticator()
    if scheme == "hmac":
        return HmacAuthenticator(seed)
    raise ValueError(f"unknown authentication scheme {scheme!r}")


# -- envelopes --------------------------------------------------------------


@dataclass(eq=False)
class Envelope:
    sender: int
    key: Key
    seq: int
    payload: Any
    auth: str = ""
    _digest: Optional[str] = field(default=None, repr=False)

    @property
    def digest(self) -> str:
        if self._digest is None:
            self._digest = digest_of([self.sender, list(self.key), self.seq, self.payload])
        return self._digest

    @property
    def position(self) -> tuple:
        return (self.key, self.seq)

    def summary(self) -> dict:
        return {"origin": self.sender, "key": list(self.key), "seq": self.seq,
                "digest": self.digest}


def signed_envelope(auth: Authenticator, sender: int, key: Key, seq: int, payload: Any) -> Envelope:
    env = Envelope(sender, tuple(key), seq, payload)
    env.auth = auth.sign(sender, "msg:" + env.digest)
    return env


def envelope_ok(auth: Authenticator, env: Envelope) -> bool:
    return (isinstance(env.seq, int) and env.seq >= 1
            and auth.verify(env.sender, "msg:" + env.digest, env.auth))


def quorum_size(n: int) -> int:
    """Smallest integer strictly greater than 2n/3."""
    return (2 * n) // 3 + 1


def quorum_certificate_ok(auth: Authenticator, digest: str, qc: Iterable, pids: Iterable[int],
                          quorum: int, tag: str = "ack:") -> bool:
    valid = set()
    members = set(pids)
    for signer, sig in qc:
        if signer in members and auth.verify(signer, tag + digest, sig):
            valid.add(signer)
    return len(valid) >= quorum


# -- the network contract endpoints rely on ---------------------------------


class Net(Protocol):
    pids: list[int]
    auth: Authenticator

    def send(self, src: Any, dst: int, kind: str, body: Any, summary: dict) -> None: ...

    def note(self, node: Any, kind: str, data: dict) -> None: ...


Deliver = Callable[[Envelope], None]


class _InOrder:
    """Releases each key's messages in ascending seq, starting at 1."""

    def __init__(self, deliver: Deliver):
        self._deliver = deliver
        self.next: dict[Key, int] = defaultdict(lambda: 1)
        self._held: dict[Key, dict[int, Envelope]] = defaultdict(dict)

    def last(self, key: Key) -> int:
        return self.next[key] - 1

    def offer(self, env: Envelope) -> list[Envelope]:
        if env.seq < self.next[env.key] or env.seq in self._held[env.key]:
            return []
        self._held[env.key][env.seq] = env
        released = []
        held = self._held[env.key]
        while self.next[env.key] in held:
            e = held.pop(self.next[env.key])
            self.next[env.key] += 1
            released.append(e)
            self._deliver(e)
        return released


class Endpoint:
    """Shared plumbing: per-sender sequence stamping and in-order release."""

    mode = "abstract"

    def __init__(self, pid: int, net: Net, on_deliver: Deliver):
        self.pid = pid
        self.net = net
        self.on_deliver = on_deliver
        self._src_seq = 0
        self.delivered: set[str] = set()
        self._order = _InOrder(self._hand_up)

    def _stamp(self, key: Optional[Key], seq: Optional[int]) -> tuple[Key, int]:
        if key is None:
            self._src_seq += 1
            return ("src", self.pid), self._src_seq
        if seq is None:
            raise ValueError("account-order broadcasts need a certified sequence number")
        return tuple(key), int(seq)

    def _hand_up(self, env: Envelope) -> None:
        if env.digest in self.delivered:
            return
        self.delivered.add(env.digest)
        self.net.note(self.pid, "deliver", {**env.summary(), "payload": env.payload})
        self.on_deliver(env)

    def broadcast(self, payload: Any, key: Optional[Key] = None, seq: Optional[int] = None) -> Envelope:
        raise NotImplementedError

    def receive(self, src: Any, kind: str, body: Any) -> None:
        raise NotImplementedError


# -- idealized ----------------------------------------------------------------


class IdealizedBroadcast:
    """Trusted broadcast service: one accepted payload per position, sent to everyone."""

    def __init__(self, net: Net):
        self.net = net
        self.accepted: dict[tuple, str] = {}

    def submit(self, env: Envelope) -> bool:
        pos = env.position
        if not envelope_ok(self.net.auth, env):
            self.net.note("bcast", "diag", {"what": "bad_auth", **env.summary()})
            return False
        if pos in self.accepted:
            if self.accepted[pos] != env.digest:
                self.net.note("bcast", "diag", {"what": "stalled_position", "conflict": True,
                                                **env.summary()})
            return False
        self.accepted[pos] = env.digest
        for q in self.net.pids:
            self.net.send(env.sender, q, "DLV", env, env.summary())
        return True


class IdealEndpoint(Endpoint):
    mode = "idealized"

    def __init__(self, pid: int, net: Net, on_deliver: Deliver, oracle: IdealizedBroadcast):
        super().__init__(pid, net, on_deliver)
        self.oracle = oracle

    def broadcast(self, payload, key=None, seq=None) -> Envelope:
        key, seq = self._stamp(key, seq)
        env = signed_envelope(self.net.auth, self.pid, key, seq, payload)
        self.net.note(self.pid, "bcast", env.summary())
        self.oracle.submit(env)
        return env

    def receive(self, src, kind, body) -> None:
        if kind == "DLV":
            self._order.offer(body)


# -- raw channels -------------------------------------------------------------


class RawEndpoint(Endpoint):
    """No protection at all: whatever arrives is delivered at once."""

    mode = "raw"

    def broadcast(self, payload, key=None, seq=None) -> Envelope:
        key, seq = self._stamp(key, seq)
        env = signed_envelope(self.net.auth, self.pid, key, seq, payload)
        self.net.note(self.pid, "bcast", env.summary())
        for q in self.net.pids:
            self.net.send(self.pid, q, "RAW", env, env.summary())
        return env

    def receive(self, src, kind, body) -> None:
        if kind == "RAW" and envelope_ok(self.net.auth, body):
            self._hand_up(body)


# -- echo quorum ----------------------------------------------------------------


class QuorumEndpoint(Endpoint):
    """Echo-quorum secure broadcast with a READY phase.

    Positions are acknowledged at most once, so two conflicting payloads for
    one position cannot both gather a quorum while fewer than a third of the
    processes are Byzantine. Under account order a position ``s`` is only
    acknowledged once ``s - 1`` has been delivered locally; earlier SENDs are
    held back until then.
    """

    mode = "quorum"

    def __init__(self, pid: int, net: Net, on_deliver: Deliver, f: int,
                 admit: Optional[Callable[[Envelope], bool]] = None):
        super().__init__(pid, net, on_deliver)
        # account-order positions are only acknowledged for admitted (certified) messages
        self.admit = admit or (lambda env: True)
        self.n = len(net.pids)
        self.f = f
        self.quorum = quorum_size(self.n)
        self.acked: dict[tuple, str] = {}
        self.held_sends: dict[Key, dict[int, list[Envelope]]] = defaultdict(lambda: defaultdict(list))
        self.mine: dict[str, Envelope] = {}
        self.acks: dict[str, dict[int, str]] = defaultdict(dict)
        self.certified: set[str] = set()
        self.ready_sent: set[tuple] = set()
        self.readies: dict[str, set[int]] = defaultdict(set)
        self.released_pos: set[tuple] = set()

    # sender side
    def broadcast(self, payload, key=None, seq=None) -> Envelope:
        key, seq = self._stamp(key, seq)
        env = signed_envelope(self.net.auth, self.pid, key, seq, payload)
        self.mine[env.digest] = env
        self.net.note(self.pid, "bcast", env.summary())
        for q in self.net.pids:
            self.net.send(self.pid, q, "SEND", env, env.summary())
        return env

    def receive(self, src, kind, body) -> None:
        handler = getattr(self, "_on_" + kind, None)
        if handler is not None:
            handler(src, body)

    def _on_SEND(self, src, env: Envelope) -> None:
        if src != env.sender or not envelope_ok(self.net.auth, env):
            return
        if env.key[0] == "acct":
            if not self.admit(env):
                self.net.note(self.pid, "diag", {"what": "unadmitted", **env.summary()})
                return
            last = self._order.last(env.key)
            if env.seq > last + 1:
                self.held_sends[env.key][env.seq].append(env)
                return
            if env.seq <= last:
                return
        self._ack(env)

    def _ack(self, env: Envelope) -> None:
        pos = env.position
        if pos in self.acked:
            return
        self.acked[pos] = env.digest
        sig = self.net.auth.sign(self.pid, "ack:" + env.digest)
        self.net.send(self.pid, env.sender, "ACK", (env.digest, self.pid, sig),
                      {"digest": env.digest, "signer": self.pid})

    def _on_ACK(self, src, body) -> None:
        digest, signer, sig = body
        if src != signer or digest not in self.mine:
            return
        if not self.net.auth.verify(signer, "ack:" + digest, sig):
            return
        self.acks[digest][signer] = sig
        if len(self.acks[digest]) >= self.quorum and digest not in self.certified:
            self.certified.add(digest)
            env = self.mine[digest]
            qc = sorted(self.acks[digest].items())
            for q in self.net.pids:
                self.net.send(self.pid, q, "CERT", (env, qc),
                              {"digest": digest, "signers": [s for s, _ in qc]})

    def _on_CERT(self, src, body) -> None:
        env, qc = body
        if not envelope_ok(self.net.auth, env):
            return
        if not quorum_certificate_ok(self.net.auth, env.digest, qc, self.net.pids, self.quorum):
            self.net.note(self.pid, "diag", {"what": "bad_certificate", "digest": env.digest})
            return
        self._ready(env)

    def _ready(self, env: Envelope) -> None:
        pos = env.position
        if pos in self.ready_sent:
            return
        self.ready_sent.add(pos)
        for q in self.net.pids:
            self.net.send(self.pid, q, "READY", (env.digest, self.pid, env),
                          {"digest": env.digest, "signer": self.pid})

    def _on_READY(self, src, body) -> None:
        digest, signer, env = body
        if src != signer or env.digest != digest or not envelope_ok(self.net.auth, env):
            return
        self.readies[digest].add(signer)
        count = len(self.readies[digest])
        if count >= self.f + 1:
            self._ready(env)
        if count >= self.quorum and env.position not in self.released_pos:
            self.released_pos.add(env.position)
            for released in self._order.offer(env):
                self._after_release(released)

    def _after_release(self, env: Envelope) -> None:
        if env.key[0] != "acct":
            return
        waiting = self.held_sends[env.key].pop(env.seq + 1, [])
        for e in waiting:
            self._ack(e)


def make_endpoint(mode: str, pid: int, net: Net, on_deliver: Deliver, *,
                  oracle: Optional[IdealizedBroadcast] = None, f: int = 0,
                  admit: Optional[Callable[[Envelope], bool]] = None) -> Endpoint:
    if mode == "idealized":
        if oracle is None:
            raise ValueError("idealized endpoints need the shared oracle")
        return IdealEndpoint(pid, net, on_deliver, oracle)
    if mode == "quorum":
        return QuorumEndpoint(pid, net, on_deliver, f, admit)
    if mode == "raw":
        return RawEndpoint(pid, net, on_deliver)
    raise ValueError(f"unknown broadcast mode {mode!r}")
