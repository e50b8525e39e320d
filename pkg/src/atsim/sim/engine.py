"""Deterministic discrete-event execution of scenarios.

A *world* holds the processes and shared state of one execution and exposes
its currently enabled events as an indexable list; a scheduler picks one
index per tick. In the shared-memory model an event is "process p performs
its next atomic shared-memory access"; in the message-passing model it is
either "deliver in-flight message m" or "process p invokes its next
operation". Given a scenario and a seed every run is reproducible.
"""
from __future__ import annotations

from collections import defaultdict, deque
from typing import Any, Iterator, Optional

from ..broadcast import IdealizedBroadcast, make_authenticator, make_endpoint
from ..byzantine import ByzantineNode
from ..core import NotOwner, operation_from_json
from ..mp import BaselineNode, SequenceService, TransferNode, account_admission
from ..shm import ConsensusFromTransfer, KSharedTransfer, WaitFreeTransfer
from .scenario import Scenario
from .scheduler import FairRandom, Replay, Scheduler, Scripted, next_prefix
from .trace import Trace


class StepBoundExceeded(RuntimeError):
    """A run hit its step bound while events were still enabled."""


class BoundExceeded(RuntimeError):
    """Exhaustive enumeration met a schedule longer than the configured bound."""


def _mutations(s: Scenario) -> set:
    return set(s.options.get("mutations", []))


class SharedMemoryWorld:
    """Processes running step generators against shared objects."""

    def __init__(self, s: Scenario, trace: Trace):
        self.s = s
        self.trace = trace
        self.tick = 0
        muts = _mutations(s)
        if s.algorithm == "fig1":
            self.obj = WaitFreeTransfer(s.n, s.q0, s.mu, self._record,
                                        check_balance="no_balance_check" not in muts)
            procs = s.pids
        elif s.algorithm == "fig2":
            self.obj = ConsensusFromTransfer(s.k, self._record, backend=s.options.get("backend", "atomic"))
            procs = list(range(1, s.k + 1))
        else:
            self.obj = KSharedTransfer(s.n, s.q0, s.mu, self._record)
            procs = s.pids
        scripts = s.scripts()
        self.scripts = {p: deque(scripts.get(p, [])) for p in procs}
        self.gen: dict[int, Any] = {}
        self.current: dict[int, Optional[str]] = {p: None for p in procs}
        self.counter: dict[int, int] = defaultdict(int)
        self.steps: dict[int, int] = defaultdict(int)
        self.crashed: set[int] = set()
        for p in procs:
            cp = s.faults.crash_point(p)
            if cp is not None and cp[0] <= 0:
                self._crash(p)
            else:
                self._invoke_next(p)

    def _record(self, pid: int, kind: str, data: dict) -> None:
        if kind in ("effect", "announce") and "op" not in data:
            data = {**data, "op": self.current.get(pid)}
        self.trace.add(pid, kind, data)

    def _invoke_next(self, p: int) -> None:
        while self.scripts[p]:
            op = self.scripts[p].popleft()
            self.counter[p] += 1
            opid = f"{p}.{self.counter[p]}"
            self.current[p] = opid
            if self.s.algorithm == "fig2":
                call = ["propose", op]
                gen = self.obj.propose(p, op)
            else:
                call = list(op[:4]) if op[0] == "transfer" else list(op[:2])
                gen = self.obj.run(p, operation_from_json(op))
            self.trace.add(p, "invoke", {"op": opid, "call": call, "tick": self.tick})
            try:
                next(gen)
            except StopIteration as stop:
                self._respond(p, stop.value)
                continue
            self.gen[p] = gen
            return
        self.gen.pop(p, None)

    def _respond(self, p: int, value: Any) -> None:
        self.trace.add(p, "respond", {"op": self.current[p], "resp": value, "tick": self.tick})
        self.current[p] = None

    def _crash(self, p: int) -> None:
        self.crashed.add(p)
        self.gen.pop(p, None)
        self.trace.add(p, "crash", {"steps": self.steps[p]})

    def enabled(self) -> list[int]:
        return sorted(self.gen)

    def n_enabled(self) -> int:
        return len(self.gen)

    def execute(self, i: int) -> None:
        p = self.enabled()[i]
        self.tick += 1
        self.steps[p] += 1
        try:
            next(self.gen[p])
        except StopIteration as stop:
            self._respond(p, stop.value)
            self._invoke_next(p)
        cp = self.s.faults.crash_point(p)
        if cp is not None and self.steps[p] >= cp[0] and p not in self.crashed:
            self._crash(p)

    def finish(self, bound_hit: bool, extra: Optional[dict] = None) -> None:
        pending = {str(p): op for p, op in self.current.items() if op is not None}
        self.trace.add("sim", "end", {"quiescent": not self.gen, "ticks": self.tick,
                                      "bound_hit": bound_hit, "pending": pending,
                                      "crashed": sorted(self.crashed), **(extra or {})})


class _Message:
    __slots__ = ("id", "src", "dst", "kind", "body")

    def __init__(self, mid, src, dst, kind, body):
        self.id, self.src, self.dst, self.kind, self.body = mid, src, dst, kind, body


class MessagePassingWorld:
    """Nodes exchanging messages over reliable, asynchronous, authenticated links.

    The world doubles as the network object the broadcast layer and the
    nodes talk to (``pids``, ``auth``, ``send``, ``note``, ``respond``).
    """

    def __init__(self, s: Scenario, trace: Trace):
        self.s = s
        self.trace = trace
        self.tick = 0
        self.pids = s.pids
        self.auth = make_authenticator(s.options.get("auth", "stub"), s.policy.seed)
        self.inflight: list[_Message] = []
        self.msg_id = 0
        self.crashed: set[int] = set()
        self.steps: dict[int, int] = defaultdict(int)
        self.pending: dict[int, Optional[str]] = {p: None for p in self.pids}
        self.counter: dict[int, int] = defaultdict(int)
        self._inv: Optional[list[int]] = None
        muts = _mutations(s)
        mu, q0 = s.mu, s.q0
        oracle = IdealizedBroadcast(self) if s.broadcast == "idealized" else None
        admit = account_admission(self.auth, mu)
        benign = sorted(s.benign)
        self.nodes: dict[int, Any] = {}
        for p in self.pids:
            if p in s.faults.byzantine:
                node = ByzantineNode(p, s.faults.byzantine[p], q0, mu, self, benign)
            elif s.algorithm == "baseline":
                node = BaselineNode(p, q0, mu, self, int(s.options.get("sequencer", 1)))
            else:
                node = TransferNode(p, q0, mu, self,
                                    validation_balance=s.options.get("validation_balance", "with_deps"),
                                    read_view=s.options.get("read_view", "validated"),
                                    check_balance="no_balance_check" not in muts,
                                    check_seq="no_seq_check" not in muts)
            node.endpoint = make_endpoint(s.broadcast, p, self, node.on_deliver,
                                          oracle=oracle, f=s.f, admit=admit)
            self.nodes[p] = node
        self.services = {}
        for a, cfg in sorted(s.services.items()):
            svc = SequenceService(a, q0, mu, self, cfg.get("mode", "correct"),
                                  cfg.get("strategy", "equivocate"))
            self.services[svc.name] = svc
        scripts = s.scripts()
        self.scripts: dict[int, deque] = {}
        for p in self.pids:
            if p in s.faults.byzantine:
                self.scripts[p] = deque(s.ops.get(p) or [["attack"]])
            else:
                self.scripts[p] = deque(scripts.get(p, []))
        for p in self.pids:
            cp = s.faults.crash_point(p)
            if cp is not None and cp[0] <= 0:
                self._crash(p, cp[1])

    # -- network interface -------------------------------------------------

    def send(self, src, dst, kind: str, body, summary: dict) -> None:
        self.msg_id += 1
        self.trace.add(src, "send", {"id": self.msg_id, "to": dst, "kind": kind, **summary})
        if dst in self.crashed:
            return
        self.inflight.append(_Message(self.msg_id, src, dst, kind, body))

    def note(self, node, kind: str, data: dict) -> None:
        self.trace.add(node, kind, data)

    def respond(self, pid: int, opid, resp) -> None:
        self.trace.add(pid, "respond", {"op": opid, "resp": resp, "tick": self.tick})
        self.pending[pid] = None

    # -- events ----------------------------------------------------------------

    def _gate_ok(self, p: int, op: list) -> bool:
        if op[0] != "transfer" or "when_funded" not in op[4:]:
            return True
        node = self.nodes[p]
        a, x = op[1], op[3]
        if isinstance(node, TransferNode):
            return node.balance(a) >= x
        if isinstance(node, BaselineNode):
            return node.state[a] >= x
        return True

    def invocable(self) -> list[int]:
        if self._inv is None:
            self._inv = [p for p in self.pids
                         if p not in self.crashed and self.pending[p] is None and self.scripts[p]
                         and self._gate_ok(p, self.scripts[p][0])]
        return self._inv

    def n_enabled(self) -> int:
        return len(self.inflight) + len(self.invocable())

    def enabled(self) -> list:
        return [("msg", m.id) for m in self.inflight] + [("inv", p) for p in self.invocable()]

    def execute(self, i: int) -> None:
        self.tick += 1
        n_msgs = len(self.inflight)
        if i < n_msgs:
            m = self.inflight[i]
            last = self.inflight.pop()
            if i < n_msgs - 1:
                self.inflight[i] = last
            actor = m.dst
            self._handle(m)
        else:
            actor = self.invocable()[i - n_msgs]
            self._invoke(actor)
        self._inv = None
        if isinstance(actor, int):
            self.steps[actor] += 1
            cp = self.s.faults.crash_point(actor)
            if cp is not None and self.steps[actor] >= cp[0] and actor not in self.crashed:
                self._crash(actor, cp[1])

    def _invoke(self, p: int) -> None:
        op = self.scripts[p].popleft()
        node = self.nodes[p]
        if isinstance(node, ByzantineNode):
            self.trace.add(p, "attack", {"strategy": node.strategy, "tick": self.tick})
            node.attack()
            return
        self.counter[p] += 1
        opid = f"{p}.{self.counter[p]}"
        call = list(op[:4]) if op[0] == "transfer" else list(op[:2])
        self.trace.add(p, "invoke", {"op": opid, "call": call, "tick": self.tick})
        o = operation_from_json(op)
        if op[0] == "read":
            self.respond(p, opid, node.read(o.a))
            return
        self.pending[p] = opid
        try:
            r = node.transfer(o.a, o.b, o.x, opid)
        except NotOwner:
            r = False
        if r is False:
            self.respond(p, opid, False)

    def _handle(self, m: _Message) -> None:
        if isinstance(m.dst, str):
            self.services[m.dst].receive(m.src, m.kind, m.body)
            return
        node = self.nodes[m.dst]
        if isinstance(node, ByzantineNode):
            node.receive(m.src, m.kind, m.body)
        elif m.kind == "SEQRESP":
            node.on_sequence(m.body)
        elif m.kind == "REQ":
            node.receive_request(m.src, m.body)
        else:
            node.endpoint.receive(m.src, m.kind, m.body)

    def _crash(self, p: int, keep: Optional[int]) -> None:
        self.crashed.add(p)
        dropped = 0
        survivors = []
        outgoing = sorted((m for m in self.inflight if m.src == p), key=lambda m: m.id)
        kill = set()
        if keep is not None:
            kill = {m.id for m in outgoing[keep:]}
        for m in self.inflight:
            if m.dst == p or m.id in kill:
                dropped += 1
            else:
                survivors.append(m)
        self.inflight = survivors
        self._inv = None
        self.trace.add(p, "crash", {"steps": self.steps[p], "dropped": dropped})

    def finish(self, bound_hit: bool, extra: Optional[dict] = None) -> None:
        pending = {str(p): op for p, op in self.pending.items() if op is not None}
        self.trace.add("sim", "end", {"quiescent": self.n_enabled() == 0, "ticks": self.tick,
                                      "bound_hit": bound_hit, "pending": pending,
                                      "crashed": sorted(self.crashed),
                                      "undelivered": len(self.inflight),
                                      "messages": self.msg_id, **(extra or {})})


def make_world(s: Scenario, trace: Trace):
    if s.model == "shared_memory":
        return SharedMemoryWorld(s, trace)
    return MessagePassingWorld(s, trace)


def scheduler_for(s: Scenario) -> Scheduler:
    if s.policy.kind == "scripted":
        return Scripted(s.policy.steps, by_pid=s.model == "shared_memory")
    return FairRandom(s.policy.seed)


def run(s: Scenario, scheduler: Optional[Scheduler] = None, step_bound: Optional[int] = None) -> Trace:
    """Execute one run of ``s`` and return its trace.

    The run stops when no event is enabled or after ``step_bound`` ticks;
    the final ``end`` record says which.
    """
    trace = Trace(s.id, s.policy.seed)
    world = make_world(s, trace)
    sched = scheduler or scheduler_for(s)
    bound = s.step_bound if step_bound is None else step_bound
    while world.tick < bound and world.n_enabled():
        world.execute(sched.choose(world))
    extra = {"schedule": sched.choices} if isinstance(sched, Replay) else None
    world.finish(bound_hit=world.n_enabled() > 0, extra=extra)
    return trace


def enumerate_schedules(s: Scenario, bound: Optional[int] = None,
                        limit: Optional[int] = None) -> Iterator[Trace]:
    """Every distinct schedule of ``s``, depth-first, replaying each from scratch.

    Raises :class:`BoundExceeded` if some schedule needs more than ``bound``
    ticks.
    """
    bound = s.policy.bound if bound is None else bound
    prefix: Optional[list[int]] = []
    produced = 0
    while prefix is not None:
        sched = Replay(prefix)
        trace = run(s, sched, step_bound=bound)
        if trace.end["bound_hit"]:
            raise BoundExceeded(f"a schedule of {s.id!r} runs longer than {bound} steps")
        yield trace
        produced += 1
        if limit is not None and produced >= limit:
            return
        prefix = next_prefix(sched.choices, sched.widths)


def crash_variants(s: Scenario, pid: int, max_steps: Optional[int] = None) -> list[Scenario]:
    """Copies of ``s`` in which ``pid`` crashes after 0, 1, ... of its own steps.

    The last variant lets ``pid`` run to completion, so together the variants
    cover every crash position of ``pid`` exactly once.
    """
    from dataclasses import replace

    if max_steps is None:
        solo = replace(s, faults=replace(s.faults, crashes={}))
        max_steps = max(_own_steps(solo, pid), 0)
    out = []
    for c in range(max_steps + 1):
        crashes = dict(s.faults.crashes)
        if c < max_steps:
            crashes[pid] = c
        else:
            crashes.pop(pid, None)
        out.append(replace(s, faults=replace(s.faults, crashes=crashes)))
    return out


def _own_steps(s: Scenario, pid: int) -> int:
    """Number of atomic steps ``pid`` takes in one run of ``s``."""
    t = run(s, Replay([]), step_bound=max(s.step_bound, 1))
    if s.model == "shared_memory":
        return sum(1 for r in t if r["kind"] in ("sm", "kc") and r["node"] == pid)
    raise ValueError("crash enumeration is only supported in the shared-memory model")
