"""Real-thread execution of shared-memory scenarios.

Each process runs on its own OS thread and the shared objects serialize
accesses with their internal locks. Runs are not reproducible; the trace
still carries invocation/response order, so the linearizability checker
applies unchanged.
"""
from __future__ import annotations

import threading

from ..core import operation_from_json
from ..shm import ConsensusFromTransfer, KSharedTransfer, WaitFreeTransfer, drive
from .scenario import ConfigError, Scenario
from .trace import Trace


def run_threaded(s: Scenario) -> Trace:
    if s.model != "shared_memory":
        raise ConfigError("real-thread mode only runs shared-memory scenarios")
    trace = Trace(s.id, None)
    lock = threading.Lock()
    current: dict[int, str] = {}

    def record(pid, kind, data):
        with lock:
            if kind in ("effect", "announce") and "op" not in data:
                data = {**data, "op": current.get(pid)}
            trace.add(pid, kind, data)

    if s.algorithm == "fig1":
        obj = WaitFreeTransfer(s.n, s.q0, s.mu, record)
        procs = s.pids
    elif s.algorithm == "fig2":
        obj = ConsensusFromTransfer(s.k, record, backend=s.options.get("backend", "atomic"))
        procs = list(range(1, s.k + 1))
    else:
        obj = KSharedTransfer(s.n, s.q0, s.mu, record)
        procs = s.pids
    scripts = s.scripts()

    def worker(p: int) -> None:
        for i, op in enumerate(scripts.get(p, []), start=1):
            opid = f"{p}.{i}"
            if s.algorithm == "fig2":
                call, gen = ["propose", op], obj.propose(p, op)
            else:
                call = list(op[:4]) if op[0] == "transfer" else list(op[:2])
                gen = obj.run(p, operation_from_json(op))
            with lock:
                current[p] = opid
                trace.add(p, "invoke", {"op": opid, "call": call, "tick": None})
            resp = drive(gen)
            record(p, "respond", {"op": opid, "resp": resp, "tick": None})

    threads = [threading.Thread(target=worker, args=(p,)) for p in procs]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    trace.add("sim", "end", {"quiescent": True, "ticks": None, "bound_hit": False,
                             "pending": {}, "crashed": [], "threaded": True})
    return trace
