import itertools
import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from atsim.checker import Call, History, KConsensusSpec, RegisterSpec, SnapshotSpec, check_linearizable
from atsim.primitives import BOTTOM, AtomicSnapshot, KConsensus, NotWriter, Register

from oracles import multinomial


def test_register_write_then_read():
    r = Register("R", writer=1)
    assert r.read(2) is BOTTOM
    r.write(1, "v1")
    assert r.read(1) == "v1"
    r.write(1, "v2")
    assert r.read(3) == "v2"


def test_register_rejects_other_writers():
    r = Register("R", writer=1)
    with pytest.raises(NotWriter):
        r.write(2, "x")


def test_snapshot_fresh_and_updates():
    s = AtomicSnapshot(3)
    assert s.snapshot(1) == (BOTTOM, BOTTOM, BOTTOM)
    s.update(2, "X")
    assert s.snapshot(1) == (BOTTOM, "X", BOTTOM)
    s.update(1, "Y")
    assert s.snapshot(3) == ("Y", "X", BOTTOM)


def test_snapshot_rejects_foreign_cells():
    with pytest.raises(IndexError):
        AtomicSnapshot(2).update(3, "x")


def test_kconsensus_first_k_get_first_value():
    o = KConsensus(2)
    assert o.propose(1, 7) == 7
    assert o.propose(2, 9) == 7
    assert o.propose(3, 11) is BOTTOM


def test_kconsensus_overuse_is_reported():
    events = []
    o = KConsensus(1, recorder=lambda p, kind, data: events.append((p, kind, data)))
    o.propose(1, "a")
    o.propose(2, "b")
    assert any(kind == "diag" and d["what"] == "kconsensus_overuse" for _, kind, d in events)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 4), st.lists(st.integers(0, 5), min_size=1, max_size=8))
def test_kconsensus_agreement_and_validity(k, values):
    o = KConsensus(k)
    out = [o.propose(i + 1, v) for i, v in enumerate(values)]
    non_bottom = {r for r in out if r is not BOTTOM}
    assert non_bottom == {values[0]}
    assert sum(r is not BOTTOM for r in out) == min(k, len(values))


def _interleave(procs):
    """All interleavings of per-process step lists, as lists of (pid, step)."""
    counts = [len(steps) for steps in procs.values()]
    pids = list(procs)
    tokens = [p for p, c in zip(pids, counts) for _ in range(c)]
    for order in set(itertools.permutations(tokens)):
        pos = {p: 0 for p in pids}
        out = []
        for p in order:
            out.append((p, procs[p][pos[p]]))
            pos[p] += 1
        yield out


def test_register_histories_are_linearizable_under_all_interleavings():
    # process 1 writes twice, processes 2 and 3 read; each access is atomic
    procs = {1: [("write", "a"), ("write", "b")], 2: [("read",)], 3: [("read",), ("read",)]}
    n = 0
    for schedule in _interleave(procs):
        r = Register("R", writer=1)
        calls = []
        for t, (p, op) in enumerate(schedule):
            resp = r.write(p, op[1]) if op[0] == "write" else r.read(p)
            calls.append(Call(f"{t}", p, op, resp, 2 * t, 2 * t + 1))
        assert check_linearizable(History(calls), spec=RegisterSpec()).ok
        n += 1
    assert n == multinomial(2, 1, 2)


def test_snapshot_histories_are_linearizable_and_monotone():
    procs = {1: [("update", "x1"), ("update", "x2")], 2: [("update", "y1")], 3: [("snapshot",), ("snapshot",)]}
    for schedule in _interleave(procs):
        s = AtomicSnapshot(3)
        calls, views = [], []
        for t, (p, op) in enumerate(schedule):
            if op[0] == "update":
                resp = s.update(p, op[1])
            else:
                resp = s.snapshot(p)
                views.append(resp)
            calls.append(Call(f"{t}", p, op, resp, 2 * t, 2 * t + 1))
        assert check_linearizable(History(calls), spec=SnapshotSpec(3)).ok
        first, second = views
        order = {BOTTOM: 0, "x1": 1, "x2": 2, "y1": 1}
        assert all(order[a] <= order[b] for a, b in zip(first, second))


def test_snapshot_checker_rejects_an_inconsistent_cut():
    # the snapshot sees y but not x although x's update finished before y's began
    calls = [Call("u1", 1, ("update", "x"), None, 0, 1), Call("u2", 2, ("update", "y"), None, 2, 3),
             Call("s", 3, ("snapshot",), (BOTTOM, "y"), 4, 5)]
    assert not check_linearizable(History(calls), spec=SnapshotSpec(2)).ok


def test_kconsensus_histories_are_linearizable():
    for order in itertools.permutations([1, 2, 3]):
        o = KConsensus(2)
        calls = [Call(f"{p}", p, ("propose", p * 10), o.propose(p, p * 10), t, t + 0.5)
                 for t, p in enumerate(order)]
        assert check_linearizable(History(calls), spec=KConsensusSpec(2)).ok


def test_primitives_are_thread_safe():
    s = AtomicSnapshot(4)
    o = KConsensus(4)
    results = {}

    def worker(p):
        for i in range(200):
            s.update(p, i)
            s.snapshot(p)
        results[p] = o.propose(p, p)

    threads = [threading.Thread(target=worker, args=(p,)) for p in range(1, 5)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert s.snapshot(1) == (199, 199, 199, 199)
    assert len(set(results.values())) == 1
