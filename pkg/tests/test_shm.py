import pytest

from atsim.checker import check_linearizable, history_from_trace
from atsim.checker.suite import consensus_verdict, evaluate
from atsim.core import OwnershipMap, Read, Transfer
from atsim.shm import ConsensusFromTransfer, KSharedTransfer, WaitFreeTransfer, drive
from atsim.sim import Scenario, Scripted, enumerate_schedules, run

from oracles import interleavings


def sm(algorithm, n, accounts=None, owners=None, ops=None, **extra):
    d = {"id": f"{algorithm}-test", "model": "shared_memory", "algorithm": algorithm, "n": n,
         "accounts": {str(a): v for a, v in (accounts or {}).items()},
         "owners": {str(a): ps for a, ps in (owners or {}).items()},
         "ops": {str(p): v for p, v in (ops or {}).items()}, **extra}
    return Scenario.from_dict(d)


# -- wait-free transfer ----------------------------------------------------

def test_fig1_solo_transfer_then_read():
    obj = WaitFreeTransfer(2, {1: 10, 2: 0}, {1: [1], 2: [2]})
    assert drive(obj.transfer(1, 1, 2, 4)) is True
    assert drive(obj.read(1, 1)) == 6
    assert drive(obj.read(2, 2)) == 4


def test_fig1_insufficient_balance_fails_without_effect():
    obj = WaitFreeTransfer(2, {1: 3, 2: 0}, {1: [1], 2: [2]})
    assert drive(obj.transfer(1, 1, 2, 4)) is False
    assert drive(obj.read(2, 1)) == 3
    assert obj.snap.snapshot(1) == (None, None)


def test_fig1_fresh_read_is_initial_balance():
    obj = WaitFreeTransfer(1, {1: 7}, {1: [1]})
    assert drive(obj.read(1, 1)) == 7


def test_fig1_non_owner_fails():
    obj = WaitFreeTransfer(2, {1: 5, 2: 0}, {1: [1], 2: [2]})
    assert drive(obj.transfer(2, 1, 2, 1)) is False


def test_fig1_refuses_shared_accounts():
    with pytest.raises(ValueError):
        WaitFreeTransfer(2, {1: 5}, {1: [1, 2]})


def test_fig1_cells_only_grow_and_hold_own_records():
    obj = WaitFreeTransfer(2, {1: 9, 2: 9}, {1: [1], 2: [2]})
    before = frozenset()
    for x in (1, 2, 3):
        drive(obj.transfer(1, 1, 2, x))
        cell = obj.snap.snapshot(1)[0]
        assert before <= cell and all(r.issuer == 1 for r in cell)
        before = cell


def test_fig1_race_incoming_and_outgoing_all_interleavings_linearizable():
    s = sm("fig1", 2, {1: 3, 2: 3}, {1: [1], 2: [2]},
           {1: [["transfer", 1, 2, 3], ["read", 1]], 2: [["transfer", 2, 1, 2], ["transfer", 1, 2, 1]]},
           policy={"kind": "exhaustive"})
    count = 0
    for trace in enumerate_schedules(s):
        v = check_linearizable(history_from_trace(trace), s.q0, s.mu)
        assert v.ok, v.violation
        count += 1
    # p1: snapshot+update, snapshot; p2: snapshot+update, snapshot (fails as non-owner)
    assert count == interleavings(3, 3)


def test_fig1_reads_only_enumeration_count():
    s = sm("fig1", 2, {1: 1, 2: 1}, {1: [1], 2: [2]},
           {1: [["read", 1]] * 3, 2: [["read", 2]] * 3}, policy={"kind": "exhaustive"})
    assert sum(1 for _ in enumerate_schedules(s)) == interleavings(3, 3) == 20


def test_fig1_balance_check_mutation_is_caught():
    s = sm("fig1", 2, {1: 3, 2: 0}, {1: [1], 2: [2]},
           {1: [["transfer", 1, 2, 2], ["transfer", 1, 2, 2]], 2: [["read", 1]]},
           options={"mutations": ["no_balance_check"]})
    v = check_linearizable(history_from_trace(run(s)), s.q0, s.mu)
    assert not v.ok


# -- consensus from a k-shared transfer object ------------------------------------

def test_fig2_solo_run_decides_own_value():
    obj = ConsensusFromTransfer(3)
    assert drive(obj.propose(1, "mine")) == "mine"
    assert obj.at.state[1] == 1


def test_fig2_second_winner_named_by_balance():
    obj = ConsensusFromTransfer(3)
    gens = {p: obj.propose(p, f"v{p}") for p in (1, 2, 3)}
    for g in gens.values():
        next(g)  # up to the register write
    # p2 writes its register, then performs its withdrawal of 2k - 2 = 4 first
    next(gens[2])
    next(gens[2])
    assert obj.at.state[1] == 6 - 4 == 2
    assert drive(gens[1]) == drive(gens[3]) == drive(gens[2]) == "v2"


def test_fig2_validates_process_range():
    obj = ConsensusFromTransfer(2)
    with pytest.raises(ValueError):
        drive(obj.propose(3, "x"))


def test_fig2_k2_every_interleaving_agrees():
    s = sm("fig2", 2, k=2, ops={1: ["a"], 2: ["b"]}, policy={"kind": "exhaustive"})
    count = 0
    for trace in enumerate_schedules(s):
        v = consensus_verdict(s, trace)
        assert v["pass"], v["problems"]
        assert len(v["winners"]) == 1
        count += 1
    # each process: register write, transfer, read, register read
    assert count == interleavings(4, 4)


def test_fig2_over_kshared_backend_agrees():
    s = sm("fig2", 2, k=2, options={"backend": "kshared"})
    for seed in range(100):
        t = run(s.with_seed(seed))
        assert consensus_verdict(s, t)["pass"]


# -- k-shared transfer from k-consensus ---------------------------------------

def _kshared(q0=None):
    return KSharedTransfer(2, q0 or {1: 10, 2: 0}, OwnershipMap({1: [1, 2], 2: [2]}))


def test_fig3_solo_transfer_decided_in_round_zero():
    obj = _kshared()
    assert drive(obj.transfer(1, 1, 2, 4)) is True
    assert obj.round[1][1] == 1
    assert obj.kc[1][0].decided[0] == (1, 2, 4, 1, 0)
    assert drive(obj.read(2, 1)) == 6


def test_fig3_fresh_read():
    assert drive(_kshared().read(1, 1)) == 10


def test_fig3_non_owner_fails_immediately():
    obj = _kshared()
    assert drive(obj.transfer(1, 2, 1, 1)) is False


def test_fig3_two_owners_contend_exactly_one_succeeds():
    s = sm("fig3", 2, {1: 5, 2: 0}, {1: [1, 2], 2: []},
           {1: [["transfer", 1, 2, 4]], 2: [["transfer", 1, 2, 4]]})
    for seed in range(200):
        trace = run(s.with_seed(seed))
        resps = sorted(r["data"]["resp"] for r in trace.of_kind("respond"))
        assert resps == [False, True]
        assert evaluate(s, trace)["pass"]


def test_fig3_helper_catch_up():
    obj = _kshared()
    g1 = obj.transfer(1, 1, 2, 3)
    next(g1)
    next(g1)  # p1 announces, then stalls before collecting
    assert drive(obj.transfer(2, 1, 2, 5)) is True
    assert obj.round[2][1] == 2
    assert obj.kc[1][0].decided == ((1, 2, 3, 1, 0), "success")  # p2 decided p1's transfer first
    assert drive(g1) is True
    # p1 proposes to round 0 only, gets the recorded decision and stops there
    assert obj.round[1][1] == 1
    assert obj.kc[1][0].proposers == [2, 1] and obj.kc[1][1].proposers == [2]
    assert all(o.invocations <= 2 for o in obj.kc[1])


def test_fig3_objects_never_overused_and_decisions_agree():
    s = sm("fig3", 3, {1: 9, 2: 0, 3: 0}, {1: [1, 2, 3], 2: [], 3: []},
           {p: [["transfer", 1, 2, 2], ["read", 1], ["transfer", 1, 3, 3]] for p in (1, 2, 3)})
    for seed in range(100):
        trace = run(s.with_seed(seed))
        assert all(r["data"]["count"] <= 3 for r in trace.of_kind("kc"))
        per_round = {}
        for r in trace.of_kind("decide"):
            key = (r["data"]["account"], r["data"]["round"])
            per_round.setdefault(key, set()).add((tuple(r["data"]["tx"]), r["data"]["result"]))
        assert all(len(v) == 1 for v in per_round.values())
        assert evaluate(s, trace)["pass"]


def test_fig3_failed_transfer_consumes_a_round():
    obj = _kshared({1: 2, 2: 0})
    assert drive(obj.transfer(1, 1, 2, 5)) is False
    assert obj.round[1][1] == 1
    assert obj.kc[1][0].decided[1] == "failure"


def test_scripted_schedule_runs_by_pid():
    s = sm("fig1", 2, {1: 2, 2: 0}, {1: [1], 2: [2]},
           {1: [["transfer", 1, 2, 2]], 2: [["read", 2]]})
    t = run(s, Scripted([2, 1, 1], by_pid=True))
    reads = [r["data"]["resp"] for r in t.of_kind("respond") if r["node"] == 2]
    assert reads == [0]


def test_read_and_transfer_objects_accept_operation_values():
    obj = WaitFreeTransfer(1, {1: 4}, {1: [1]})
    assert drive(obj.run(1, Transfer(1, 1, 4))) is True
    assert drive(obj.run(1, Read(1))) == 4
