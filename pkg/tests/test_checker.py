import copy
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from atsim.checker import Call, History, check_linearizable, check_relaxed, monitors, witness_sequence
from atsim.core import Read, Transfer, replay_legal
from atsim.sim import Scenario, run

from histgen import random_history
from oracles import brute_force_linearizable, naive_apply, naive_replay

OWNERS = {1: [1], 2: [2]}


def _call(i, pid, op, resp, inv, done):
    return Call(f"c{i}", pid, op, resp, inv, done)


# -- exact linearizability --------------------------------------------------------

def test_sequential_legal_history_is_its_own_witness():
    calls = [_call(0, 1, Transfer(1, 2, 2), True, 0, 1), _call(1, 2, Read(1), 3, 2, 3),
             _call(2, 2, Transfer(2, 1, 9), False, 4, 5), _call(3, 1, Read(2), 2, 6, 7)]
    v = check_linearizable(calls, {1: 5, 2: 0}, OWNERS)
    assert v.ok and v.witness == ["c0", "c1", "c2", "c3"]


def test_two_concurrent_transfers_of_four_from_five_both_succeeding_fail():
    owners = {1: [1, 2], 2: [2]}
    calls = [_call(0, 1, Transfer(1, 2, 4), True, 0, 3), _call(1, 2, Transfer(1, 2, 4), True, 1, 2)]
    v = check_linearizable(calls, {1: 5, 2: 0}, owners)
    assert not v.ok
    assert sorted(v.violation["calls"]) == ["c0", "c1"]


def test_violation_is_the_shortest_failing_prefix():
    calls = [_call(0, 1, Transfer(1, 2, 1), True, 0, 1), _call(1, 2, Read(1), 7, 2, 3),
             _call(2, 1, Transfer(1, 2, 1), True, 4, 5)]
    v = check_linearizable(calls, {1: 5, 2: 0}, OWNERS)
    assert not v.ok
    assert v.violation["calls"] == ["c0", "c1"] and v.violation["cut"] == 3


def test_pending_transfer_with_observed_effect_is_completed():
    pending = Call("c0", 1, Transfer(1, 2, 2), None, 0, None, effect=True)
    read = _call(1, 2, Read(2), 2, 1, 2)
    assert check_linearizable([pending, read], {1: 5, 2: 0}, OWNERS).ok
    # without the effect the read of 2 cannot be explained
    assert not check_linearizable([Call("c0", 1, Transfer(1, 2, 2), None, 0, None), read],
                                  {1: 5, 2: 0}, OWNERS).ok


def _replays(calls, witness, q0, owners):
    """Walk the witness with the oracle step; pending calls take whatever response they get."""
    by_id = {c.id: c for c in calls}
    balances = dict(q0)
    for i in witness:
        c = by_id[i]
        op = tuple(c.op.to_json())
        if c.responded is not None and not naive_replay([(c.pid, op, c.response)], balances, owners):
            return False
        balances, _ = naive_apply(balances, c.pid, op, owners)
    return True


def _agree(seed):
    calls, oracle_calls, q0, owners = random_history(random.Random(seed))
    v = check_linearizable(calls, q0, owners, pending="any")
    assert v.ok == brute_force_linearizable(oracle_calls, q0, owners)
    if v.ok:
        assert _replays(calls, v.witness, q0, owners)
    return v.ok


def test_random_histories_agree_with_brute_force():
    verdicts = [_agree(seed) for seed in range(2000)]
    assert 0.2 < sum(verdicts) / len(verdicts) < 0.8  # both outcomes are well represented


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_random_histories_agree_with_brute_force_property(seed):
    _agree(seed)


def test_witness_replays_with_the_package_replay():
    for seed in range(300):
        calls, _, q0, owners = random_history(random.Random(seed))
        complete = [c for c in calls if c.responded is not None]
        v = check_linearizable(complete, q0, owners)
        if v.ok:
            assert replay_legal(witness_sequence(complete, v.witness), q0, owners)


# -- monitors ---------------------------------------------------------------------

def _fair():
    s = Scenario.load("fig4_fairN4")
    return s, run(s)


def test_clean_run_has_no_violations():
    s, t = _fair()
    assert monitors(t, s.benign, s.correct, s.q0) == []


def test_duplicate_delivery_is_an_integrity_violation():
    s, t = _fair()
    d = t.of_kind("deliver")[0]
    t.add(d["node"], "deliver", copy.deepcopy(d["data"]))
    found = [v for v in monitors(t, s.benign, s.correct, s.q0) if v["monitor"] == "integrity"]
    assert found and found[0]["what"] == "delivered twice"


def test_raw_equivocation_breaks_source_order():
    s = Scenario.from_dict({"id": "raw", "model": "message_passing", "algorithm": "fig4", "n": 4,
                            "broadcast": "raw", "faults": {"byzantine": {"4": "Equivocate"}},
                            "ops": {"1": [["read", 1]]}})
    names = {v["monitor"] for v in monitors(run(s), s.benign, s.correct, s.q0)}
    assert "source_order" in names


def test_monitors_are_deterministic_and_do_not_mutate():
    s = Scenario.load("fig4_byz_doublespend_N7f2")
    t = run(s)
    before = t.to_jsonl()
    first = monitors(t, s.benign, s.correct, s.q0)
    assert monitors(t, s.benign, s.correct, s.q0) == first
    assert t.to_jsonl() == before


# -- relaxed condition ------------------------------------------------------------

def _two_node(**options):
    d = {"id": "two", "model": "message_passing", "algorithm": "fig4", "n": 2,
         "accounts": {"1": 3, "2": 0},
         "ops": {"1": [["transfer", 1, 2, 2], ["transfer", 1, 2, 2]], "2": [["read", 1], ["read", 2]]}}
    if options:
        d["options"] = options
    return Scenario.from_dict(d)


def test_failure_free_two_node_run_passes():
    s = _two_node()
    for seed in range(30):
        assert check_relaxed(run(s.with_seed(seed)), s.q0, s.mu, s.correct).ok


def test_skipped_balance_check_fails_part_one_with_negative_balance():
    s = _two_node(mutations=["no_balance_check"])
    for seed in range(10):
        t = run(s.with_seed(seed))
        v = check_relaxed(t, s.q0, s.mu, s.correct)
        assert not v.part1.ok
        assert v.part1.violation["calls"] == ["1.1", "1.2"]
        negative = [m for m in monitors(t, s.benign, s.correct, s.q0) if m["monitor"] == "negative_balance"]
        assert negative and all(m["account"] == 1 for m in negative)


def test_unknown_foreign_mode_is_rejected():
    s, t = _fair()
    with pytest.raises(ValueError):
        check_relaxed(t, s.q0, s.mu, s.correct, foreign="loose")


def test_history_well_formedness():
    ok = History([_call(0, 1, Read(1), 0, 0, 1), _call(1, 1, Read(1), 0, 2, 3)])
    bad = History([_call(0, 1, Read(1), 0, 0, 3), _call(1, 1, Read(1), 0, 2, 4)])
    assert ok.well_formed() and not bad.well_formed()
