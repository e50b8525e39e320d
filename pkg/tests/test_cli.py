import json
import subprocess
import sys

import pytest

from atsim.cli import baseline_report, main, parse_seeds, sweep
from atsim.metrics import analytic_quorum_messages, metrics
from atsim.sim import ConfigError, Scenario, run


def test_parse_seeds_is_half_open():
    assert list(parse_seeds("3..6")) == [3, 4, 5]
    assert list(parse_seeds("7")) == [7]
    with pytest.raises(ConfigError):
        parse_seeds("5..5")


def test_run_basic_scenario_passes(capsys):
    assert main(["run", "--scenario", "fig1_basic"]) == 0
    assert "PASS" in capsys.readouterr().out


def test_invalid_fault_bound_exits_with_config_error(tmp_path, capsys):
    d = Scenario.load("fig4_fairN4").to_dict()
    d["broadcast"] = {"mode": "quorum", "f": 2}
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(d))
    assert main(["run", "--scenario", str(p)]) == 2
    assert "N > 3f" in capsys.readouterr().err


def test_forged_owner_run_reports_rejections(tmp_path, capsys):
    d = Scenario.load("fig4_fairN4").to_dict()
    d["faults"] = {"byzantine": {"4": "ForgeOwner"}}
    p = tmp_path / "forge.json"
    p.write_text(json.dumps(d))
    assert main(["run", "--scenario", str(p)]) == 0
    out = capsys.readouterr().out
    count = int(out.split("rejected_forgeries=")[1].split()[0])
    assert count > 0


def test_exhaustive_sweep_of_consensus(capsys):
    assert main(["sweep", "--scenario", "fig2_exhaustive_k2", "--exhaustive"]) == 0
    assert "70/70 interleavings pass" in capsys.readouterr().out


def test_seed_sweep_writes_summary(tmp_path, capsys):
    assert main(["sweep", "--scenario", "fig1_race", "--seeds", "0..5", "--out", str(tmp_path)]) == 0
    assert "5/5 seeds pass" in capsys.readouterr().out
    summary = json.loads((tmp_path / "fig1_race-sweep.json").read_text())
    assert summary["runs"] == summary["passed"] == 5


def test_raw_override_makes_a_sweep_fail(capsys):
    code = main(["sweep", "--scenario", "fig4_fairN4", "--broadcast", "raw", "--seeds", "0..30"])
    assert code == 1


def test_run_writes_trace_and_result(tmp_path, monkeypatch):
    assert main(["run", "--scenario", "fig4_fairN4", "--seed", "3", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "fig4_fairN4-3.jsonl").exists()
    result = json.loads((tmp_path / "fig4_fairN4-3.json").read_text())
    assert result["pass"] and result["seed"] == 3
    quiet = tmp_path / "quiet"
    monkeypatch.setenv("ATSIM_TRACE", "0")
    assert main(["run", "--scenario", "fig4_fairN4", "--seed", "3", "--out", str(quiet)]) == 0
    assert not list(quiet.glob("*.jsonl")) and list(quiet.glob("*.json"))


def test_single_transfer_is_one_broadcast_in_idealized_mode():
    s = Scenario.from_dict({"id": "one", "model": "message_passing", "algorithm": "fig4", "n": 4,
                            "ops": {"1": [["transfer", 1, 2, 3]]}})
    m = metrics(run(s))
    assert m["broadcasts"] == 1 and m["successful_transfers"] == 1


def test_baseline_report_fields(capsys):
    assert main(["baseline", "--scenario", "baseline_compare"]) == 0
    assert "sequencer/broadcast ratio" in capsys.readouterr().out
    r = baseline_report(Scenario.load("baseline_compare"))
    assert r["broadcast"]["messages_per_successful_transfer"] == analytic_quorum_messages(10)
    assert r["sequencer"]["successful_transfers"] == r["broadcast"]["successful_transfers"] == 20


def test_sequencer_crash_stalls_only_the_baseline():
    d = Scenario.load("baseline_compare").to_dict()
    d["faults"] = {"crashes": {"1": 0}}
    crashed = Scenario.from_dict(d)
    r = baseline_report(crashed)
    assert r["sequencer"]["successful_transfers"] == 0
    assert r["broadcast"]["successful_transfers"] == 18  # all but the crashed process's two


def test_sweep_function_returns_summary():
    summary = sweep(Scenario.load("fig2_k3"), range(10))
    assert summary["runs"] == summary["passed"] == 10


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "atsim", "run", "--scenario", "fig1_basic"],
                         capture_output=True, text=True)
    assert out.returncode == 0 and "PASS" in out.stdout
