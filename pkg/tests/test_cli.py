import json

import numpy as np
import pytest

from aidac_sim.cli import main
from aidac_sim.mapper import VmmJob, job_to_bytes, job_to_csv


def run(argv):
    return main(argv)


def test_transfer_sweep_artifact(tmp_path):
    out = tmp_path / "d"
    assert run(["transfer-sweep", "--out", str(out), "--mode", "ideal"]) == 0
    text = (out / "transfer.csv").read_text()
    lines = text.splitlines()
    assert lines[0].startswith("# config=")
    assert lines[1] == "code,voltage_v"
    assert len(lines) == 2 + 256
    assert text.endswith("\n") and "\r" not in text


def test_transfer_sweep_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run(["transfer-sweep", "--out", str(a), "--seed", "7"])
    run(["transfer-sweep", "--out", str(b), "--seed", "7"])
    assert (a / "transfer.csv").read_bytes() == (b / "transfer.csv").read_bytes()


def test_monte_carlo_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run(["monte-carlo", "--trials", "50", "--seed", "7", "--out", str(a)])
    run(["monte-carlo", "--trials", "50", "--seed", "7", "--out", str(b)])
    for name in ("histogram.csv", "stats.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_monte_carlo_seed_changes_output(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run(["monte-carlo", "--trials", "50", "--seed", "7", "--out", str(a)])
    run(["monte-carlo", "--trials", "50", "--seed", "8", "--out", str(b)])
    assert (a / "stats.json").read_bytes() != (b / "stats.json").read_bytes()


def test_inl_dnl_artifacts(tmp_path):
    out = tmp_path / "d"
    assert run(["inl-dnl", "--out", str(out), "--mode", "ideal"]) == 0
    doc = json.loads((out / "inl_dnl.json").read_text())
    assert doc["max_abs_inl_lsb"] <= 1e-9
    lines = (out / "inl_dnl.csv").read_text().splitlines()
    assert lines[1] == "code,inl_lsb,dnl_lsb"
    assert len(lines) == 2 + 256


def test_cost_report_reference_rates(tmp_path):
    out = tmp_path / "d"
    assert run(["cost-report", "--out", str(out)]) == 0
    doc = json.loads((out / "cost_report.json").read_text())
    assert doc["tops_per_watt"] == pytest.approx(123.8, rel=0.01)
    assert doc["tops"] == pytest.approx(26.2, rel=0.01)
    assert doc["total_latency_ps"] <= 20000.0
    timeline = (out / "timeline.csv").read_text().splitlines()
    assert timeline[1] == "phase,start_ps,end_ps"


def test_cost_report_macro_mode(tmp_path):
    out = tmp_path / "d"
    assert run(["cost-report", "--rollup", "macro", "--out", str(out)]) == 0
    doc = json.loads((out / "cost_report.json").read_text())
    assert doc["mode"] == "macro"
    assert doc["component_energy_fj"]["macro_total"] == pytest.approx(64 * 29600.0)


def test_mac_error_ideal(tmp_path):
    out = tmp_path / "d"
    assert run(["mac-error", "--out", str(out), "--mode", "ideal"]) == 0
    doc = json.loads((out / "mac_error.json").read_text())
    assert doc["max_error_pct"] <= 1e-9


def test_run_vmm_with_csv_job(tmp_path):
    job = VmmJob(inputs=np.array([255, 0]), weights=np.array([[255, 1], [3, 4]]))
    job_file = tmp_path / "job.csv"
    job_file.write_text(job_to_csv(job))
    out = tmp_path / "d"
    assert run([
        "run-vmm", "--job", str(job_file), "--out", str(out), "--mode", "ideal",
    ]) == 0
    doc = json.loads((out / "vmm_result.json").read_text())
    assert doc["k"] == 2 and doc["c"] == 2
    assert doc["ideal_macs"] == [65025 + 0, 255 + 0]


def test_run_vmm_with_binary_job_and_trace(tmp_path):
    rng = np.random.default_rng(0)
    job = VmmJob(
        inputs=rng.integers(0, 256, size=16),
        weights=rng.integers(0, 256, size=(16, 4)),
    )
    job_file = tmp_path / "job.bin"
    job_file.write_bytes(job_to_bytes(job))
    out = tmp_path / "d"
    assert run([
        "run-vmm", "--job", str(job_file), "--out", str(out), "--mode", "ideal", "--trace",
    ]) == 0
    trace = (out / "phase_trace.csv").read_text().splitlines()
    assert trace[1] == "phase,island,voltage_v"
    phases = {row.split(",")[0] for row in trace[2:]}
    assert "I:input" in phases and "V:cb-merge" in phases


def test_config_file_flag(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"arch": {"n_in": 4}}))
    out = tmp_path / "d"
    assert run(["transfer-sweep", "--config", str(cfg), "--out", str(out), "--mode", "ideal"]) == 0
    lines = (out / "transfer.csv").read_text().splitlines()
    assert len(lines) == 2 + 16


def test_invalid_config_fails_machine_readable(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"arch": {"n_w": 9, "cb_width": 9}}))
    code = run(["transfer-sweep", "--config", str(cfg), "--out", str(tmp_path / "d")])
    assert code == 1
    err = capsys.readouterr().err
    doc = json.loads(err.strip())
    assert "rows_per_macro" in doc["error"]


def test_calibrate_small(tmp_path):
    out = tmp_path / "d"
    assert run(["calibrate", "--trials", "200", "--target-mv", "2.25", "--out", str(out)]) == 0
    doc = json.loads((out / "calibrate.json").read_text())
    assert doc["sigma_cap_frac"] > 0
    assert doc["achieved_3sigma_v"] == pytest.approx(2.25e-3, rel=0.02)


def test_unknown_subcommand_exits_nonzero():
    with pytest.raises(SystemExit):
        main(["frobnicate"])
