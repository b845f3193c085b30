"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

The lines are written to the real stdout so they stay visible under pytest's
capture. Run the whole gate with:

    pytest tests/test_acceptance.py -v
"""

import sys
import time
from dataclasses import replace

import numpy as np
import pytest

from aidac_sim.analysis import compute_inl_dnl, input_transfer_curve, mac_error_curves
from aidac_sim.cli import main as cli_main
from aidac_sim.costmodel import energy_rollup, full_report, latency_schedule, performance
from aidac_sim.macro import MacroEvaluator, WeightPlane, run_macro_phases
from aidac_sim.mapper import VmmJob, pass_full_scale_mac, simulate_vmm, tile
from aidac_sim.mlp import digits_dataset, infer_mlp, proxy_params
from aidac_sim.timechain import chain_accumulate, reference_time
from aidac_sim.variation import calibrate_sigma_cap, monte_carlo, sample_instance
from aidac_sim.variation import input_conversion_error_experiment


REPORT_LINES: list[str] = []


def _report(criterion: int, ok: bool, detail: str) -> None:
    status = "PASS" if ok else "FAIL"
    line = f"criterion {criterion}: {status} - {detail}"
    REPORT_LINES.append(line)
    print(f"[acceptance] {line}", file=sys.__stdout__)
    sys.__stdout__.flush()


def _round_half_away(x):
    return np.where(x >= 0, np.floor(x + 0.5), -np.floor(-x + 0.5))


def test_criterion_1_oracle_equivalence(toy, toy_m2):
    """Toy-config estimates stay within one TDC quantization step of the
    exact integer oracle: exhaustive for M=2, >= 1e5 samples for M=4."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(123)

    # exhaustive M = 2, single CB
    fs2 = pass_full_scale_mac(toy_m2)
    bound2 = fs2 / (2 * 255) + 0.5
    worst2 = 0.0
    for packed in range(4 ** 4):
        in0, in1, w0, w1 = (packed >> 0) & 3, (packed >> 2) & 3, (packed >> 4) & 3, (packed >> 6) & 3
        job = VmmJob(inputs=np.array([in0, in1]), weights=np.array([[w0], [w1]]))
        res = simulate_vmm(job, toy_m2)
        worst2 = max(worst2, abs(int(res.mac_estimates[0]) - int(res.ideal_macs[0])))
    ok2 = worst2 <= bound2

    # sampled M = 4: vectorized mirror of the pipeline formulas
    n = 120_000
    codes = rng.integers(0, 4, size=(n, 4))
    weights = rng.integers(0, 4, size=(n, 4))
    fs4 = pass_full_scale_mac(toy)
    v_rows = codes / 3 * 0.9
    bit0 = weights & 1
    bit1 = (weights >> 1) & 1
    v_col0 = (v_rows * bit0).sum(axis=1) / 4
    v_col1 = (v_rows * bit1).sum(axis=1) / 4
    v_cb = (1 * v_col0 + 2 * v_col1) / 3
    code = np.clip(_round_half_away(v_cb / 0.9 * 255), 0, 255)
    est = _round_half_away(code * fs4 / 255)
    ideal = (codes * weights).sum(axis=1)
    bound4 = fs4 / (2 * 255) + 0.5
    worst4 = np.abs(est - ideal).max()
    ok4 = worst4 <= bound4

    # a random slice of the samples through the real pipeline
    worst_run = 0.0
    for i in rng.integers(0, n, size=1000):
        job = VmmJob(inputs=codes[i], weights=weights[i][:, None])
        res = simulate_vmm(job, toy)
        assert res.mac_estimates[0] == est[i]
        worst_run = max(worst_run, abs(int(res.mac_estimates[0]) - int(res.ideal_macs[0])))
    ok_run = worst_run <= bound4

    dt = time.perf_counter() - t0
    ok = ok2 and ok4 and ok_run and dt < 60
    _report(1, ok, f"max |est - ideal|: M=2 {worst2:.2f}, M=4 {worst4:.2f} "
                   f"(bound {bound4:.2f}), {dt:.1f} s")
    assert ok2 and ok4 and ok_run
    assert dt < 60


def test_criterion_2_engine_vs_closed_form(arch):
    """1000 random 8-bit jobs on the full 128x256 macro: schedule execution
    and the closed-form pipeline agree to 1e-12 relative."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    ev = MacroEvaluator(arch)
    worst = 0.0
    for _ in range(1000):
        codes = rng.integers(0, 256, size=128)
        plane = WeightPlane(bits=rng.integers(0, 2, size=(128, 256)).astype(np.uint8))
        engine = run_macro_phases(codes, plane, arch)
        ev.load_plane(plane)
        closed = ev.cb_voltages(codes)
        scale = np.maximum(np.abs(closed), 1e-30)
        worst = max(worst, float(np.max(np.abs(engine.cb_voltages - closed) / scale)))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-12 and dt < 60
    _report(2, ok, f"max relative disagreement {worst:.3e} over 1000 jobs, {dt:.1f} s")
    assert worst <= 1e-12
    assert dt < 60


def test_criterion_3_conversion_exactness(arch):
    """Input conversion spans all 256 codes at code/255 * 0.9 V within 1e-12
    relative; the ideal curve's endpoint INL/DNL stay under 1e-9 LSB."""
    curve = input_transfer_curve(arch)
    expected = curve.codes / 255 * 0.9
    scale = np.maximum(np.abs(expected), 1e-30)
    rel = float(np.max(np.abs(curve.values - expected) / scale))
    lin = compute_inl_dnl(curve, arch)
    ok = rel <= 1e-12 and lin.max_abs_inl <= 1e-9 and lin.max_abs_dnl <= 1e-9
    _report(3, ok, f"conversion rel err {rel:.2e}, |INL| {lin.max_abs_inl:.2e} LSB, "
                   f"|DNL| {lin.max_abs_dnl:.2e} LSB")
    assert rel <= 1e-12
    assert lin.max_abs_inl <= 1e-9
    assert lin.max_abs_dnl <= 1e-9


def test_criterion_4_monte_carlo_calibration(arch, vp):
    """Calibration hits a 2.25 mV +-10% mid-code 3-sigma spread, below one
    conversion LSB (3.5156 mV)."""
    t0 = time.perf_counter()
    result = calibrate_sigma_cap(2.25, arch, vp, trials=2000)
    probe = replace(vp, sigma_cap_frac=result.sigma_cap_frac)
    stats = monte_carlo(input_conversion_error_experiment(arch), 2000, arch, probe)
    spread_mv = stats.three_sigma * 1e3
    lsb_mv = arch.lsb_volts * 1e3
    dt = time.perf_counter() - t0
    ok = abs(spread_mv - 2.25) <= 0.225 and spread_mv < lsb_mv and dt < 300
    _report(4, ok, f"sigma_cap {result.sigma_cap_frac:.5f} -> 3-sigma {spread_mv:.3f} mV "
                   f"(target 2.25 +-10%, LSB {lsb_mv:.4f} mV), {dt:.0f} s")
    assert abs(spread_mv - 2.25) <= 0.225
    assert spread_mv < lsb_mv
    assert dt < 300


def test_criterion_5_mac_error_bound(arch, vp):
    """MAC transfer sweeps over 100 seeds: max error <= 0.68% of full scale
    in at least 95% of seeds."""
    seeds_ok = 0
    worst = 0.0
    for trial in range(100):
        inst = sample_instance(arch, vp, trial_id=trial)
        curves = mac_error_curves(arch, inst)
        worst = max(worst, curves.max_error_pct)
        if curves.max_error_pct <= 0.68:
            seeds_ok += 1
    ok = seeds_ok >= 95
    _report(5, ok, f"{seeds_ok}/100 seeds within 0.68% (worst {worst:.3f}%)")
    assert seeds_ok >= 95


def test_criterion_6_time_chain_error(arch, vp):
    """Chain summation: 3-sigma relative error <= 0.11% at full scale over
    2000 trials; combined charge+time sweep error <= 0.79% in >= 95% of
    seeds."""
    full = np.full(arch.macros_v, arch.vdd_volts)
    ideal_interval = arch.macros_v * arch.vtc_gain_ps_per_v * arch.vdd_volts

    def summation_error(inst):
        g, j = inst.signal_chain(0)
        t_stop = chain_accumulate(full, arch, gain_factors=g[:, 0], jitter_ps=j[:, 0])
        t_start = reference_time(arch, inst, 0)
        return ((t_stop - t_start) - ideal_interval) / ideal_interval

    stats = monte_carlo(summation_error, 2000, arch, vp)
    chain_pct = stats.three_sigma * 100

    seeds_ok = 0
    worst = 0.0
    for trial in range(100):
        inst = sample_instance(arch, vp, trial_id=trial)
        curves = mac_error_curves(arch, inst, include_time_chain=True)
        worst = max(worst, curves.max_error_pct)
        if curves.max_error_pct <= 0.79:
            seeds_ok += 1
    ok = chain_pct <= 0.11 and seeds_ok >= 95
    _report(6, ok, f"chain 3-sigma {chain_pct:.4f}% (<= 0.11%), combined "
                   f"{seeds_ok}/100 seeds within 0.79% (worst {worst:.3f}%)")
    assert chain_pct <= 0.11
    assert seeds_ok >= 95


def test_criterion_7_performance_figures(arch, cost):
    """Reference totals reproduce 123.8 TOPS/W and 26.2 TOPS within 1%;
    component-mode energy lands within +-15% of 4235 pJ with an explicit
    residual; the latency schedule fits 20 ns."""
    job = VmmJob(
        inputs=np.zeros(1024, dtype=int), weights=np.zeros((1024, 256), dtype=int)
    )
    plan = tile(job, arch)
    report = full_report(plan, arch, cost, mode="component")
    tops, topw = performance(2 * 1024 * 256, cost.energy_fj("core_total"),
                             cost.latency_ps("core_total"))
    comp_pj = report.component_sum_fj / 1e3
    residual_pj = report.residual_fj / 1e3
    _, total_latency = latency_schedule(plan, arch, cost)
    macro_mode = energy_rollup(plan, arch, cost, mode="macro")

    ok = (
        abs(topw - 123.8) <= 1.238
        and abs(tops - 26.2) <= 0.262
        and abs(comp_pj - 4235.0) <= 0.15 * 4235.0
        and total_latency <= 20_000.0
    )
    _report(7, ok, f"{topw:.1f} TOPS/W, {tops:.1f} TOPS, component sum {comp_pj:.1f} pJ "
                   f"(residual {residual_pj:.1f} pJ, macro-mode gap "
                   f"{macro_mode.residual_fj / 1e3:.1f} pJ), latency {total_latency / 1e3:.3f} ns")
    assert abs(topw - 123.8) <= 1.238
    assert abs(tops - 26.2) <= 0.262
    assert abs(comp_pj - 4235.0) <= 0.15 * 4235.0
    assert residual_pj == pytest.approx(4235.0 - comp_pj, rel=1e-9)
    assert total_latency <= 20_000.0


def test_criterion_8_inference_proxy(arch, vp, digit_model):
    """Desk-scale quantized MLP: simulated accuracy within 1 percentage
    point of ideal-digital at calibrated variation."""
    params = proxy_params(arch)
    _, test = digits_dataset()
    acc_ideal = infer_mlp(digit_model, test, "ideal-digital", params)
    inst = sample_instance(params, vp, trial_id=0)
    acc_sim = infer_mlp(digit_model, test, "simulated", params, inst)
    drop_pp = (acc_ideal - acc_sim) * 100
    ok = drop_pp <= 1.0
    _report(8, ok, f"ideal-digital {acc_ideal * 100:.2f}%, simulated {acc_sim * 100:.2f}%, "
                   f"drop {drop_pp:.2f} pp (<= 1.0)")
    assert drop_pp <= 1.0


def test_criterion_9_cli_determinism(tmp_path):
    """Re-running any experiment with the same config and seed reproduces
    byte-identical artifacts."""
    pairs = []
    for name, argv in (
        ("transfer", ["transfer-sweep"]),
        ("mc", ["monte-carlo", "--trials", "100"]),
        ("cost", ["cost-report"]),
        ("macerr", ["mac-error"]),
    ):
        dirs = []
        for attempt in ("x", "y"):
            out = tmp_path / f"{name}-{attempt}"
            assert cli_main(argv + ["--seed", "11", "--out", str(out)]) == 0
            dirs.append(out)
        for f in sorted(dirs[0].iterdir()):
            same = f.read_bytes() == (dirs[1] / f.name).read_bytes()
            pairs.append(same)
    ok = all(pairs)
    _report(9, ok, f"{sum(pairs)}/{len(pairs)} artifacts byte-identical across re-runs")
    assert ok
