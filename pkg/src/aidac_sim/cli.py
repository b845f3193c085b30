"""Command-line surface: runs the standard experiments and emits flat
CSV/JSON artifacts.

Every artifact is deterministic in (config, seed): CSVs are comma-separated
with '.' decimals, LF endings, UTF-8, a leading provenance comment, and a
header row; JSON is sorted and indented. Re-running a subcommand with the
same inputs reproduces the files byte for byte.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import compute_inl_dnl, input_transfer_curve, mac_error_curves
from .config import (
    ArchParams,
    ConfigError,
    CostTable,
    VariationParams,
    config_digest,
    default_aidac,
    load_config_file,
)
from .costmodel import full_report
from .macro import run_macro_phases
from .mapper import (
    VmmJob,
    job_from_bytes,
    job_from_csv,
    run_vmm,
    tile,
)
from .mlp import digits_dataset, infer_mlp, MlpModel, proxy_params, train_digits_mlp
from .variation import (
    calibrate_sigma_cap,
    input_conversion_error_experiment,
    monte_carlo,
    sample_instance,
)


def _provenance(arch: ArchParams, vp: VariationParams, cost: CostTable) -> str:
    return f"# config={config_digest(arch, vp, cost)} seed={vp.seed} tool=aidac-sim/{__version__}"


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write_csv(path: Path, provenance: str, header: list[str], rows) -> None:
    lines = [provenance, ",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(x) for x in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def _write_json(path: Path, obj: dict) -> None:
    path.write_text(
        json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8", newline="\n"
    )


def _load(args) -> tuple[ArchParams, VariationParams, CostTable]:
    if args.config:
        arch, vp, cost = load_config_file(args.config)
    else:
        arch, vp, cost = default_aidac()
    if args.seed is not None:
        vp = replace(vp, seed=args.seed)
    return arch, vp, cost


def _instance(args, arch, vp):
    if args.mode == "ideal":
        return None
    return sample_instance(arch, vp, trial_id=0)


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_transfer_sweep(args) -> int:
    arch, vp, cost = _load(args)
    out = _outdir(args)
    inst = _instance(args, arch, vp)
    curve = input_transfer_curve(arch, inst)
    _write_csv(
        out / "transfer.csv",
        _provenance(arch, vp, cost),
        ["code", "voltage_v"],
        zip(curve.codes.tolist(), curve.values.tolist()),
    )
    print(f"transfer-sweep: {curve.codes.shape[0]} points -> {out / 'transfer.csv'}")
    return 0


def cmd_inl_dnl(args) -> int:
    arch, vp, cost = _load(args)
    out = _outdir(args)
    inst = _instance(args, arch, vp)
    curve = input_transfer_curve(arch, inst)
    lin = compute_inl_dnl(curve, arch)
    rows = []
    for k in range(curve.codes.shape[0]):
        dnl = lin.dnl[k] if k < lin.dnl.shape[0] else ""
        rows.append((int(curve.codes[k]), lin.inl[k], dnl))
    _write_csv(out / "inl_dnl.csv", _provenance(arch, vp, cost), ["code", "inl_lsb", "dnl_lsb"], rows)
    _write_json(out / "inl_dnl.json", {
        "max_abs_inl_lsb": lin.max_abs_inl,
        "max_abs_dnl_lsb": lin.max_abs_dnl,
        "lsb_step_v": lin.lsb_value,
        "mode": args.mode,
        "seed": vp.seed,
    })
    print(f"inl-dnl: max|INL|={lin.max_abs_inl:.4g} LSB max|DNL|={lin.max_abs_dnl:.4g} LSB")
    return 0


def cmd_monte_carlo(args) -> int:
    arch, vp, cost = _load(args)
    out = _outdir(args)
    experiment = input_conversion_error_experiment(arch)
    stats = monte_carlo(experiment, args.trials, arch, vp)
    rows = [
        (stats.hist_edges[i], stats.hist_edges[i + 1], int(stats.hist_counts[i]))
        for i in range(stats.hist_counts.shape[0])
    ]
    _write_csv(out / "histogram.csv", _provenance(arch, vp, cost),
               ["bin_low_v", "bin_high_v", "count"], rows)
    doc = stats.to_dict()
    doc["three_sigma_mv"] = stats.three_sigma * 1e3
    doc["seed"] = vp.seed
    _write_json(out / "stats.json", doc)
    print(f"monte-carlo: {args.trials} trials, 3-sigma={stats.three_sigma * 1e3:.4f} mV")
    return 0


def cmd_mac_error(args) -> int:
    arch, vp, cost = _load(args)
    out = _outdir(args)
    inst = _instance(args, arch, vp)
    curves = mac_error_curves(arch, inst)
    n = max(curves.codes_weight.shape[0], curves.codes_input.shape[0])

    def cell(arr, k):
        return arr[k] if k < arr.shape[0] else ""

    rows = [
        (
            k,
            cell(curves.v_weight_sweep, k),
            cell(curves.v_weight_ideal, k),
            cell(curves.err_weight_pct, k),
            cell(curves.v_input_sweep, k),
            cell(curves.v_input_ideal, k),
            cell(curves.err_input_pct, k),
        )
        for k in range(n)
    ]
    _write_csv(
        out / "mac_error.csv",
        _provenance(arch, vp, cost),
        ["code", "v_weight_sweep", "v_weight_ideal", "err_weight_pct",
         "v_input_sweep", "v_input_ideal", "err_input_pct"],
        rows,
    )
    _write_json(out / "mac_error.json", {
        "max_error_pct": curves.max_error_pct,
        "max_err_weight_pct": float(curves.err_weight_pct.max()),
        "max_err_input_pct": float(curves.err_input_pct.max()),
        "mode": args.mode,
        "seed": vp.seed,
    })
    print(f"mac-error: max error {curves.max_error_pct:.4f}% of full scale")
    return 0


def cmd_run_vmm(args) -> int:
    arch, vp, cost = _load(args)
    out = _outdir(args)
    inst = _instance(args, arch, vp)
    if args.job:
        blob = Path(args.job).read_bytes()
        if args.job.endswith(".bin"):
            job = job_from_bytes(blob)
        else:
            job = job_from_csv(blob.decode("utf-8"))
    else:
        rng = np.random.Generator(np.random.Philox(key=vp.seed))
        job = VmmJob(
            inputs=rng.integers(0, arch.code_max_in + 1, size=arch.rows_per_core),
            weights=rng.integers(
                0, arch.code_max_w + 1, size=(arch.rows_per_core, arch.channels_per_core)
            ),
        )
    plan = tile(job, arch)
    result = run_vmm(job, plan, arch, inst, tdc_bypass=args.tdc_bypass)
    result.cost_report = full_report(plan, arch, cost, mode=args.rollup)
    _write_json(out / "vmm_result.json", {
        "k": job.k,
        "c": job.c,
        "passes": plan.passes,
        "codes_per_pass": [c.tolist() for c in result.codes],
        "mac_estimates": result.mac_estimates.tolist(),
        "ideal_macs": result.ideal_macs.tolist(),
        "max_rel_error": result.max_rel_error,
        "mean_rel_error": result.mean_rel_error,
        "full_scale_mac": result.full_scale_mac,
        "tdc_bypass": result.tdc_bypass,
        "cost": result.cost_report.to_dict(),
        "seed": vp.seed,
        "mode": args.mode,
    })
    if args.trace:
        m_codes = np.zeros(arch.rows_per_macro, dtype=np.int64)
        n = min(arch.rows_per_macro, job.k)
        m_codes[:n] = job.inputs[:n]
        from .mapper import CoreExecutor
        from .timechain import run_time_chain, tdc_from

        executor = CoreExecutor(arch, inst)
        plane = executor.plane_for(job, plan, 0, 0, 0, 0)
        outputs = run_macro_phases(m_codes, plane, arch, inst, macro=(0, 0), trace=True)
        rows = [
            (label, island, volts)
            for label, snap in outputs.phase_trace
            for island, volts in snap
        ]
        _write_csv(out / "phase_trace.csv", _provenance(arch, vp, cost),
                   ["phase", "island", "voltage_v"], rows)

        # per-stage delays of stack 0's chains, one row per VTC stage
        tdc = tdc_from(arch, cost)
        stage_v = np.zeros((arch.macros_v, arch.cbs_per_macro))
        for mv in range(arch.macros_v):
            stage_v[mv] = executor.macro_cb_voltages(m_codes, plane, mv, 0, False)
        delay_rows = []
        for cb in range(arch.cbs_per_macro):
            res = run_time_chain(stage_v[:, cb], arch, tdc, inst, stack=0, chain=cb)
            for stage, d in enumerate(res.stage_delays_ps):
                delay_rows.append((cb, stage, d))
            delay_rows.append((cb, "stop-start", res.t_stop_ps - res.t_start_ps))
        _write_csv(out / "stage_delays.csv", _provenance(arch, vp, cost),
                   ["chain", "stage", "delay_ps"], delay_rows)
    print(
        f"run-vmm: K={job.k} C={job.c} passes={plan.passes} "
        f"max_rel_error={result.max_rel_error:.3e}"
    )
    return 0


def cmd_cost_report(args) -> int:
    arch, vp, cost = _load(args)
    out = _outdir(args)
    k = args.k if args.k else arch.rows_per_core
    c = args.c if args.c else arch.channels_per_core
    job = VmmJob(inputs=np.zeros(k, dtype=np.int64), weights=np.zeros((k, c), dtype=np.int64))
    plan = tile(job, arch)
    report = full_report(plan, arch, cost, mode=args.rollup)
    _write_json(out / "cost_report.json", report.to_dict())
    _write_csv(out / "timeline.csv", _provenance(arch, vp, cost),
               ["phase", "start_ps", "end_ps"], report.timeline)
    print(
        f"cost-report: {report.tops:.1f} TOPS, {report.tops_per_watt:.1f} TOPS/W, "
        f"energy {report.total_energy_fj / 1e3:.1f} pJ (mode={report.mode})"
    )
    return 0


def cmd_infer(args) -> int:
    arch, vp, cost = _load(args)
    out = _outdir(args)
    params = proxy_params(arch)
    if args.model:
        model = MlpModel.from_json(Path(args.model).read_text(encoding="utf-8"))
    else:
        model = train_digits_mlp(seed=vp.seed % (1 << 32))
    _, test = digits_dataset()
    acc_ideal = infer_mlp(model, test, "ideal-digital", params)
    inst = None if args.mode == "ideal" else sample_instance(params, vp, trial_id=0)
    acc_sim = infer_mlp(model, test, "simulated", params, inst, tdc_bypass=args.tdc_bypass)
    _write_json(out / "infer.json", {
        "dims": list(model.dims),
        "test_samples": int(test.y.shape[0]),
        "accuracy_ideal_digital": acc_ideal,
        "accuracy_simulated": acc_sim,
        "accuracy_drop_pp": (acc_ideal - acc_sim) * 100.0,
        "tdc_bypass": args.tdc_bypass,
        "mode": args.mode,
        "seed": vp.seed,
    })
    print(
        f"infer: ideal-digital {acc_ideal * 100:.2f}%, simulated {acc_sim * 100:.2f}% "
        f"(drop {(acc_ideal - acc_sim) * 100:.2f} pp)"
    )
    return 0


def cmd_calibrate(args) -> int:
    arch, vp, cost = _load(args)
    out = _outdir(args)
    result = calibrate_sigma_cap(args.target_mv, arch, vp, trials=args.trials)
    _write_json(out / "calibrate.json", result.to_dict())
    print(
        f"calibrate: sigma_cap={result.sigma_cap_frac:.6f} reproduces "
        f"{result.achieved_3sigma_v * 1e3:.4f} mV 3-sigma"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aidac-sim",
        description="Behavioral simulator and cost model for the all-analog IMC core",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, trials_default=2000):
        p.add_argument("--config", help="JSON config file (defaults built in)")
        p.add_argument("--out", default="out", help="artifact directory")
        p.add_argument("--seed", type=int, help="override the variation seed")
        p.add_argument("--trials", type=int, default=trials_default)
        p.add_argument("--mode", choices=("ideal", "mc"), default="mc")
        p.add_argument("--rollup", choices=("component", "macro"), default="component")
        p.add_argument("--tdc-bypass", action="store_true")

    p = sub.add_parser("transfer-sweep", help="input-conversion transfer curve")
    common(p)
    p.set_defaults(func=cmd_transfer_sweep)

    p = sub.add_parser("inl-dnl", help="endpoint INL/DNL of the transfer curve")
    common(p)
    p.set_defaults(func=cmd_inl_dnl)

    p = sub.add_parser("monte-carlo", help="input-conversion error distribution")
    common(p)
    p.set_defaults(func=cmd_monte_carlo)

    p = sub.add_parser("mac-error", help="MAC transfer scans and error curves")
    common(p)
    p.set_defaults(func=cmd_mac_error)

    p = sub.add_parser("run-vmm", help="simulate one VMM job end to end")
    common(p)
    p.add_argument("--job", help="job file (.csv or .bin); random when omitted")
    p.add_argument("--trace", action="store_true", help="export a phase trace CSV")
    p.set_defaults(func=cmd_run_vmm)

    p = sub.add_parser("cost-report", help="energy/latency/area roll-up")
    common(p)
    p.add_argument("--k", type=int, help="input channels (default: one core)")
    p.add_argument("--c", type=int, help="output channels (default: one core)")
    p.set_defaults(func=cmd_cost_report)

    p = sub.add_parser("infer", help="quantized MLP proxy inference")
    common(p)
    p.add_argument("--model", help="model JSON (trains the digit proxy when omitted)")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("calibrate", help="fit sigma_cap to a conversion spread")
    common(p)
    p.add_argument("--target-mv", type=float, default=2.25)
    p.set_defaults(func=cmd_calibrate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as e:
        print(json.dumps({"error": str(e)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
