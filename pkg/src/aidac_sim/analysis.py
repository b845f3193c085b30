"""Transfer-curve sweeps, linearity metrics, and MAC error curves.

INL/DNL follow the endpoint convention: the reference line runs through the
first and last curve points, and both metrics are expressed in units of that
line's per-code step, so a perfectly linear curve scores exactly zero. The
absolute voltage quantum vdd / 2^n_in is used wherever spreads are quoted in
LSBs of the input converter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ArchParams
from .macro import MacroEvaluator, plane_from_channel_weights
from .timechain import VtcParams, reference_time


@dataclass(frozen=True)
class TransferCurve:
    """Ordered (code, value) pairs over a complete swept range."""

    codes: np.ndarray
    values: np.ndarray
    axis: str = "input_code"

    def __post_init__(self) -> None:
        codes = np.asarray(self.codes, dtype=np.int64)
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "codes", codes)
        object.__setattr__(self, "values", values)
        if codes.shape != values.shape or codes.ndim != 1:
            raise ValueError("codes and values must be 1-D and equal length")
        if codes.shape[0] < 2:
            raise ValueError("a transfer curve needs at least two points")
        if np.any(np.diff(codes) <= 0):
            raise ValueError("codes must be strictly increasing")


@dataclass(frozen=True)
class LinearityMetrics:
    """Endpoint-fit integral and differential nonlinearity, in LSB."""

    inl: np.ndarray
    dnl: np.ndarray
    max_abs_inl: float
    max_abs_dnl: float
    lsb_value: float


def input_transfer_curve(
    params: ArchParams, instance=None, macro=(0, 0), row: int = 0
) -> TransferCurve:
    """Input conversion voltage of one row over all 2^n_in codes."""
    n = params.code_max_in + 1
    codes = np.arange(n, dtype=np.int64)
    ev = MacroEvaluator(params, instance, macro)
    m = params.rows_per_macro
    volts = np.empty(n, dtype=np.float64)
    # All rows share a code so one evaluator call covers a sweep point.
    block = np.empty((m,), dtype=np.int64)
    for k in codes:
        block.fill(k)
        volts[k] = ev.row_voltages(block)[row]
    return TransferCurve(codes=codes, values=volts, axis="input_code")


def compute_inl_dnl(curve: TransferCurve, params: ArchParams) -> LinearityMetrics:
    """Endpoint-fit linearity of a complete transfer curve.

    The curve must cover [0, 2^n_in - 1] without gaps. INL(0) is zero by
    construction of the endpoint fit.
    """
    n = params.code_max_in + 1
    if curve.codes.shape[0] != n or curve.codes[0] != 0 or curve.codes[-1] != n - 1:
        raise ValueError(f"curve must cover codes 0..{n - 1} completely")
    v = curve.values
    step = (v[-1] - v[0]) / (n - 1)
    if step == 0:
        raise ValueError("degenerate curve: endpoints are equal")
    fit = v[0] + curve.codes * step
    inl = (v - fit) / step
    dnl = np.diff(v) / step - 1.0
    return LinearityMetrics(
        inl=inl,
        dnl=dnl,
        max_abs_inl=float(np.abs(inl).max()),
        max_abs_dnl=float(np.abs(dnl).max()),
        lsb_value=float(step),
    )


@dataclass(frozen=True)
class MacErrorCurves:
    """MAC transfer scans of one compute block.

    The weight sweep holds every input at full scale and scans the stored
    weight over its code range; the input sweep holds the weights at full
    scale and scans the input code. Errors are percent of the vdd full
    scale unless normalized to the per-code ideal.
    """

    codes_weight: np.ndarray
    codes_input: np.ndarray
    v_weight_sweep: np.ndarray
    v_input_sweep: np.ndarray
    v_weight_ideal: np.ndarray
    v_input_ideal: np.ndarray
    err_weight_pct: np.ndarray
    err_input_pct: np.ndarray
    max_error_pct: float


def mac_error_curves(
    params: ArchParams,
    instance=None,
    include_time_chain: bool = False,
    normalize_to_ideal: bool = False,
) -> MacErrorCurves:
    """Measure one macro's MAC transfer error on compute block 0.

    With ``include_time_chain`` the block voltage rides through its VTC
    chain and is read back from the (un-quantized) start-stop interval, so
    gain spread and jitter enter the error; otherwise the charge-domain
    voltage is compared directly.
    """
    m = params.rows_per_macro
    ev = MacroEvaluator(params, instance, macro=(0, 0))
    scale_w = params.code_max_w
    scale_in = params.code_max_in
    vdd = params.vdd_volts
    codes_w = np.arange(scale_w + 1, dtype=np.int64)
    codes_in = np.arange(scale_in + 1, dtype=np.int64)

    v_w = np.empty(codes_w.shape[0])
    v_i = np.empty(codes_in.shape[0])
    full_in = np.full(m, scale_in, dtype=np.int64)
    for k in codes_w:
        plane = plane_from_channel_weights(np.full((m, 1), k, dtype=np.int64), params)
        ev.load_plane(plane)
        v_w[k] = ev.cb_voltages(full_in)[0]
    plane_full = plane_from_channel_weights(np.full((m, 1), scale_w, dtype=np.int64), params)
    ev.load_plane(plane_full)
    block = np.empty(m, dtype=np.int64)
    for k in codes_in:
        block.fill(k)
        v_i[k] = ev.cb_voltages(block)[0]

    if include_time_chain:
        vtc = VtcParams.from_arch(params)
        if instance is None:
            gains = np.ones(params.macros_v)
            jit = np.zeros(params.macros_v)
            t_start = params.macros_v * vtc.t_offset_ps
        else:
            g_all, j_all = instance.signal_chain(0)
            gains, jit = g_all[:, 0], j_all[:, 0]
            t_start = reference_time(params, instance, 0)

        def through_chain(v: np.ndarray) -> np.ndarray:
            stage = np.zeros((params.macros_v, v.shape[0]))
            stage[0] = v  # single-macro scan: remaining stages sit at 0 V
            t_stop = (
                params.macros_v * vtc.t_offset_ps
                + (vtc.gain_ps_per_v * gains[:, None] * stage + jit[:, None]).sum(axis=0)
            )
            return (t_stop - t_start) / vtc.gain_ps_per_v

        v_w = through_chain(v_w)
        v_i = through_chain(v_i)

    ideal_w = codes_w / scale_w * vdd
    ideal_i = codes_in / scale_in * vdd

    if normalize_to_ideal:
        with np.errstate(divide="ignore", invalid="ignore"):
            err_w = np.where(ideal_w > 0, np.abs(v_w - ideal_w) / ideal_w * 100.0, 0.0)
            err_i = np.where(ideal_i > 0, np.abs(v_i - ideal_i) / ideal_i * 100.0, 0.0)
    else:
        err_w = np.abs(v_w - ideal_w) / vdd * 100.0
        err_i = np.abs(v_i - ideal_i) / vdd * 100.0

    return MacErrorCurves(
        codes_weight=codes_w,
        codes_input=codes_in,
        v_weight_sweep=v_w,
        v_input_sweep=v_i,
        v_weight_ideal=ideal_w,
        v_input_ideal=ideal_i,
        err_weight_pct=err_w,
        err_input_pct=err_i,
        max_error_pct=float(max(err_w.max(), err_i.max())),
    )
