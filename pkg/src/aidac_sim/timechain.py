"""Time-domain accumulation and quantization.

Each compute-block output voltage feeds a constant-slope voltage-to-time
converter (VTC); the converters of vertically stacked macros chain head to
tail, so stage delays add and the chain's stop edge encodes the column's
partial-sum total. A parallel chain fed by the all-zero reference column
supplies the start edge, cancelling the common per-stage insertion delay.
An 8-bit time-to-digital converter (TDC) quantizes the start-stop interval.

The VTC model is linear: t = t_offset + gain * v (+gain spread and jitter
when a device instance is in play). The TDC time LSB is chosen so full scale
(255 codes) spans the maximum ideal interval, gain * macros_v * vdd; only
delay ratios affect codes, so the gain value itself is a free unit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import ArchParams, CostTable


@dataclass(frozen=True)
class VtcParams:
    """Constant-slope converter: delay = t_offset + gain * v."""

    gain_ps_per_v: float
    t_offset_ps: float
    v_max_volts: float

    def __post_init__(self) -> None:
        if self.gain_ps_per_v <= 0:
            raise ValueError("VTC gain must be > 0")
        if self.t_offset_ps < 0:
            raise ValueError("VTC offset must be >= 0")

    @classmethod
    def from_arch(cls, params: ArchParams) -> "VtcParams":
        return cls(
            gain_ps_per_v=params.vtc_gain_ps_per_v,
            t_offset_ps=params.vtc_offset_ps,
            v_max_volts=params.vdd_volts,
        )


@dataclass(frozen=True)
class TdcParams:
    """8-bit start-stop interval quantizer."""

    t_lsb_ps: float
    n_bits: int = 8
    latency_ps: float = 0.0
    energy_fj: float = 0.0

    def __post_init__(self) -> None:
        if self.t_lsb_ps <= 0:
            raise ValueError("TDC time LSB must be > 0")

    @property
    def code_max(self) -> int:
        return (1 << self.n_bits) - 1


def tdc_from(params: ArchParams, cost: CostTable | None = None) -> TdcParams:
    """TDC whose full scale spans the maximum ideal chain interval."""
    full_scale_ps = params.vtc_gain_ps_per_v * params.macros_v * params.vdd_volts
    lsb = full_scale_ps / ((1 << 8) - 1)
    if cost is None:
        return TdcParams(t_lsb_ps=lsb)
    return TdcParams(
        t_lsb_ps=lsb,
        latency_ps=cost.latency_ps("tdc"),
        energy_fj=cost.energy_fj("tdc"),
    )


@dataclass(frozen=True)
class TimeChainResult:
    """One column chain conversion: edges, per-stage delays, output code."""

    t_stop_ps: float
    t_start_ps: float
    stage_delays_ps: np.ndarray
    code: int


def vtc_delay(
    v_volts: float,
    vtc: VtcParams,
    gain_factor: float = 1.0,
    jitter_ps: float = 0.0,
) -> float:
    """Delay of one stage; out-of-range input signals an upstream bug."""
    if not 0.0 <= v_volts <= vtc.v_max_volts:
        raise ValueError(f"VTC input {v_volts} V outside [0, {vtc.v_max_volts}] V")
    return vtc.t_offset_ps + vtc.gain_ps_per_v * gain_factor * v_volts + jitter_ps


def chain_accumulate(
    stage_voltages,
    params: ArchParams,
    gain_factors=None,
    jitter_ps=None,
) -> float:
    """Stop time of one chain: the strict sum of its stage delays.

    Expects exactly ``macros_v`` voltages; there is no inter-stage
    interaction in the model.
    """
    v = np.asarray(stage_voltages, dtype=np.float64)
    if v.shape != (params.macros_v,):
        raise ValueError(f"expected {params.macros_v} stage voltages, got {v.shape}")
    vtc = VtcParams.from_arch(params)
    if np.any(v < 0) or np.any(v > vtc.v_max_volts):
        bad = v[(v < 0) | (v > vtc.v_max_volts)][0]
        raise ValueError(f"VTC input {bad} V outside [0, {vtc.v_max_volts}] V")
    g = np.ones_like(v) if gain_factors is None else np.asarray(gain_factors, dtype=np.float64)
    j = np.zeros_like(v) if jitter_ps is None else np.asarray(jitter_ps, dtype=np.float64)
    return float((vtc.t_offset_ps + vtc.gain_ps_per_v * g * v + j).sum())


def reference_time(params: ArchParams, instance=None, stack: int = 0) -> float:
    """Start time from the reference chain (all stage voltages 0).

    Ideally ``macros_v * t_offset``; with an instance the per-stage jitter
    realizations of the reference chain are added (gain spread acts on 0 V,
    so it contributes nothing).
    """
    zeros = np.zeros(params.macros_v)
    if instance is None:
        return chain_accumulate(zeros, params)
    g, j = instance.ref_chain(stack)
    return chain_accumulate(zeros, params, gain_factors=g, jitter_ps=j)


def _round_half_away(x: float) -> int:
    return int(math.floor(x + 0.5)) if x >= 0 else -int(math.floor(-x + 0.5))


def tdc_quantize(t_stop_ps: float, t_start_ps: float, tdc: TdcParams) -> int:
    """Quantize the start-stop interval; clamping is the defined saturation.

    Rounding is half away from zero so independent implementations agree
    bit-exactly.
    """
    if not (math.isfinite(t_stop_ps) and math.isfinite(t_start_ps)):
        raise ValueError("TDC edges must be finite")
    code = _round_half_away((t_stop_ps - t_start_ps) / tdc.t_lsb_ps)
    return max(0, min(tdc.code_max, code))


def run_time_chain(
    stage_voltages,
    params: ArchParams,
    tdc: TdcParams,
    instance=None,
    stack: int = 0,
    chain: int = 0,
) -> TimeChainResult:
    """Full conversion of one chain against its reference."""
    v = np.asarray(stage_voltages, dtype=np.float64)
    vtc = VtcParams.from_arch(params)
    if instance is None:
        delays = vtc.t_offset_ps + vtc.gain_ps_per_v * v
        t_start = params.macros_v * vtc.t_offset_ps
    else:
        g, j = instance.signal_chain(stack)
        delays = vtc.t_offset_ps + vtc.gain_ps_per_v * g[:, chain] * v + j[:, chain]
        t_start = reference_time(params, instance, stack)
    if np.any(v < 0) or np.any(v > vtc.v_max_volts):
        raise ValueError("VTC input outside supply range")
    t_stop = float(delays.sum())
    return TimeChainResult(
        t_stop_ps=t_stop,
        t_start_ps=t_start,
        stage_delays_ps=delays,
        code=tdc_quantize(t_stop, t_start, tdc),
    )
