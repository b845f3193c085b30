"""Mapping multibit VMM jobs onto the macro/core hierarchy.

Inputs broadcast horizontally through row drivers (value-preserving digital
repeaters), partial sums accumulate vertically through the VTC chains, and
jobs larger than one core tile into serialized passes whose integer partial
sums add digitally. ``ideal_vmm`` is the exact integer oracle every error
metric is measured against.

``run_vmm`` evaluates macros analytically by default (the vectorized twin of
the event engine, equivalent to 1e-12); pass ``use_engine=True`` to execute
the full switched-capacitor schedule instead.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .config import ArchParams
from .macro import MacroEvaluator, WeightPlane, plane_from_channel_weights, run_macro_phases
from .timechain import VtcParams, reference_time, tdc_from, tdc_quantize


@dataclass(frozen=True)
class VmmJob:
    """A dense unsigned VMM: out = inputs @ weights.

    ``inputs`` is a K-vector of n_in-bit codes; ``weights`` is K x C of
    n_w-bit codes.
    """

    inputs: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        inputs = np.asarray(self.inputs, dtype=np.int64)
        weights = np.asarray(self.weights, dtype=np.int64)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "weights", weights)
        if inputs.ndim != 1 or weights.ndim != 2:
            raise ValueError("inputs must be 1-D, weights 2-D")
        if weights.shape[0] != inputs.shape[0]:
            raise ValueError(
                f"weights rows ({weights.shape[0]}) != input channels ({inputs.shape[0]})"
            )
        if inputs.shape[0] < 1 or weights.shape[1] < 1:
            raise ValueError("K and C must be >= 1")

    @property
    def k(self) -> int:
        return self.inputs.shape[0]

    @property
    def c(self) -> int:
        return self.weights.shape[1]

    def check_bounds(self, params: ArchParams) -> None:
        if np.any(self.inputs < 0) or np.any(self.inputs > params.code_max_in):
            raise ValueError(f"inputs outside [0, {params.code_max_in}]")
        if np.any(self.weights < 0) or np.any(self.weights > params.code_max_w):
            raise ValueError(f"weights outside [0, {params.code_max_w}]")


def ideal_vmm(job: VmmJob) -> np.ndarray:
    """Exact integer MACs, wide accumulation (no overflow for sane jobs)."""
    bound = job.k * int(job.inputs.max(initial=0)) * int(job.weights.max(initial=0))
    if bound >= (1 << 62):
        raise ValueError("job too large for 64-bit accumulation")
    return job.inputs @ job.weights


@dataclass(frozen=True)
class MappingPlan:
    """How a job spreads over the core: serialized passes over a macro grid.

    A vertical pass covers ``macros_v * rows_per_macro`` input channels; a
    horizontal pass covers ``macros_h * cbs_per_macro`` output channels.
    Every (input, output) pair is covered exactly once; short tiles are
    zero-padded, which is value-neutral.
    """

    k: int
    c: int
    vertical_tiles: int
    horizontal_tiles: int
    rows_per_pass: int
    channels_per_pass: int
    contexts: tuple[int, ...]

    @property
    def passes(self) -> int:
        return self.vertical_tiles * self.horizontal_tiles

    def context_for(self, pv: int, q: int) -> int:
        return self.contexts[pv * self.horizontal_tiles + q]

    def row_slice(self, pv: int, mv: int, params: ArchParams) -> tuple[int, int]:
        start = pv * self.rows_per_pass + mv * params.rows_per_macro
        stop = min(self.k, start + params.rows_per_macro)
        return start, max(start, stop)

    def channel_slice(self, q: int, mh: int, params: ArchParams) -> tuple[int, int]:
        start = q * self.channels_per_pass + mh * params.cbs_per_macro
        stop = min(self.c, start + params.cbs_per_macro)
        return start, max(start, stop)


def tile(job: VmmJob, params: ArchParams) -> MappingPlan:
    """Plan the pass structure; any finite job tiles."""
    rows_per_pass = params.rows_per_core
    channels_per_pass = params.channels_per_core
    vt = -(-job.k // rows_per_pass)
    ht = -(-job.c // channels_per_pass)
    contexts = tuple(i % params.weight_contexts for i in range(vt * ht))
    return MappingPlan(
        k=job.k,
        c=job.c,
        vertical_tiles=vt,
        horizontal_tiles=ht,
        rows_per_pass=rows_per_pass,
        channels_per_pass=channels_per_pass,
        contexts=contexts,
    )


def pass_full_scale_mac(params: ArchParams) -> int:
    """Largest MAC one pass can represent; code 255 maps here exactly."""
    return (
        params.macros_v
        * params.rows_per_macro
        * params.code_max_in
        * params.code_max_w
    )


def code_to_mac(code: int, params: ArchParams) -> int:
    """Invert the fixed conversion scaling of one pass's TDC code."""
    fs = pass_full_scale_mac(params)
    code_max = (1 << 8) - 1
    x = code * fs / code_max
    return int(np.floor(x + 0.5))


class CoreExecutor:
    """Caches per-macro evaluators and weight-plane tiles for reuse across
    repeated jobs on the same device instance (weights held by reference)."""

    def __init__(self, params: ArchParams, instance=None):
        self.params = params
        self.instance = instance
        self._evals: dict[tuple[int, int], MacroEvaluator] = {}
        self._planes: dict[tuple[int, int, int, int, int], tuple[np.ndarray, WeightPlane]] = {}

    def evaluator(self, mv: int, mh: int) -> MacroEvaluator:
        key = (mv, mh)
        if key not in self._evals:
            self._evals[key] = MacroEvaluator(self.params, self.instance, macro=key)
        return self._evals[key]

    def plane_for(
        self, job: "VmmJob", plan: "MappingPlan", pv: int, q: int, mv: int, mh: int
    ) -> WeightPlane:
        key = (id(job.weights), pv, q, mv, mh)
        hit = self._planes.get(key)
        if hit is not None and hit[0] is job.weights:
            return hit[1]
        params = self.params
        r_lo, r_hi = plan.row_slice(pv, mv, params)
        ch_lo, ch_hi = plan.channel_slice(q, mh, params)
        w_tile = np.zeros((params.rows_per_macro, ch_hi - ch_lo), dtype=np.int64)
        if r_hi > r_lo:
            w_tile[: r_hi - r_lo, :] = job.weights[r_lo:r_hi, ch_lo:ch_hi]
        plane = plane_from_channel_weights(w_tile, params)
        self._planes[key] = (job.weights, plane)
        return plane

    def macro_cb_voltages(
        self, codes: np.ndarray, plane: WeightPlane, mv: int, mh: int, use_engine: bool
    ) -> np.ndarray:
        if use_engine:
            out = run_macro_phases(codes, plane, self.params, self.instance, macro=(mv, mh))
            return out.cb_voltages
        ev = self.evaluator(mv, mh)
        ev.load_plane(plane)
        return ev.cb_voltages(codes)


@dataclass
class VmmResult:
    """Simulated outputs with their exact-oracle error statistics.

    With the TDC bypassed there are no codes; the per-pass code arrays hold
    the sentinel -1 and ``mac_estimates_raw`` carries the un-quantized
    readings.
    """

    codes: list[np.ndarray]
    mac_estimates: np.ndarray
    ideal_macs: np.ndarray
    max_rel_error: float
    mean_rel_error: float
    full_scale_mac: int
    plan: MappingPlan
    tdc_bypass: bool
    mac_estimates_raw: np.ndarray | None = None
    cost_report: object | None = None


def run_vmm(
    job: VmmJob,
    plan: MappingPlan,
    params: ArchParams,
    instance=None,
    *,
    tdc_bypass: bool = False,
    use_engine: bool = False,
    executor: CoreExecutor | None = None,
) -> VmmResult:
    """Simulate a job end to end: macros, time chains, TDCs, digital sums.

    Per pass, inputs broadcast to every horizontal macro, each macro runs
    its phases, each compute block's voltages chain vertically into a stop
    time, the stack's reference chain supplies the start time, and the TDC
    code converts back to an integer MAC estimate. Vertical passes add
    digitally. ``tdc_bypass`` reads the chain interval at infinite
    resolution (for separating quantization from mismatch in tests).
    """
    job.check_bounds(params)
    if plan.k != job.k or plan.c != job.c:
        raise ValueError("plan does not cover this job")
    if executor is None:
        executor = CoreExecutor(params, instance)
    ideal = ideal_vmm(job)
    tdc = tdc_from(params)
    vtc = VtcParams.from_arch(params)
    fs_pass = pass_full_scale_mac(params)
    code_max = tdc.code_max

    estimates = np.zeros(job.c, dtype=np.int64)
    estimates_raw = np.zeros(job.c, dtype=np.float64)
    codes_per_pass: list[np.ndarray] = []

    m = params.rows_per_macro
    for pv in range(plan.vertical_tiles):
        for q in range(plan.horizontal_tiles):
            pass_codes = np.zeros(plan.channels_per_pass, dtype=np.int64)
            for mh in range(params.macros_h):
                ch_lo, ch_hi = plan.channel_slice(q, mh, params)
                n_ch = ch_hi - ch_lo
                if n_ch == 0:
                    continue
                # stage voltages of this stack: (macros_v, cbs_per_macro)
                stage_v = np.zeros((params.macros_v, params.cbs_per_macro))
                for mv in range(params.macros_v):
                    r_lo, r_hi = plan.row_slice(pv, mv, params)
                    codes_in = np.zeros(m, dtype=np.int64)
                    if r_hi > r_lo:
                        codes_in[: r_hi - r_lo] = job.inputs[r_lo:r_hi]
                    plane = executor.plane_for(job, plan, pv, q, mv, mh)
                    stage_v[mv] = executor.macro_cb_voltages(
                        codes_in, plane, mv, mh, use_engine
                    )
                if instance is None:
                    t_stop = (
                        params.macros_v * vtc.t_offset_ps
                        + vtc.gain_ps_per_v * stage_v.sum(axis=0)
                    )
                    t_start = params.macros_v * vtc.t_offset_ps
                else:
                    gains, jit = instance.signal_chain(mh)
                    t_stop = (
                        vtc.t_offset_ps * params.macros_v
                        + (vtc.gain_ps_per_v * gains * stage_v + jit).sum(axis=0)
                    )
                    t_start = reference_time(params, instance, mh)
                interval = t_stop - t_start
                for cb in range(n_ch):
                    ch = ch_lo + cb
                    if tdc_bypass:
                        est = interval[cb] / tdc.t_lsb_ps * fs_pass / code_max
                        estimates_raw[ch] += est
                        pass_codes[mh * params.cbs_per_macro + cb] = -1
                    else:
                        code = tdc_quantize(t_stop[cb], t_start, tdc)
                        pass_codes[mh * params.cbs_per_macro + cb] = code
                        estimates[ch] += code_to_mac(code, params)
            codes_per_pass.append(pass_codes)

    if tdc_bypass:
        estimates = np.floor(estimates_raw + 0.5).astype(np.int64)
    full_scale = plan.vertical_tiles * fs_pass
    err = np.abs(estimates - ideal) / full_scale
    return VmmResult(
        codes=codes_per_pass,
        mac_estimates=estimates,
        ideal_macs=ideal,
        max_rel_error=float(err.max()),
        mean_rel_error=float(err.mean()),
        full_scale_mac=full_scale,
        plan=plan,
        tdc_bypass=tdc_bypass,
        mac_estimates_raw=estimates_raw if tdc_bypass else None,
    )


def simulate_vmm(
    job: VmmJob,
    params: ArchParams,
    instance=None,
    **kwargs,
) -> VmmResult:
    """Tile and run in one step."""
    return run_vmm(job, tile(job, params), params, instance, **kwargs)


# ---------------------------------------------------------------------------
# Job import/export.
# ---------------------------------------------------------------------------

def job_to_csv(job: VmmJob) -> str:
    """Inputs on the first row, then K weight rows."""
    lines = [",".join(str(int(x)) for x in job.inputs)]
    for row in job.weights:
        lines.append(",".join(str(int(x)) for x in row))
    return "\n".join(lines) + "\n"


def job_from_csv(text: str) -> VmmJob:
    rows = [r for r in (line.strip() for line in text.splitlines()) if r and not r.startswith("#")]
    if len(rows) < 2:
        raise ValueError("job CSV needs an input row and at least one weight row")
    inputs = np.array([int(x) for x in rows[0].split(",")], dtype=np.int64)
    weights = np.array(
        [[int(x) for x in r.split(",")] for r in rows[1:]], dtype=np.int64
    )
    return VmmJob(inputs=inputs, weights=weights)


_BIN_MAGIC = b"VMMJ"


def job_to_bytes(job: VmmJob) -> bytes:
    """Compact little-endian layout: magic, u32 K, u32 C, K input bytes,
    K*C row-major weight bytes. Only 8-bit-or-narrower jobs qualify."""
    if job.inputs.max(initial=0) > 255 or job.weights.max(initial=0) > 255:
        raise ValueError("binary job layout holds at most 8-bit codes")
    if job.inputs.min(initial=0) < 0 or job.weights.min(initial=0) < 0:
        raise ValueError("binary job layout holds unsigned codes")
    head = _BIN_MAGIC + struct.pack("<II", job.k, job.c)
    return (
        head
        + job.inputs.astype(np.uint8).tobytes()
        + np.ascontiguousarray(job.weights.astype(np.uint8)).tobytes()
    )


def job_from_bytes(blob: bytes) -> VmmJob:
    if blob[:4] != _BIN_MAGIC:
        raise ValueError("not a binary VMM job (bad magic)")
    k, c = struct.unpack("<II", blob[4:12])
    need = 12 + k + k * c
    if len(blob) != need:
        raise ValueError(f"binary job truncated: {len(blob)} bytes, expected {need}")
    inputs = np.frombuffer(blob, dtype=np.uint8, count=k, offset=12).astype(np.int64)
    weights = (
        np.frombuffer(blob, dtype=np.uint8, count=k * c, offset=12 + k)
        .reshape(k, c)
        .astype(np.int64)
    )
    return VmmJob(inputs=inputs, weights=weights)
