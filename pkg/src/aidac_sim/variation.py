"""Device-instance sampling, Monte Carlo running, and mismatch calibration.

A ``DeviceInstance`` is one sampled realization of the fabric: independent
multiplicative mismatch on every unit capacitor, plus per-stage VTC gain
spread and conversion-time jitter. Draws come from counter-based Philox
streams keyed by (master seed, trial id, component, position), so trial k
regenerates bit-identically without generating trials 0..k-1, instances are
independent across trials, and results cannot depend on execution order or
worker count.

``calibrate_sigma_cap`` finds the capacitor mismatch sigma that reproduces a
target 3-sigma spread of mid-code input conversion error; the shipped
``VariationParams`` defaults were frozen from this loop.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .config import ArchParams, VariationParams
from .macro import input_convert


class McError(RuntimeError):
    """A Monte Carlo experiment or calibration failed."""


def _stream(seed: int, trial_id: int, tag: str, *idx: int) -> np.random.Generator:
    """Independent deterministic substream for one component draw."""
    h = hashlib.blake2b(digest_size=16)
    h.update(seed.to_bytes(8, "little", signed=False))
    h.update(trial_id.to_bytes(8, "little", signed=True))
    h.update(tag.encode())
    for i in idx:
        h.update(int(i).to_bytes(8, "little", signed=True))
    key = np.frombuffer(h.digest(), dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _positive_factors(rng: np.random.Generator, sigma: float, shape) -> tuple[np.ndarray, int]:
    """1 + Normal(0, sigma) with non-positive draws resampled."""
    eps = rng.normal(0.0, sigma, size=shape)
    factors = 1.0 + eps
    resampled = 0
    while True:
        bad = factors <= 0
        n_bad = int(bad.sum())
        if n_bad == 0:
            return factors, resampled
        factors[bad] = 1.0 + rng.normal(0.0, sigma, size=n_bad)
        resampled += n_bad


@dataclass
class DeviceInstance:
    """One Monte Carlo sample of the fabric, generated lazily per component.

    ``macro_caps(mv, mh)`` returns the (rows, cols+1) capacitance matrix of
    one macro; ``signal_chain(mh)`` / ``ref_chain(mh)`` return the VTC gain
    factors and jitter realizations of one vertical stack. Regeneration from
    the same (seed, trial_id) is bit-identical.
    """

    params: ArchParams
    variation: VariationParams
    trial_id: int
    resampled_draws: int = 0
    _caps: dict[tuple[int, int], np.ndarray] = field(default_factory=dict, repr=False)
    _chains: dict[int, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict, repr=False)
    _refs: dict[int, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict, repr=False)

    @property
    def seed_lineage(self) -> tuple[int, int]:
        return (self.variation.seed, self.trial_id)

    @property
    def is_ideal(self) -> bool:
        vp = self.variation
        return (
            vp.sigma_cap_frac == 0
            and vp.sigma_vtc_gain_frac == 0
            and vp.sigma_vtc_jitter_ps == 0
        )

    def macro_caps(self, mv: int, mh: int) -> np.ndarray:
        if not (0 <= mv < self.params.macros_v and 0 <= mh < self.params.macros_h):
            raise ValueError(f"macro ({mv}, {mh}) outside the core grid")
        key = (mv, mh)
        if key not in self._caps:
            rng = _stream(self.variation.seed, self.trial_id, "cap", mv, mh)
            shape = (self.params.rows_per_macro, self.params.cols_per_macro + 1)
            factors, resampled = _positive_factors(rng, self.variation.sigma_cap_frac, shape)
            self.resampled_draws += resampled
            self._caps[key] = self.params.c_unit_ff * factors
        return self._caps[key]

    def signal_chain(self, mh: int) -> tuple[np.ndarray, np.ndarray]:
        """(gain factors, jitter ps), each (macros_v, cbs_per_macro)."""
        if mh not in self._chains:
            rng = _stream(self.variation.seed, self.trial_id, "vtc", mh)
            shape = (self.params.macros_v, self.params.cbs_per_macro)
            gains = 1.0 + rng.normal(0.0, self.variation.sigma_vtc_gain_frac, size=shape)
            jitter = rng.normal(0.0, self.variation.sigma_vtc_jitter_ps, size=shape)
            self._chains[mh] = (gains, jitter)
        return self._chains[mh]

    def ref_chain(self, mh: int) -> tuple[np.ndarray, np.ndarray]:
        """(gain factors, jitter ps) of the stack's reference chain, (macros_v,)."""
        if mh not in self._refs:
            rng = _stream(self.variation.seed, self.trial_id, "vtc-ref", mh)
            n = self.params.macros_v
            gains = 1.0 + rng.normal(0.0, self.variation.sigma_vtc_gain_frac, size=n)
            jitter = rng.normal(0.0, self.variation.sigma_vtc_jitter_ps, size=n)
            self._refs[mh] = (gains, jitter)
        return self._refs[mh]


def sample_instance(params: ArchParams, vp: VariationParams, trial_id: int) -> DeviceInstance:
    """Deterministic instance for (vp.seed, trial_id)."""
    return DeviceInstance(params=params, variation=vp, trial_id=trial_id)


def ideal_instance(params: ArchParams) -> DeviceInstance:
    """All mismatch sigmas zero; collapses the simulator to the closed forms."""
    vp = VariationParams(sigma_cap_frac=0.0, sigma_vtc_gain_frac=0.0, sigma_vtc_jitter_ps=0.0)
    return DeviceInstance(params=params, variation=vp, trial_id=0)


@dataclass(frozen=True)
class McStats:
    """Summary of a Monte Carlo run (population statistics)."""

    mean: float
    std: float
    three_sigma: float
    count: int
    hist_counts: np.ndarray
    hist_edges: np.ndarray
    samples: np.ndarray

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "std": self.std,
            "three_sigma": self.three_sigma,
            "count": self.count,
            "hist_counts": self.hist_counts.tolist(),
            "hist_edges": self.hist_edges.tolist(),
        }


def monte_carlo(
    experiment,
    trials: int,
    params: ArchParams,
    vp: VariationParams,
    hist_bins: int = 64,
) -> McStats:
    """Run ``experiment(instance) -> scalar`` over fresh instances.

    Statistics are computed from the collected sample array, so the result
    is independent of evaluation order. A failing experiment aborts with its
    trial id.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    samples = np.empty(trials, dtype=np.float64)
    for t in range(trials):
        inst = sample_instance(params, vp, t)
        try:
            samples[t] = experiment(inst)
        except Exception as e:
            raise McError(f"experiment failed at trial {t}: {e}") from e
    counts, edges = np.histogram(samples, bins=hist_bins)
    std = float(samples.std())
    return McStats(
        mean=float(samples.mean()),
        std=std,
        three_sigma=3.0 * std,
        count=trials,
        hist_counts=counts,
        hist_edges=edges,
        samples=samples,
    )


def input_conversion_error_experiment(params: ArchParams, code: int | None = None):
    """Experiment: volts of error in one row's input conversion at ``code``.

    Defaults to the mid code 2^(n_in - 1). Row 0 of macro (0, 0) is measured.
    """
    if code is None:
        code = 1 << (params.n_in - 1)
    codes = np.full(params.rows_per_macro, code, dtype=np.int64)
    v_ideal = code / params.code_max_in * params.vdd_volts

    def experiment(instance: DeviceInstance) -> float:
        v = input_convert(codes, params, instance)
        return float(v[0] - v_ideal)

    return experiment


@dataclass(frozen=True)
class CalibrationResult:
    sigma_cap_frac: float
    achieved_3sigma_v: float
    target_3sigma_v: float
    iterations: int
    trials: int

    def to_dict(self) -> dict:
        return {
            "sigma_cap_frac": self.sigma_cap_frac,
            "achieved_3sigma_v": self.achieved_3sigma_v,
            "target_3sigma_v": self.target_3sigma_v,
            "iterations": self.iterations,
            "trials": self.trials,
        }


def calibrate_sigma_cap(
    target_3sigma_mv: float,
    params: ArchParams,
    vp: VariationParams | None = None,
    trials: int = 2000,
    rel_tolerance: float = 0.02,
    max_iterations: int = 60,
) -> CalibrationResult:
    """Bisect the capacitor mismatch sigma to a measured conversion spread.

    The measured quantity is the 3-sigma of mid-code input conversion error
    over ``trials`` fixed-seed instances. Stops within ``rel_tolerance`` of
    the target; a bracket or iteration failure raises (it would indicate the
    error model no longer responds to sigma).
    """
    if target_3sigma_mv < 0:
        raise ValueError("target must be >= 0")
    vp = vp if vp is not None else VariationParams()
    target_v = target_3sigma_mv * 1e-3
    experiment = input_conversion_error_experiment(params)

    def spread(sigma: float) -> float:
        probe = VariationParams(
            sigma_cap_frac=sigma,
            sigma_vtc_gain_frac=vp.sigma_vtc_gain_frac,
            sigma_vtc_jitter_ps=vp.sigma_vtc_jitter_ps,
            seed=vp.seed,
        )
        return monte_carlo(experiment, trials, params, probe).three_sigma

    if target_3sigma_mv == 0:
        return CalibrationResult(0.0, 0.0, 0.0, 0, trials)

    lo, hi = 0.0, 0.02
    f_hi = spread(hi)
    iterations = 1
    while f_hi < target_v:
        hi *= 2.0
        if hi > 1.0:
            raise McError(
                f"calibration bracket failed: 3-sigma {f_hi * 1e3:.4f} mV at "
                f"sigma_cap {hi / 2:.3f} never reaches {target_3sigma_mv} mV"
            )
        f_hi = spread(hi)
        iterations += 1

    best_sigma, best_val = hi, f_hi
    while iterations < max_iterations:
        if abs(best_val - target_v) <= rel_tolerance * target_v:
            return CalibrationResult(best_sigma, best_val, target_v, iterations, trials)
        mid = 0.5 * (lo + hi)
        f_mid = spread(mid)
        iterations += 1
        if f_mid < target_v:
            lo = mid
        else:
            hi = mid
        if abs(f_mid - target_v) < abs(best_val - target_v):
            best_sigma, best_val = mid, f_mid
    raise McError(
        f"calibration did not converge in {max_iterations} iterations "
        f"(best {best_val * 1e3:.4f} mV at sigma {best_sigma:.5f})"
    )
