import numpy as np
import pytest

from aidac_sim.config import VariationParams
from aidac_sim.macro import MacroEvaluator, WeightPlane, macro_closed_form, run_macro_phases
from aidac_sim.variation import (
    McError,
    calibrate_sigma_cap,
    ideal_instance,
    input_conversion_error_experiment,
    monte_carlo,
    sample_instance,
)


def test_zero_sigma_gives_exact_unit_factors(arch):
    vp = VariationParams(sigma_cap_frac=0.0, sigma_vtc_gain_frac=0.0,
                         sigma_vtc_jitter_ps=0.0, seed=1)
    inst = sample_instance(arch, vp, trial_id=0)
    caps = inst.macro_caps(0, 0)
    assert np.all(caps == arch.c_unit_ff)
    g, j = inst.signal_chain(0)
    assert np.all(g == 1.0) and np.all(j == 0.0)


def test_same_lineage_is_bit_identical(arch, vp):
    a = sample_instance(arch, vp, trial_id=7)
    b = sample_instance(arch, vp, trial_id=7)
    assert np.array_equal(a.macro_caps(3, 5), b.macro_caps(3, 5))
    assert np.array_equal(a.signal_chain(2)[0], b.signal_chain(2)[0])
    assert np.array_equal(a.ref_chain(2)[1], b.ref_chain(2)[1])
    assert a.seed_lineage == b.seed_lineage == (vp.seed, 7)


def test_different_trials_differ(arch, vp):
    a = sample_instance(arch, vp, trial_id=0)
    b = sample_instance(arch, vp, trial_id=1)
    assert not np.array_equal(a.macro_caps(0, 0), b.macro_caps(0, 0))


def test_factor_spread_tracks_sigma(arch):
    vp = VariationParams(sigma_cap_frac=0.01, seed=2)
    draws = np.concatenate([
        sample_instance(arch, vp, t).macro_caps(0, 0).ravel() / arch.c_unit_ff - 1.0
        for t in range(20)
    ])
    assert draws.std() == pytest.approx(0.01, rel=0.05)


def test_factors_always_positive(arch):
    vp = VariationParams(sigma_cap_frac=0.4, seed=3)
    inst = sample_instance(arch, vp, trial_id=0)
    caps = inst.macro_caps(0, 0)
    assert np.all(caps > 0)
    assert inst.resampled_draws > 0


def test_monte_carlo_constant_experiment(arch, vp):
    stats = monte_carlo(lambda inst: 1.25, 50, arch, vp)
    assert stats.mean == 1.25
    assert stats.std == 0.0
    assert stats.count == 50


def test_monte_carlo_single_trial(arch, vp):
    stats = monte_carlo(lambda inst: float(inst.trial_id), 1, arch, vp)
    assert stats.std == 0.0 and stats.mean == 0.0


def test_monte_carlo_reproducible(arch, vp):
    exp = input_conversion_error_experiment(arch)
    a = monte_carlo(exp, 40, arch, vp)
    b = monte_carlo(exp, 40, arch, vp)
    assert np.array_equal(a.samples, b.samples)
    assert a.to_dict() == b.to_dict()


def test_monte_carlo_failure_names_trial(arch, vp):
    def boom(inst):
        if inst.trial_id == 3:
            raise RuntimeError("pop")
        return 0.0

    with pytest.raises(McError, match="trial 3"):
        monte_carlo(boom, 10, arch, vp)


def test_ideal_collapse(arch):
    inst = ideal_instance(arch)
    rng = np.random.default_rng(8)
    codes = rng.integers(0, 256, size=128)
    plane = WeightPlane(bits=rng.integers(0, 2, size=(128, 256)).astype(np.uint8))
    ev_inst = MacroEvaluator(arch, inst)
    ev_inst.load_plane(plane)
    ev_none = MacroEvaluator(arch)
    ev_none.load_plane(plane)
    # bit-exact: zero sigmas collapse to the closed-form ideal pipeline
    assert np.array_equal(ev_inst.cb_voltages(codes), ev_none.cb_voltages(codes))
    with_inst = run_macro_phases(codes, plane, arch, inst)
    without = macro_closed_form(codes, plane, arch, instance=None)
    assert np.allclose(with_inst.cb_voltages, without.cb_voltages, rtol=1e-12)


def test_calibrate_zero_target(arch, vp):
    res = calibrate_sigma_cap(0.0, arch, vp)
    assert res.sigma_cap_frac == 0.0


def test_calibration_scaling_is_roughly_linear(arch, vp):
    small = calibrate_sigma_cap(0.5, arch, vp, trials=300)
    double = calibrate_sigma_cap(1.0, arch, vp, trials=300)
    assert double.sigma_cap_frac == pytest.approx(2 * small.sigma_cap_frac, rel=0.15)
