import json
from dataclasses import replace

import pytest

from aidac_sim.config import (
    ConfigError,
    CostEntry,
    CostTable,
    config_digest,
    default_aidac,
    load_config,
    load_document,
    to_document,
    validate,
)


def test_default_values(arch, cost):
    assert arch.n_in == 8 and arch.n_w == 8
    assert arch.rows_per_macro == 128 and arch.cols_per_macro == 256
    assert arch.cb_width == 8 and arch.cbs_per_macro == 32
    assert arch.macros_v == 8 and arch.macros_h == 8
    assert arch.vdd_volts == 0.9 and arch.c_unit_ff == 2.0
    assert arch.analog_clock_mhz == 50.0 and arch.digital_clock_mhz == 1000.0
    assert arch.sparsity == 0.5
    assert cost.energy_fj("mcc_act") == 0.81
    assert cost.energy_fj("row_driver") == 9.36
    assert cost.energy_fj("time_acc") == 58.5
    assert cost.latency_ps("time_acc") == 113.0
    assert cost.energy_fj("tdc") == 7700.0
    assert cost.latency_ps("tdc") == 900.0
    assert cost.energy_fj("io_buffer_256b") == 2900.0
    assert cost.energy_fj("macro_total") == 29600.0
    assert cost.latency_ps("macro_total") == 13000.0
    assert cost.energy_fj("core_total") == 4235000.0
    assert cost.latency_ps("core_total") == 20000.0


def test_default_validates_clean(arch):
    assert validate(arch) == []


def test_lsb_voltage(arch):
    assert arch.lsb_volts == pytest.approx(3.515625e-3, abs=0)


def test_zero_rows_violation(arch):
    bad = replace(arch, rows_per_macro=0)
    violations = validate(bad)
    assert len(violations) == 1
    assert "rows_per_macro" in violations[0]


def test_wide_input_violation(arch):
    bad = replace(arch, n_in=16)
    violations = validate(bad)
    assert any("cols_per_macro" in v and "2^16" in v for v in violations)


def test_cb_width_must_match(arch):
    bad = replace(arch, cb_width=4)
    assert any("cb_width" in v for v in validate(bad))


def test_sparsity_range(arch):
    assert any("sparsity" in v for v in validate(replace(arch, sparsity=1.5)))


def test_empty_document_is_default():
    assert load_config("") == default_aidac()
    assert load_config("{}") == default_aidac()


def test_narrow_input_accepted(arch):
    got_arch, _, _ = load_config(json.dumps({"arch": {"n_in": 4}}))
    assert got_arch.n_in == 4
    assert got_arch.cols_per_macro == 256


def test_wide_weight_rejected():
    with pytest.raises(ConfigError, match="rows_per_macro"):
        load_config(json.dumps({"arch": {"n_w": 9, "cb_width": 9}}))


def test_parse_failure():
    with pytest.raises(ConfigError, match="parse failure"):
        load_config("{not json")


def test_unknown_field_rejected():
    with pytest.raises(ConfigError, match="unknown arch fields"):
        load_config(json.dumps({"arch": {"bogus": 1}}))


def test_roundtrip_document(defaults):
    doc = to_document(*defaults)
    again = load_document(json.loads(json.dumps(doc)))
    assert again == defaults
    assert to_document(*again) == doc


def test_native_unit_scaling():
    doc = {"cost": {"tdc": {"energy_pj": 7.7, "latency_ns": 0.9}}}
    _, _, cost = load_document(doc)
    assert cost.energy_fj("tdc") == 7700.0
    assert cost.latency_ps("tdc") == 900.0


def test_native_unit_scaling_is_decimal_exact():
    doc = {"cost": {"io_buffer_256b": {"latency_ns": 0.112, "energy_pj": 2.9}}}
    _, _, cost = load_document(doc)
    assert cost.latency_ps("io_buffer_256b") == 112.0
    assert cost.energy_fj("io_buffer_256b") == 2900.0


def test_missing_cost_entry_is_error():
    with pytest.raises(ConfigError, match="missing entries"):
        CostTable(entries={"mcc_act": CostEntry(energy_fj=1.0)})


def test_absent_field_is_error_not_zero(cost):
    with pytest.raises(ConfigError, match="mcc_act"):
        cost.latency_ps("mcc_act")


def test_negative_cost_rejected():
    with pytest.raises(ConfigError, match="negative"):
        load_document({"cost": {"tdc": {"energy_pj": -1}}})


def test_config_digest_stable(defaults):
    assert config_digest(*defaults) == config_digest(*default_aidac())
    other = load_config(json.dumps({"arch": {"n_in": 4}}))
    assert config_digest(*other) != config_digest(*defaults)


def test_variation_negative_sigma_rejected():
    with pytest.raises(ConfigError, match="sigma_cap_frac"):
        load_config(json.dumps({"variation": {"sigma_cap_frac": -0.1}}))
