"""Behavioral simulator and cost model for an all-analog in-memory-computing
core: charge-domain multibit MACs, time-domain accumulation, Monte Carlo
mismatch analysis, and a table-driven energy/latency/area roll-up."""

__version__ = "0.1.0"

from .config import (
    ArchParams,
    ConfigError,
    CostEntry,
    CostTable,
    VariationParams,
    default_aidac,
    load_config,
    load_config_file,
    validate,
)
from .charge import CapState, ScheduleError, SwitchEvent, connect, disconnect, discharge, drive, run_schedule
from .macro import (
    Macro,
    MacroEvaluator,
    MacroLayout,
    MacroOutputs,
    WeightPlane,
    cb_weighting,
    column_accumulate,
    input_convert,
    macro_closed_form,
    multiply_1bit,
    run_macro_phases,
)
from .timechain import TdcParams, TimeChainResult, VtcParams, chain_accumulate, reference_time, tdc_from, tdc_quantize, vtc_delay
from .variation import (
    CalibrationResult,
    DeviceInstance,
    McStats,
    calibrate_sigma_cap,
    ideal_instance,
    monte_carlo,
    sample_instance,
)
from .mapper import (
    CoreExecutor,
    MappingPlan,
    VmmJob,
    VmmResult,
    code_to_mac,
    ideal_vmm,
    run_vmm,
    simulate_vmm,
    tile,
)
from .costmodel import CostReport, breakdown, energy_rollup, full_report, latency_schedule, performance
from .analysis import LinearityMetrics, TransferCurve, compute_inl_dnl, input_transfer_curve, mac_error_curves
from .mlp import LabeledSet, MlpModel, infer_mlp

__all__ = [name for name in dir() if not name.startswith("_")]
