"""Energy, latency, and area roll-up for a mapping plan.

Two energy modes exist because the reference table's fine-grained entries do
not sum to its core total: "component" mode counts per-event energies and
reports the remaining gap as an explicit residual (never hidden); "macro"
mode uses the per-macro aggregate plus TDCs and buffers. Reported TOPS and
TOPS/W use the table's core totals, which is also how the reference figures
are defined.

Event counting conventions (per pass):
  mcc_act     every cell once, scaled by the activation sparsity
  row_driver  one firing per row driver per input bit (n_in per row hop)
  time_acc    one conversion per VTC stage (macros_v per chain)
  tdc         one conversion per chain
  io_buffer   one 256-bit access per 256 input bits read plus 256 output
              bits written (zero-padded tile rows move no data)
"""

from __future__ import annotations

from dataclasses import dataclass, field


from .config import ArchParams, CostTable
from .mapper import MappingPlan

ENERGY_MODES = ("component", "macro")


def _pass_rows(plan: MappingPlan, pv: int) -> int:
    return min(plan.k - pv * plan.rows_per_pass, plan.rows_per_pass)


def _pass_channels(plan: MappingPlan, q: int) -> int:
    return min(plan.c - q * plan.channels_per_pass, plan.channels_per_pass)


def _io_accesses(plan: MappingPlan, params: ArchParams) -> int:
    """256-bit buffer accesses over all passes: input reads + output writes."""
    total = 0
    out_bits_per_code = 8
    for pv in range(plan.vertical_tiles):
        in_bits = _pass_rows(plan, pv) * params.n_in
        for q in range(plan.horizontal_tiles):
            out_bits = _pass_channels(plan, q) * out_bits_per_code
            total += -(-in_bits // 256) + -(-out_bits // 256)
    return total


def component_counts(plan: MappingPlan, params: ArchParams) -> dict[str, float]:
    """Event counts per component over the whole plan."""
    passes = plan.passes
    macros = params.macros_v * params.macros_h
    cells = macros * params.rows_per_macro * params.cols_per_macro
    chains = params.macros_h * params.cbs_per_macro
    return {
        "mcc_act": float(cells * params.sparsity * passes),
        "row_driver": float(macros * params.rows_per_macro * params.n_in * passes),
        "time_acc": float(chains * params.macros_v * passes),
        "tdc": float(chains * passes),
        "io_buffer_256b": float(_io_accesses(plan, params)),
    }


@dataclass
class CostReport:
    """Roll-up of one plan: energies with counts, timeline, area, rates."""

    mode: str
    passes: int
    component_counts: dict[str, float]
    component_energy_fj: dict[str, float]
    component_sum_fj: float
    residual_fj: float
    total_energy_fj: float
    timeline: list[tuple[str, float, float]] = field(default_factory=list)
    total_latency_ps: float = 0.0
    area_um2: float = 0.0
    aggregate_area_um2: float = 0.0
    ops: int = 0
    tops: float = 0.0
    tops_per_watt: float = 0.0
    breakdown_fractions: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "passes": self.passes,
            "component_counts": self.component_counts,
            "component_energy_fj": self.component_energy_fj,
            "component_sum_fj": self.component_sum_fj,
            "residual_fj": self.residual_fj,
            "total_energy_fj": self.total_energy_fj,
            "timeline_ps": [[p, s, e] for p, s, e in self.timeline],
            "total_latency_ps": self.total_latency_ps,
            "area_um2": self.area_um2,
            "aggregate_area_um2": self.aggregate_area_um2,
            "ops": self.ops,
            "tops": self.tops,
            "tops_per_watt": self.tops_per_watt,
            "breakdown_fractions": self.breakdown_fractions,
        }


def energy_rollup(
    plan: MappingPlan, params: ArchParams, cost: CostTable, mode: str = "component"
) -> CostReport:
    """Sum per-component energies for the plan; see module docstring for the
    two modes. The residual against the table's core total is explicit."""
    if mode not in ENERGY_MODES:
        raise ValueError(f"mode must be one of {ENERGY_MODES}")
    counts = component_counts(plan, params)
    core_total = cost.energy_fj("core_total") * plan.passes

    if mode == "component":
        energies = {name: counts[name] * cost.energy_fj(name) for name in counts}
    else:
        macros = params.macros_v * params.macros_h
        energies = {
            "macro_total": macros * plan.passes * cost.energy_fj("macro_total"),
            "tdc": counts["tdc"] * cost.energy_fj("tdc"),
            "io_buffer_256b": counts["io_buffer_256b"] * cost.energy_fj("io_buffer_256b"),
        }
        counts = {
            "macro_total": float(macros * plan.passes),
            "tdc": counts["tdc"],
            "io_buffer_256b": counts["io_buffer_256b"],
        }
    component_sum = float(sum(energies.values()))
    residual = core_total - component_sum
    return CostReport(
        mode=mode,
        passes=plan.passes,
        component_counts=counts,
        component_energy_fj=energies,
        component_sum_fj=component_sum,
        residual_fj=residual,
        total_energy_fj=component_sum + residual,
    )


def latency_schedule(
    plan: MappingPlan, params: ArchParams, cost: CostTable
) -> tuple[list[tuple[str, float, float]], float]:
    """Serialized per-pass timeline: input load, analog phases, chain, TDC,
    output drain. Phases I-V share the macro latency budget evenly (the
    table gives no finer split)."""
    io_lat = cost.latency_ps("io_buffer_256b")
    macro_lat = cost.latency_ps("macro_total")
    chain_lat = params.macros_v * cost.latency_ps("time_acc")
    tdc_lat = cost.latency_ps("tdc")
    out_bits_per_code = 8

    timeline: list[tuple[str, float, float]] = []
    t = 0.0

    def seg(label: str, dur: float) -> None:
        nonlocal t
        timeline.append((label, t, t + dur))
        t += dur

    for pv in range(plan.vertical_tiles):
        for q in range(plan.horizontal_tiles):
            tag = f"p{pv}.{q}:" if plan.passes > 1 else ""
            in_acc = -(-(_pass_rows(plan, pv) * params.n_in) // 256)
            out_acc = -(-(_pass_channels(plan, q) * out_bits_per_code) // 256)
            seg(tag + "io:input", in_acc * io_lat)
            for phase in ("I", "II", "III", "IV", "V"):
                seg(tag + phase, macro_lat / 5.0)
            seg(tag + "VI:chain", chain_lat)
            seg(tag + "VI:tdc", tdc_lat)
            seg(tag + "io:output", out_acc * io_lat)
    return timeline, t


def area_rollup(params: ArchParams, cost: CostTable) -> tuple[float, float]:
    """(fine-grained sum, aggregate sum), both um^2, for one core."""
    macros = params.macros_v * params.macros_h
    chains = params.macros_h * params.cbs_per_macro
    fine = (
        macros * params.rows_per_macro * params.cols_per_macro * cost.area_um2("mcc_act")
        + macros * params.rows_per_macro * cost.area_um2("row_driver")
        + chains * params.macros_v * cost.area_um2("time_acc")
        + chains * cost.area_um2("tdc")
        + cost.area_um2("io_buffer_256b")
    )
    aggregate = (
        macros * cost.area_um2("macro_total")
        + chains * cost.area_um2("tdc")
        + cost.area_um2("io_buffer_256b")
    )
    return fine, aggregate


def performance(ops_count: int, energy_fj: float, latency_ps: float) -> tuple[float, float]:
    """(TOPS, TOPS/W); a multiply and an add each count as one operation."""
    if ops_count == 0:
        return 0.0, 0.0
    if energy_fj <= 0 or latency_ps <= 0:
        raise ValueError("energy and latency must be > 0")
    tops = ops_count / latency_ps            # ops per picosecond == TOPS
    tops_per_watt = 1000.0 * ops_count / energy_fj
    return tops, tops_per_watt


_BREAKDOWN_BINS = ("interconnect", "conversion", "compute", "communication")


def breakdown(
    report: CostReport,
    params: ArchParams | None = None,
    conversion_includes_input_share: bool = False,
) -> dict[str, float]:
    """Fractions of the component sum by operation class.

    interconnect: row drivers + time accumulators; conversion: TDCs (plus,
    behind the switch, the input-conversion share of cell events);
    compute: cell MAC activity; communication: buffers. The residual is not
    binned. Fractions sum to 1.
    """
    e = report.component_energy_fj
    if "mcc_act" not in e:
        raise ValueError("breakdown needs a component-mode report")
    mcc = e["mcc_act"]
    conv_share = 0.0
    if conversion_includes_input_share:
        if params is None:
            raise ValueError("input-share attribution needs the arch params")
        # cells in conversion groups, as a fraction of all cells
        conv_share = mcc * ((1 << params.n_in) - 1) / params.cols_per_macro
    bins = {
        "interconnect": e["row_driver"] + e["time_acc"],
        "conversion": e["tdc"] + conv_share,
        "compute": mcc - conv_share,
        "communication": e["io_buffer_256b"],
    }
    total = sum(bins.values())
    if total == 0:
        return {k: 0.0 for k in _BREAKDOWN_BINS}
    return {k: v / total for k, v in bins.items()}


def full_report(
    plan: MappingPlan,
    params: ArchParams,
    cost: CostTable,
    mode: str = "component",
    conversion_includes_input_share: bool = False,
) -> CostReport:
    """Assemble the complete report: energy, timeline, area, rates, bins."""
    report = energy_rollup(plan, params, cost, mode)
    report.timeline, report.total_latency_ps = latency_schedule(plan, params, cost)
    report.area_um2, report.aggregate_area_um2 = area_rollup(params, cost)
    report.ops = 2 * plan.k * plan.c
    ref_energy = cost.energy_fj("core_total") * plan.passes
    ref_latency = cost.latency_ps("core_total") * plan.passes
    report.tops, report.tops_per_watt = performance(report.ops, ref_energy, ref_latency)
    if mode == "component":
        report.breakdown_fractions = breakdown(report, params, conversion_includes_input_share)
    return report
