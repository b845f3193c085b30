"""Architecture, variation, and cost parameters.

All knobs of the simulated core live here: the array geometry (bit widths,
rows, columns, compute-block layout, macro grid), the statistical variation
model, and the per-component energy/latency/area cost table. Field names
carry explicit physical units (``vdd_volts``, ``c_unit_ff``) so no hidden
unit conventions exist; costs are normalized internally to fJ / ps / um^2.

Everything is an immutable dataclass; values are safe to share across
workers. ``default_aidac()`` returns the factory configuration of the
reference core design.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from decimal import Decimal


class ConfigError(ValueError):
    """Raised when a configuration document is malformed or invalid."""


@dataclass(frozen=True)
class ArchParams:
    """Geometry and electrical parameters of one core.

    A core is a ``macros_v x macros_h`` grid of macros. Each macro is an
    ``rows_per_macro x cols_per_macro`` array of memory-and-computing cells
    (one unit capacitor each) plus one dedicated reference column. Groups of
    ``cb_width`` adjacent columns form a compute block (CB) that realizes
    multibit weight significance by charge sharing.
    """

    n_in: int = 8                 # input bit width
    n_w: int = 8                  # weight bit width
    rows_per_macro: int = 128     # input channels per macro (M)
    cols_per_macro: int = 256     # compute columns per macro
    cb_width: int = 8             # columns per compute block (== n_w)
    cbs_per_macro: int = 32       # compute blocks per macro
    macros_v: int = 8             # vertically chained macros per core
    macros_h: int = 8             # horizontally bridged macros per core
    vdd_volts: float = 0.9        # supply voltage
    c_unit_ff: float = 2.0        # unit cell capacitance
    analog_clock_mhz: float = 50.0
    digital_clock_mhz: float = 1000.0
    weight_contexts: int = 8      # stored weight bit-planes per cell cluster
    sparsity: float = 0.5         # active-cell fraction per operation
    vtc_gain_ps_per_v: float = 1000.0  # voltage-to-time conversion slope
    vtc_offset_ps: float = 50.0        # fixed per-stage insertion delay

    @property
    def code_max_in(self) -> int:
        return (1 << self.n_in) - 1

    @property
    def code_max_w(self) -> int:
        return (1 << self.n_w) - 1

    @property
    def lsb_volts(self) -> float:
        """Voltage quantum of the input converter: vdd / 2^n_in."""
        return self.vdd_volts / (1 << self.n_in)

    @property
    def rows_per_core(self) -> int:
        return self.macros_v * self.rows_per_macro

    @property
    def channels_per_core(self) -> int:
        return self.macros_h * self.cbs_per_macro


@dataclass(frozen=True)
class VariationParams:
    """Statistical device-variation model.

    ``sigma_cap_frac`` is the relative sigma of independent per-unit-capacitor
    mismatch; the VTC sigmas model gain spread and conversion-time jitter of
    the time accumulators. Defaults are pre-calibrated so that a 2000-trial
    run of mid-code input conversion shows a 3-sigma spread of 2.25 mV and the
    time chain stays inside a 0.11% relative summation error at full scale.
    """

    sigma_cap_frac: float = 0.02625
    sigma_vtc_gain_frac: float = 0.0007
    sigma_vtc_jitter_ps: float = 0.4
    seed: int = 20260808


# Components that must be present in a CostTable. A missing entry is an
# error, never a silent zero.
COST_COMPONENTS = (
    "mcc_act",
    "row_driver",
    "time_acc",
    "tdc",
    "io_buffer_256b",
    "macro_total",
    "core_total",
)


@dataclass(frozen=True)
class CostEntry:
    """Per-component cost, normalized to fJ / ps / um^2.

    A ``None`` field means the source table has no figure for it; asking the
    roll-up for a missing number raises instead of assuming zero.
    """

    energy_fj: float | None = None
    latency_ps: float | None = None
    area_um2: float | None = None

    def require(self, name: str, component: str) -> float:
        value = getattr(self, name)
        if value is None:
            raise ConfigError(f"cost entry '{component}' has no {name}")
        if value < 0:
            raise ConfigError(f"cost entry '{component}.{name}' is negative")
        return value


@dataclass(frozen=True)
class CostTable:
    """Energy/latency/area figures for every component role."""

    entries: dict[str, CostEntry] = field(default_factory=dict)

    def __post_init__(self) -> None:
        missing = [c for c in COST_COMPONENTS if c not in self.entries]
        if missing:
            raise ConfigError(f"cost table missing entries: {', '.join(missing)}")
        for name, entry in self.entries.items():
            for f in ("energy_fj", "latency_ps", "area_um2"):
                v = getattr(entry, f)
                if v is not None and v < 0:
                    raise ConfigError(f"cost entry '{name}.{f}' is negative")

    def __getitem__(self, component: str) -> CostEntry:
        try:
            return self.entries[component]
        except KeyError:
            raise ConfigError(f"cost table has no entry '{component}'") from None

    def energy_fj(self, component: str) -> float:
        return self[component].require("energy_fj", component)

    def latency_ps(self, component: str) -> float:
        return self[component].require("latency_ps", component)

    def area_um2(self, component: str) -> float:
        return self[component].require("area_um2", component)


def default_aidac() -> tuple[ArchParams, VariationParams, CostTable]:
    """Factory configuration of the reference 8-bit, 128x256, 8x8-macro core."""
    arch = ArchParams()
    variation = VariationParams()
    cost = CostTable(entries={
        # fJ / ps / um^2 throughout. mcc_act energy is per activated cell
        # event; io_buffer figures are per 256-bit access.
        "mcc_act":        CostEntry(energy_fj=0.81, latency_ps=None, area_um2=0.8),
        "row_driver":     CostEntry(energy_fj=9.36, latency_ps=30.0, area_um2=0.18),
        "time_acc":       CostEntry(energy_fj=58.5, latency_ps=113.0, area_um2=5.3),
        "tdc":            CostEntry(energy_fj=7700.0, latency_ps=900.0, area_um2=6865.0),
        "io_buffer_256b": CostEntry(energy_fj=2900.0, latency_ps=112.0, area_um2=4656.0),
        "macro_total":    CostEntry(energy_fj=29600.0, latency_ps=13000.0, area_um2=262193.0),
        "core_total":     CostEntry(energy_fj=4235000.0, latency_ps=20000.0, area_um2=18500000.0),
    })
    return arch, variation, cost


def validate(params: ArchParams) -> list[str]:
    """Check every geometric and electrical invariant.

    Returns a list of human-readable violations, one per broken invariant,
    each naming the offending field. An empty list means the parameters are
    consistent. Violations are data, not exceptions.
    """
    v: list[str] = []
    counts = (
        ("n_in", params.n_in),
        ("n_w", params.n_w),
        ("rows_per_macro", params.rows_per_macro),
        ("cols_per_macro", params.cols_per_macro),
        ("cb_width", params.cb_width),
        ("cbs_per_macro", params.cbs_per_macro),
        ("macros_v", params.macros_v),
        ("macros_h", params.macros_h),
        ("weight_contexts", params.weight_contexts),
    )
    for name, value in counts:
        if value < 1:
            v.append(f"{name} must be >= 1 (got {value})")
    if params.vdd_volts <= 0:
        v.append(f"vdd_volts must be > 0 (got {params.vdd_volts})")
    if params.c_unit_ff <= 0:
        v.append(f"c_unit_ff must be > 0 (got {params.c_unit_ff})")
    if params.analog_clock_mhz <= 0 or params.digital_clock_mhz <= 0:
        v.append("clock frequencies must be > 0")
    if not 0.0 <= params.sparsity <= 1.0:
        v.append(f"sparsity must be in [0, 1] (got {params.sparsity})")
    if params.vtc_gain_ps_per_v <= 0:
        v.append(f"vtc_gain_ps_per_v must be > 0 (got {params.vtc_gain_ps_per_v})")
    if params.vtc_offset_ps < 0:
        v.append(f"vtc_offset_ps must be >= 0 (got {params.vtc_offset_ps})")

    # Derived-geometry invariants only make sense on sane counts.
    if v:
        return v

    if params.cb_width != params.n_w:
        v.append(
            f"cb_width must equal n_w (got cb_width={params.cb_width}, n_w={params.n_w})"
        )
    if params.cbs_per_macro * params.cb_width > params.cols_per_macro:
        v.append(
            "cbs_per_macro * cb_width must be <= cols_per_macro "
            f"({params.cbs_per_macro} * {params.cb_width} > {params.cols_per_macro})"
        )
    # The largest output-side split group of a compute-block column has
    # 2^(n_w - 1) cells, which must fit in one column of rows_per_macro cells.
    if (1 << (params.n_w - 1)) > params.rows_per_macro:
        v.append(
            "rows_per_macro must be >= 2^(n_w - 1) "
            f"(2^{params.n_w - 1} = {1 << (params.n_w - 1)} > {params.rows_per_macro})"
        )
    # Input conversion shares charge over 2^n_in - 1 unit capacitors per row.
    if (1 << params.n_in) - 1 > params.cols_per_macro:
        v.append(
            "cols_per_macro must be >= 2^n_in - 1 "
            f"(2^{params.n_in} - 1 = {(1 << params.n_in) - 1} > {params.cols_per_macro})"
        )
    return v


def validate_variation(vp: VariationParams) -> list[str]:
    v = []
    for name in ("sigma_cap_frac", "sigma_vtc_gain_frac", "sigma_vtc_jitter_ps"):
        if getattr(vp, name) < 0:
            v.append(f"{name} must be >= 0 (got {getattr(vp, name)})")
    if not 0 <= vp.seed < (1 << 64):
        v.append(f"seed must fit in 64 bits (got {vp.seed})")
    return v


# ---------------------------------------------------------------------------
# Document (de)serialization.
#
# The config file is JSON with three top-level sections: "arch", "variation",
# "cost". All values are numeric; the unit is encoded in the key name. Cost
# entries may use native units (pJ/ns) via suffixed keys; scaling to the
# canonical fJ/ps is done in Decimal so decimal-exact inputs stay exact.
# ---------------------------------------------------------------------------

_ENERGY_KEYS = {"energy_fj": 1, "energy_pj": 1000}
_LATENCY_KEYS = {"latency_ps": 1, "latency_ns": 1000}
_AREA_KEYS = {"area_um2": 1, "area_mm2": 1000000}


def _scaled(raw: dict, keys: dict[str, int], component: str) -> float | None:
    found = [k for k in keys if k in raw]
    if not found:
        return None
    if len(found) > 1:
        raise ConfigError(f"cost entry '{component}' sets {found[0]} and {found[1]}")
    k = found[0]
    return float(Decimal(str(raw[k])) * keys[k])


def _cost_entry_from_doc(raw: dict, component: str) -> CostEntry:
    known = set(_ENERGY_KEYS) | set(_LATENCY_KEYS) | set(_AREA_KEYS)
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"cost entry '{component}' has unknown keys: {sorted(unknown)}")
    return CostEntry(
        energy_fj=_scaled(raw, _ENERGY_KEYS, component),
        latency_ps=_scaled(raw, _LATENCY_KEYS, component),
        area_um2=_scaled(raw, _AREA_KEYS, component),
    )


def to_document(arch: ArchParams, variation: VariationParams, cost: CostTable) -> dict:
    """Serialize a full configuration to a plain-JSON-compatible dict."""
    doc = {
        "arch": asdict(arch),
        "variation": asdict(variation),
        "cost": {},
    }
    for name, entry in sorted(cost.entries.items()):
        raw = {}
        if entry.energy_fj is not None:
            raw["energy_fj"] = entry.energy_fj
        if entry.latency_ps is not None:
            raw["latency_ps"] = entry.latency_ps
        if entry.area_um2 is not None:
            raw["area_um2"] = entry.area_um2
        doc["cost"][name] = raw
    return doc


def load_document(doc: dict) -> tuple[ArchParams, VariationParams, CostTable]:
    """Build a validated configuration from a parsed document.

    Unspecified fields fall back to the ``default_aidac`` values. Raises
    ``ConfigError`` naming the violated invariant on bad input.
    """
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    unknown = set(doc) - {"arch", "variation", "cost"}
    if unknown:
        raise ConfigError(f"unknown top-level sections: {sorted(unknown)}")

    d_arch, d_var, d_cost = default_aidac()

    arch_doc = doc.get("arch", {})
    arch_fields = {f for f in ArchParams.__dataclass_fields__}
    unknown = set(arch_doc) - arch_fields
    if unknown:
        raise ConfigError(f"unknown arch fields: {sorted(unknown)}")
    arch = replace(d_arch, **arch_doc)

    var_doc = doc.get("variation", {})
    var_fields = {f for f in VariationParams.__dataclass_fields__}
    unknown = set(var_doc) - var_fields
    if unknown:
        raise ConfigError(f"unknown variation fields: {sorted(unknown)}")
    variation = replace(d_var, **var_doc)

    cost_doc = doc.get("cost", {})
    entries = dict(d_cost.entries)
    for name, raw in cost_doc.items():
        override = _cost_entry_from_doc(raw, name)
        base = entries.get(name, CostEntry())
        entries[name] = CostEntry(
            energy_fj=override.energy_fj if override.energy_fj is not None else base.energy_fj,
            latency_ps=override.latency_ps if override.latency_ps is not None else base.latency_ps,
            area_um2=override.area_um2 if override.area_um2 is not None else base.area_um2,
        )
    cost = CostTable(entries=entries)

    violations = validate(arch) + validate_variation(variation)
    if violations:
        raise ConfigError("invalid configuration: " + "; ".join(violations))
    return arch, variation, cost


def load_config(source: str) -> tuple[ArchParams, VariationParams, CostTable]:
    """Parse a JSON config document from a string.

    An empty document (``{}`` or whitespace) yields the factory defaults.
    """
    text = source.strip()
    if not text:
        return default_aidac()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config parse failure: {e}") from e
    return load_document(doc)


def load_config_file(path: str) -> tuple[ArchParams, VariationParams, CostTable]:
    with open(path, "r", encoding="utf-8") as fh:
        return load_config(fh.read())


def config_digest(arch: ArchParams, variation: VariationParams, cost: CostTable) -> str:
    """Short stable hash of a configuration, for artifact provenance lines."""
    blob = json.dumps(to_document(arch, variation, cost), sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]
