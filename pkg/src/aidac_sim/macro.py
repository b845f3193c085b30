"""One charge-domain macro: grouped-capacitor input conversion, in-cell
1-bit multiply, column accumulation, and compute-block weighting.

The macro is an M x C crossbar of cells (one unit capacitor each) plus one
dedicated reference column. Each operation exists twice, by design:

  * closed forms (``input_convert`` .. ``cb_weighting``) that evaluate the
    charge-sharing algebra directly, and
  * ``run_macro_phases``, which executes the same computation as an ordered
    switched-capacitor schedule on the charge engine.

The two must agree to 1e-12 relative on every input; tests enforce it.

Layout conventions
------------------
Row conversion groups of sizes 1, 2, ..., 2^(n_in-1) are assigned to the
first 2^n_in - 1 compute columns, identically for every row; group k is
driven by input bit k. Compute columns beyond the conversion groups (at the
default geometry: exactly one) cannot join the share without breaking the
conversion ratio, so their cells track the settled row voltage through the
row's input line instead. The reference column is an extra column outside
the compute array, carries all-zero weights, and never takes part in input
conversion; its cells stay at 0 V and supply the zero-signal baseline for
the time chain.

Within a compute block the column at local index jj (0-based, LSB first)
carries significance 2^jj: its output-side split group has 2^jj cells, so
the final merge weights column voltages by 1 : 2 : ... : 2^(n_w-1).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .charge import (
    CapState,
    ScheduleError,
    atomize,
    connect,
    connect_singleton_groups,
    disconnect,
)
from .config import ArchParams


@dataclass(frozen=True)
class WeightPlane:
    """One stored bit-plane: bits[i, j] is the 1-bit weight of cell (i, j)."""

    bits: np.ndarray
    context: int = 0

    def __post_init__(self) -> None:
        bits = np.asarray(self.bits, dtype=np.uint8)
        object.__setattr__(self, "bits", bits)
        if bits.ndim != 2:
            raise ValueError("weight plane must be a 2-D matrix")
        if not np.all((bits == 0) | (bits == 1)):
            raise ValueError("weight plane entries must be 0 or 1")

    def check_shape(self, params: ArchParams) -> None:
        m, c = self.bits.shape
        if (m, c) != (params.rows_per_macro, params.cols_per_macro):
            raise ValueError(
                f"weight plane is {m}x{c}, macro is "
                f"{params.rows_per_macro}x{params.cols_per_macro}"
            )


@dataclass(frozen=True)
class MacroLayout:
    """Column bookkeeping for one macro.

    ``group_cols[k]`` lists the compute columns whose cells form input
    conversion group k (size 2^k). ``tracked_cols`` are compute columns
    outside every group; ``reference_col`` indexes the extra reference
    column (== cols_per_macro).
    """

    params: ArchParams
    group_cols: tuple[np.ndarray, ...]
    tracked_cols: np.ndarray
    reference_col: int

    @classmethod
    def build(cls, params: ArchParams) -> "MacroLayout":
        n_conv = (1 << params.n_in) - 1
        if n_conv > params.cols_per_macro:
            raise ValueError(
                f"macro needs {n_conv} conversion columns, has {params.cols_per_macro}"
            )
        groups = []
        start = 0
        for k in range(params.n_in):
            size = 1 << k
            groups.append(np.arange(start, start + size, dtype=np.int64))
            start += size
        tracked = np.arange(n_conv, params.cols_per_macro, dtype=np.int64)
        return cls(
            params=params,
            group_cols=tuple(groups),
            tracked_cols=tracked,
            reference_col=params.cols_per_macro,
        )

    @property
    def n_cols_total(self) -> int:
        # compute columns plus the reference column
        return self.params.cols_per_macro + 1

    def node(self, row: int, col: int) -> int:
        return row * self.n_cols_total + col

    def cb_cols(self, cb: int) -> np.ndarray:
        w = self.params.cb_width
        return np.arange(cb * w, (cb + 1) * w, dtype=np.int64)

    def out_rows(self, col_in_cb: int) -> int:
        """Cells of a CB column that join the output-side merge."""
        return 1 << col_in_cb

    def group_sizes_ff(self, caps: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-row conversion group capacitance sums and their row totals.

        ``caps`` is the (M, C+1) capacitance matrix. Returns (G, T): G[i, k]
        is the capacitance of group k in row i, T[i] the full conversion
        capacitance of row i.
        """
        g = np.stack([caps[:, cols].sum(axis=1) for cols in self.group_cols], axis=1)
        return g, g.sum(axis=1)


@dataclass
class MacroOutputs:
    """Results of one macro execution."""

    cb_voltages: np.ndarray
    reference_voltage: float
    phase_trace: list[tuple[str, tuple[tuple[int, float], ...]]] = field(default_factory=list)


def _caps_matrix(params: ArchParams, instance, macro: tuple[int, int]) -> np.ndarray | None:
    """Capacitance matrix (M, C+1) for one macro, or None for the ideal case."""
    if instance is None:
        return None
    return instance.macro_caps(*macro)


def _code_array(codes, params: ArchParams) -> np.ndarray:
    codes = np.asarray(codes, dtype=np.int64)
    if codes.shape != (params.rows_per_macro,):
        raise ValueError(
            f"expected {params.rows_per_macro} input codes, got shape {codes.shape}"
        )
    if np.any(codes < 0) or np.any(codes > params.code_max_in):
        bad = codes[(codes < 0) | (codes > params.code_max_in)][0]
        raise ValueError(f"input code {bad} outside [0, {params.code_max_in}]")
    return codes


def input_convert(codes, params: ArchParams, instance=None, macro=(0, 0)) -> np.ndarray:
    """Convert digital row inputs to row voltages by grouped-capacitor sharing.

    Ideal: code / (2^n_in - 1) * vdd, exactly. With a device instance the
    result is the capacitance-weighted share over that row's conversion
    groups.
    """
    codes = _code_array(codes, params)
    caps = _caps_matrix(params, instance, macro)
    if caps is None:
        return codes / params.code_max_in * params.vdd_volts
    layout = MacroLayout.build(params)
    g, t = layout.group_sizes_ff(caps)
    bits = (codes[:, None] >> np.arange(params.n_in)) & 1
    return params.vdd_volts * (bits * g).sum(axis=1) / t


def multiply_1bit(row_voltages: np.ndarray, plane: WeightPlane) -> np.ndarray:
    """Per-cell products: cell (i, j) holds its row voltage where the stored
    bit is 1 and 0 V where it is 0."""
    row_voltages = np.asarray(row_voltages, dtype=np.float64)
    if row_voltages.ndim != 1 or row_voltages.shape[0] != plane.bits.shape[0]:
        raise ValueError(
            f"row voltages ({row_voltages.shape}) do not match plane rows "
            f"({plane.bits.shape[0]})"
        )
    return row_voltages[:, None] * plane.bits


def column_accumulate(
    cell_voltages: np.ndarray, params: ArchParams, instance=None, macro=(0, 0)
) -> np.ndarray:
    """Charge-share each column's M cells: the capacitance-weighted mean.

    Zero-weight cells were discharged but keep contributing capacitance, so
    the ideal result is sum_i(V_i * W_ij) / M.
    """
    cell_voltages = np.asarray(cell_voltages, dtype=np.float64)
    if cell_voltages.shape[0] != params.rows_per_macro:
        raise ValueError(
            f"expected {params.rows_per_macro} cells per column, got {cell_voltages.shape[0]}"
        )
    caps = _caps_matrix(params, instance, macro)
    if caps is None:
        return cell_voltages.sum(axis=0) / params.rows_per_macro
    col_caps = caps[:, : cell_voltages.shape[1]]
    return (col_caps * cell_voltages).sum(axis=0) / col_caps.sum(axis=0)


def cb_weighting(
    column_voltages: np.ndarray,
    params: ArchParams,
    instance=None,
    macro=(0, 0),
    cb: int = 0,
) -> float:
    """Merge one compute block's column outputs with binary significance.

    The output-side groups have 1, 2, ..., 2^(n_w-1) cells, so the ideal
    merge is sum_j 2^(j-1) * V_j / (2^n_w - 1) with the LSB column first.
    """
    column_voltages = np.asarray(column_voltages, dtype=np.float64)
    if column_voltages.shape != (params.n_w,):
        raise ValueError(f"expected {params.n_w} column voltages, got {column_voltages.shape}")
    weights_ideal = np.power(2.0, np.arange(params.n_w))
    caps = _caps_matrix(params, instance, macro)
    if caps is None:
        return float((weights_ideal * column_voltages).sum() / ((1 << params.n_w) - 1))
    layout = MacroLayout.build(params)
    cols = layout.cb_cols(cb)
    out_caps = np.array(
        [caps[: layout.out_rows(jj), col].sum() for jj, col in enumerate(cols)]
    )
    return float((out_caps * column_voltages).sum() / out_caps.sum())


def macro_closed_form(
    codes, plane: WeightPlane, params: ArchParams, instance=None, macro=(0, 0)
) -> MacroOutputs:
    """Full pipeline composition; the analytic twin of ``run_macro_phases``."""
    plane.check_shape(params)
    v_rows = input_convert(codes, params, instance, macro)
    cells = multiply_1bit(v_rows, plane)
    v_cols = column_accumulate(cells, params, instance, macro)
    cb_v = np.array(
        [
            cb_weighting(v_cols[MacroLayout.build(params).cb_cols(b)], params, instance, macro, b)
            for b in range(params.cbs_per_macro)
        ]
    )
    return MacroOutputs(cb_voltages=cb_v, reference_voltage=0.0)


# ---------------------------------------------------------------------------
# Phase schedule on the charge engine.
# ---------------------------------------------------------------------------

PHASE_LABELS = (
    "I:input",
    "II:share",
    "III:multiply",
    "IV:column",
    "V:cb-merge",
)


def run_macro_phases(
    codes,
    plane: WeightPlane,
    params: ArchParams,
    instance=None,
    macro=(0, 0),
    trace: bool = False,
) -> MacroOutputs:
    """Execute phases I-V as switched-capacitor events.

    Phase I drives each row's conversion groups with the input bits; II
    shares them into the row voltage (tracked columns then follow the row
    line); III isolates the cells and releases zero-weight charge; IV shares
    each column; V splits the output-side groups and merges each compute
    block. The reference column is carried through III-IV with all-zero
    weights. When ``trace`` is set, a per-phase snapshot of island voltages
    is recorded.
    """
    plane.check_shape(params)
    codes = _code_array(codes, params)
    layout = MacroLayout.build(params)
    m = params.rows_per_macro
    n_cols = layout.n_cols_total
    caps = _caps_matrix(params, instance, macro)
    if caps is None:
        caps = np.full((m, n_cols), params.c_unit_ff, dtype=np.float64)
    state = CapState.from_caps(caps.reshape(-1))
    vdd = params.vdd_volts
    ptrace: list[tuple[str, tuple[tuple[int, float], ...]]] = []

    def snap(label: str) -> None:
        if trace:
            ptrace.append((label, tuple(state.snapshot())))

    bits = (codes[:, None] >> np.arange(params.n_in)) & 1
    bases = np.arange(m, dtype=np.int64) * n_cols

    # Phase I: connect each group's cells to its input line, drive per bit.
    # All (row, group) connects commute (disjoint singleton cells), so they
    # run as one batched step.
    groups: list[np.ndarray] = []
    group_nodes = []
    for k in range(params.n_in):
        nodes_k = bases[:, None] + layout.group_cols[k][None, :]
        group_nodes.append(nodes_k)
        groups.extend(nodes_k)
    _, ids, _ = connect_singleton_groups(state, groups)
    row_group_ids = ids.reshape(params.n_in, m).T
    for k in range(params.n_in):
        state.volts[group_nodes[k]] = (bits[:, k] * vdd)[:, None]
    snap(PHASE_LABELS[0])

    # Phase II: close the inter-group switches; each row settles to its
    # conversion voltage. Tracked columns follow the settled row line.
    row_ids = np.empty(m, dtype=np.int64)
    v_rows = np.empty(m, dtype=np.float64)
    for i in range(m):
        _, rid, v_row = connect(state, row_group_ids[i].tolist())
        row_ids[i] = rid
        v_rows[i] = v_row
    tracked = layout.tracked_cols
    if tracked.shape[0]:
        state.volts[bases[:, None] + tracked[None, :]] = v_rows[:, None]
    snap(PHASE_LABELS[1])

    # Phase III: open the row lines, then release the charge of zero-weight
    # cells. One column's zero-weight cells share a discharge path.
    for i in range(m):
        atomize(state, int(row_ids[i]))
    bits_w = plane.bits
    zcols, zrows = np.nonzero(bits_w.T == 0)
    znodes = zrows * n_cols + zcols
    zbounds = np.searchsorted(zcols, np.arange(params.cols_per_macro + 1))
    zgroups = [
        znodes[zbounds[j] : zbounds[j + 1]]
        for j in range(params.cols_per_macro)
        if zbounds[j + 1] > zbounds[j]
    ]
    zgroup_cols = [j for j in range(params.cols_per_macro) if zbounds[j + 1] > zbounds[j]]
    zgroups.append(bases + layout.reference_col)
    _, zids, _ = connect_singleton_groups(state, zgroups, then_discharge=True)
    col_zero_island = dict(zip(zgroup_cols, zids[:-1].tolist()))
    ref_zid = int(zids[-1])
    snap(PHASE_LABELS[2])

    # Phase IV: share each full column.
    ocols, orows = np.nonzero(bits_w.T == 1)
    onodes = orows * n_cols + ocols
    obounds = np.searchsorted(ocols, np.arange(params.cols_per_macro + 1))
    col_ids = np.empty(params.cols_per_macro, dtype=np.int64)
    for j in range(params.cols_per_macro):
        ids_j = onodes[obounds[j] : obounds[j + 1]].tolist()
        if j in col_zero_island:
            ids_j.append(col_zero_island[j])
        _, cid, _ = connect(state, ids_j)
        col_ids[j] = cid
    _, ref_cid, _ = connect(state, [ref_zid])
    snap(PHASE_LABELS[3])

    # Phase V: per compute block, split off the output-side groups, then
    # merge them across the block's columns.
    cb_voltages = np.empty(params.cbs_per_macro, dtype=np.float64)
    for b in range(params.cbs_per_macro):
        out_ids = []
        for jj, col in enumerate(layout.cb_cols(b)):
            n_out = layout.out_rows(jj)
            if n_out > m:
                raise ScheduleError(
                    f"CB column split needs {n_out} cells, column has {m}"
                )
            if n_out == m:
                out_ids.append(int(col_ids[col]))
                continue
            col_nodes = np.arange(m, dtype=np.int64) * n_cols + col
            _, ids = disconnect(
                state, int(col_ids[col]), [col_nodes[:n_out], col_nodes[n_out:]]
            )
            out_ids.append(ids[0])
        _, cb_id, v_cb = connect(state, out_ids)
        cb_voltages[b] = v_cb
    snap(PHASE_LABELS[4])

    return MacroOutputs(
        cb_voltages=cb_voltages,
        reference_voltage=state.island_voltage(ref_cid),
        phase_trace=ptrace,
    )


# ---------------------------------------------------------------------------
# Fast vectorized evaluator (identical math, no event bookkeeping).
# ---------------------------------------------------------------------------

class MacroEvaluator:
    """Precomputed analytic evaluation of one macro for a fixed instance.

    Builds the capacitance-derived operators once, then maps input codes to
    compute-block voltages with two small matrix products per call. Agrees
    with ``run_macro_phases`` to 1e-12 relative (property-tested).
    """

    def __init__(self, params: ArchParams, instance=None, macro=(0, 0)):
        self.params = params
        self.layout = MacroLayout.build(params)
        caps = _caps_matrix(params, instance, macro)
        if caps is None:
            caps = np.full(
                (params.rows_per_macro, self.layout.n_cols_total),
                params.c_unit_ff,
                dtype=np.float64,
            )
        self.caps = caps
        self.group_ff, self.row_total_ff = self.layout.group_sizes_ff(caps)
        c = params.cols_per_macro
        self.n_cb_cols = params.cbs_per_macro * params.cb_width
        self.col_caps = caps[:, :c]
        self.col_caps_sum = self.col_caps.sum(axis=0)
        cum = np.cumsum(self.col_caps[:, : self.n_cb_cols], axis=0)
        jj = np.arange(self.n_cb_cols) % params.cb_width
        self.out_caps = cum[(1 << jj) - 1, np.arange(self.n_cb_cols)]
        self.cb_out_sum = self.out_caps.reshape(params.cbs_per_macro, params.cb_width).sum(axis=1)
        self._plane_op: np.ndarray | None = None
        self._plane_ops: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def load_plane(self, plane: WeightPlane) -> None:
        """Cache the column-share operator for a weight plane."""
        plane.check_shape(self.params)
        hit = self._plane_ops.get(id(plane.bits))
        if hit is not None and hit[0] is plane.bits:
            self._plane_op = hit[1]
            return
        # (M, C): per-cell capacitance where the stored bit is 1, scaled by
        # the column totals; column voltages are then row_volts @ op.
        op = (self.col_caps * plane.bits) / self.col_caps_sum
        self._plane_ops[id(plane.bits)] = (plane.bits, op)
        self._plane_op = op

    def row_voltages(self, codes: np.ndarray) -> np.ndarray:
        codes = _code_array(codes, self.params)
        bits = (codes[:, None] >> np.arange(self.params.n_in)) & 1
        return self.params.vdd_volts * (bits * self.group_ff).sum(axis=1) / self.row_total_ff

    def column_voltages(self, codes: np.ndarray) -> np.ndarray:
        if self._plane_op is None:
            raise ValueError("no weight plane loaded")
        return self.row_voltages(codes) @ self._plane_op

    def cb_voltages(self, codes: np.ndarray) -> np.ndarray:
        v_cols = self.column_voltages(codes)[: self.n_cb_cols]
        p = self.params
        weighted = (self.out_caps * v_cols).reshape(p.cbs_per_macro, p.cb_width).sum(axis=1)
        return weighted / self.cb_out_sum

    @property
    def reference_voltage(self) -> float:
        return 0.0


class Macro:
    """A macro with its stored weight contexts.

    Up to ``weight_contexts`` bit-planes stay resident; ``select_context``
    switches the active plane with no analog cost in this model.
    """

    def __init__(self, params: ArchParams):
        self.params = params
        self._planes: dict[int, WeightPlane] = {}
        self._active: int | None = None

    def store_weights(self, plane_bits: np.ndarray, context: int) -> None:
        if not 0 <= context < self.params.weight_contexts:
            raise ValueError(
                f"context {context} outside [0, {self.params.weight_contexts})"
            )
        plane = WeightPlane(bits=plane_bits, context=context)
        plane.check_shape(self.params)
        self._planes[context] = plane

    def select_context(self, context: int) -> None:
        if context not in self._planes:
            raise ValueError(f"context {context} has no stored weights")
        self._active = context

    @property
    def active_plane(self) -> WeightPlane:
        if self._active is None:
            raise ValueError("no weight context selected")
        return self._planes[self._active]

    def run_phases(self, codes, instance=None, macro=(0, 0), trace: bool = False) -> MacroOutputs:
        return run_macro_phases(codes, self.active_plane, self.params, instance, macro, trace)


def plane_from_channel_weights(weights: np.ndarray, params: ArchParams) -> WeightPlane:
    """Spread per-channel multibit weights into a bit-plane.

    ``weights`` is (M, n_channels) of unsigned n_w-bit integers; channel c
    lands in compute block c, LSB in the block's first column. Unused
    blocks hold zero weights.
    """
    weights = np.asarray(weights, dtype=np.int64)
    m, n_ch = weights.shape
    if m != params.rows_per_macro:
        raise ValueError(f"expected {params.rows_per_macro} rows, got {m}")
    if n_ch > params.cbs_per_macro:
        raise ValueError(f"{n_ch} channels exceed {params.cbs_per_macro} compute blocks")
    if np.any(weights < 0) or np.any(weights > params.code_max_w):
        raise ValueError(f"weights outside [0, {params.code_max_w}]")
    bits = np.zeros((m, params.cols_per_macro), dtype=np.uint8)
    for c in range(n_ch):
        base = c * params.cb_width
        for jj in range(params.n_w):
            bits[:, base + jj] = (weights[:, c] >> jj) & 1
    return WeightPlane(bits=bits)
