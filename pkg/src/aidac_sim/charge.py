"""Generic switched-capacitor solver.

A ``CapState`` is a population of capacitor nodes partitioned into islands
of currently-connected nodes. Four primitive events cover every analog phase
of the architecture:

  drive      force an island to a source voltage
  connect    merge islands; charge redistributes to a common voltage
  disconnect split an island; each part keeps the pre-split voltage
  discharge  force an island to 0 V

Settling is instantaneous and lossless: ideal switches, no charge injection,
no leakage. Total charge (sum of C*V) is invariant under connect and
disconnect, and any voltage produced from drives within [0, vdd] stays in
[0, vdd] because charge sharing is a convex combination.

Island handles are integers. A node starts as its own singleton island whose
id equals the node index; merged islands get fresh ids >= node count. The
engine is layout-agnostic; callers assign node indices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class ScheduleError(ValueError):
    """An event referenced a nonexistent island or an inconsistent split."""


@dataclass
class CapState:
    """Capacitor nodes plus their connection partition.

    ``islands`` only stores multi-node islands; an id below ``n_nodes`` with
    no entry is the singleton island of that node. State is mutated in place
    by the event functions (and returned for chaining); confine one CapState
    to one worker at a time.
    """

    caps_ff: np.ndarray
    volts: np.ndarray
    islands: dict[int, np.ndarray] = field(default_factory=dict)
    island_of: np.ndarray = field(default=None)  # type: ignore[assignment]
    _next_id: int = 0

    def __post_init__(self) -> None:
        self.caps_ff = np.asarray(self.caps_ff, dtype=np.float64)
        self.volts = np.asarray(self.volts, dtype=np.float64)
        if self.caps_ff.ndim != 1 or self.caps_ff.shape != self.volts.shape:
            raise ValueError("caps_ff and volts must be 1-D arrays of equal length")
        if np.any(self.caps_ff <= 0):
            raise ValueError("every capacitance must be > 0")
        if not np.all(np.isfinite(self.volts)):
            raise ValueError("voltages must be finite")
        if self.island_of is None:
            self.island_of = np.arange(self.n_nodes, dtype=np.int64)
        self._next_id = self.n_nodes

    @classmethod
    def from_caps(cls, caps_ff: np.ndarray, v0: float = 0.0) -> "CapState":
        caps_ff = np.asarray(caps_ff, dtype=np.float64)
        return cls(caps_ff=caps_ff, volts=np.full(caps_ff.shape, v0, dtype=np.float64))

    @property
    def n_nodes(self) -> int:
        return self.caps_ff.shape[0]

    def members(self, island: int) -> np.ndarray:
        """Node indices of an island; raises ScheduleError if it is stale."""
        got = self.islands.get(island)
        if got is not None:
            return got
        if 0 <= island < self.n_nodes and self.island_of[island] == island:
            return np.array([island], dtype=np.int64)
        raise ScheduleError(f"unknown island {island}")

    def island_ids(self) -> list[int]:
        """All live island ids (merged ids first, then free singletons)."""
        merged = sorted(self.islands)
        covered = np.zeros(self.n_nodes, dtype=bool)
        for idx in self.islands.values():
            covered[idx] = True
        singles = np.nonzero(~covered)[0].tolist()
        return merged + singles

    def island_voltage(self, island: int) -> float:
        return float(self.volts[self.members(island)[0]])

    def total_charge_fc(self) -> float:
        """Total stored charge, fC; invariant under connect/disconnect."""
        return float(self.caps_ff @ self.volts)

    def snapshot(self) -> list[tuple[int, float]]:
        """(island id, voltage) for every live island."""
        return [(i, self.island_voltage(i)) for i in self.island_ids()]

    def _fresh_id(self) -> int:
        i = self._next_id
        self._next_id += 1
        return i


def _is_singleton(state: CapState, island: int) -> bool:
    return 0 <= island < state.n_nodes and state.island_of[island] == island


def drive(state: CapState, island: int, v_volts: float) -> CapState:
    """Force every node of an island to the source voltage ``v_volts``."""
    got = state.islands.get(island)
    if got is not None:
        state.volts[got] = v_volts
    elif _is_singleton(state, island):
        state.volts[island] = v_volts
    else:
        raise ScheduleError(f"unknown island {island}")
    return state


def discharge(state: CapState, island: int) -> CapState:
    """Release the island's charge: voltage 0. Idempotent."""
    got = state.islands.get(island)
    if got is not None:
        state.volts[got] = 0.0
    elif _is_singleton(state, island):
        state.volts[island] = 0.0
    else:
        raise ScheduleError(f"unknown island {island}")
    return state


def connect(state: CapState, islands: Iterable[int]) -> tuple[CapState, int, float]:
    """Merge islands; charge redistributes to sum(C*V)/sum(C).

    Returns ``(state, merged_island_id, v_shared)``. Connecting a single
    island to itself is the identity (same id, voltage unchanged). The given
    islands must be pairwise distinct and live.
    """
    ids = list(islands)
    if not ids:
        raise ScheduleError("connect requires at least one island")
    if len(set(ids)) != len(ids):
        raise ScheduleError(f"connect islands must be distinct (got {ids})")
    if len(ids) == 1:
        idx = state.members(ids[0])
        return state, ids[0], float(state.volts[idx[0]])

    merged = state.islands
    singles: list[int] = []
    merged_keys: list[int] = []
    parts: list[np.ndarray] = []
    for i in ids:
        got = merged.get(i)
        if got is not None:
            parts.append(got)
            merged_keys.append(i)
        else:
            singles.append(i)
    if singles:
        s = np.asarray(singles, dtype=np.int64)
        inb = (s >= 0) & (s < state.n_nodes)
        if not inb.all():
            raise ScheduleError(f"unknown island {int(s[~inb][0])}")
        live = state.island_of[s] == s
        if not live.all():
            raise ScheduleError(f"unknown island {int(s[~live][0])}")
        parts.append(s)
    idx = parts[0] if len(parts) == 1 else np.concatenate(parts)
    c = state.caps_ff[idx]
    v_shared = float((c @ state.volts[idx]) / c.sum())
    state.volts[idx] = v_shared

    for i in merged_keys:
        del merged[i]
    new_id = state._fresh_id()
    merged[new_id] = idx
    state.island_of[idx] = new_id
    return state, new_id, v_shared


def disconnect(
    state: CapState, island: int, split: Sequence[Sequence[int] | np.ndarray]
) -> tuple[CapState, list[int]]:
    """Split an island into the given parts; each keeps its voltage.

    ``split`` must partition the island's nodes exactly. Returns the new
    island ids, in split order. A single-node part reuses the node index as
    its id.
    """
    idx = state.members(island)
    parts = [np.asarray(p, dtype=np.int64) for p in split]
    if any(p.shape[0] == 0 for p in parts):
        raise ScheduleError(f"split of island {island} contains an empty part")
    sizes = sum(p.shape[0] for p in parts)
    if sizes != idx.shape[0]:
        raise ScheduleError(
            f"split does not partition island {island}: "
            f"{sizes} nodes given, {idx.shape[0]} present"
        )
    all_nodes = np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)
    union = np.sort(all_nodes)
    if union.shape[0] != np.unique(union).shape[0] or not np.array_equal(union, np.sort(idx)):
        raise ScheduleError(f"split is not a partition of island {island}")

    state.islands.pop(island, None)
    new_ids: list[int] = []
    for p in parts:
        if p.shape[0] == 1:
            nid = int(p[0])
        else:
            nid = state._fresh_id()
            state.islands[nid] = p
        state.island_of[p] = nid
        new_ids.append(nid)
    return state, new_ids


def atomize(state: CapState, island: int) -> tuple[CapState, np.ndarray]:
    """Split an island into all-singleton islands (ids = node indices)."""
    idx = state.members(island)
    state.islands.pop(island, None)
    state.island_of[idx] = idx
    return state, idx


def connect_singleton_groups(
    state: CapState,
    node_groups: Sequence[np.ndarray],
    then_discharge: bool = False,
) -> tuple[CapState, np.ndarray, np.ndarray]:
    """Batched connect of many disjoint groups of singleton nodes.

    Semantically identical to one ``connect`` per group (single-node groups
    stay singleton islands), just without per-event overhead; optionally the
    merged islands are discharged in the same step. Returns the new island
    ids and shared voltages, in group order.
    """
    n_groups = len(node_groups)
    lengths = np.fromiter((g.shape[0] for g in node_groups), dtype=np.int64, count=n_groups)
    if np.any(lengths == 0):
        raise ScheduleError("empty group in batched connect")
    concat = np.concatenate(node_groups) if n_groups > 1 else node_groups[0]
    if concat.min(initial=0) < 0 or concat.max(initial=-1) >= state.n_nodes:
        raise ScheduleError("batched connect references nodes outside the state")
    if np.unique(concat).shape[0] != concat.shape[0]:
        raise ScheduleError("batched connect groups overlap")
    if not (state.island_of[concat] == concat).all():
        raise ScheduleError("batched connect requires singleton nodes")

    offsets = np.zeros(n_groups, dtype=np.int64)
    np.cumsum(lengths[:-1], out=offsets[1:])
    c = state.caps_ff[concat]
    cv_sums = np.add.reduceat(c * state.volts[concat], offsets)
    c_sums = np.add.reduceat(c, offsets)
    v_shared = cv_sums / c_sums

    ids = np.empty(n_groups, dtype=np.int64)
    pos = 0
    for g in range(n_groups):
        length = int(lengths[g])
        if length == 1:
            ids[g] = concat[pos]
        else:
            nid = state._fresh_id()
            ids[g] = nid
            state.islands[nid] = concat[pos : pos + length]
        pos += length
    state.island_of[concat] = np.repeat(ids, lengths)
    if then_discharge:
        v_shared = np.zeros(n_groups)
    state.volts[concat] = np.repeat(v_shared, lengths)
    return state, ids, v_shared


# ---------------------------------------------------------------------------
# Declarative schedules.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SwitchEvent:
    """One switching step: kind in {drive, connect, disconnect, discharge}.

    ``label`` tags the phase for tracing. Field use by kind:
      drive:      island, volts
      connect:    island_set
      disconnect: island, split (None splits into all singletons)
      discharge:  island
    """

    kind: str
    label: str = ""
    island: int | None = None
    volts: float | None = None
    island_set: tuple[int, ...] | None = None
    split: tuple[tuple[int, ...], ...] | None = None


def run_schedule(
    state: CapState, events: Sequence[SwitchEvent]
) -> tuple[CapState, list[tuple[str, tuple[tuple[int, float], ...]]]]:
    """Apply events in order; the trace records post-event island voltages.

    Each trace row is ``(label, ((island_id, voltage), ...))`` covering the
    islands the event touched. The first invalid event aborts with its index
    and reason; the state may then be partially advanced.
    """
    trace: list[tuple[str, tuple[tuple[int, float], ...]]] = []
    for i, ev in enumerate(events):
        try:
            if ev.kind == "drive":
                drive(state, ev.island, ev.volts)
                touched = ((ev.island, float(ev.volts)),)
            elif ev.kind == "discharge":
                discharge(state, ev.island)
                touched = ((ev.island, 0.0),)
            elif ev.kind == "connect":
                _, nid, v = connect(state, ev.island_set)
                touched = ((nid, v),)
            elif ev.kind == "disconnect":
                if ev.split is None:
                    _, nodes = atomize(state, ev.island)
                    v = float(state.volts[nodes[0]])
                    touched = tuple((int(n), v) for n in nodes)
                else:
                    _, ids = disconnect(state, ev.island, ev.split)
                    touched = tuple((nid, state.island_voltage(nid)) for nid in ids)
            else:
                raise ScheduleError(f"unknown event kind '{ev.kind}'")
        except ScheduleError as e:
            raise ScheduleError(f"event {i} ({ev.kind} '{ev.label}'): {e}") from e
        trace.append((ev.label, touched))
    return state, trace
