"""Expert weight placement across DRAM tiers and inter-batch swaps.

Every expert occupies ``delta`` consecutive rows in each bank (its shards
are spread over all banks by the tensor-parallel split). The ``tau`` most
used experts fill the lowest rows; the rest are packed below ``phi`` with
the more used ones at lower addresses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import ModelConfig, SystemConfig
from .timing import TierTable

ExpertKey = tuple[int, int]  # (layer, expert)


class PlacementError(ValueError):
    pass


@dataclass(frozen=True)
class PlacementProblem:
    L: int
    K: int
    k: int
    freq: np.ndarray = field(compare=False)  # (L, K) usage frequency
    S_E: int
    N_bank: int
    S_rb: int
    Phi: int

    def __post_init__(self):
        f = np.asarray(self.freq, dtype=float)
        if f.shape != (self.L, self.K):
            raise PlacementError(f"freq shape {f.shape} != ({self.L}, {self.K})")
        if (f < 0).any() or not np.isfinite(f).all():
            raise PlacementError("frequencies must be finite and >= 0")
        if not 0 <= self.k <= self.K:
            raise PlacementError(f"k={self.k} outside [0, {self.K}]")
        object.__setattr__(self, "freq", f)
        if self.Phi < self.K * self.L * self.delta:
            raise PlacementError(f"Phi={self.Phi} rows cannot hold {self.K * self.L} experts of {self.delta} rows")

    @property
    def delta(self) -> int:
        return math.ceil(self.S_E / (self.N_bank * self.S_rb))

    @property
    def tau(self) -> int:
        return self.k * self.L


@dataclass(frozen=True)
class PlacementResult:
    intervals: dict  # ExpertKey -> (a, b), inclusive
    hot: frozenset
    delta_rows: int
    phi: int

    @property
    def order(self) -> list[ExpertKey]:
        return sorted(self.intervals, key=lambda e: self.intervals[e][0])

    def start_rows(self) -> dict:
        return {e: iv[0] for e, iv in self.intervals.items()}


def sort_order(freq: np.ndarray) -> list[ExpertKey]:
    """Experts by descending frequency, ties by (layer, expert)."""
    L, K = freq.shape
    keys = [(l, e) for l in range(L) for e in range(K)]
    return sorted(keys, key=lambda x: (-freq[x], x))


def place_experts(p: PlacementProblem) -> PlacementResult:
    d, tau, n = p.delta, p.tau, p.K * p.L
    intervals = {}
    hot = []
    for i, key in enumerate(sort_order(p.freq), start=1):
        if i <= tau:
            a = (i - 1) * d
            hot.append(key)
        else:
            a = p.Phi - (n - i + 1) * d
        intervals[key] = (a, a + d - 1)
    return PlacementResult(intervals, frozenset(hot), d, p.Phi)


def tiers_of_interval(a: int, b: int, table: TierTable) -> tuple[int, ...]:
    return tuple(range(table.tier_of_row(a), table.tier_of_row(b) + 1))


def classify_hot_cold(result: PlacementResult, table: TierTable) -> dict:
    """Tier residency of every expert: {key: {"hot", "tiers", "tier"}}.

    ``tier`` is the slowest tier the expert touches; that is the tier its
    weight streaming is charged at.
    """
    out = {}
    for key, (a, b) in result.intervals.items():
        tiers = tiers_of_interval(a, b, table)
        out[key] = {"hot": key in result.hot, "tiers": tiers, "tier": tiers[-1], "split": len(tiers) > 1}
    return out


def tier_map(result: PlacementResult, table: TierTable, L: int, K: int) -> np.ndarray:
    """(L, K) array of the charged tier per expert."""
    t = np.zeros((L, K), dtype=np.int64)
    for (l, e), (a, b) in result.intervals.items():
        t[l, e] = table.tier_of_row(b)
    return t


def problem_for(model: ModelConfig, sys: SystemConfig, freq: np.ndarray, phi: int | None = None) -> PlacementProblem:
    """Placement problem of a model on a system; shared experts count as extra always-used experts.

    ``phi`` defaults to the bank rows below the non-NMP data, which sits at
    the top of the slowest tier.
    """
    L, K = model.num_layers, model.experts_per_layer + model.shared_experts
    f = np.asarray(freq, dtype=float)
    if model.shared_experts and f.shape[1] == model.experts_per_layer:
        f = np.hstack([f, np.ones((L, model.shared_experts))])
    if phi is None:
        phi = sys.rows_per_bank - non_nmp_rows(model, sys)
    return PlacementProblem(
        L=L,
        K=K,
        k=model.active_experts + model.shared_experts,
        freq=f,
        S_E=model.expert_bytes,
        N_bank=sys.n_bank,
        S_rb=sys.row_buffer_bytes,
        Phi=phi,
    )


def non_nmp_rows(model: ModelConfig, sys: SystemConfig) -> int:
    return math.ceil(model.non_nmp_bytes / (sys.n_bank * sys.row_buffer_bytes))


def kv_rows_available(result: PlacementResult, table: TierTable, kv_tier: int) -> int:
    """Free rows per bank in ``kv_tier`` between the hot and cold regions."""
    lo, hi = table.tier_start(kv_tier), table.tier_start(kv_tier) + table.rows_per_tier
    used = 0
    for a, b in result.intervals.values():
        used += max(0, min(b + 1, hi) - max(a, lo))
    free = hi - lo - used
    if result.phi < hi:
        free -= hi - max(result.phi, lo)
    return max(0, free)


@dataclass(frozen=True)
class SwapPlan:
    pairs: tuple[tuple[int, int], ...]  # per-bank row exchanges, executed in order
    rows_moved: int

    @property
    def empty(self) -> bool:
        return not self.pairs


def _check_dims(current: PlacementResult, target: PlacementResult) -> None:
    if current.delta_rows != target.delta_rows or set(current.intervals) != set(target.intervals):
        raise PlacementError("placements describe different problems")


def plan_swaps(current: PlacementResult, target: PlacementResult) -> SwapPlan:
    """Row-pair exchanges that turn ``current`` into ``target``.

    The slot permutation is split into cycles; a cycle of ``c`` experts
    costs ``c - 1`` expert exchanges of ``delta`` row pairs each.
    """
    _check_dims(current, target)
    d = current.delta_rows
    # slot (start row) -> expert now living there; mutated as swaps apply
    at = {iv[0]: key for key, iv in current.intervals.items()}
    where = {key: iv[0] for key, iv in current.intervals.items()}
    pairs = []
    for key in sorted(target.intervals):
        want = target.intervals[key][0]
        here = where[key]
        if here == want:
            continue
        if want not in at:
            raise PlacementError(f"target slot {want} is not a slot of the current layout")
        other = at[want]
        pairs += [(here + r, want + r) for r in range(d)]
        at[here], at[want] = other, key
        where[other], where[key] = here, want
    return SwapPlan(tuple(pairs), 2 * len(pairs))


def apply_swaps(layout: PlacementResult, plan: SwapPlan) -> PlacementResult:
    """Replay ``plan`` row by row on ``layout`` (used to check plans)."""
    row_owner = {}
    for key, (a, b) in layout.intervals.items():
        for r in range(a, b + 1):
            row_owner[r] = (key, r - a)
    for x, y in plan.pairs:
        row_owner[x], row_owner[y] = row_owner.get(y), row_owner.get(x)
    starts = {}
    for r, owner in row_owner.items():
        if owner is None:
            continue
        key, off = owner
        if off == 0:
            starts[key] = r
    d = layout.delta_rows
    for key, (a, b) in layout.intervals.items():
        s = starts[key]
        if any(row_owner.get(s + i) != (key, i) for i in range(d)):
            raise PlacementError(f"expert {key} is no longer contiguous after the swaps")
    intervals = {key: (s, s + d - 1) for key, s in starts.items()}
    hot_rows = sorted(iv[0] for iv in intervals.values())[: len(layout.hot)]
    hot = frozenset(k for k, iv in intervals.items() if iv[0] in set(hot_rows))
    return PlacementResult(intervals, hot, d, layout.phi)


def tier_equivalent_target(current: PlacementResult, target: PlacementResult, table: TierTable) -> PlacementResult:
    """Relabel ``target`` so experts already in the right tier do not move.

    Within one tier every slot has the same timing, so the target only
    fixes which experts share a tier. Experts whose current tier matches
    their target tier keep their slot. An expert entering a tier takes,
    when possible, the slot of an expert leaving towards its own source
    tier, so most moves become direct exchanges.
    """
    _check_dims(current, target)

    def tier_of(iv):
        return table.tier_of_row(iv[1])

    want = {key: tier_of(iv) for key, iv in target.intervals.items()}
    have = {key: tier_of(iv) for key, iv in current.intervals.items()}
    intervals = {key: current.intervals[key] for key in want if want[key] == have[key]}
    # experts leaving each tier, grouped by destination tier
    leaving: dict[tuple[int, int], list] = {}
    movers = sorted((k for k in want if want[k] != have[k]), key=lambda k: target.intervals[k][0])
    for key in sorted(movers, key=lambda k: current.intervals[k][0]):
        leaving.setdefault((have[key], want[key]), []).append(key)
    for key in movers:
        if key in intervals:
            continue
        partners = [o for o in leaving.get((want[key], have[key]), []) if o not in intervals]
        if partners:
            other = partners[0]
            intervals[key] = current.intervals[other]
            intervals[other] = current.intervals[key]
    # remaining moves form longer cycles; fill the free slots in order
    taken = set(intervals.values())
    free: dict[int, list] = {}
    for key in sorted(movers, key=lambda k: current.intervals[k][0]):
        iv = current.intervals[key]
        if iv not in taken:
            free.setdefault(have[key], []).append(iv)
    for key in movers:
        if key not in intervals:
            intervals[key] = free[want[key]].pop(0)
    return PlacementResult(intervals, target.hot, target.delta_rows, target.phi)


def swap_cost(plan: SwapPlan, table: TierTable, sys: SystemConfig) -> tuple[float, float]:
    """(ns, pJ) of a swap plan.

    Every bank exchanges its own shard rows in parallel, one row pair at a
    time through the row-swap buffer: two reads and two writes per pair.
    """
    ns = 0.0
    for a, b in plan.pairs:
        ns += 2 * (table.trc(table.tier_of_row(a)) + table.trc(table.tier_of_row(b)))
    row_bits = sys.row_buffer_bytes * 8
    pj = len(plan.pairs) * sys.n_bank * 4 * row_bits * sys.energy_per_bit_dram
    return ns, pj
