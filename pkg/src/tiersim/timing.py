"""Tiered DRAM timing: staircase latency curve, tier tables, access cost."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .config import SystemConfig


@dataclass(frozen=True)
class TierTiming:
    trcd: tuple[float, ...]
    trp: float = 4.77
    tras_offset: float = 27.50

    def __post_init__(self):
        if not self.trcd:
            raise ValueError("at least one tier is required")
        if any(b <= a for a, b in zip(self.trcd, self.trcd[1:])):
            raise ValueError("trcd must be strictly increasing across tiers")

    @property
    def num_tiers(self) -> int:
        return len(self.trcd)

    @property
    def tras(self) -> tuple[float, ...]:
        return tuple(t + self.tras_offset for t in self.trcd)

    @property
    def trc(self) -> tuple[float, ...]:
        return tuple(self.trp + t for t in self.tras)


@dataclass(frozen=True)
class TierTable:
    """Row-to-tier map of one bank plus per-tier timing and bandwidth.

    Rows are split into equal contiguous ranges; tier 0 holds the lowest row
    addresses. ``tier_last_row`` mirrors the hardware tiering table, which
    stores the last row address of each tier.
    """

    timing: TierTiming
    rows_per_tier: int
    row_buffer_bytes: int
    banks_per_chip: int
    bank_bandwidth: tuple[float, ...]  # bytes/s
    chip_bandwidth: tuple[float, ...]  # bytes/s
    # Timing actually charged per tier; equals timing.trcd/trc unless the
    # table was flattened to worst-case timing.
    eff_trcd: tuple[float, ...]
    eff_trc: tuple[float, ...]

    @property
    def num_tiers(self) -> int:
        return self.timing.num_tiers

    @property
    def num_rows(self) -> int:
        return self.rows_per_tier * self.num_tiers

    @property
    def tier_last_row(self) -> tuple[int, ...]:
        return tuple((t + 1) * self.rows_per_tier - 1 for t in range(self.num_tiers))

    def tier_of_row(self, row: int) -> int:
        if not 0 <= row < self.num_rows:
            raise IndexError(f"row {row} outside [0, {self.num_rows})")
        return row // self.rows_per_tier

    def tier_start(self, tier: int) -> int:
        return tier * self.rows_per_tier

    def trcd(self, tier: int) -> float:
        return self.eff_trcd[tier]

    def trc(self, tier: int) -> float:
        return self.eff_trc[tier]

    def flattened(self) -> "TierTable":
        """Same row map, every tier charged the slowest tier's timing."""
        n = self.num_tiers
        return replace(
            self,
            eff_trcd=(self.eff_trcd[-1],) * n,
            eff_trc=(self.eff_trc[-1],) * n,
            bank_bandwidth=(self.bank_bandwidth[-1],) * n,
            chip_bandwidth=(self.chip_bandwidth[-1],) * n,
        )


def _table(timing: TierTiming, rows_per_tier: int, row_bytes: int, banks_per_chip: int) -> TierTable:
    trc = timing.trc
    bank_bw = tuple(row_bytes / (t * 1e-9) for t in trc)
    return TierTable(
        timing=timing,
        rows_per_tier=rows_per_tier,
        row_buffer_bytes=row_bytes,
        banks_per_chip=banks_per_chip,
        bank_bandwidth=bank_bw,
        chip_bandwidth=tuple(banks_per_chip * b for b in bank_bw),
        eff_trcd=tuple(timing.trcd),
        eff_trc=trc,
    )


def build_tier_table(sys: SystemConfig) -> TierTable:
    if sys.dram_layers % sys.num_tiers:
        raise ValueError(f"{sys.dram_layers} layers not divisible by {sys.num_tiers} tiers")
    if sys.rows_per_bank % sys.num_tiers:
        raise ValueError(f"{sys.rows_per_bank} rows per bank not divisible by {sys.num_tiers} tiers")
    timing = TierTiming(tuple(sys.trcd), sys.trp, sys.tras_offset)
    return _table(timing, sys.rows_per_bank // sys.num_tiers, sys.row_buffer_bytes, sys.banks_per_chip)


@dataclass(frozen=True)
class StaircaseModel:
    """tRCD as a quadratic of tier position.

    ``coeffs`` are (a, b, c) in ``a + b*x + c*x**2`` where x is the tier
    index of the fitted table; a wordline layer ``l`` (0 = fastest) maps to
    ``x = (l + 1) / layers_per_tier - 1`` so each tier's deepest layer lands
    on its integer index.
    """

    coeffs: tuple[float, float, float]
    fit_layers: int
    fit_tiers: int

    @property
    def layers_per_tier(self) -> float:
        return self.fit_layers / self.fit_tiers

    def at_position(self, x: float) -> float:
        a, b, c = self.coeffs
        return a + b * x + c * x * x

    def at_layer(self, layer: int) -> float:
        return self.at_position((layer + 1) / self.layers_per_tier - 1)


def fit_staircase(trcd: TierTiming | Sequence[float], layers: int) -> StaircaseModel:
    values = np.asarray(trcd.trcd if isinstance(trcd, TierTiming) else trcd, dtype=float)
    if values.size < 3:
        raise ValueError(f"need at least 3 tier points for a quadratic fit, got {values.size}")
    if layers < values.size or layers % values.size:
        raise ValueError(f"{layers} layers cannot be split into {values.size} tiers")
    x = np.arange(values.size, dtype=float)
    c, b, a = np.polyfit(x, values, 2)
    model = StaircaseModel((float(a), float(b), float(c)), layers, int(values.size))
    fitted = np.array([model.at_position(xi) for xi in x])
    resid = np.abs(fitted - values) / np.maximum(np.abs(values), 1e-12)
    if resid.max() >= 0.02:
        raise ValueError(f"quadratic fit residual {resid.max():.3%} exceeds 2%")
    return model


def retier(model: StaircaseModel, layers: int, num_tiers: int, trp: float = 4.77, tras_offset: float = 27.50) -> TierTiming:
    """Per-tier worst-case tRCD for a stack of ``layers`` wordline layers."""
    if layers <= 0:
        raise ValueError("layers must be positive")
    if num_tiers <= 0 or layers % num_tiers:
        raise ValueError(f"{layers} layers not divisible by {num_tiers} tiers")
    if layers > model.fit_layers:
        raise ValueError(f"model was fitted at {model.fit_layers} layers; cannot extrapolate to {layers}")
    per = layers // num_tiers
    trcd = tuple(model.at_layer((t + 1) * per - 1) for t in range(num_tiers))
    return TierTiming(trcd, trp, tras_offset)


def system_with_timing(sys: SystemConfig, timing: TierTiming, layers: int | None = None) -> SystemConfig:
    return replace(
        sys,
        trcd=tuple(round(t, 6) for t in timing.trcd),
        trp=timing.trp,
        tras_offset=timing.tras_offset,
        num_tiers=timing.num_tiers,
        dram_layers=sys.dram_layers if layers is None else layers,
    )


def access_time(table: TierTable, row: int, nbytes: int) -> float:
    """ns to open ``row`` and stream ``nbytes`` from one bank."""
    if nbytes <= 0:
        raise ValueError("nbytes must be positive")
    tier = table.tier_of_row(row)
    rows = math.ceil(nbytes / table.row_buffer_bytes)
    return table.trcd(tier) + rows * table.trc(tier)


def dram_energy(bits: float, energy_per_bit: float = 0.429) -> float:
    """pJ to move ``bits`` between the DRAM layers and the logic die."""
    if bits < 0:
        raise ValueError("bits must be >= 0")
    return bits * energy_per_bit
