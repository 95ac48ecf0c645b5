"""Per-chip power and area feasibility of the logic die.

Power: the DRAM die draws ``bw_fast_tier * 8 * e_b``; the logic die draws
``n_mac * f_logic * e_mac + p_misc`` and must stay under ``p_peak``. Area:
the power delivery TSVs plus MACs, PHY, peripherals and misc logic must fit
in ``alpha * a_chip``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

from .config import BudgetParams, SystemConfig
from .timing import build_tier_table


class BudgetError(ValueError):
    pass


def fast_tier_bandwidth(b: BudgetParams, sys: Optional[SystemConfig] = None) -> float:
    if b.bw_fast_tier is not None:
        return b.bw_fast_tier
    return build_tier_table(sys or SystemConfig()).chip_bandwidth[0]


@dataclass(frozen=True)
class PowerReport:
    p_dram: float
    p_compute: float
    p_misc: float
    p_logic: float
    total: float
    p_peak: float
    p_dram_cap: float
    feasible: bool


@dataclass(frozen=True)
class AreaReport:
    a_pd: float
    a_mac_total: float
    total: float
    limit: float
    utilization: float
    feasible: bool
    p_dram_c: float
    p_dram_p: float


def check_power(b: BudgetParams, sys: Optional[SystemConfig] = None) -> PowerReport:
    """Power ledger in W.

    The logic die (MACs plus misc) is held to ``p_peak``; the DRAM die has
    its own cap, ``p_dram_peak``, which defaults to what the fast tier
    draws at full bandwidth.
    """
    p_dram = fast_tier_bandwidth(b, sys) * 8 * b.e_b * 1e-12
    p_compute = b.n_mac * b.f_logic * 1e9 * b.e_mac * 1e-12
    p_logic = p_compute + b.p_misc
    cap = p_dram if b.p_dram_peak is None else b.p_dram_peak
    return PowerReport(
        p_dram=p_dram,
        p_compute=p_compute,
        p_misc=b.p_misc,
        p_logic=p_logic,
        total=p_dram + p_logic,
        p_peak=b.p_peak,
        p_dram_cap=cap,
        feasible=p_logic <= b.p_peak and p_dram <= cap * (1 + 1e-12),
    )


def dram_rails(b: BudgetParams, p_dram: float) -> tuple[float, float]:
    if b.p_dram_c is not None:
        return b.p_dram_c, b.p_dram_p
    return p_dram * b.dram_core_fraction, p_dram * (1 - b.dram_core_fraction)


def _amps(p: float, v: float, name: str) -> float:
    if p == 0:
        return 0.0
    if v <= 0:
        raise BudgetError(f"{name} must be > 0 when its rail carries power")
    return p / v


def check_area(b: BudgetParams, sys: Optional[SystemConfig] = None) -> AreaReport:
    """Area ledger in mm^2."""
    pw = check_power(b, sys)
    p_c, p_p = dram_rails(b, pw.p_dram)
    current = _amps(p_c, b.v_dram_c, "v_dram_c") + _amps(p_p, b.v_dram_p, "v_dram_p") + _amps(pw.p_logic, b.v_logic, "v_logic")
    a_pd = current * (b.a_tsv * 1e-6 / b.i_tsv) * b.tsv_redundancy
    a_mac_total = b.n_mac * b.a_mac
    total = a_pd + a_mac_total + b.a_phy + b.a_peri + b.a_misc
    limit = b.alpha * b.a_chip
    return AreaReport(
        a_pd=a_pd,
        a_mac_total=a_mac_total,
        total=total,
        limit=limit,
        utilization=total / b.a_chip,
        feasible=total <= limit,
        p_dram_c=p_c,
        p_dram_p=p_p,
    )


def feasible(b: BudgetParams, sys: Optional[SystemConfig] = None) -> bool:
    return check_power(b, sys).feasible and check_area(b, sys).feasible


def max_macs(b: BudgetParams, sys: Optional[SystemConfig] = None) -> int:
    """Largest MAC count meeting both budgets (binary search)."""
    if b.e_mac <= 0 or b.f_logic <= 0:
        raise BudgetError("e_mac and f_logic must be > 0")
    if not feasible(replace(b, n_mac=0), sys):
        raise BudgetError("budgets are infeasible even with zero MACs")
    lo, hi = 0, 1
    while feasible(replace(b, n_mac=hi), sys):
        lo, hi = hi, hi * 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if feasible(replace(b, n_mac=mid), sys):
            lo = mid
        else:
            hi = mid
    return lo


def ledger(b: BudgetParams, sys: Optional[SystemConfig] = None) -> dict:
    pw, ar = check_power(b, sys), check_area(b, sys)
    return {
        "bw_fast_tier_TBps": fast_tier_bandwidth(b, sys) / 1e12,
        "p_dram_W": pw.p_dram,
        "p_dram_c_W": ar.p_dram_c,
        "p_dram_p_W": ar.p_dram_p,
        "p_compute_W": pw.p_compute,
        "p_misc_W": pw.p_misc,
        "p_logic_W": pw.p_logic,
        "p_peak_W": pw.p_peak,
        "power_feasible": pw.feasible,
        "a_pd_mm2": ar.a_pd,
        "a_mac_mm2": ar.a_mac_total,
        "a_phy_mm2": b.a_phy,
        "a_peri_mm2": b.a_peri,
        "a_misc_mm2": b.a_misc,
        "a_total_mm2": ar.total,
        "a_limit_mm2": ar.limit,
        "utilization": ar.utilization,
        "area_feasible": ar.feasible,
        "max_macs": max_macs(b, sys),
    }
