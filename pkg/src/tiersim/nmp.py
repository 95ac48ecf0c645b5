"""Cost primitives of the logic-die processor.

Times are in ns, energies in pJ, bandwidths in bytes/s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .config import NmpSpec
from .energy import Energy
from .timing import TierTable


@dataclass(frozen=True)
class GemmShape:
    """``m x k`` activations times a ``k x n`` weight. ``n`` is split across PEs."""

    m: int
    k: int
    n: int
    bytes_per_elem: int = 2

    def __post_init__(self):
        if min(self.m, self.k, self.n, self.bytes_per_elem) < 1:
            raise ValueError(f"all GeMM dimensions must be >= 1: {self}")

    @property
    def weight_bytes(self) -> int:
        return self.k * self.n * self.bytes_per_elem

    @property
    def macs(self) -> int:
        return self.m * self.k * self.n


def gemm_compute_ns(spec: NmpSpec, shape: GemmShape, pes: int) -> float:
    tiles = math.ceil(shape.k / spec.mac_rows) * math.ceil(shape.n / (spec.mac_cols * pes))
    return shape.m * tiles / spec.frequency


def gemm_memory_ns(shape: GemmShape, pes: int, tier: int, table: TierTable) -> float:
    return table.trcd(tier) + shape.weight_bytes / (pes * table.bank_bandwidth[tier]) * 1e9


def gemm_time(spec: NmpSpec, shape: GemmShape, pes: int, tier: int, table: TierTable, max_pes: int | None = None) -> float:
    """Roofline time of one GeMM on ``pes`` PEs streaming weights from ``tier``."""
    limit = spec.pes_per_pu * spec.pus_per_chip if max_pes is None else max_pes
    if not 1 <= pes <= limit:
        raise ValueError(f"pes={pes} outside [1, {limit}]")
    return max(gemm_compute_ns(spec, shape, pes), gemm_memory_ns(shape, pes, tier, table))


def sfe_time(spec: NmpSpec, elems: int, cycles_per_elem: int = 1) -> float:
    if elems < 0:
        raise ValueError("elems must be >= 0")
    return math.ceil(elems / spec.simd_width) * cycles_per_elem / spec.frequency


def _ring_steps(spec: NmpSpec, group: int) -> int:
    if group < 1:
        raise ValueError("group must be >= 1")
    if group > spec.pus_per_chip:
        raise ValueError(f"group {group} exceeds {spec.pus_per_chip} PUs")
    # bidirectional ring: data travels both ways
    return math.ceil((group - 1) / 2)


def all_gather_time(spec: NmpSpec, group: int, slice_bytes: float) -> float:
    return _ring_steps(spec, group) * slice_bytes / spec.ring_link_bw * 1e9


def reduce_scatter_time(spec: NmpSpec, group: int, slice_bytes: float) -> float:
    # partial sums are added in the router aggregator on the fly
    return _ring_steps(spec, group) * slice_bytes / spec.ring_link_bw * 1e9


def collective_link_bytes(group: int, slice_bytes: float) -> float:
    """Bytes crossing ring links for one all-gather or reduce-scatter."""
    return group * (group - 1) * slice_bytes


def scalar_exchange_time(spec: NmpSpec, group: int) -> float:
    """One circulation of a packet around a ``group``-PU sub-ring."""
    if group < 1:
        raise ValueError("group must be >= 1")
    hops = group - 1
    return hops * (spec.packet_bytes / spec.ring_link_bw * 1e9 + spec.router_hop_ns)


def compute_energy(spec: NmpSpec, macs: float, sfe_elems: float, sram_bits: float, link_bits: float) -> float:
    return compute_energy_parts(spec, macs, sfe_elems, sram_bits, link_bits).total


def compute_energy_parts(spec: NmpSpec, macs: float, sfe_elems: float, sram_bits: float, link_bits: float) -> Energy:
    if min(macs, sfe_elems, sram_bits, link_bits) < 0:
        raise ValueError("activity counts must be >= 0")
    return Energy(
        mac=macs * spec.e_mac,
        sfe=sfe_elems * spec.e_sfe_op,
        sram=sram_bits * spec.e_sram_bit,
        link=link_bits * spec.e_link_bit,
    )


def peak_tflops(spec: NmpSpec) -> float:
    return spec.total_macs * 2 * spec.frequency * 1e9 / 1e12


def peak_logic_power(spec: NmpSpec, fast_tier_chip_bw: float) -> dict[str, float]:
    """Logic-die power in W with every unit busy for one second."""
    f = spec.frequency * 1e9
    parts = compute_energy_parts(
        spec,
        macs=spec.total_macs * f,
        sfe_elems=spec.pus_per_chip * spec.simd_width * f,
        sram_bits=fast_tier_chip_bw * 8,
        link_bits=spec.pus_per_chip * spec.ring_link_bw * 8,
    )
    out = {k: v * 1e-12 for k, v in parts.as_dict().items() if k in ("mac", "sram", "link", "sfe")}
    out["total"] = sum(out.values())
    return out
