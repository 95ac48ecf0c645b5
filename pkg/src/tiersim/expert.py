"""MoE layer execution on the near-memory processor.

All PUs of all chips process one expert at a time (tensor parallel over the
intermediate dimension). The projection-up weights are split by columns and
the projection-down weight by rows, so the activation and Hadamard product
stay PU-local and only the final partial sums travel over the ring.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

from .config import ModelConfig, NmpSpec, SystemConfig
from .energy import Energy
from .engine import Task, chain, schedule
from .nmp import GemmShape, collective_link_bytes, gemm_time, reduce_scatter_time, all_gather_time, sfe_time
from .timing import TierTable


def balanced_ranges(length: int, parts: int) -> tuple[tuple[int, int], ...]:
    """Split ``range(length)`` into ``parts`` contiguous ranges whose sizes differ by at most one."""
    if parts < 1 or length < parts:
        raise ValueError(f"cannot split {length} into {parts} non-empty parts")
    base, extra = divmod(length, parts)
    out, start = [], 0
    for i in range(parts):
        size = base + (1 if i < extra else 0)
        out.append((start, start + size))
        start += size
    return tuple(out)


@dataclass(frozen=True)
class ExpertPartitionPlan:
    pu_count: int
    pes_per_pu: int
    hidden_dim: int
    intermediate_dim: int
    bytes_per_param: int
    num_chips: int
    pus_per_chip: int
    w12_col_slices: tuple[tuple[int, int], ...]  # columns of W1/W2 per PU
    w3_row_slices: tuple[tuple[int, int], ...]  # rows of W3 per PU
    # Each PU slice is split across its PEs along the slice's longer
    # dimension: "k" (hidden) or "n" (intermediate slice).
    pe_split_dim: str
    pe_subtiles: tuple[tuple[tuple[int, int], ...], ...]

    @property
    def max_slice(self) -> int:
        return max(b - a for a, b in self.w12_col_slices)

    def pu_weight_bytes(self, pu: int) -> int:
        a, b = self.w12_col_slices[pu]
        return 3 * self.hidden_dim * (b - a) * self.bytes_per_param

    def pu_gemm_shape(self, tokens: int) -> GemmShape:
        """Critical-path PU GeMM, oriented so the PE split runs along ``n``."""
        n_p = self.max_slice
        short, long_ = sorted((self.hidden_dim, n_p))
        return GemmShape(tokens, short, long_, self.bytes_per_param)


def plan_partition(model: ModelConfig, sys: SystemConfig) -> ExpertPartitionPlan:
    pus = sys.total_pus
    n = model.intermediate_dim
    if n < pus:
        raise ValueError(f"intermediate_dim {n} smaller than {pus} PUs")
    cols = balanced_ranges(n, pus)
    pes = sys.nmp.pes_per_pu
    subtiles = []
    split_dim = "k"
    for a, b in cols:
        width = b - a
        if model.hidden_dim >= width:
            split_dim = "k"
            subtiles.append(balanced_ranges(model.hidden_dim, pes))
        else:
            split_dim = "n"
            subtiles.append(tuple((a + x, a + y) for x, y in balanced_ranges(width, pes)))
    return ExpertPartitionPlan(
        pu_count=pus,
        pes_per_pu=pes,
        hidden_dim=model.hidden_dim,
        intermediate_dim=n,
        bytes_per_param=model.bytes_per_param,
        num_chips=sys.num_chips,
        pus_per_chip=sys.nmp.pus_per_chip,
        w12_col_slices=cols,
        w3_row_slices=cols,
        pe_split_dim=split_dim,
        pe_subtiles=tuple(subtiles),
    )


@dataclass(frozen=True)
class ExpertInvocation:
    layer: int
    index: int
    tokens: int
    tier: int

    def __post_init__(self):
        if self.tokens < 0:
            raise ValueError("tokens must be >= 0")
        if self.tier < 0:
            raise ValueError("tier must be >= 0")


@dataclass(frozen=True)
class ExpertStages:
    """Per-stage durations (ns) of one expert on the critical PU."""

    gemm1: float
    gemm2: float
    activation: float
    hadamard: float
    gemm3: float
    reduce_scatter: float
    weighted_sum: float

    @property
    def serial(self) -> float:
        return (
            self.gemm1 + self.gemm2 + self.activation + self.hadamard + self.gemm3 + self.reduce_scatter + self.weighted_sum
        )


@functools.lru_cache(maxsize=65536)
def expert_stages(plan: ExpertPartitionPlan, tokens: int, tier: int, table: TierTable, spec: NmpSpec) -> ExpertStages:
    if tier >= table.num_tiers:
        raise ValueError(f"tier {tier} outside table with {table.num_tiers} tiers")
    shape = plan.pu_gemm_shape(tokens)
    g = gemm_time(spec, shape, plan.pes_per_pu, tier, table, max_pes=plan.pes_per_pu)
    elems = tokens * plan.max_slice
    out_slice = tokens * plan.hidden_dim * plan.bytes_per_param / plan.pus_per_chip
    return ExpertStages(
        gemm1=g,
        gemm2=g,
        activation=sfe_time(spec, elems, spec.sfe_cycles_activation),
        hadamard=sfe_time(spec, elems, spec.sfe_cycles_hadamard),
        gemm3=g,
        reduce_scatter=reduce_scatter_time(spec, plan.pus_per_chip, out_slice),
        weighted_sum=sfe_time(spec, -(-tokens * plan.hidden_dim // plan.pus_per_chip), spec.sfe_cycles_weighted_sum),
    )


def expert_energy(plan: ExpertPartitionPlan, tokens: int, spec: NmpSpec, e_b: float) -> Energy:
    """Whole-system energy of one expert; independent of the schedule."""
    if tokens == 0:
        return Energy()
    h, n, bpp = plan.hidden_dim, plan.intermediate_dim, plan.bytes_per_param
    weight_bytes = 3 * h * n * bpp
    act_bytes = (
        plan.pu_count * tokens * h  # X1 broadcast to every PU
        + 3 * tokens * n  # Z1, Z2, X2
        + plan.num_chips * tokens * h  # per-chip Z3 partials
    ) * bpp
    out_slice = tokens * h * bpp / plan.pus_per_chip
    link_bytes = plan.num_chips * collective_link_bytes(plan.pus_per_chip, out_slice)
    return Energy(
        dram=weight_bytes * 8 * e_b,
        mac=3 * tokens * h * n * spec.e_mac,
        sram=(weight_bytes + act_bytes) * 8 * spec.e_sram_bit,
        link=link_bytes * 8 * spec.e_link_bit,
        sfe=(2 * tokens * n + plan.num_chips * tokens * h) * spec.e_sfe_op,
    )


def _expert_tasks(i: int, st: ExpertStages, overlap: bool, prev_g3: str | None, final_ws: bool) -> list[Task]:
    p = f"e{i}."
    first = (prev_g3,) if prev_g3 else ()
    tasks = [
        Task(p + "gemm1", "tensor", st.gemm1, first),
        Task(p + "gemm2", "tensor", st.gemm2, (p + "gemm1",)),
        Task(p + "act", "sfe", st.activation, (p + "gemm1",)),
        Task(p + "hadamard", "sfe", st.hadamard, (p + "gemm2", p + "act")),
        Task(p + "gemm3", "tensor", st.gemm3, (p + "hadamard",)),
        Task(p + "rs", "ring", st.reduce_scatter, (p + "gemm3",)),
    ]
    if not final_ws:
        tasks.append(Task(p + "ws", "sfe", st.weighted_sum, (p + "rs",)))
    if not overlap:
        tasks = chain(tasks)
    return tasks


def schedule_experts(stages: list[ExpertStages], overlap: bool = True) -> float:
    """Makespan (ns) of a sequence of experts sharing the chip.

    With ``overlap`` the activation runs beside GeMM2, each expert's
    reduce-scatter and weighted sum run beside the next expert's GeMM1, and
    the weighted sum is issued per expert. Without it every stage is serial
    and the weighted sum runs once after the last expert.
    """
    if not stages:
        return 0.0
    tasks: list[Task] = []
    prev = None
    for i, st in enumerate(stages):
        tasks += _expert_tasks(i, st, overlap, prev, final_ws=not overlap)
        prev = f"e{i}.gemm3"
    if not overlap:
        tasks = chain(tasks + [Task("ws", "sfe", sum(s.weighted_sum for s in stages))])
    return schedule(tasks).makespan


def expert_latency(
    plan: ExpertPartitionPlan,
    inv: ExpertInvocation,
    table: TierTable,
    spec: NmpSpec,
    overlap: bool = True,
    e_b: float = 0.429,
) -> tuple[float, Energy]:
    if inv.tokens == 0:
        return 0.0, Energy()
    st = expert_stages(plan, inv.tokens, inv.tier, table, spec)
    return schedule_experts([st], overlap), expert_energy(plan, inv.tokens, spec, e_b)


@dataclass(frozen=True)
class LayerResult:
    time: float
    energy: Energy
    rows: tuple[dict, ...]


@functools.lru_cache(maxsize=65536)
def layer_cost(
    key: tuple[tuple[int, int], ...],
    batch_tokens: int,
    plan: ExpertPartitionPlan,
    table: TierTable,
    sys: SystemConfig,
    overlap: bool,
) -> tuple[float, tuple[float, ...]]:
    spec = sys.nmp
    token_bytes = batch_tokens * plan.hidden_dim * plan.bytes_per_param
    t_in = token_bytes / sys.interface_bw * 1e9  # every chip receives all tokens
    t_ag = all_gather_time(spec, spec.pus_per_chip, token_bytes / spec.pus_per_chip)
    t_out = token_bytes / sys.interface_bw * 1e9
    stages = [expert_stages(plan, m, tier, table, spec) for m, tier in key]
    t_exp = schedule_experts(stages, overlap)

    e = Energy()
    for m, _ in key:
        e += expert_energy(plan, m, spec, sys.energy_per_bit_dram)
    if batch_tokens:
        iface_bits = 2 * sys.num_chips * token_bytes * 8
        e += Energy(
            interface=iface_bits * sys.interface_pj_per_bit,
            link=sys.num_chips * collective_link_bytes(spec.pus_per_chip, token_bytes / spec.pus_per_chip) * 8 * spec.e_link_bit,
        )
    total = t_in + t_ag + t_exp + t_out if batch_tokens else 0.0
    return total, tuple(e.as_dict().values())


def moe_layer_exec(
    invocations: list[ExpertInvocation],
    plan: ExpertPartitionPlan,
    table: TierTable,
    sys: SystemConfig,
    batch_tokens: int | None = None,
    overlap: bool = True,
    trace: bool = False,
) -> LayerResult:
    """Time and energy of one MoE layer for a batch.

    Covers the token upload over the xPU interface, the ring all-gather of
    the token slices, the sequential experts and the result readback.
    """
    active = [inv for inv in invocations if inv.tokens > 0]
    if batch_tokens is None:
        batch_tokens = max((inv.tokens for inv in active), default=0)
    key = tuple((inv.tokens, inv.tier) for inv in active)
    total, parts = layer_cost(key, batch_tokens, plan, table, sys, overlap)
    rows: tuple[dict, ...] = ()
    if trace:
        out = []
        for inv in active:
            st = expert_stages(plan, inv.tokens, inv.tier, table, sys.nmp)
            en = expert_energy(plan, inv.tokens, sys.nmp, sys.energy_per_bit_dram)
            out.append(
                dict(
                    layer=inv.layer,
                    expert=inv.index,
                    M=inv.tokens,
                    tier=inv.tier,
                    t_gemm1=st.gemm1,
                    t_gemm2=st.gemm2,
                    t_gemm3=st.gemm3,
                    t_comm=st.reduce_scatter,
                    t_sfe=st.activation + st.hadamard + st.weighted_sum,
                    **{f"e_{k}": v for k, v in en.as_dict().items()},
                )
            )
        rows = tuple(out)
    return LayerResult(total, Energy(*parts), rows)
