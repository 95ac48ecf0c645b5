"""Decode attention on the near-memory processor.

KV heads are spread over the chips round-robin. On a chip the PUs form
equal groups of ring neighbours; each group owns a set of heads and keeps
every head's KV cache split along the sequence across its PUs. Softmax is
computed in three phases with two scalar exchanges around the group.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np

from .config import ModelConfig, NmpSpec, SystemConfig
from .energy import Energy
from .engine import Task, chain, schedule
from .nmp import GemmShape, all_gather_time, collective_link_bytes, gemm_time, reduce_scatter_time, scalar_exchange_time, sfe_time
from .timing import TierTable


class KvCapacityError(RuntimeError):
    pass


@dataclass(frozen=True)
class PuGroupPlan:
    groups: tuple[tuple[int, int], ...]  # [start, stop) PU ranges on one chip
    heads_per_group: int
    head_assignment: tuple[int, ...]  # head -> group
    interleave: bool
    heads_per_chip: int
    total_heads: int

    @property
    def group_size(self) -> int:
        a, b = self.groups[0]
        return b - a

    @property
    def degenerate(self) -> bool:
        return self.heads_per_chip < 2


def _pow2_floor(x: int) -> int:
    return 1 << (max(1, x).bit_length() - 1)


def form_groups(sys: SystemConfig, model: ModelConfig, batch_heads: int) -> PuGroupPlan:
    """Group the PUs of one chip for ``batch_heads`` KV heads spread over all chips.

    Group count targets two heads per group and keeps at least two PUs per
    group; it is a power of two so equal groups tile the ring.
    """
    if batch_heads < 1:
        raise ValueError("batch_heads must be >= 1")
    pus = sys.nmp.pus_per_chip
    heads = math.ceil(batch_heads / sys.num_chips)
    n_groups = min(_pow2_floor(heads // 2), max(1, pus // 2))
    while pus % n_groups:
        n_groups //= 2
    size = pus // n_groups
    groups = tuple((g * size, (g + 1) * size) for g in range(n_groups))
    assignment = tuple(h % n_groups for h in range(heads))
    return PuGroupPlan(
        groups=groups,
        heads_per_group=math.ceil(heads / n_groups),
        head_assignment=assignment,
        interleave=heads >= 2,
        heads_per_chip=heads,
        total_heads=batch_heads,
    )


@dataclass(frozen=True)
class KvLayout:
    """Per-PU token counts of one head's KV inside its group.

    All heads of a group receive the same appends, so one count vector
    describes every head. ``capacity`` is the per-PU token limit.
    """

    counts: tuple[int, ...]
    cursor: int = 0
    capacity: int | None = None

    @classmethod
    def empty(cls, group_size: int, capacity: int | None = None) -> "KvLayout":
        if group_size < 1:
            raise ValueError("group_size must be >= 1")
        return cls((0,) * group_size, 0, capacity)

    @classmethod
    def balanced(cls, group_size: int, tokens: int, capacity: int | None = None) -> "KvLayout":
        return kv_append(cls.empty(group_size, capacity), tokens)

    @property
    def tokens(self) -> int:
        return sum(self.counts)

    @property
    def max_slice(self) -> int:
        return max(self.counts)


def kv_append(kv: KvLayout, new_tokens: int) -> KvLayout:
    if new_tokens < 0:
        raise ValueError("new_tokens must be >= 0")
    g = len(kv.counts)
    full, rest = divmod(new_tokens, g)
    counts = [c + full for c in kv.counts]
    for i in range(rest):
        counts[(kv.cursor + i) % g] += 1
    if kv.capacity is not None and max(counts) > kv.capacity:
        raise KvCapacityError(f"KV region full: {max(counts)} tokens on one PU exceeds {kv.capacity}")
    return KvLayout(tuple(counts), (kv.cursor + rest) % g, kv.capacity)


@dataclass
class DistributedSoftmaxState:
    local_max: np.ndarray
    global_max: float = float("-inf")
    local_expsum: np.ndarray = field(default_factory=lambda: np.zeros(0))
    global_sum: float = 0.0
    exchange_rounds: int = 0


def distributed_softmax_reference(scores: list, return_state: bool = False):
    """Softmax over scores split across PUs, using two scalar exchanges.

    Phase 1 takes local maxima and exchanges them, phase 2 takes local sums
    of exponentials against the global maximum and exchanges them, phase 3
    normalizes locally.
    """
    parts = [np.asarray(s, dtype=np.float64).ravel() for s in scores]
    if not parts or sum(p.size for p in parts) == 0:
        raise ValueError("at least one score is required")
    local_max = np.array([p.max() if p.size else -np.inf for p in parts])
    st = DistributedSoftmaxState(local_max=local_max)

    st.global_max = float(local_max.max())  # exchange 1
    st.exchange_rounds += 1

    exps = [np.exp(p - st.global_max) for p in parts]
    st.local_expsum = np.array([e.sum() for e in exps])
    st.global_sum = float(st.local_expsum.sum())  # exchange 2
    st.exchange_rounds += 1

    weights = [e / st.global_sum for e in exps]
    return (weights, st) if return_state else weights


@dataclass(frozen=True)
class HeadStages:
    query_gather: float
    qk: float
    local_max: float
    exchange_max: float
    expsum: float
    exchange_sum: float
    normalize: float
    av: float
    reduce_scatter: float

    @property
    def softmax(self) -> float:
        return self.local_max + self.exchange_max + self.expsum + self.exchange_sum + self.normalize


@functools.lru_cache(maxsize=65536)
def head_stages(slice_tokens: int, group_size: int, model: ModelConfig, table: TierTable, spec: NmpSpec, kv_tier: int) -> HeadStages:
    q, d, bpp = model.q_per_kv, model.head_dim, model.bytes_per_param
    pes = spec.pes_per_pu
    qbytes = q * d * bpp
    if slice_tokens:
        qk = gemm_time(spec, GemmShape(q, d, slice_tokens, bpp), pes, kv_tier, table, max_pes=pes)
        short, long_ = sorted((slice_tokens, d))
        av = gemm_time(spec, GemmShape(q, short, long_, bpp), pes, kv_tier, table, max_pes=pes)
    else:
        qk = av = 0.0
    elems = q * slice_tokens
    return HeadStages(
        query_gather=all_gather_time(spec, group_size, qbytes / group_size),
        qk=qk,
        local_max=sfe_time(spec, elems, spec.sfe_cycles_max),
        exchange_max=scalar_exchange_time(spec, group_size),
        expsum=sfe_time(spec, elems, spec.sfe_cycles_exp),
        exchange_sum=scalar_exchange_time(spec, group_size),
        normalize=sfe_time(spec, elems, spec.sfe_cycles_normalize),
        av=av,
        reduce_scatter=reduce_scatter_time(spec, group_size, qbytes / group_size),
    )


def _head_tasks(h: str, st: HeadStages) -> dict[str, Task]:
    return {
        "ag": Task(h + "ag", "ring", st.query_gather),
        "qk": Task(h + "qk", "tensor", st.qk, (h + "ag",)),
        "max": Task(h + "max", "sfe", st.local_max, (h + "qk",)),
        "x1": Task(h + "x1", "ring", st.exchange_max, (h + "max",)),
        "exp": Task(h + "exp", "sfe", st.expsum, (h + "x1",)),
        "x2": Task(h + "x2", "ring", st.exchange_sum, (h + "exp",)),
        "norm": Task(h + "norm", "sfe", st.normalize, (h + "x2",)),
        "av": Task(h + "av", "tensor", st.av, (h + "norm",)),
        "rs": Task(h + "rs", "ring", st.reduce_scatter, (h + "av",)),
    }


@functools.lru_cache(maxsize=65536)
def group_makespan(stages: HeadStages, heads: int, interleave: bool = True) -> float:
    """Makespan of ``heads`` identical heads on one PU group.

    Heads are taken in FIFO pairs. Within a pair the second head's q x K
    runs while the first head is in softmax, and the first head's
    reduce-scatter runs behind the second head's attn x V.
    """
    if heads <= 0:
        return 0.0
    tasks: list[Task] = []
    if not interleave:
        for i in range(heads):
            tasks += list(_head_tasks(f"h{i}.", stages).values())
        return schedule(chain(tasks)).makespan
    for p in range(0, heads, 2):
        a = _head_tasks(f"h{p}.", stages)
        if p + 1 == heads:
            tasks += list(a.values())
            continue
        b = _head_tasks(f"h{p + 1}.", stages)
        order = ["ag", "qk"]
        tasks += [a[k] for k in order] + [b[k] for k in order]
        tasks += [a[k] for k in ("max", "x1", "exp", "x2", "norm", "av")]
        tasks += [b[k] for k in ("max", "x1", "exp", "x2", "norm")]
        tasks += [a["rs"], b["av"], b["rs"]]
    return schedule(tasks).makespan


def attention_energy(seq_len: int, heads: int, group_size: int, model: ModelConfig, spec: NmpSpec, e_b: float) -> Energy:
    """Energy of ``heads`` KV heads attending over ``seq_len`` cached tokens."""
    if seq_len <= 0 or heads <= 0:
        return Energy()
    q, d, bpp = model.q_per_kv, model.head_dim, model.bytes_per_param
    kv_bytes = 2 * seq_len * d * bpp
    qbytes = q * d * bpp
    link = 2 * collective_link_bytes(group_size, qbytes / group_size) + 2 * group_size * (group_size - 1) * spec.packet_bytes
    return Energy(
        dram=kv_bytes * 8 * e_b,
        mac=2 * q * seq_len * d * spec.e_mac,
        sram=(kv_bytes + 2 * group_size * qbytes) * 8 * spec.e_sram_bit,
        link=link * 8 * spec.e_link_bit,
        sfe=3 * q * seq_len * spec.e_sfe_op,
    ).scaled(heads)


def attention_latency(
    plan: PuGroupPlan,
    kv: KvLayout | None,
    seq_len: int,
    model: ModelConfig,
    table: TierTable,
    spec: NmpSpec,
    kv_tier: int,
    e_b: float = 0.429,
    interleave: bool = True,
) -> tuple[float, Energy]:
    """Per-layer decode attention time (ns) and energy for every head of the plan.

    ``kv`` describes how each head's ``seq_len`` tokens sit on the group's
    PUs; None means a balanced round-robin layout.
    """
    if seq_len < 1:
        raise ValueError("seq_len must be >= 1")
    if not 0 <= kv_tier < table.num_tiers:
        raise ValueError(f"kv_tier {kv_tier} outside [0, {table.num_tiers})")
    g = plan.group_size
    if kv is None:
        kv = KvLayout.balanced(g, seq_len)
    elif len(kv.counts) != g:
        raise ValueError(f"KV layout spans {len(kv.counts)} PUs, group has {g}")
    st = head_stages(kv.max_slice, g, model, table, spec, kv_tier)
    t = group_makespan(st, plan.heads_per_group, interleave and plan.interleave)
    return t, attention_energy(seq_len, plan.total_heads, g, model, spec, e_b)


def head_trace_rows(
    plan: PuGroupPlan, seq_len: int, model: ModelConfig, table: TierTable, spec: NmpSpec, kv_tier: int, e_b: float = 0.429
) -> list[dict]:
    g = plan.group_size
    st = head_stages(KvLayout.balanced(g, seq_len).max_slice, g, model, table, spec, kv_tier)
    e = attention_energy(seq_len, 1, g, model, spec, e_b).total
    return [
        dict(
            head=h,
            group=grp,
            seq_len=seq_len,
            t_qk=st.qk,
            t_softmax=st.softmax,
            t_av=st.av,
            t_comm=st.query_gather + st.reduce_scatter,
            energy=e,
        )
        for h, grp in enumerate(plan.head_assignment)
    ]
