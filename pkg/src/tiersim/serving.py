"""End-to-end serving loop: batching, placement, prefill on the xPU, decode on the NMP."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .attention import KvCapacityError, attention_energy, attention_latency, form_groups
from .config import Config, ModelConfig, SystemConfig, XpuSpec, dumps
from .energy import COMPONENTS, Energy
from .expert import layer_cost, plan_partition
from .placement import (
    PlacementResult,
    place_experts,
    plan_swaps,
    problem_for,
    swap_cost,
    tier_equivalent_target,
    tier_map,
)
from .report import CsvStream, SimReport, ttft_summary
from .timing import build_tier_table
from .workload import (
    ExpertUsageTable,
    Request,
    dirichlet_table,
    generate_requests,
    load_usage_table,
    route_tokens,
    schedule_next_batch,
    targeted_table,
    uniform_table,
)


def prefill_time_xpu(input_lens: Sequence[int], model: ModelConfig, xpu: XpuSpec, sys: Optional[SystemConfig] = None) -> tuple[float, Energy]:
    """Roofline prefill of a batch on the xPU, plus the KV upload to the DRAM.

    Per layer the time is max(FLOPs / peak, bytes / HBM bandwidth) over all
    xPU devices. Bytes are the attention projections, every expert the
    batch can touch, and the activations and KV written.
    """
    tokens = int(sum(input_lens))
    if tokens == 0:
        return 0.0, Energy()
    sys = sys or SystemConfig()
    bpp = model.bytes_per_param
    expert_params = model.expert_bytes // bpp
    used = model.active_experts + model.shared_experts
    touched = min(model.experts_per_layer, tokens * model.active_experts) + model.shared_experts
    q_width = model.num_q_heads * model.head_dim
    flops = 2 * tokens * (model.attn_proj_params + used * expert_params)
    flops += sum(2 * n * n * q_width for n in input_lens)  # causal q x K and attn x V
    kv_bytes = tokens * model.kv_bytes_per_token_layer
    nbytes = model.attn_proj_params * bpp + touched * model.expert_bytes + kv_bytes + 2 * tokens * model.hidden_dim * bpp
    t_compute = flops / (xpu.peak_tflops * 1e12 * xpu.count) * 1e9
    t_memory = nbytes / (xpu.hbm_bw * xpu.count) * 1e9
    t_layer = max(t_compute, t_memory)
    upload = kv_bytes * model.num_layers
    t_upload = upload / (sys.interface_bw * sys.num_chips) * 1e9
    t_xpu = t_layer * model.num_layers
    energy = Energy(xpu=xpu.power_w * xpu.count * t_xpu * 1e3, interface=upload * 8 * sys.interface_pj_per_bit)
    return t_xpu + t_upload, energy


def prefill_terms(n_tokens: int, model: ModelConfig, xpu: XpuSpec) -> tuple[float, float]:
    """(compute ns, memory ns) of one prefill layer for a single request."""
    bpp = model.bytes_per_param
    used = model.active_experts + model.shared_experts
    flops = 2 * n_tokens * (model.attn_proj_params + used * model.expert_bytes // bpp) + 2 * n_tokens**2 * model.num_q_heads * model.head_dim
    touched = min(model.experts_per_layer, n_tokens * model.active_experts) + model.shared_experts
    nbytes = model.attn_proj_params * bpp + touched * model.expert_bytes + n_tokens * (model.kv_bytes_per_token_layer + 2 * model.hidden_dim * bpp)
    return flops / (xpu.peak_tflops * 1e12 * xpu.count) * 1e9, nbytes / (xpu.hbm_bw * xpu.count) * 1e9


def build_usage_table(cfg: Config, rng: np.random.Generator) -> ExpertUsageTable:
    m, w, s = cfg.model, cfg.workload, cfg.sim
    L, K = m.num_layers, m.experts_per_layer
    if s.usage_table:
        table = load_usage_table(s.usage_table)
        if table.probs.shape[1:] != (L, K):
            raise ValueError(f"usage table is {table.probs.shape[1:]}, model needs ({L}, {K})")
        return table
    if s.uniform_usage:
        return uniform_table(w.topics, L, K)
    if s.hot_hit_target is not None:
        return targeted_table(w.topics, L, K, m.active_experts, s.hot_hit_target, rng, s.hot_jitter_concentration)
    return dirichlet_table(w.topics, L, K, s.usage_concentration, rng)


def placement_for(table: ExpertUsageTable, topic: str, model: ModelConfig, sys: SystemConfig) -> PlacementResult:
    freq = table.for_topic(topic) * model.active_experts
    return place_experts(problem_for(model, sys, freq))


def config_digest(cfg: Config) -> str:
    return hashlib.sha256(dumps(cfg).encode()).hexdigest()[:16]


@dataclass
class _Totals:
    energy: np.ndarray
    swap_energy: float = 0.0
    decode_ns: float = 0.0
    prefill_ns: float = 0.0
    swap_ns: float = 0.0
    moe_ns: float = 0.0
    attn_ns: float = 0.0
    layer_steps: int = 0
    decode_tokens: int = 0
    prefill_tokens: int = 0
    hot_hits: int = 0
    activations: int = 0
    swaps: int = 0
    batches: int = 0


class Simulator:
    """One deterministic serving run."""

    def __init__(self, cfg: Config, table: Optional[ExpertUsageTable] = None, trace: Optional[CsvStream] = None):
        self.cfg = cfg
        self.sys, self.model, self.w, self.sim = cfg.system, cfg.model, cfg.workload, cfg.sim
        seeds = np.random.SeedSequence(self.w.seed).spawn(4)
        self.rng_arrival, self.rng_classifier, self.rng_route, self.rng_table = (np.random.default_rng(s) for s in seeds)
        self.table = table if table is not None else build_usage_table(cfg, self.rng_table)
        self.tiers = build_tier_table(self.sys)
        self.timing = self.tiers if self.sim.policy == "tiering" else self.tiers.flattened()
        self.plan = plan_partition(self.model, self.sys)
        self.trace = trace
        self._placements: dict[str, PlacementResult] = {}
        self._attn_lin: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self.current: Optional[PlacementResult] = None
        self.kv_tier = cfg.kv_tier
        self.t = _Totals(energy=np.zeros(len(COMPONENTS)))

    # -- placement ---------------------------------------------------------

    def _target(self, topic: str) -> PlacementResult:
        if topic not in self._placements:
            self._placements[topic] = placement_for(self.table, topic, self.model, self.sys)
        return self._placements[topic]

    def _switch_topic(self, topic: str) -> float:
        """Move to the placement of ``topic``; returns the swap time in ns."""
        target = self._target(topic)
        if self.current is None:
            self.current = target  # loaded at boot
            return 0.0
        if self.sim.swap_mode == "tier-equivalent":
            target = tier_equivalent_target(self.current, target, self.tiers)
        plan = plan_swaps(self.current, target)
        self.current = target
        if plan.empty:
            return 0.0
        ns, pj = swap_cost(plan, self.timing, self.sys)
        self.t.swaps += 1
        self.t.swap_ns += ns
        self.t.swap_energy += pj
        self.t.energy[COMPONENTS.index("dram")] += pj
        return ns

    def _check_kv(self, batch: Sequence[Request]) -> None:
        m, p = self.model, self.current
        tokens = sum(r.input_len + r.output_len for r in batch)
        need = math.ceil(tokens * m.kv_bytes_per_token_layer * m.num_layers / (self.sys.n_bank * self.sys.row_buffer_bytes))
        free = p.phi - m.total_experts * p.delta_rows
        if need > free:
            raise KvCapacityError(f"batch KV needs {need} rows per bank, only {free} are free")

    # -- decode ------------------------------------------------------------

    def _attn_energy_lin(self, group_size: int) -> tuple[np.ndarray, np.ndarray]:
        """Per-request attention energy of one layer as slope * ctx + offset."""
        if group_size not in self._attn_lin:
            e_b, m, spec = self.sys.energy_per_bit_dram, self.model, self.sys.nmp
            e1 = np.array(list(attention_energy(1, m.num_kv_heads, group_size, m, spec, e_b).as_dict().values()))
            e2 = np.array(list(attention_energy(2, m.num_kv_heads, group_size, m, spec, e_b).as_dict().values()))
            self._attn_lin[group_size] = (e2 - e1, 2 * e1 - e2)
        return self._attn_lin[group_size]

    def _decode(self, batch: Sequence[Request], batch_id: int) -> float:
        m, sys = self.model, self.sys
        L, K, k = m.num_layers, m.experts_per_layer, m.active_experts
        tiers = tier_map(self.current, self.tiers, L, K + m.shared_experts)
        hot = np.zeros((L, K + m.shared_experts), dtype=bool)
        for l, e in self.current.hot:
            hot[l, e] = True
        hot_routed = hot[:, :K]
        remaining = np.array([r.output_len - 1 for r in batch])
        ctx = np.array([r.input_len + 1 for r in batch])
        topics = [r.true_topic for r in batch]
        lidx = (np.arange(L) * K)[None, :, None]
        total, step = 0.0, 0
        while remaining.max(initial=0) > 0:
            alive = np.flatnonzero(remaining > 0)
            B = len(alive)
            routes = route_tokens([topics[i] for i in alive], self.table, m, self.rng_route)
            counts = np.bincount((routes + lidx).ravel(), minlength=L * K).reshape(L, K)
            hits = int((counts * hot_routed).sum())

            moe_ns = 0.0
            for l in range(L):
                key = [(int(c), int(tiers[l, e])) for e, c in enumerate(counts[l]) if c]
                key += [(B, int(tiers[l, K + s])) for s in range(m.shared_experts)]
                ns, parts = layer_cost(tuple(key), B, self.plan, self.timing, sys, self.sim.expert_overlap)
                moe_ns += ns
                self.t.energy += parts

            plan = form_groups(sys, m, B * m.num_kv_heads)
            attn_ns, _ = attention_latency(
                plan, None, int(ctx[alive].max()), m, self.timing, sys.nmp, self.kv_tier,
                interleave=self.sim.head_interleave,
            )
            slope, offset = self._attn_energy_lin(plan.group_size)
            self.t.energy += L * (slope * ctx[alive].sum() + offset * B)

            step_ns = moe_ns + L * (attn_ns + self.sim.router_ns)
            total += step_ns
            self.t.moe_ns += moe_ns
            self.t.attn_ns += L * attn_ns
            self.t.layer_steps += L
            self.t.decode_tokens += B
            self.t.hot_hits += hits
            self.t.activations += B * L * k
            if self.trace is not None:
                self.trace.write(
                    dict(
                        batch=batch_id, step=step, batch_size=B, time_ns=step_ns, moe_ns=moe_ns,
                        attn_ns=L * attn_ns, router_ns=L * self.sim.router_ns, hot_hits=hits, activations=B * L * k,
                    )
                )
            remaining[alive] -= 1
            ctx[alive] += 1
            step += 1
        return total

    # -- main loop -----------------------------------------------------------

    def run(self, duration: Optional[float] = None, requests: Optional[Sequence[Request]] = None) -> SimReport:
        """Serve Poisson arrivals over ``duration`` s, or exactly ``requests`` when given."""
        duration = self.sim.duration if duration is None else duration
        if requests is None:
            reqs = generate_requests(self.w, duration, self.rng_arrival, self.rng_classifier)
        else:
            reqs = list(requests)
        delay = self.sys.xpu.classifier_delay_ms / 1e3
        period = self.sim.scheduling_period_ms / 1e3
        ready = sorted(reqs, key=lambda r: (r.arrival_time + delay, r.id))
        queue: list[Request] = []
        ttft: list[float] = []
        violations = 0
        now, i, batch_id = 0.0, 0, 0
        while i < len(ready) or queue:
            if not queue:
                # the scheduler wakes on its period grid
                now = max(now, math.ceil((ready[i].arrival_time + delay) / period - 1e-9) * period)
            while i < len(ready) and ready[i].arrival_time + delay <= now + 1e-12:
                queue.append(ready[i])
                i += 1
            decision = schedule_next_batch(queue, now, self.w, period)
            chosen = {r.id for r in decision.requests}
            queue = [r for r in queue if r.id not in chosen]
            batch = decision.requests

            swap_ns = self._switch_topic(decision.topic)
            self._check_kv(batch)
            pre_ns, pre_e = prefill_time_xpu([r.input_len for r in batch], self.model, self.sys.xpu, self.sys)
            self.t.energy += np.array(list(pre_e.as_dict().values()))
            first_token = now + (swap_ns + pre_ns) * 1e-9
            for r in batch:
                ms = (first_token - r.arrival_time) * 1e3
                ttft.append(ms)
                violations += ms > self.w.ttft_slo
            dec_ns = self._decode(batch, batch_id)
            self.t.prefill_ns += pre_ns
            self.t.decode_ns += dec_ns
            self.t.prefill_tokens += sum(r.input_len for r in batch)
            self.t.batches += 1
            batch_id += 1
            now = first_token + dec_ns * 1e-9
            now = math.ceil(now / period - 1e-9) * period
        return self._report(reqs, ttft, violations, now, duration)

    def _report(self, reqs, ttft, violations, end, duration) -> SimReport:
        t = self.t
        energy = {c: float(v) * 1e-12 for c, v in zip(COMPONENTS, t.energy)}
        total_e = sum(energy.values())
        busy = t.swap_ns + t.prefill_ns + t.decode_ns
        served_ns = t.decode_ns + t.swap_ns
        return SimReport(
            policy=self.sim.policy,
            seed=self.w.seed,
            duration_s=duration,
            config_digest=config_digest(self.cfg),
            num_requests=len(reqs),
            num_batches=t.batches,
            num_swaps=t.swaps,
            decode_tokens=t.decode_tokens,
            prefill_tokens=t.prefill_tokens,
            decode_time_s=t.decode_ns * 1e-9,
            prefill_time_s=t.prefill_ns * 1e-9,
            swap_time_s=t.swap_ns * 1e-9,
            makespan_s=end if reqs else 0.0,
            decode_throughput=t.decode_tokens / (served_ns * 1e-9) if served_ns else 0.0,
            energy_j=energy,
            energy_total_j=total_e,
            swap_energy_j=t.swap_energy * 1e-12,
            tokens_per_joule=t.decode_tokens / total_e if total_e else 0.0,
            ttft_ms=ttft_summary(ttft),
            slo_violations=violations,
            hot_hit_rate=t.hot_hits / t.activations if t.activations else 0.0,
            moe_layer_ns=t.moe_ns / t.layer_steps if t.layer_steps else 0.0,
            attn_layer_ns=t.attn_ns / t.layer_steps if t.layer_steps else 0.0,
            swap_time_fraction=t.swap_ns / busy if busy else 0.0,
            swap_energy_fraction=t.swap_energy * 1e-12 / total_e if total_e else 0.0,
        )


def run_serving(
    cfg: Config,
    policy: Optional[str] = None,
    duration: Optional[float] = None,
    table: Optional[ExpertUsageTable] = None,
    trace: Optional[CsvStream] = None,
    requests: Optional[Sequence[Request]] = None,
) -> SimReport:
    if policy is not None and policy != cfg.sim.policy:
        cfg = replace(cfg, sim=replace(cfg.sim, policy=policy))
    return Simulator(cfg, table, trace).run(duration, requests)
