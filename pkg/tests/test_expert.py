import dataclasses

import pytest
from hypothesis import given, strategies as st

from tiersim.config import ModelConfig, model_preset, preset
from tiersim.expert import (
    ExpertInvocation,
    expert_latency,
    expert_stages,
    moe_layer_exec,
    plan_partition,
    schedule_experts,
)
from tiersim.timing import build_tier_table

ONE_CHIP = preset("stratum-s")
SPEC = ONE_CHIP.nmp
TABLE = build_tier_table(ONE_CHIP)
MIXTRAL = model_preset("mixtral-8x7b")
PLAN = plan_partition(MIXTRAL, ONE_CHIP)


def test_four_pu_example():
    sys4 = dataclasses.replace(ONE_CHIP, channels_per_chip=4, nmp=dataclasses.replace(SPEC, pus_per_chip=4))
    tiny = ModelConfig(name="tiny", hidden_dim=16, intermediate_dim=8, experts_per_layer=2, active_experts=1)
    p = plan_partition(tiny, sys4)
    assert [b - a for a, b in p.w12_col_slices] == [2, 2, 2, 2]
    assert [b - a for a, b in p.w3_row_slices] == [2, 2, 2, 2]


def test_mixtral_slices():
    assert {b - a for a, b in PLAN.w12_col_slices} == {896}


def test_too_few_columns():
    sys4 = dataclasses.replace(ONE_CHIP, channels_per_chip=4, nmp=dataclasses.replace(SPEC, pus_per_chip=4))
    tiny = ModelConfig(name="tiny", hidden_dim=4, intermediate_dim=3, experts_per_layer=2, active_experts=1)
    with pytest.raises(ValueError):
        plan_partition(tiny, sys4)


def test_balanced_pe_subtiles():
    for tiles in PLAN.pe_subtiles:
        sizes = [b - a for a, b in tiles]
        assert max(sizes) - min(sizes) <= 1


def test_weights_not_duplicated():
    assert sum(PLAN.pu_weight_bytes(i) for i in range(PLAN.pu_count)) == MIXTRAL.expert_bytes
    assert PLAN.pu_weight_bytes(0) == MIXTRAL.expert_bytes // PLAN.pu_count
    big = plan_partition(MIXTRAL, preset("stratum-l"))
    assert sum(big.pu_weight_bytes(i) for i in range(big.pu_count)) == MIXTRAL.expert_bytes


def test_skipped_expert_costs_nothing():
    t, e = expert_latency(PLAN, ExpertInvocation(0, 0, 0, 0), TABLE, SPEC)
    assert t == 0 and e.total == 0


def test_tier_ratio_memory_bound():
    inv = lambda tier: ExpertInvocation(0, 0, 1, tier)  # noqa: E731
    t0, _ = expert_latency(PLAN, inv(0), TABLE, SPEC)
    t7, _ = expert_latency(PLAN, inv(7), TABLE, SPEC)
    assert t7 / t0 == pytest.approx(1.596, abs=0.02)


def test_overlap_schedule_algebra():
    st = expert_stages(PLAN, 4, 0, TABLE, SPEC)
    on, off = schedule_experts([st, st], True), schedule_experts([st, st], False)
    # the first expert's reduce-scatter and weighted sum hide behind the
    # second GeMM1, and each activation hides behind its GeMM2
    saved = min(st.reduce_scatter + st.weighted_sum, st.gemm1) + 2 * min(st.gemm2, st.activation)
    assert off - on == pytest.approx(saved)
    assert off == pytest.approx(2 * st.serial)


def test_energy_schedule_invariant():
    invs = [ExpertInvocation(0, i, m, i % 8) for i, m in enumerate([1, 3, 7])]
    on = moe_layer_exec(invs, PLAN, TABLE, ONE_CHIP, overlap=True)
    off = moe_layer_exec(invs, PLAN, TABLE, ONE_CHIP, overlap=False)
    assert on.time < off.time
    assert on.energy.total == pytest.approx(off.energy.total, rel=1e-12)


def test_empty_layer_is_interface_only():
    r = moe_layer_exec([], PLAN, TABLE, ONE_CHIP, batch_tokens=4)
    # 32 KB up and back over 819.2 GB/s, plus a 16-PU all-gather of 2 KB slices
    assert r.time == pytest.approx(40 + 8 * 2048 / 128 + 40)
    assert r.energy.dram == 0


def test_olmoe_single_token_streams_weights():
    olmoe = model_preset("olmoe-1b-7b")
    plan = plan_partition(olmoe, ONE_CHIP)
    r = moe_layer_exec([ExpertInvocation(0, 0, 1, 0)], plan, TABLE, ONE_CHIP)
    stream = 3 * olmoe.expert_bytes / TABLE.chip_bandwidth[0] * 1e9 / 3
    assert r.time == pytest.approx(stream, rel=0.25)


def test_one_wide_expert_beats_many_narrow():
    many = moe_layer_exec([ExpertInvocation(0, i, 1, 0) for i in range(8)], PLAN, TABLE, ONE_CHIP, batch_tokens=8)
    one = moe_layer_exec([ExpertInvocation(0, 0, 8, 0)], PLAN, TABLE, ONE_CHIP, batch_tokens=8)
    assert one.time < many.time


def test_two_experts_overlap():
    a = ExpertInvocation(0, 0, 2, 0)
    b = ExpertInvocation(0, 1, 3, 0)
    both = schedule_experts([expert_stages(PLAN, 2, 0, TABLE, SPEC), expert_stages(PLAN, 3, 0, TABLE, SPEC)])
    alone = expert_latency(PLAN, a, TABLE, SPEC)[0] + expert_latency(PLAN, b, TABLE, SPEC)[0]
    assert both < alone


def test_trace_rows():
    r = moe_layer_exec([ExpertInvocation(3, 1, 2, 5)], PLAN, TABLE, ONE_CHIP, trace=True)
    assert r.rows[0]["layer"] == 3 and r.rows[0]["tier"] == 5


@given(st.integers(1, 256), st.integers(1, 256), st.integers(0, 7), st.integers(0, 7))
def test_latency_monotone(m1, m2, t1, t2):
    (ma, mb), (ta, tb) = sorted((m1, m2)), sorted((t1, t2))
    lat = lambda m, t: expert_latency(PLAN, ExpertInvocation(0, 0, m, t), TABLE, SPEC)[0]  # noqa: E731
    assert lat(ma, ta) <= lat(mb, ta) + 1e-9
    assert lat(ma, ta) <= lat(ma, tb) + 1e-9
