import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tiersim.attention import (
    KvCapacityError,
    KvLayout,
    attention_latency,
    distributed_softmax_reference,
    form_groups,
    head_stages,
    kv_append,
)
from tiersim.config import model_preset, preset
from tiersim.timing import build_tier_table

ONE_CHIP = preset("stratum-s")
MODEL = model_preset("mixtral-8x7b")
TABLE = build_tier_table(ONE_CHIP)
SPEC = ONE_CHIP.nmp


def test_groups_eight_heads():
    p = form_groups(ONE_CHIP, MODEL, 8)
    assert len(p.groups) == 4 and p.group_size == 4 and p.heads_per_group == 2
    assert p.interleave


def test_groups_single_head_is_degenerate():
    p = form_groups(ONE_CHIP, MODEL, 1)
    assert len(p.groups) == 1 and p.group_size == 16
    assert not p.interleave and p.degenerate


def test_groups_thirty_two_heads():
    p = form_groups(ONE_CHIP, MODEL, 32)
    assert len(p.groups) == 8 and p.group_size == 2 and p.heads_per_group == 4


def test_groups_tile_the_ring():
    for heads in (1, 3, 7, 8, 100, 1000):
        p = form_groups(ONE_CHIP, MODEL, heads)
        assert p.groups[0][0] == 0 and p.groups[-1][1] == 16
        assert all(a[1] == b[0] for a, b in zip(p.groups, p.groups[1:]))


def test_heads_spread_over_chips():
    p = form_groups(preset("stratum-l"), MODEL, 48)
    assert p.heads_per_chip == 8 and p.total_heads == 48


def test_kv_append_examples():
    kv = kv_append(KvLayout.empty(4), 4)
    assert kv.counts == (1, 1, 1, 1)
    kv1 = kv_append(kv, 1)
    assert kv1.cursor == 1 and kv1.counts == (2, 1, 1, 1)
    kv5 = kv_append(KvLayout.empty(4), 5)
    assert sorted(kv5.counts) == [1, 1, 1, 2]


def test_kv_capacity():
    with pytest.raises(KvCapacityError):
        kv_append(KvLayout.empty(2, capacity=3), 7)


@given(st.integers(1, 16), st.lists(st.integers(0, 50), max_size=20))
def test_kv_round_robin_balance(g, appends):
    kv = KvLayout.empty(g)
    for n in appends:
        kv = kv_append(kv, n)
        assert max(kv.counts) - min(kv.counts) <= 1
    assert kv.tokens == sum(appends)


def test_softmax_symmetric():
    w = distributed_softmax_reference([[1.0, 1.0]] * 4)
    assert np.allclose(np.concatenate(w), 1 / 8)


def test_softmax_outlier():
    w, state = distributed_softmax_reference([[0.0, 1.0], [1000.0], [2.0, -5.0]], return_state=True)
    flat = np.concatenate(w)
    assert np.isfinite(flat).all()
    assert flat[2] == pytest.approx(1.0)
    assert flat[[0, 1, 3, 4]].max() < 1e-300
    assert state.exchange_rounds == 2


def test_softmax_random_against_direct():
    rng = np.random.default_rng(3)
    parts = [rng.normal(size=5) for _ in range(3)]
    x = np.concatenate(parts)
    ref = np.exp(x - x.max()) / np.exp(x - x.max()).sum()
    assert np.allclose(np.concatenate(distributed_softmax_reference(parts)), ref, rtol=1e-12)


def test_softmax_empty():
    with pytest.raises(ValueError):
        distributed_softmax_reference([])


@settings(max_examples=200)
@given(st.lists(st.lists(st.floats(-1e3, 1e3), min_size=0, max_size=8), min_size=1, max_size=8).filter(lambda p: any(p)))
def test_softmax_matches_central(parts):
    x = np.concatenate([np.asarray(p, float) for p in parts])
    e = np.exp(x - x.max())
    ref = e / e.sum()
    got = np.concatenate([np.atleast_1d(w) for w in distributed_softmax_reference(parts)])
    assert np.allclose(got, ref, rtol=1e-6, atol=1e-300)


def test_latency_single_token():
    plan = form_groups(ONE_CHIP, MODEL, 1)
    t, e = attention_latency(plan, None, 1, MODEL, TABLE, SPEC, 4)
    assert t > 2 * TABLE.trcd(4)
    assert e.total > 0


def test_latency_needs_tokens_and_valid_tier():
    plan = form_groups(ONE_CHIP, MODEL, 8)
    with pytest.raises(ValueError):
        attention_latency(plan, None, 0, MODEL, TABLE, SPEC, 4)
    with pytest.raises(ValueError):
        attention_latency(plan, None, 10, MODEL, TABLE, SPEC, 8)


def test_doubling_seq_doubles_memory_term():
    a = head_stages(4096, 4, MODEL, TABLE, SPEC, 4)
    b = head_stages(8192, 4, MODEL, TABLE, SPEC, 4)
    trcd = TABLE.trcd(4)
    assert (b.qk - trcd) / (a.qk - trcd) == pytest.approx(2.0, rel=0.01)
    assert (b.av - trcd) / (a.av - trcd) == pytest.approx(2.0, rel=0.01)


def test_interleave_helps():
    plan = form_groups(ONE_CHIP, MODEL, 8)
    on, e_on = attention_latency(plan, None, 2048, MODEL, TABLE, SPEC, 4)
    off, e_off = attention_latency(plan, None, 2048, MODEL, TABLE, SPEC, 4, interleave=False)
    assert on < off
    assert e_on.total == pytest.approx(e_off.total)


@given(st.integers(1, 4000), st.integers(1, 4000), st.integers(1, 64))
def test_latency_monotone_in_seq(a, b, heads):
    lo, hi = sorted((a, b))
    plan = form_groups(ONE_CHIP, MODEL, heads)
    t_lo, _ = attention_latency(plan, None, lo, MODEL, TABLE, SPEC, 4)
    t_hi, _ = attention_latency(plan, None, hi, MODEL, TABLE, SPEC, 4)
    assert t_lo <= t_hi + 1e-9


def test_kv_layout_must_match_group():
    plan = form_groups(ONE_CHIP, MODEL, 8)
    with pytest.raises(ValueError):
        attention_latency(plan, KvLayout.balanced(3, 10), 10, MODEL, TABLE, SPEC, 4)
