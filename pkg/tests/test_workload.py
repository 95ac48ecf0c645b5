import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tiersim.config import ModelConfig, WorkloadConfig, model_preset
from tiersim.workload import (
    ExpertUsageTable,
    Request,
    classify,
    expected_hot_hit,
    generate_requests,
    gumbel_topk,
    load_usage_table,
    route_tokens,
    schedule_next_batch,
    targeted_table,
    uniform_table,
)


def rngs(seed):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2)]


def test_poisson_count():
    reqs = generate_requests(WorkloadConfig(arrival_rate=2.0), 1000.0, *rngs(0))
    assert abs(len(reqs) - 2000) <= 3 * math.sqrt(2000)
    assert all(a.arrival_time < b.arrival_time for a, b in zip(reqs, reqs[1:]))


def test_single_topic():
    w = WorkloadConfig(topics=("math",), topic_mix=(1.0,), classifier_accuracy=0.0)
    reqs = generate_requests(w, 50.0, *rngs(1))
    assert reqs and all(r.true_topic == r.predicted_topic == "math" for r in reqs)


def test_same_seed_same_stream():
    w = WorkloadConfig(arrival_rate=3.0, seed=9)
    assert generate_requests(w, 30.0) == generate_requests(w, 30.0)
    assert generate_requests(w, 30.0) != generate_requests(WorkloadConfig(arrival_rate=3.0, seed=10), 30.0)


def test_zero_rate():
    assert generate_requests(WorkloadConfig(arrival_rate=0.0), 10.0) == []


def test_classifier_accuracy():
    rng = np.random.default_rng(2)
    topics = ("a", "b", "c", "d", "e", "f")
    hits = sum(classify("a", topics, 0.85, rng) == "a" for _ in range(10_000))
    assert hits / 10_000 == pytest.approx(0.85, abs=0.02)
    assert all(classify("a", topics, 1.0, rng) == "a" for _ in range(100))


def req(i, topic, t=0.0, deadline=10.0):
    return Request(i, t, topic, topic, 8, 8, deadline)


W = WorkloadConfig(max_batch=8)


def test_same_topic_is_fifo():
    q = [req(i, "a") for i in range(10)]
    d = schedule_next_batch(q, 0.0, W, 0.01)
    assert [r.id for r in d.requests] == list(range(8)) and d.forced == 0


def test_majority_topic_wins():
    q = [req(i, "b") for i in range(3)] + [req(3 + i, "a") for i in range(7)]
    d = schedule_next_batch(q, 0.0, W, 0.01)
    assert d.topic == "a"
    assert len(d.requests) == 7 and {r.predicted_topic for r in d.requests} == {"a"}


def test_deadline_forces_minority():
    q = [req(0, "b", deadline=0.005)] + [req(1 + i, "a") for i in range(7)]
    d = schedule_next_batch(q, 0.0, W, 0.01)
    assert d.topic == "a" and d.forced == 1
    assert d.requests[0].id == 0 and len(d.requests) == 8


def test_empty_queue():
    assert schedule_next_batch([], 0.0, W, 0.01) is None


def test_table_validation(tmp_path):
    with pytest.raises(ValueError):
        ExpertUsageTable(("a",), np.full((1, 2, 4), 0.3))
    t = uniform_table(("a", "b"), 2, 4)
    p = tmp_path / "u.json"
    p.write_text(t.to_json())
    again = load_usage_table(p)
    assert again.topics == t.topics and np.allclose(again.probs, t.probs)
    with pytest.raises(KeyError):
        t.for_topic("zzz")


def test_one_hot_routing():
    m = ModelConfig(name="m", num_layers=2, experts_per_layer=4, active_experts=1, hidden_dim=16, intermediate_dim=32)
    probs = np.zeros((1, 2, 4))
    probs[0, :, 2] = 1.0
    r = route_tokens(["a"] * 50, ExpertUsageTable(("a",), probs), m, np.random.default_rng(0))
    assert (r == 2).all()


def test_uniform_routing_hit_rate():
    m = ModelConfig(name="m", num_layers=1, experts_per_layer=8, active_experts=2, hidden_dim=16, intermediate_dim=32)
    r = route_tokens(["a"] * 10_000, uniform_table(("a",), 1, 8), m, np.random.default_rng(1))
    per_expert = np.bincount(r.ravel(), minlength=8) / 10_000
    assert np.allclose(per_expert, 0.25, atol=0.02)


def test_shared_expert_always_used():
    m = model_preset("llama-4-scout")
    assert m.shared_experts == 1 and m.active_experts == 1
    r = route_tokens(["a"] * 10, uniform_table(("a",), m.num_layers, m.experts_per_layer), m, np.random.default_rng(0))
    assert r.shape == (10, m.num_layers, 1)


@given(st.integers(0, 2**31))
def test_routes_k_distinct_experts(seed):
    m = model_preset("mixtral-8x7b")
    r = route_tokens(["math"] * 4, uniform_table(("math",), m.num_layers, 8), m, np.random.default_rng(seed))
    assert r.shape == (4, 32, 2)
    assert (r[..., 0] != r[..., 1]).all()


def test_gumbel_topk_sorted_distinct():
    g = np.random.default_rng(0).gumbel(size=(100, 8))
    idx = gumbel_topk(np.log(np.full(8, 1 / 8)), 3, g)
    assert (np.diff(idx, axis=-1) > 0).all()


# above the uniform rate k/K = 0.25 the hot set is the top-k by probability
@pytest.mark.parametrize("target", [0.4, 0.485, 0.8])
def test_targeted_table_hits_target(target):
    rng = np.random.default_rng(4)
    t = targeted_table(("a", "b"), 4, 8, 2, target, rng)
    probs = t.probs.reshape(8, 8)
    hot = np.zeros_like(probs, dtype=bool)
    order = np.argsort(-probs, axis=1, kind="stable")[:, :2]
    np.put_along_axis(hot, order, True, axis=1)
    g = np.random.default_rng(99).gumbel(size=(20_000, 8, 8))
    assert expected_hot_hit(probs, hot, 2, g) == pytest.approx(target, abs=0.01)
