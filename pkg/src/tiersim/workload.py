"""Requests, topic classification, batching and expert routing."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .config import ModelConfig, WorkloadConfig


@dataclass(frozen=True)
class Request:
    id: int
    arrival_time: float  # s
    true_topic: str
    predicted_topic: str
    input_len: int
    output_len: int
    ttft_deadline: float  # s

    def __post_init__(self):
        if self.input_len < 1 or self.output_len < 1:
            raise ValueError("request lengths must be >= 1")


def classify(true_topic: str, topics: Sequence[str], accuracy: float, rng: np.random.Generator) -> str:
    """Oracle classifier: right with probability ``accuracy``, else a uniform wrong topic."""
    others = [t for t in topics if t != true_topic]
    if not others or rng.random() < accuracy:
        return true_topic
    return others[int(rng.integers(len(others)))]


def generate_requests(
    w: WorkloadConfig,
    horizon: float,
    rng: Optional[np.random.Generator] = None,
    classifier_rng: Optional[np.random.Generator] = None,
) -> list[Request]:
    """Poisson arrivals over ``[0, horizon)`` with topics drawn from the mix."""
    if rng is None or classifier_rng is None:
        rng, classifier_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(w.seed).spawn(2))
    if w.arrival_rate <= 0 or horizon <= 0:
        return []
    out = []
    t = rng.exponential(1.0 / w.arrival_rate)
    mix = np.asarray(w.topic_mix, dtype=float)
    while t < horizon:
        topic = w.topics[int(rng.choice(len(w.topics), p=mix))]
        pred = classify(topic, w.topics, w.classifier_accuracy, classifier_rng)
        out.append(Request(len(out), float(t), topic, pred, w.input_len, w.output_len, float(t) + w.ttft_slo / 1e3))
        t += rng.exponential(1.0 / w.arrival_rate)
    return out


@dataclass(frozen=True)
class BatchDecision:
    requests: tuple[Request, ...]
    topic: str  # predicted topic the placement follows
    forced: int  # requests included only because of their deadline


def schedule_next_batch(queue: Sequence[Request], now: float, w: WorkloadConfig, period: float) -> Optional[BatchDecision]:
    """Pick the next batch from the ready queue at time ``now`` (s).

    The predicted topic with the most queued requests wins (ties go to the
    topic of the oldest request). Requests whose TTFT deadline falls before
    the next scheduling tick are forced in first, whatever their topic.
    """
    if not queue:
        return None
    counts: dict[str, int] = {}
    first_seen: dict[str, int] = {}
    for i, r in enumerate(queue):
        counts[r.predicted_topic] = counts.get(r.predicted_topic, 0) + 1
        first_seen.setdefault(r.predicted_topic, i)
    topic = min(counts, key=lambda t: (-counts[t], first_seen[t]))
    forced = [r for r in queue if r.ttft_deadline < now + period]
    chosen = forced[: w.max_batch]
    ids = {r.id for r in chosen}
    for r in queue:
        if len(chosen) >= w.max_batch:
            break
        if r.predicted_topic == topic and r.id not in ids:
            chosen.append(r)
            ids.add(r.id)
    n_forced = sum(1 for r in chosen if r.predicted_topic != topic)
    return BatchDecision(tuple(chosen), topic, n_forced)


# --------------------------------------------------------------------------
# Expert usage tables
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ExpertUsageTable:
    topics: tuple[str, ...]
    probs: np.ndarray  # (topics, layers, experts)

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 3 or p.shape[0] != len(self.topics):
            raise ValueError(f"probs shape {p.shape} does not match {len(self.topics)} topics")
        if (p < 0).any() or not np.allclose(p.sum(axis=2), 1.0, rtol=0, atol=1e-9):
            raise ValueError("every distribution must be non-negative and sum to 1")
        object.__setattr__(self, "probs", p)

    def for_topic(self, topic: str) -> np.ndarray:
        try:
            return self.probs[self.topics.index(topic)]
        except ValueError:
            raise KeyError(f"no usage distribution for topic {topic!r}") from None

    def to_json(self) -> str:
        return json.dumps({"topics": list(self.topics), "probs": self.probs.tolist()})


def load_usage_table(path: str | Path) -> ExpertUsageTable:
    data = json.loads(Path(path).read_text())
    probs = np.asarray(data["probs"], dtype=float)
    probs = probs / probs.sum(axis=2, keepdims=True)
    return ExpertUsageTable(tuple(data["topics"]), probs)


def uniform_table(topics: Sequence[str], L: int, K: int) -> ExpertUsageTable:
    return ExpertUsageTable(tuple(topics), np.full((len(topics), L, K), 1.0 / K))


def dirichlet_table(topics: Sequence[str], L: int, K: int, concentration: float, rng: np.random.Generator) -> ExpertUsageTable:
    p = rng.dirichlet(np.full(K, concentration), size=(len(topics), L))
    return ExpertUsageTable(tuple(topics), p)


def gumbel_topk(logp: np.ndarray, k: int, gumbels: np.ndarray) -> np.ndarray:
    """Indices of the ``k`` largest ``logp + gumbels`` along the last axis.

    Equivalent to drawing ``k`` distinct items one by one, each with
    probability proportional to its weight among those left.
    """
    keys = logp + gumbels
    idx = np.argpartition(-keys, k - 1, axis=-1)[..., :k]
    return np.sort(idx, axis=-1)


def _log(p: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(p)


def expected_hot_hit(probs: np.ndarray, hot: np.ndarray, k: int, gumbels: np.ndarray) -> float:
    """Monte Carlo hot-hit rate of top-k sampling; ``probs``/``hot`` are (rows, K)."""
    sel = gumbel_topk(_log(probs)[None], k, gumbels)
    hits = np.take_along_axis(np.broadcast_to(hot[None], gumbels.shape), sel, axis=-1)
    return float(hits.mean())


def targeted_table(
    topics: Sequence[str],
    L: int,
    K: int,
    k: int,
    hit_target: float,
    rng: np.random.Generator,
    jitter_concentration: float = 200.0,
    samples: int = 2000,
) -> ExpertUsageTable:
    """Usage table whose top-k sampling lands on a per-layer hot set at ``hit_target``.

    Each (topic, layer) gets a random hot set of ``k`` experts holding mass
    ``p_h``; weights inside the hot and cold groups get a mild Dirichlet
    jitter. ``p_h`` is tuned by bisection against a Monte Carlo estimate of
    the hit rate that reuses one set of Gumbel draws, so the estimate is
    monotone in ``p_h``.
    """
    T = len(topics)
    if not 1 <= k <= K:
        raise ValueError(f"k={k} outside [1, {K}]")
    hot = np.zeros((T * L, K), dtype=bool)
    for row in range(T * L):
        hot[row, rng.choice(K, size=k, replace=False)] = True
    w_hot = rng.dirichlet(np.full(k, jitter_concentration), size=T * L)
    w_cold = rng.dirichlet(np.full(K - k, jitter_concentration), size=T * L) if K > k else np.zeros((T * L, 0))
    gumbels = rng.gumbel(size=(samples, T * L, K))

    def build(p_h: float) -> np.ndarray:
        p = np.zeros((T * L, K))
        p[hot] = (p_h * w_hot).ravel()
        if K > k:
            p[~hot] = ((1 - p_h) * w_cold).ravel()
        else:
            p[hot] = w_hot.ravel()
        return p

    if K == k:
        p_h = 1.0
    elif hit_target >= 1.0:
        p_h = 1.0
    elif hit_target <= 0.0:
        p_h = 0.0
    else:
        lo, hi = 0.0, 1.0
        for _ in range(40):
            mid = (lo + hi) / 2
            if expected_hot_hit(build(mid), hot, k, gumbels) < hit_target:
                lo = mid
            else:
                hi = mid
        p_h = (lo + hi) / 2
    probs = build(p_h).reshape(T, L, K)
    probs /= probs.sum(axis=2, keepdims=True)
    return ExpertUsageTable(tuple(topics), probs)


def route_tokens(token_topics: Sequence[str], table: ExpertUsageTable, model: ModelConfig, rng: np.random.Generator) -> np.ndarray:
    """(tokens, layers, k) routed expert ids, sampled without replacement.

    Shared experts are not returned; every token uses them in addition.
    """
    B, L, K, k = len(token_topics), model.num_layers, model.experts_per_layer, model.active_experts
    if B == 0:
        return np.zeros((0, L, k), dtype=np.int64)
    logp = np.stack([_log(table.for_topic(t)) for t in token_topics])
    if logp.shape[1:] != (L, K):
        raise ValueError(f"usage table is {logp.shape[1:]}, model needs ({L}, {K})")
    return gumbel_topk(logp, k, rng.gumbel(size=(B, L, K)))
