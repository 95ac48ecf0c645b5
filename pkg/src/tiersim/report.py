"""Simulation reports, run comparison and JSON/CSV emission."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import IO, Iterable, Iterator, Optional

import numpy as np

from .energy import COMPONENTS

SCHEMA_VERSION = 1
SIG_DIGITS = 6
TTFT_KEYS = ("mean", "p50", "p90", "p99", "max")


class IncomparableRuns(ValueError):
    pass


@dataclass
class SimReport:
    policy: str = "tiering"
    seed: int = 0
    duration_s: float = 0.0
    config_digest: str = ""
    num_requests: int = 0
    num_batches: int = 0
    num_swaps: int = 0
    decode_tokens: int = 0
    prefill_tokens: int = 0
    decode_time_s: float = 0.0
    prefill_time_s: float = 0.0
    swap_time_s: float = 0.0
    makespan_s: float = 0.0
    decode_throughput: float = 0.0  # tokens/s over decode plus swap time
    energy_j: dict = field(default_factory=lambda: {c: 0.0 for c in COMPONENTS})
    energy_total_j: float = 0.0
    swap_energy_j: float = 0.0
    tokens_per_joule: float = 0.0
    ttft_ms: dict = field(default_factory=lambda: dict.fromkeys(TTFT_KEYS, 0.0))
    slo_violations: int = 0
    hot_hit_rate: float = 0.0
    moe_layer_ns: float = 0.0  # mean per decode step and layer
    attn_layer_ns: float = 0.0
    swap_time_fraction: float = 0.0
    swap_energy_fraction: float = 0.0
    schema_version: int = SCHEMA_VERSION

    def check_energy(self, rel: float = 1e-9) -> bool:
        s = sum(self.energy_j.values())
        return math.isclose(s, self.energy_total_j, rel_tol=rel, abs_tol=1e-300)


def ttft_summary(values_ms: list[float]) -> dict:
    if not values_ms:
        return dict.fromkeys(TTFT_KEYS, 0.0)
    v = np.asarray(values_ms, dtype=float)
    return {
        "mean": float(v.mean()),
        "p50": float(np.percentile(v, 50)),
        "p90": float(np.percentile(v, 90)),
        "p99": float(np.percentile(v, 99)),
        "max": float(v.max()),
    }


@dataclass(frozen=True)
class RunComparison:
    baseline: SimReport
    candidate: SimReport
    throughput_ratio: float  # candidate / baseline
    energy_ratio: float  # baseline J/token over candidate J/token
    mismatches: tuple[str, ...] = ()


_COMPARABLE = ("seed", "duration_s", "num_requests")


def compare(baseline: SimReport, candidate: SimReport, strict: bool = False) -> RunComparison:
    """Candidate versus baseline; both ratios are "higher is better"."""
    mism = tuple(k for k in _COMPARABLE if getattr(baseline, k) != getattr(candidate, k))
    if strict and mism:
        raise IncomparableRuns(f"runs differ in {list(mism)}")
    for r in (baseline, candidate):
        if r.decode_tokens <= 0 or r.decode_throughput <= 0 or r.energy_total_j <= 0:
            raise IncomparableRuns("a run produced no decode tokens")
    tput = candidate.decode_throughput / baseline.decode_throughput
    e_base = baseline.energy_total_j / baseline.decode_tokens
    e_cand = candidate.energy_total_j / candidate.decode_tokens
    return RunComparison(baseline, candidate, tput, e_base / e_cand, mism)


# --------------------------------------------------------------------------
# Emission
# --------------------------------------------------------------------------


def fmt(x):
    """Round floats to six significant digits; leave other values alone."""
    if isinstance(x, bool) or not isinstance(x, float):
        return x
    if x == 0 or not math.isfinite(x):
        return x
    return float(f"{x:.{SIG_DIGITS}g}")


def _rounded(obj):
    if isinstance(obj, dict):
        return {k: _rounded(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_rounded(v) for v in obj]
    return fmt(obj)


def report_dict(report: SimReport) -> dict:
    d = asdict(report)
    d = {"schema_version": d.pop("schema_version"), **d}
    return _rounded(d)


def to_json(report: SimReport) -> str:
    return json.dumps(report_dict(report), indent=2) + "\n"


def report_from_json(text: str) -> SimReport:
    d = json.loads(text)
    if d.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema_version {d.get('schema_version')!r}")
    names = {f.name for f in fields(SimReport)}
    return SimReport(**{k: v for k, v in d.items() if k in names})


def flat_row(report: SimReport) -> dict:
    """One CSV row: nested dicts flattened with ``_`` joined keys."""
    out = {}
    for k, v in report_dict(report).items():
        if isinstance(v, dict):
            for sub, x in v.items():
                out[f"{k}_{sub}"] = x
        else:
            out[k] = v
    return out


REPORT_CSV_COLUMNS = tuple(flat_row(SimReport()).keys())

TRACE_COLUMNS = (
    "batch",
    "step",
    "batch_size",
    "time_ns",
    "moe_ns",
    "attn_ns",
    "router_ns",
    "hot_hits",
    "activations",
)


class CsvStream:
    """Row-at-a-time CSV writer with a fixed header; never buffers rows."""

    def __init__(self, target: str | Path | IO[str], columns: Iterable[str]):
        self.columns = tuple(columns)
        if isinstance(target, (str, Path)):
            self._fh = open(target, "w", newline="")
            self._own = True
        else:
            self._fh, self._own = target, False
        self._w = csv.DictWriter(self._fh, fieldnames=self.columns, extrasaction="raise", lineterminator="\n")
        self._w.writeheader()
        self.rows = 0

    def write(self, row: dict) -> None:
        self._w.writerow({k: fmt(row.get(k, "")) for k in self.columns})
        self.rows += 1

    def close(self) -> None:
        if self._own:
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def emit(report: SimReport, fmt_: str, path: Optional[str | Path] = None) -> str:
    """Write ``report`` as ``json`` or ``csv``; returns the text when ``path`` is None."""
    if fmt_ == "json":
        text = to_json(report)
    elif fmt_ == "csv":
        buf = io.StringIO()
        s = CsvStream(buf, REPORT_CSV_COLUMNS)
        s.write(flat_row(report))
        text = buf.getvalue()
    else:
        raise ValueError(f"unknown format {fmt_!r}")
    if path is not None:
        Path(path).write_text(text)
    return text


def read_csv(path: str | Path) -> Iterator[dict]:
    with open(path, newline="") as fh:
        yield from csv.DictReader(fh)
