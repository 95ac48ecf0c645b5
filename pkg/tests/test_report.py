import csv
import io
import tracemalloc

import pytest

from tiersim.energy import COMPONENTS
from tiersim.report import (
    REPORT_CSV_COLUMNS,
    CsvStream,
    IncomparableRuns,
    SimReport,
    compare,
    emit,
    fmt,
    report_from_json,
    to_json,
)


def rep(tput=100.0, energy=10.0, tokens=1000, **kw):
    e = {c: 0.0 for c in COMPONENTS}
    e["dram"] = energy
    return SimReport(decode_throughput=tput, energy_j=e, energy_total_j=energy, decode_tokens=tokens, num_requests=5, **kw)


def test_identical_reports():
    c = compare(rep(), rep())
    assert c.throughput_ratio == 1.0 and c.energy_ratio == 1.0 and not c.mismatches


def test_ratios():
    c = compare(rep(tput=100, energy=10), rep(tput=140, energy=8))
    assert c.throughput_ratio == pytest.approx(1.4)
    assert c.energy_ratio == pytest.approx(1.25)
    back = compare(rep(tput=140, energy=8), rep(tput=100, energy=10))
    assert back.throughput_ratio == pytest.approx(1 / 1.4)


def test_zero_token_run_is_an_error():
    with pytest.raises(IncomparableRuns):
        compare(rep(), rep(tokens=0))


def test_strict_mismatch():
    assert compare(rep(), rep(seed=3)).mismatches == ("seed",)
    with pytest.raises(IncomparableRuns):
        compare(rep(), rep(seed=3), strict=True)


def test_json_round_trip():
    r = rep(tput=123.456789123, hot_hit_rate=0.485)
    back = report_from_json(to_json(r))
    assert back.decode_throughput == fmt(123.456789123) == 123.457
    assert to_json(back) == to_json(r)
    with pytest.raises(ValueError):
        report_from_json('{"schema_version": 2}')


def test_csv_header_schema():
    text = emit(rep(), "csv")
    header = next(csv.reader(io.StringIO(text)))
    assert tuple(header) == REPORT_CSV_COLUMNS
    for key in ("schema_version", "decode_throughput", "energy_j_dram", "ttft_ms_p99", "swap_energy_fraction"):
        assert key in header
    with pytest.raises(ValueError):
        emit(rep(), "xml")


def test_energy_check():
    assert rep().check_energy()
    bad = rep()
    bad.energy_total_j = 11.0
    assert not bad.check_energy()


class _Sink(io.TextIOBase):
    def __init__(self):
        self.n = 0

    def write(self, s):
        self.n += len(s)
        return len(s)


def test_streaming_does_not_buffer():
    sink = _Sink()
    s = CsvStream(sink, REPORT_CSV_COLUMNS)
    row = {c: 1.5 for c in REPORT_CSV_COLUMNS}
    tracemalloc.start()
    for _ in range(100):
        s.write(row)
    base, _ = tracemalloc.get_traced_memory()
    for _ in range(900):
        s.write(row)
    now, _ = tracemalloc.get_traced_memory()
    tracemalloc.stop()
    assert s.rows == 1000
    assert sink.n > 1000 * len(REPORT_CSV_COLUMNS)
    assert now - base < 50_000
