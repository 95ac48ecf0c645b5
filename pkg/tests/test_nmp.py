import pytest
from hypothesis import given, strategies as st

from tiersim.config import NmpSpec, SystemConfig
from tiersim.nmp import (
    GemmShape,
    all_gather_time,
    compute_energy,
    gemm_time,
    peak_logic_power,
    peak_tflops,
    reduce_scatter_time,
    scalar_exchange_time,
    sfe_time,
)
from tiersim.timing import build_tier_table

SPEC = NmpSpec()
TABLE = build_tier_table(SystemConfig())


def test_peak_tflops():
    assert SPEC.total_macs == 65_536
    assert peak_tflops(SPEC) == pytest.approx(131.072)
    assert 128 <= peak_tflops(SPEC) <= 132


def test_peak_logic_power_calibration():
    p = peak_logic_power(SPEC, TABLE.chip_bandwidth[0])
    assert p["mac"] == pytest.approx(39.58, abs=0.01)
    assert p["total"] == pytest.approx(42.67, abs=0.02)
    assert p["total"] <= 45


def test_gemm_small_is_memory_bound():
    # 1 cycle of compute against tRCD + 512 B over one bank
    t = gemm_time(SPEC, GemmShape(1, 16, 16), 1, 0, TABLE)
    assert t == pytest.approx(2.29 + 512 / (4096 / 34.56e-9) * 1e9)
    assert t == pytest.approx(6.6, abs=0.05)


def test_gemm_compute_bound():
    shape = GemmShape(4096, 4096, 4096)
    assert gemm_time(SPEC, shape, 256, 0, TABLE) == pytest.approx(4096 * 256 * 1)


def test_gemm_pe_limit():
    with pytest.raises(ValueError):
        gemm_time(SPEC, GemmShape(1, 16, 16), 0, 0, TABLE)
    with pytest.raises(ValueError):
        gemm_time(SPEC, GemmShape(1, 16, 16), 17, 0, TABLE, max_pes=16)
    with pytest.raises(ValueError):
        GemmShape(0, 16, 16)


def test_sfe_time():
    assert sfe_time(SPEC, 256, 1) == 1
    assert sfe_time(SPEC, 257, 1) == 2
    assert sfe_time(SPEC, 256, SPEC.sfe_cycles_exp) == 4
    assert sfe_time(SPEC, 0) == 0


def test_collectives():
    assert all_gather_time(SPEC, 1, 4096) == 0
    assert all_gather_time(SPEC, 16, 4096) == pytest.approx(256.0)
    assert all_gather_time(SPEC, 2, 128) == pytest.approx(1.0)
    assert reduce_scatter_time(SPEC, 16, 4096) == pytest.approx(256.0)
    with pytest.raises(ValueError):
        all_gather_time(SPEC, 17, 1)


def test_scalar_exchange():
    assert scalar_exchange_time(SPEC, 1) == 0
    # 3 hops of (64 B / 128 GB/s + 2 ns router)
    assert scalar_exchange_time(SPEC, 4) == pytest.approx(3 * (0.5 + 2.0))
    assert scalar_exchange_time(SPEC, 16) == pytest.approx(5 * scalar_exchange_time(SPEC, 4))


def test_compute_energy():
    assert compute_energy(SPEC, 65_536e9, 0, 0, 0) * 1e-12 == pytest.approx(39.58, abs=0.01)
    assert compute_energy(SPEC, 0, 0, 0, 0) == 0


@given(st.integers(1, 16), st.integers(1, 16), st.floats(1, 1e6))
def test_collectives_monotone_and_linear(g1, g2, size):
    lo, hi = sorted((g1, g2))
    assert all_gather_time(SPEC, lo, size) <= all_gather_time(SPEC, hi, size)
    assert reduce_scatter_time(SPEC, hi, 2 * size) == pytest.approx(2 * reduce_scatter_time(SPEC, hi, size))


@given(st.integers(1, 64), st.integers(1, 64), st.integers(1, 2048), st.integers(1, 4096), st.integers(0, 7))
def test_gemm_subadditive_in_m(a, b, k, n, tier):
    t = lambda m: gemm_time(SPEC, GemmShape(m, k, n), 16, tier, TABLE, max_pes=16)  # noqa: E731
    assert t(a + b) <= t(a) + t(b) + TABLE.trcd(tier) + 1e-9
