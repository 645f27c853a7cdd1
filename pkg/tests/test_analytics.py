import itertools

import pytest

from scattersim import analytics as an
from scattersim.analytics import LatencyModel
from scattersim.reference import REFERENCE_ROWS

DEFAULT = LatencyModel()


def test_av_original():
    assert an.av_original(8, 11, 275) == 36_044_800
    assert 2**25 <= an.av_original(8, 11, 275) < 2**26
    assert an.av_original(1, 0, 1) == 1
    assert an.av_original(4, 10, 1) == 16_384
    with pytest.raises(OverflowError):
        an.av_original(2**20, 30, 2**20)


def test_av_expected():
    assert an.av_expected(4, 10, 1, 1) == 4096
    assert an.av_expected(8, 11, 5305, 1) == pytest.approx(3.088, abs=1e-3)
    assert an.av_expected(8, 11, 5305, 275) == pytest.approx(849.3, abs=0.1)
    with pytest.raises(ValueError):
        an.av_expected(8, 11, 0, 1)


def test_av_expected_with_blowup_recovers_original():
    for n, b, t in [(4, 10, 1), (8, 11, 275), (2, 3, 9)]:
        assert an.av_expected(n, b, 1, t) * n == an.av_original(n, b, t)


def test_aa_upper():
    assert an.aa_upper(0, 1, 1, 2.44e-4) == pytest.approx(8197, abs=1)
    bound = an.aa_upper(5.52, 8000, 1, 0.33)
    assert bound == pytest.approx(182_303, rel=1e-3)
    assert 46e3 * 3 <= bound
    assert an.aa_upper(0, 1, 0, 0.5) == 0
    with pytest.raises(ValueError):
        an.aa_upper(1, 1, 1, 0)


def test_coupon_coverage():
    assert an.coupon_coverage(16384, 8000) == pytest.approx(6329.61, abs=0.01)
    assert an.coupon_coverage(4096, 2000) == pytest.approx(1582.52, abs=0.01)
    assert an.coupon_coverage(100, 0) == 0
    assert an.coupon_coverage(1, 5) == 1


def test_coverage_exceeds_pruned_set_size():
    for row in REFERENCE_ROWS:
        n = row.n_ways << row.b_indices
        # printed k' values are rounded to integers
        assert an.coupon_coverage(n, row.k) >= row.k_prime - 0.5


def test_c_bound():
    assert an.c_bound(8, 0.33) == pytest.approx(3.0303, abs=1e-4)
    assert an.c_bound(8, 1.20e-4) == 8
    assert an.c_bound(1, 1) == 1


def test_runtime_examples():
    assert an.runtime(DEFAULT, 4098, 2 * 4098, 0) == pytest.approx(16.80, abs=0.01)
    assert an.runtime(DEFAULT, 3, 3 * 46e3, 0.23) == pytest.approx(14.9e-3, abs=0.05e-3)
    assert an.runtime(DEFAULT, 849, 849 * 46e3, 0.23) == pytest.approx(4.22, abs=0.01)
    assert an.runtime(DEFAULT, 10, 0, 0, flushing=False) == pytest.approx(5e-3)


@pytest.mark.parametrize("row", REFERENCE_ROWS, ids=lambda r: f"{r.n_ways}-{r.b_indices}-{r.k}")
def test_runtime_reproduces_reference_times(row):
    t = an.runtime(DEFAULT, row.A_v, row.A_v * row.Aa_per_Av, row.a_miss)
    assert abs(t / row.time_s - 1) < 0.10


def test_runtime_monotone():
    grid = [0, 1, 10, 1000]
    misses = [0, 0.3, 1]
    for A_v, A_a, m in itertools.product(grid, grid, misses):
        base = an.runtime(DEFAULT, A_v, A_a, m)
        assert an.runtime(DEFAULT, A_v + 1, A_a, m) >= base
        assert an.runtime(DEFAULT, A_v, A_a + 1, m) >= base
        assert an.runtime(DEFAULT, A_v, A_a, min(1, m + 0.1)) >= base


def test_latency_model_validation():
    with pytest.raises(ValueError):
        LatencyModel(t_hit=-1)
    with pytest.raises(ValueError):
        LatencyModel(t_hit=1e-7, t_miss=1e-8)


def test_prediction_rejects_bad_values():
    an.Prediction("x", 1.0, "1")
    with pytest.raises(ValueError):
        an.Prediction("x", float("inf"), "inf")
