import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rso2stat.bootstrap import check_boot, default_block_length, moving_block_indices
from rso2stat.estimators import naive_slope_baseline, sample_mean_baseline

from conftest import make_series


@pytest.mark.parametrize("n, k", [(1, 1), (8, 2), (9, 3), (27, 3), (28, 4), (360, 8), (720, 9), (1000, 10), (1001, 11)])
def test_default_block_length(n, k):
    assert default_block_length(n) == k


def test_block_indices_are_runs():
    gen = np.random.default_rng(0)
    idx = moving_block_indices(50, 7, 20, gen)
    assert idx.shape == (20, 50)
    assert idx.min() >= 0 and idx.max() <= 49
    # Inside each block the indices step by one.
    steps = np.diff(idx, axis=1)
    inside = np.ones(49, dtype=bool)
    inside[6::7] = False
    assert np.all(steps[:, inside] == 1)


def test_block_length_bounds():
    gen = np.random.default_rng(0)
    with pytest.raises(ValueError):
        moving_block_indices(10, 11, 5, gen)
    with pytest.raises(ValueError):
        moving_block_indices(10, 0, 5, gen)
    with pytest.raises(ValueError):
        check_boot(49)


def test_unit_blocks_match_iid_bootstrap():
    """With blocks of one the SE of the mean is the plug-in sd / sqrt(n)."""
    y = 20 + np.random.default_rng(3).gamma(2.0, 3.0, 400)
    s = make_series(y)
    _, se = sample_mean_baseline(s, n_boot=20000, block_len=1, rng=5)
    assert se == pytest.approx(np.std(s.values) / np.sqrt(s.values.size), rel=0.03)


def test_naive_slope_unit_blocks_match_ols_formula():
    gen = np.random.default_rng(4)
    t = 30.0 * np.arange(300)
    y = 40 + 0.002 * t + gen.normal(0, 2.0, 300)
    s = make_series(y)
    b, se = naive_slope_baseline(s, n_boot=20000, block_len=1, rng=1)
    tc = t - t.mean()
    resid = y - np.polyval(np.polyfit(t, y, 1), t)
    assert b == pytest.approx(np.polyfit(t, y, 1)[0], rel=1e-10)
    assert se == pytest.approx(np.sqrt(np.mean(resid**2) / (tc @ tc)), rel=0.03)


def test_constant_series_has_zero_se():
    s = make_series(np.full(100, 30.0))
    assert sample_mean_baseline(s, n_boot=100) == (30.0, 0.0)
    b, se = naive_slope_baseline(s, n_boot=100)
    assert b == pytest.approx(0.0, abs=1e-12) and se == 0.0


@settings(max_examples=50, deadline=None)
@given(n=st.integers(1, 200), k=st.integers(1, 30), seed=st.integers(0, 10**6))
def test_indices_always_valid(n, k, seed):
    k = min(k, n)
    idx = moving_block_indices(n, k, 3, np.random.default_rng(seed))
    assert idx.shape == (3, n)
    assert idx.min() >= 0 and idx.max() < n
