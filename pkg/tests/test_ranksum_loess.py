import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import mannwhitneyu
from statsmodels.nonparametric.smoothers_lowess import lowess as sm_lowess

from sparsekma.loess import loess
from sparsekma.optimize import golden_section
from sparsekma.ranksum import mann_whitney_u

samples = st.lists(st.integers(-20, 20).map(lambda v: v / 4), min_size=1, max_size=40)


@given(samples, samples)
def test_rank_sum_matches_scipy(x, y):
    u, p = mann_whitney_u(x, y)
    ref = mannwhitneyu(x, y, use_continuity=True, alternative="two-sided", method="asymptotic")
    assert u == pytest.approx(ref.statistic, abs=1e-9)
    if np.isnan(ref.pvalue):
        assert p == 1.0
    else:
        assert p == pytest.approx(ref.pvalue, rel=1e-9, abs=1e-12)


def test_rank_sum_clear_shift_is_significant(rng):
    x = rng.normal(0, 1, 100)
    y = rng.normal(2, 1, 100)
    assert mann_whitney_u(x, y)[1] < 1e-10


def test_rank_sum_identical_values():
    assert mann_whitney_u([1, 1, 1], [1, 1])[1] == 1.0
    with pytest.raises(ValueError):
        mann_whitney_u([], [1.0])


def loess_oracle(x, y, x0, q):
    # per point: q nearest neighbours, tricube weights, weighted least squares line
    d = np.abs(x - x0)
    r = np.sort(d)[q - 1] * (1 + 1e-10)
    w = np.clip(1 - np.clip(d / r, 0, 1) ** 3, 0, None) ** 3
    A = np.stack([np.ones_like(x), x - x0], axis=1)
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(A * sw[:, None], y * sw, rcond=None)
    return coef[0]


@given(st.integers(0, 2**32 - 1), st.integers(12, 80), st.floats(0.2, 1.0))
def test_loess_matches_weighted_least_squares(seed, n, span):
    rng = np.random.default_rng(seed)
    x = np.sort(rng.uniform(0, 3, n))
    y = np.sin(x) + rng.normal(0, 0.1, n)
    x_eval = np.linspace(0.1, 2.9, 17)
    q = min(n, max(2, math.ceil(span * n)))
    want = np.array([loess_oracle(x, y, x0, q) for x0 in x_eval])
    np.testing.assert_allclose(loess(x, y, x_eval, span), want, rtol=1e-8, atol=1e-8)


def test_loess_agrees_with_statsmodels_at_samples(rng):
    n = 100
    x = np.sort(rng.uniform(0, 1, n))
    y = x**2 + rng.normal(0, 0.05, n)
    ref = sm_lowess(y, x, frac=0.3, it=0, delta=0.0, return_sorted=False)
    np.testing.assert_allclose(loess(x, y, x, 0.3), ref, rtol=1e-6, atol=1e-8)


def test_loess_reproduces_lines_exactly():
    x = np.linspace(0, 1, 30)
    np.testing.assert_allclose(loess(x, 2 * x + 1, [0.0, 0.37, 1.0], 0.3), [1.0, 1.74, 3.0], atol=1e-10)


def test_golden_section_finds_quadratic_minimum():
    x, fx = golden_section(lambda t: (t - 0.3) ** 2, -1, 1, tol=1e-9)
    assert x == pytest.approx(0.3, abs=1e-8)
    assert fx == pytest.approx(0.0, abs=1e-15)


@given(st.floats(-1, 1), st.floats(0.01, 2))
def test_golden_section_stays_in_bracket(c, width):
    x, _ = golden_section(lambda t: abs(t - c), -width, width, tol=1e-7)
    assert -width <= x <= width
    assert x == pytest.approx(min(max(c, -width), width), abs=1e-6)
