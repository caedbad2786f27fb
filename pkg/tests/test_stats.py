import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special

from hintgen.engine import ExecutionSample
from hintgen.errors import InvalidArgumentError
from hintgen.stats import (
    betainc_regularized, sample_variance, t_cdf, welch_p_matrix, welch_t, workload_difference,
)


def _t_pdf(x, df):
    logc = special.gammaln((df + 1) / 2) - special.gammaln(df / 2) - 0.5 * math.log(df * math.pi)
    return math.exp(logc - (df + 1) / 2 * math.log1p(x * x / df))


def _t_cdf_quad(t, df):
    # integrate the density from 0 to |t| and fold around the symmetric centre
    val, _ = integrate.quad(_t_pdf, 0.0, abs(t), args=(df,), epsabs=1e-14, epsrel=1e-13,
                            limit=200)
    return 0.5 + val if t >= 0 else 0.5 - val


GRID = [(t, df) for t in (-6.0, -2.5, -0.7, 0.3, 1.0, 1.9, 3.2, 4.5, 8.0, 15.0)
        for df in (1.0, 2.0, 2.9412, 7.5, 30.0)]


def test_fixture_closed_form():
    r = welch_t([10, 11, 12], [8, 8.5, 9])
    # hand arithmetic: diff 2.5, se^2 = 1/3 + 0.25/3 = 5/12
    assert r.t_statistic == pytest.approx(2.5 / math.sqrt(5 / 12), abs=1e-12)
    assert r.degrees_of_freedom == pytest.approx((5 / 12) ** 2 / ((1 / 3) ** 2 / 2 + (1 / 12) ** 2 / 2),
                                                 abs=1e-12)
    assert abs(r.t_statistic - 3.8730) < 1e-4
    assert abs(r.degrees_of_freedom - 2.9412) < 1e-4
    assert r.p_one_tailed == pytest.approx(0.015780, abs=5e-6)


@pytest.mark.parametrize("t,df", GRID)
def test_t_cdf_matches_quadrature(t, df):
    assert abs(t_cdf(t, df) - _t_cdf_quad(t, df)) < 1e-9


def test_t_cdf_centre_is_exact():
    for df in (0.5, 1.0, 3.0, 1e6):
        assert t_cdf(0.0, df) == 0.5


def test_t_cdf_infinite_and_nan():
    assert t_cdf(math.inf, 3) == 1.0
    assert t_cdf(-math.inf, 3) == 0.0
    assert math.isnan(t_cdf(math.nan, 3))
    with pytest.raises(InvalidArgumentError):
        t_cdf(1.0, 0.0)


@pytest.mark.parametrize("a,b,x", [(0.5, 0.5, 0.3), (2.0, 3.0, 0.9), (10.0, 0.5, 0.99),
                                   (0.1, 7.0, 1e-4), (40.0, 40.0, 0.5)])
def test_betainc_against_scipy(a, b, x):
    assert betainc_regularized(a, b, x) == pytest.approx(special.betainc(a, b, x), abs=1e-13)


def test_betainc_rejects_bad_domain():
    with pytest.raises(InvalidArgumentError):
        betainc_regularized(-1, 1, 0.5)
    with pytest.raises(InvalidArgumentError):
        betainc_regularized(1, 1, 1.5)


def test_welch_accepts_execution_samples():
    a = ExecutionSample((10.0, 11.0, 12.0))
    b = ExecutionSample((8.0, 8.5, 9.0))
    assert welch_t(a, b) == welch_t([10, 11, 12], [8, 8.5, 9])


def test_identical_samples_give_half():
    r = welch_t([5.0, 5.0], [5.0, 5.0])
    assert r.p_one_tailed == 0.5 and r.t_statistic == 0.0


def test_zero_variance_distinct_means():
    assert welch_t([6.0, 6.0], [5.0, 5.0]).p_one_tailed == 0.0
    assert welch_t([4.0, 4.0], [5.0, 5.0]).p_one_tailed == 1.0


def test_short_sample_rejected():
    with pytest.raises(InvalidArgumentError):
        welch_t([1.0], [1.0, 2.0])


samples = st.lists(st.floats(1.0, 1e4, allow_nan=False), min_size=2, max_size=6)


@settings(max_examples=200, deadline=None)
@given(samples, samples)
def test_p_antisymmetry(a, b):
    if np.var(a) + np.var(b) == 0:
        return
    pab = welch_t(a, b).p_one_tailed
    pba = welch_t(b, a).p_one_tailed
    assert 0.0 <= pab <= 1.0
    assert pab + pba == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(samples, min_size=2, max_size=6))
def test_matrix_agrees_with_pairwise(group):
    group = [g for g in group if np.var(g) > 0]
    if len(group) < 2:
        return
    means = np.array([np.mean(g) for g in group])
    var = np.array([np.var(g, ddof=1) for g in group])
    n = np.array([len(g) for g in group], dtype=float)
    p = welch_p_matrix(means, var, n)
    for i in range(len(group)):
        for j in range(len(group)):
            if i != j:
                assert p[i, j] == pytest.approx(welch_t(group[i], group[j]).p_one_tailed,
                                                abs=1e-9)


def test_workload_difference_noiseless_is_exact():
    pairs = [([9.0, 9.0], [10.0, 10.0]), ([3.0, 3.0], [2.0, 2.0])]
    d = workload_difference(pairs)
    assert d.total_difference == 0.0
    assert d.ci_half_width == 0.0
    assert not d.significant


def test_workload_difference_ci_from_pooled_variance():
    m, b = [1.0, 2.0, 3.0], [4.0, 6.0, 8.0]
    d = workload_difference([(m, b)], confidence=0.95)
    var = np.var(m, ddof=1) / 3 + np.var(b, ddof=1) / 3
    assert d.total_difference == pytest.approx(4.0)
    assert d.ci_half_width == pytest.approx(1.959963984540054 * math.sqrt(var))
    assert d.significant


def test_workload_difference_validation():
    with pytest.raises(InvalidArgumentError):
        workload_difference([])
    with pytest.raises(InvalidArgumentError):
        workload_difference([([1, 2], [1, 2])], confidence=1.0)


def test_sample_variance_of_constant_sample_is_exact_zero():
    assert sample_variance([0.1 + 0.2] * 3) == 0.0
    assert sample_variance([1.0, 2.0, 4.0]) == pytest.approx(np.var([1.0, 2.0, 4.0], ddof=1))
