"""Welch t-test plan distance and workload-level difference aggregation.

The Student t CDF is evaluated through the regularized incomplete beta
function (continued fraction, modified Lentz), so no statistics package is
needed on the hot path of pair generation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np

from .errors import InvalidArgumentError

_CF_EPS = 1e-15
_CF_TINY = 1e-300
_CF_MAX_ITER = 10_000


def _betacf(a: float, b: float, x: float) -> float:
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _CF_TINY:
        d = _CF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def betainc_regularized(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and 0 <= x <= 1."""
    if a <= 0 or b <= 0:
        raise InvalidArgumentError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise InvalidArgumentError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log1p(-x))
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(ln_front) * _betacf(a, b, x) / a
    return 1.0 - math.exp(ln_front) * _betacf(b, a, 1.0 - x) / b


def t_cdf(t: float, df: float) -> float:
    """CDF of Student's t distribution with ``df`` degrees of freedom."""
    if not df > 0:
        raise InvalidArgumentError("df must be positive")
    if math.isnan(t):
        return math.nan
    if math.isinf(t):
        return 1.0 if t > 0 else 0.0
    if t == 0.0:
        return 0.5
    tail = 0.5 * betainc_regularized(0.5 * df, 0.5, df / (df + t * t))
    return 1.0 - tail if t > 0 else tail


@dataclass(frozen=True)
class TTestResult:
    t_statistic: float
    degrees_of_freedom: float
    p_one_tailed: float


def _durations(sample) -> np.ndarray:
    arr = np.asarray(getattr(sample, "durations", sample), dtype=float)
    if arr.ndim != 1 or arr.size < 2:
        raise InvalidArgumentError("each sample needs at least 2 measurements")
    return arr


def sample_variance(a) -> float:
    """Unbiased variance; exactly 0 for constant samples, where the float
    mean can otherwise leave a residue of a few ulps."""
    a = np.asarray(a, dtype=float)
    if a.size and a.max() == a.min():
        return 0.0
    return float(a.var(ddof=1))


def welch_t(sample_i, sample_j) -> TTestResult:
    """One-tailed Welch test of ``mean(i) > mean(j)``.

    A small p means plan i is significantly slower than plan j.
    """
    a, b = _durations(sample_i), _durations(sample_j)
    ni, nj = a.size, b.size
    vi, vj = sample_variance(a) / ni, sample_variance(b) / nj
    diff = float(a.mean() - b.mean())
    se2 = float(vi + vj)
    if se2 == 0.0:
        df = float(ni + nj - 2)
        if diff == 0.0:
            return TTestResult(0.0, df, 0.5)
        t = math.copysign(math.inf, diff)
        return TTestResult(t, df, 1.0 - t_cdf(t, df))
    t = diff / math.sqrt(se2)
    df = float(se2 * se2 / (vi * vi / (ni - 1) + vj * vj / (nj - 1)))
    return TTestResult(t, df, 1.0 - t_cdf(t, df))


def welch_p_matrix(means: np.ndarray, variances: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Pairwise one-tailed p-values ``P[i, j]`` for ``mean_i > mean_j``.

    Vectorized twin of :func:`welch_t` used for all-pairs screening; the CDF
    itself still goes through :func:`t_cdf`.
    """
    se = variances / counts
    diff = means[:, None] - means[None, :]
    se2 = se[:, None] + se[None, :]
    num = se2 ** 2
    den = (se[:, None] ** 2 / (counts[:, None] - 1)) + (se[None, :] ** 2 / (counts[None, :] - 1))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = diff / np.sqrt(se2)
        df = num / den
    n = len(means)
    p = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            if se2[i, j] == 0.0:
                pij = 0.5 if diff[i, j] == 0.0 else (0.0 if diff[i, j] > 0 else 1.0)
            else:
                pij = 1.0 - t_cdf(float(t[i, j]), float(df[i, j]))
            # p(j, i) = 1 - p(i, j): the statistic is antisymmetric
            p[i, j], p[j, i] = pij, 1.0 - pij
    return p


@dataclass(frozen=True)
class WorkloadDiff:
    total_difference: float
    ci_half_width: float
    per_query: list = field(default_factory=list)
    confidence: float = 0.95

    @property
    def significant(self) -> bool:
        return abs(self.total_difference) > self.ci_half_width


def workload_difference(pairs, confidence: float = 0.95, query_ids=None) -> WorkloadDiff:
    """Sum of per-query mean differences (baseline minus method) with a normal
    confidence interval; positive means the method is faster."""
    pairs = list(pairs)
    if not pairs:
        raise InvalidArgumentError("workload_difference needs at least one pair")
    if not 0.0 < confidence < 1.0:
        raise InvalidArgumentError("confidence must be in (0, 1)")
    ids = list(query_ids) if query_ids is not None else [str(k) for k in range(len(pairs))]
    total = 0.0
    var = 0.0
    rows = []
    for qid, (method, base) in zip(ids, pairs):
        m, b = _durations(method), _durations(base)
        d = float(b.mean() - m.mean())
        v = sample_variance(m) / m.size + sample_variance(b) / b.size
        total += d
        var += v
        rows.append((qid, d, v))
    z = NormalDist().inv_cdf((1.0 + confidence) / 2.0)
    return WorkloadDiff(total, z * math.sqrt(var), rows, confidence)
