"""One-way ANOVA and runtime distribution summaries."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

_CF_TOL = 1e-12
_CF_MAX_ITER = 10_000
_TINY = 1e-300


class ZeroWithinVarianceError(ValueError):
    """Every group is constant, so MSW is 0 and F is undefined."""


@dataclass(frozen=True)
class AnovaResult:
    ss_total: float
    ss_between: float
    ss_within: float
    df_between: int
    df_within: int
    ms_between: float
    ms_within: float
    f_value: float
    p_value: float


def _betacf(a: float, b: float, x: float) -> float:
    # Modified Lentz evaluation of the incomplete-beta continued fraction.
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > _TINY else _TINY)
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _TINY else _TINY)
        c = 1.0 + aa / c if abs(c) > _TINY else 1.0 + aa / _TINY
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _TINY else _TINY)
        c = 1.0 + aa / c if abs(c) > _TINY else 1.0 + aa / _TINY
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_TOL:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc_regularized(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta ``I_x(a, b)`` for ``a, b > 0``, ``x`` in [0, 1]."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be > 0")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def f_survival(f: float, df1: int, df2: int) -> float:
    """``P(F' >= f)`` for ``F' ~ F(df1, df2)``."""
    if f <= 0:
        return 1.0
    if math.isinf(f):
        return 0.0
    x = df2 / (df2 + df1 * f)
    return min(1.0, max(0.0, betainc_regularized(df2 / 2.0, df1 / 2.0, x)))


def anova_oneway(groups: Sequence[Sequence[float]]) -> AnovaResult:
    """One-way ANOVA with two-pass (mean, then deviation) sums of squares.

    Args:
        groups: ``k >= 2`` groups with ``N > k`` observations in total.

    Raises:
        ZeroWithinVarianceError: all within-group deviations are zero.
    """
    groups = [[float(x) for x in g] for g in groups]
    k = len(groups)
    if k < 2:
        raise ValueError(f"ANOVA needs at least 2 groups, got {k}")
    if any(len(g) == 0 for g in groups):
        raise ValueError("every group needs at least one observation")
    n_total = sum(len(g) for g in groups)
    if n_total <= k:
        raise ValueError(f"need more observations ({n_total}) than groups ({k})")

    grand = math.fsum(x for g in groups for x in g) / n_total
    means = [math.fsum(g) / len(g) for g in groups]
    sst = math.fsum((x - grand) ** 2 for g in groups for x in g)
    ssb = math.fsum(len(g) * (m - grand) ** 2 for g, m in zip(groups, means))
    ssw = math.fsum((x - m) ** 2 for g, m in zip(groups, means) for x in g)

    df_b, df_w = k - 1, n_total - k
    msb, msw = ssb / df_b, ssw / df_w
    if msw == 0:
        raise ZeroWithinVarianceError("zero within-group variance")
    f = msb / msw
    return AnovaResult(sst, ssb, ssw, df_b, df_w, msb, msw, f, f_survival(f, df_b, df_w))


@dataclass(frozen=True)
class Histogram:
    edges: tuple[float, ...]
    counts: tuple[int, ...]

    @property
    def bin_width(self) -> float:
        return self.edges[1] - self.edges[0]


@dataclass(frozen=True)
class RuntimeStats:
    n: int
    mean: float
    median: float
    std: float
    histogram: Histogram

    @property
    def gauss_mu(self) -> float:
        return self.mean

    @property
    def gauss_sigma(self) -> float:
        return self.std


def histogram(values: Sequence[float], bin_count: int) -> Histogram:
    """Equal-width bins over ``[min, max]``; the maximum lands in the last bin.

    When every value is equal there is a single zero-width bin.
    """
    lo, hi = min(values), max(values)
    if lo == hi:
        return Histogram((lo, hi), (len(values),))
    width = (hi - lo) / bin_count
    edges = tuple(lo + i * width for i in range(bin_count)) + (hi,)
    counts = [0] * bin_count
    for v in values:
        counts[min(int((v - lo) / width), bin_count - 1)] += 1
    return Histogram(edges, tuple(counts))


def runtime_summary(times: Sequence[float], bin_count: int = 10) -> RuntimeStats:
    """Mean, median, sample std (n-1) and histogram of a set of durations."""
    if not times:
        raise ValueError("runtime_summary needs at least one duration")
    if bin_count < 1:
        raise ValueError(f"bin_count must be >= 1, got {bin_count}")
    values = [float(t) for t in times]
    n = len(values)
    mean = sum(values) / n
    ordered = sorted(values)
    mid = n // 2
    median = ordered[mid] if n % 2 else (ordered[mid - 1] + ordered[mid]) / 2
    std = math.sqrt(sum((v - mean) ** 2 for v in values) / (n - 1)) if n > 1 else 0.0
    return RuntimeStats(n, mean, median, std, histogram(values, bin_count))


def gaussian_pdf(x: float, mu: float, sigma: float) -> float:
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    z = (x - mu) / sigma
    return math.exp(-0.5 * z * z) / (sigma * math.sqrt(2.0 * math.pi))
