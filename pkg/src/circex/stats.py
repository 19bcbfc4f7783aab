"""Descriptive statistics, rank and product-moment correlations, and their inference.

Kendall's tau is the tie-corrected tau-b, computed with Knight's merge-sort
algorithm. Spearman's rho is the Pearson correlation of average ranks, evaluated
in exact rational arithmetic. Two-sided p-values for a Pearson coefficient use
Student's t with ``n - 2`` degrees of freedom; the t tail probability comes
from the regularized incomplete beta function.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .errors import DomainError, InsufficientDataError, UndefinedResultError

METHODS = ("pearson", "kendall", "spearman")


@dataclass(frozen=True)
class Series:
    """Values ``y`` against an axis ``x``; without ``x`` the axis is ``0..n-1``."""

    label: str
    y: tuple[float, ...]
    x: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if not self.y:
            raise InsufficientDataError(f"series {self.label!r} is empty")
        if self.x is not None and len(self.x) != len(self.y):
            raise DomainError(f"series {self.label!r}: x and y differ in length")
        if not all(math.isfinite(v) for v in self.axis + self.y):
            raise DomainError(f"series {self.label!r} contains non-finite values")

    @property
    def axis(self) -> tuple[float, ...]:
        return self.x if self.x is not None else tuple(float(i) for i in range(len(self.y)))

    @classmethod
    def from_pairs(cls, label: str, pairs: Sequence[tuple[float, float]]) -> "Series":
        return cls(label, tuple(float(p[1]) for p in pairs), tuple(float(p[0]) for p in pairs))


@dataclass(frozen=True)
class DescriptiveSummary:
    n: int
    mean: float
    variance: float
    std_dev: float
    min: float
    max: float


@dataclass(frozen=True)
class CorrelationReport:
    method: str
    coefficient: float
    n: int
    ci_low: float | None = None
    ci_high: float | None = None
    confidence: float | None = None
    p_value: float | None = None


def describe(values: Series | Sequence[float]) -> DescriptiveSummary:
    """Mean, sample variance (n - 1 denominator), standard deviation and range."""
    data = list(values.y if isinstance(values, Series) else values)
    if len(data) < 2:
        raise InsufficientDataError("variance needs at least two values")
    variance = statistics.variance(data)
    return DescriptiveSummary(
        n=len(data),
        mean=statistics.fmean(data),
        variance=variance,
        std_dev=math.sqrt(variance),
        min=min(data),
        max=max(data),
    )


def _pairs(x: Sequence[float], y: Sequence[float], minimum: int) -> tuple[list[float], list[float]]:
    x, y = list(x), list(y)
    if len(x) != len(y):
        raise DomainError("x and y differ in length")
    if len(x) < minimum:
        raise InsufficientDataError(f"need at least {minimum} pairs, got {len(x)}")
    return x, y


def _clamp(r: float) -> float:
    return max(-1.0, min(1.0, r))


def pearson_coefficient(x: Sequence[float], y: Sequence[float]) -> float:
    x, y = _pairs(x, y, 2)
    mx = math.fsum(x) / len(x)
    my = math.fsum(y) / len(y)
    dx = [v - mx for v in x]
    dy = [v - my for v in y]
    sxx = math.fsum(d * d for d in dx)
    syy = math.fsum(d * d for d in dy)
    if sxx == 0 or syy == 0:
        raise UndefinedResultError("correlation undefined for a constant coordinate")
    sxy = math.fsum(a * b for a, b in zip(dx, dy))
    return _clamp(sxy / math.sqrt(sxx * syy))


def pearson(x: Sequence[float], y: Sequence[float], confidence: float = 0.95) -> CorrelationReport:
    """Product-moment correlation with a Fisher-z interval (n >= 4) and a t-test p-value."""
    x, y = _pairs(x, y, 3)
    r = pearson_coefficient(x, y)
    n = len(x)
    low = high = None
    if n >= 4:
        low, high = fisher_interval(r, n, confidence)
    return CorrelationReport(
        "pearson", r, n, low, high, confidence if low is not None else None, correlation_significance(r, n)
    )


# -- Kendall -----------------------------------------------------------------


def _tie_pairs(sorted_values: Sequence) -> int:
    """Number of tied pairs in an already sorted sequence."""
    total = 0
    run = 1
    for a, b in zip(sorted_values, sorted_values[1:]):
        if a == b:
            run += 1
        else:
            total += run * (run - 1) // 2
            run = 1
    return total + run * (run - 1) // 2


def _count_inversions(values: list) -> tuple[int, list]:
    """Count pairs i < j with values[i] > values[j]; also return the sorted values."""
    values = list(values)
    n = len(values)
    swaps = 0
    width = 1
    buf = values[:]
    while width < n:
        for lo in range(0, n, 2 * width):
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            i, j, k = lo, mid, lo
            while i < mid and j < hi:
                if values[j] < values[i]:
                    buf[k] = values[j]
                    swaps += mid - i
                    j += 1
                else:
                    buf[k] = values[i]
                    i += 1
                k += 1
            buf[k:hi] = values[i:mid] + values[j:hi]
        values, buf = buf, values
        width *= 2
    return swaps, values


def kendall_statistic(x: Sequence[float], y: Sequence[float]) -> tuple[int, int, int, int]:
    """Return ``(C - D, n_pairs, ties_in_x, ties_in_y)`` in O(n log n)."""
    n = len(x)
    order = sorted(zip(x, y))
    n_pairs = n * (n - 1) // 2
    ties_x = _tie_pairs([p[0] for p in order])
    ties_xy = _tie_pairs(order)
    ys = [p[1] for p in order]
    swaps, ys_sorted = _count_inversions(ys)
    ties_y = _tie_pairs(ys_sorted)
    return n_pairs - ties_x - ties_y + ties_xy - 2 * swaps, n_pairs, ties_x, ties_y


def kendall_tau(x: Sequence[float], y: Sequence[float]) -> CorrelationReport:
    x, y = _pairs(x, y, 2)
    s, n_pairs, ties_x, ties_y = kendall_statistic(x, y)
    if ties_x == n_pairs or ties_y == n_pairs:
        raise UndefinedResultError("Kendall's tau undefined when a coordinate is all ties")
    tau = s / math.sqrt((n_pairs - ties_x) * (n_pairs - ties_y))
    return CorrelationReport("kendall", _clamp(tau), len(x))


# -- Spearman ----------------------------------------------------------------


def average_ranks(values: Sequence[float]) -> list[Fraction]:
    """1-based ranks; tied values share the mean of the positions they occupy."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks: list[Fraction] = [Fraction(0)] * len(values)
    start = 0
    while start < len(order):
        end = start
        while end + 1 < len(order) and values[order[end + 1]] == values[order[start]]:
            end += 1
        rank = Fraction(start + end + 2, 2)
        for pos in range(start, end + 1):
            ranks[order[pos]] = rank
        start = end + 1
    return ranks


def spearman_rho(x: Sequence[float], y: Sequence[float]) -> CorrelationReport:
    x, y = _pairs(x, y, 3)
    rx, ry = average_ranks(x), average_ranks(y)
    n = len(x)
    mean = Fraction(n + 1, 2)
    cov = sum((a - mean) * (b - mean) for a, b in zip(rx, ry))
    vx = sum((a - mean) ** 2 for a in rx)
    vy = sum((b - mean) ** 2 for b in ry)
    if vx == 0 or vy == 0:
        raise UndefinedResultError("Spearman's rho undefined for a constant coordinate")
    if vx == vy:
        rho = float(cov / vx)
    else:
        rho = math.copysign(math.sqrt(float(cov * cov / (vx * vy))), cov)
    return CorrelationReport("spearman", _clamp(rho), n)


def correlate(x: Sequence[float], y: Sequence[float], method: str, confidence: float = 0.95) -> CorrelationReport:
    if method == "pearson":
        return pearson(x, y, confidence)
    if method == "kendall":
        return kendall_tau(x, y)
    if method == "spearman":
        return spearman_rho(x, y)
    raise DomainError(f"unknown correlation method {method!r}")


# -- inference ---------------------------------------------------------------


def fisher_interval(r: float, n: int, confidence: float = 0.95) -> tuple[float, float]:
    """Confidence interval for a correlation coefficient via Fisher's z transform."""
    if not 0 < confidence < 1:
        raise DomainError(f"confidence must lie in (0, 1), got {confidence}")
    if n < 4:
        raise InsufficientDataError("Fisher interval needs n >= 4")
    if abs(r) > 1:
        raise DomainError(f"|r| must not exceed 1, got {r}")
    if abs(r) == 1:
        return r, r
    z = math.atanh(r)
    half = statistics.NormalDist().inv_cdf((1 + confidence) / 2) / math.sqrt(n - 3)
    return math.tanh(z - half), math.tanh(z + half)


def correlation_significance(r: float, n: int) -> float:
    """Two-sided p-value of H0: rho = 0 from the t statistic ``r*sqrt(n-2)/sqrt(1-r^2)``."""
    if n < 3:
        raise InsufficientDataError("significance test needs n >= 3")
    if abs(r) > 1:
        raise DomainError(f"|r| must not exceed 1, got {r}")
    if abs(r) == 1:
        return 0.0
    df = n - 2
    t = r * math.sqrt(df) / math.sqrt(1 - r * r)
    return student_t_two_sided(t, df)


def student_t_two_sided(t: float, df: float) -> float:
    """P(|T| >= |t|) for Student's t with ``df`` degrees of freedom."""
    if df <= 0:
        raise DomainError("degrees of freedom must be positive")
    return regularized_beta(df / (df + t * t), df / 2, 0.5)


def regularized_beta(x: float, a: float, b: float) -> float:
    """Regularized incomplete beta I_x(a, b) by Lentz's continued fraction."""
    if not 0 <= x <= 1:
        raise DomainError(f"x must lie in [0, 1], got {x}")
    if x == 0 or x == 1:
        return x
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    )
    if x < (a + 1) / (a + b + 2):
        return math.exp(log_front) * _beta_fraction(x, a, b) / a
    return 1 - math.exp(log_front) * _beta_fraction(1 - x, b, a) / b


def _beta_fraction(x: float, a: float, b: float, eps: float = 1e-16, max_iter: int = 10_000) -> float:
    tiny = 1e-300
    c = 1.0
    d = 1 - (a + b) * x / (a + 1)
    d = 1 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        # even step
        num = m * (b - m) * x / ((a + m2 - 1) * (a + m2))
        d = 1 + num * d
        d = 1 / (d if abs(d) > tiny else tiny)
        c = 1 + num / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        # odd step
        num = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1))
        d = 1 + num * d
        d = 1 / (d if abs(d) > tiny else tiny)
        c = 1 + num / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1) < eps:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")
