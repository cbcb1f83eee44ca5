"""Empirical-distribution tools: KS distance, Hill tail index, survival integral, running means."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DomainError

# asymptotic Kolmogorov critical values c(alpha); reject when D > c / sqrt(n)
KS_CRITICAL = {0.01: 1.628, 0.05: 1.358}


class EmpiricalSample:
    """An immutable sample with a lazily cached ascending view."""

    def __init__(self, values):
        v = np.array(values, dtype=float).ravel()
        v.setflags(write=False)
        self.values = v

    @cached_property
    def sorted_view(self):
        s = np.sort(self.values)
        s.setflags(write=False)
        return s

    def __len__(self):
        return self.values.size

    def count_at_most(self, x):
        """Number of values ``<= x`` via binary search on the sorted view."""
        return int(np.searchsorted(self.sorted_view, x, side="right"))


def _as_sample(sample):
    return sample if isinstance(sample, EmpiricalSample) else EmpiricalSample(sample)


def ks_statistic(sample, cdf) -> float:
    """Kolmogorov-Smirnov distance ``sup |F_n - F|`` between the sample and ``cdf``.

    ``cdf`` must accept an array and return plain probabilities.
    """
    sample = _as_sample(sample)
    n = len(sample)
    if n == 0:
        raise DomainError("KS statistic needs a non-empty sample")
    x = sample.sorted_view
    F = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1, dtype=float)
    d_plus = np.max(i / n - F)
    d_minus = np.max(F - (i - 1.0) / n)
    return float(max(d_plus, d_minus))


def ks_threshold(n, alpha=0.01):
    return KS_CRITICAL[alpha] / math.sqrt(n)


@dataclass(frozen=True)
class TailIndexEstimate:
    alpha_hat: float
    k: int
    standard_error: float


def default_hill_k(n):
    return int(round(n ** (2.0 / 3.0)))


def hill_estimator(sample, k=None) -> TailIndexEstimate:
    """Hill estimate of the tail index from the ``k`` largest order statistics.

    ``alpha_hat = 1 / (mean(log x_(n-i+1), i=1..k) - log x_(n-k))``, standard
    error ``alpha_hat / sqrt(k)``.  ``k`` defaults to ``round(n ** (2/3))``.
    """
    sample = _as_sample(sample)
    n = len(sample)
    k = default_hill_k(n) if k is None else int(k)
    if k < 10 or k >= n:
        raise DomainError("need 10 <= k < n")
    top = sample.sorted_view[n - k - 1:]
    if top[0] <= 0.0:
        raise DomainError("Hill estimator needs the top k+1 values to be positive")
    logs = np.log(top)
    spacing = math.fsum(logs[1:] - logs[0]) / k
    if not spacing > 0.0:
        raise DomainError("degenerate tail window (all top values equal)")
    alpha = 1.0 / spacing
    return TailIndexEstimate(alpha, k, alpha / math.sqrt(k))


def tail_expectation(sample) -> float:
    """``int_0^inf P(X > t) dt`` for the empirical law of a non-negative sample.

    Accumulated as ``sum_i (x_(i) - x_(i-1)) * (n - i + 1) / n`` over sorted gaps.
    """
    sample = _as_sample(sample)
    x = sample.sorted_view
    n = x.size
    if n == 0:
        raise DomainError("empty sample")
    if x[0] < 0.0:
        raise DomainError("tail expectation needs non-negative values")
    gaps = np.diff(x, prepend=0.0)
    above = np.arange(n, 0, -1, dtype=float)
    return math.fsum(gaps * above) / n


def sample_mean(sample) -> float:
    v = _as_sample(sample).values
    return math.fsum(v) / v.size


def running_mean_profile(sample, checkpoints):
    """Mean of the first ``m`` values (insertion order) for each ``m`` in ``checkpoints``."""
    v = _as_sample(sample).values
    cps = [int(m) for m in checkpoints]
    if any(b <= a for a, b in zip(cps, cps[1:])) or (cps and (cps[0] < 1 or cps[-1] > v.size)):
        raise DomainError("checkpoints must be ascending counts within the sample size")
    return [math.fsum(v[:m]) / m for m in cps]


def decade_checkpoints(n, smallest=100):
    """Counts ``n, n/10, n/100, ...`` down to ``smallest``, ascending."""
    cps = []
    m = int(n)
    while m >= smallest:
        cps.append(m)
        m //= 10
    return cps[::-1]


def last_to_half_ratio(sample) -> float:
    """Running mean over all ``n`` values divided by the running mean over the first ``n // 2``."""
    v = _as_sample(sample).values
    half, full = running_mean_profile(v, [v.size // 2, v.size])
    return full / half
