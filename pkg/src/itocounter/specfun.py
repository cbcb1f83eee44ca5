"""Tail-accurate densities, CDFs and quantiles for the standard normal and Student-t(2).

Probabilities are carried as :class:`TailProbability` so that masses near 1 are
never formed as ``1 - tiny``.  Every function accepts scalars or numpy arrays;
scalar input gives scalar output.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import special

from .errors import DomainError, PrecisionError, RangeError

ArrayLike = Union[float, np.ndarray]

SQRT2 = math.sqrt(2.0)
SQRT_2PI = math.sqrt(2.0 * math.pi)
SQRT_PI_OVER_2 = math.sqrt(math.pi / 2.0)

# Acklam's rational approximation to the normal quantile (relative error < 1.15e-9).
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _finite(x, name="x"):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite")
    return arr


def _out(arr):
    return float(arr) if np.ndim(arr) == 0 else arr


@dataclass(frozen=True, eq=False)
class TailProbability:
    """A probability stored as the smaller-error side of its complement pair.

    ``upper=False`` means the stored ``mass`` is ``p = P(X <= x)``; ``upper=True``
    means it is ``q = P(X > x)`` and the probability it represents is ``1 - q``.
    Both fields may be numpy arrays of matching shape.
    """

    mass: ArrayLike
    upper: Union[bool, np.ndarray] = False

    def __post_init__(self):
        m = np.asarray(self.mass, dtype=float)
        if not np.all((m > 0.0) & (m < 1.0)):
            raise DomainError("probability mass must lie strictly inside (0, 1)")
        u = np.broadcast_to(np.asarray(self.upper, dtype=bool), m.shape)
        if m.ndim == 0:
            object.__setattr__(self, "mass", float(m))
            object.__setattr__(self, "upper", bool(u))
        else:
            object.__setattr__(self, "mass", m)
            object.__setattr__(self, "upper", np.array(u))

    @classmethod
    def lower_tail(cls, p):
        return cls(p, False)

    @classmethod
    def upper_tail(cls, q):
        return cls(q, True)

    @property
    def orientation(self):
        if np.ndim(self.upper) == 0:
            return "upper" if self.upper else "lower"
        return np.where(self.upper, "upper", "lower")

    def complement(self) -> "TailProbability":
        """``1 - u``, exact: the mass is kept and the orientation flipped."""
        return TailProbability(self.mass, np.logical_not(self.upper))

    @property
    def value(self):
        """The plain probability (``1 - mass`` when upper-oriented); may round."""
        return _out(np.where(self.upper, 1.0 - np.asarray(self.mass), self.mass))

    def _converted(self, flip):
        m = np.asarray(self.mass)
        other = 1.0 - m
        if np.any(flip & (other >= 1.0)):
            raise PrecisionError("complement of a mass this small is not representable")
        return _out(np.where(flip, other, m))

    @property
    def lower_mass(self):
        """``P(X <= x)``; raises :class:`PrecisionError` if it rounds to 1."""
        return self._converted(np.asarray(self.upper))

    @property
    def upper_mass(self):
        """``P(X > x)``; raises :class:`PrecisionError` if it rounds to 1."""
        return self._converted(~np.asarray(self.upper))

    def __repr__(self):
        return f"TailProbability(mass={self.mass!r}, orientation={self.orientation!r})"


def _exp_neg_half_square(x):
    # exp(-x^2/2) with x^2 split so the large exponent is formed exactly
    x = np.asarray(x, dtype=float)
    xs = np.trunc(x * 16.0) / 16.0
    d = x - xs
    return np.exp(-0.5 * xs * xs) * np.exp(-0.5 * d * (x + xs))


def normal_upper_mass(a):
    """``P(Z > a)`` for ``a >= 0``; relative accuracy ~1e-15 out to the underflow limit."""
    a = np.asarray(a, dtype=float)
    return 0.5 * special.erfcx(a / SQRT2) * _exp_neg_half_square(a)


def normal_hazard(a):
    """``phi(a) / P(Z > a)`` for ``a >= 0``, with no exponential evaluated."""
    a = np.asarray(a, dtype=float)
    return 1.0 / (SQRT_PI_OVER_2 * special.erfcx(a / SQRT2))


def normal_pdf(x):
    """Standard normal density."""
    x = _finite(x)
    return _out(_exp_neg_half_square(x) / SQRT_2PI)


def normal_cdf(x) -> TailProbability:
    """Standard normal CDF, lower-oriented for ``x <= 0`` and upper-oriented for ``x > 0``.

    Raises :class:`RangeError` once the tail mass underflows to zero (``|x| > 38.4``).
    """
    x = _finite(x)
    m = normal_upper_mass(np.abs(x))
    if np.any(m <= 0.0):
        raise RangeError("normal tail underflow", index=_first(m <= 0.0))
    return TailProbability(m, x > 0.0)


def _first(mask):
    flat = np.flatnonzero(np.ravel(mask))
    return int(flat[0]) if flat.size else None


def _acklam(p):
    # p in (0, 0.5]; returns an approximation to the lower quantile (<= 0)
    p = np.asarray(p, dtype=float)
    x = np.empty_like(p)
    tail = p < _P_LOW
    if np.any(tail):
        q = np.sqrt(-2.0 * np.log(p[tail]))
        num = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        den = (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        x[tail] = num / den
    mid = ~tail
    if np.any(mid):
        q = p[mid] - 0.5
        r = q * q
        num = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
        den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
        x[mid] = num / den
    return x


def _lower_quantile(p):
    """Quantile for lower masses ``p`` in (0, 0.5]: Acklam start plus one Halley step."""
    x = _acklam(p)
    # x <= 0 here, so P(Z <= x) = P(Z > -x) is evaluated without cancellation
    err = normal_upper_mass(-x) - p
    u = err / (_exp_neg_half_square(x) / SQRT_2PI)
    x = x - u / (1.0 + 0.5 * x * u)
    return np.minimum(x, 0.0)


def normal_quantile(u: TailProbability):
    """Inverse of :func:`normal_cdf`; absolute error below 1e-13 for masses down to 1e-300."""
    m = np.asarray(u.mass, dtype=float)
    upper = np.asarray(u.upper, dtype=bool)
    small = m <= 0.5
    # work with the smaller tail: 1 - m is exact for m >= 0.5
    tail = np.where(small, m, 1.0 - m)
    z = _lower_quantile(tail)  # quantile of the smaller tail, <= 0
    # lower & small -> z; lower & big -> -z; upper & small -> -z; upper & big -> z
    sign = np.where(small != upper, 1.0, -1.0)
    return _out(sign * z + 0.0)


def t2_pdf(x):
    """Student-t(2) density ``(2 + x^2)^(-3/2)``."""
    x = _finite(x)
    s2 = 2.0 + x * x
    return _out(1.0 / (s2 * np.sqrt(s2)))


def t2_upper_mass(a):
    """``P(T > a)`` for ``a >= 0`` without subtracting near-equal quantities."""
    a = np.asarray(a, dtype=float)
    with np.errstate(over="ignore", divide="ignore"):
        s2 = 2.0 + a * a
        near = 1.0 / (s2 + a * np.sqrt(s2))
        far = 0.5 / np.maximum(a, 1.0) / np.maximum(a, 1.0)
    return np.where(a < 1e100, near, far)


def t2_cdf(x) -> TailProbability:
    """Student-t(2) CDF; upper-oriented for ``x > 0`` so the mass stays near ``1/(2x^2)``."""
    x = _finite(x)
    m = t2_upper_mass(np.abs(x))
    if np.any(m <= 0.0):
        raise RangeError("t2 tail underflow", index=_first(m <= 0.0))
    return TailProbability(m, x > 0.0)


def t2_quantile(u: TailProbability):
    """Closed-form inverse of :func:`t2_cdf`.

    Lower mass p gives ``(2p - 1) / sqrt(2p(1 - p))``; an upper mass q gives
    ``(1 - 2q) / sqrt(2q(1 - q))``.
    """
    m = np.asarray(u.mass, dtype=float)
    upper = np.asarray(u.upper, dtype=bool)
    num = np.where(upper, 1.0 - 2.0 * m, 2.0 * m - 1.0)
    return _out(num / np.sqrt(2.0 * m * (1.0 - m)))


def t2_cdf_value(x):
    """Plain-real t2 CDF, for goodness-of-fit use where tail form is not needed."""
    x = np.asarray(x, dtype=float)
    m = t2_upper_mass(np.abs(x))
    return _out(np.where(x > 0.0, 1.0 - m, m))


@dataclass(frozen=True)
class DistributionSpec:
    """Bundled density/CDF/survival/quantile for a one-dimensional law."""

    name: str
    pdf: object
    cdf: object
    quantile: object

    def survival(self, x) -> TailProbability:
        return self.cdf(x).complement()


NORMAL = DistributionSpec("normal", normal_pdf, normal_cdf, normal_quantile)
STUDENT_T2 = DistributionSpec("student_t2", t2_pdf, t2_cdf, t2_quantile)
