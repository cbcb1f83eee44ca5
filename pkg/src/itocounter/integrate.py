"""Left-point Ito and time integrals along sample paths, and the Ito-lemma residual.

Integrands are callables ``g(t, w)`` evaluated on numpy arrays.  All sums carry
the exact rounding error of every addition (TwoSum compensation); single-path
and ensemble versions run the same float operations in the same order, so
they agree bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import RangeError
from .paths import SamplePath, TimeGrid
from .transform import AntiderivativeTable, default_table, f_eval, h, h_prime

IntegrandFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


def spatial(fn) -> IntegrandFn:
    """Lift a function of ``w`` alone to an integrand ``g(t, w)``."""
    return lambda t, w: fn(w)


def constant(c) -> IntegrandFn:
    return lambda t, w: np.full(np.broadcast(t, w).shape, float(c))


def compensated_sum(terms):
    """Compensated sum over the last axis.

    Pairwise cascade where every addition is a TwoSum: the exact rounding
    error of each partial sum is kept and the errors are added back at the end.
    Rows of a 2-d input are summed independently with identical arithmetic.
    """
    x = np.asarray(terms, dtype=float)
    if x.shape[-1] == 0:
        return 0.0 if x.ndim == 1 else np.zeros(x.shape[:-1])
    errs = []
    with np.errstate(invalid="ignore"):
        while x.shape[-1] > 1:
            if x.shape[-1] % 2:
                x = np.concatenate([x, np.zeros(x.shape[:-1] + (1,))], axis=-1)
            half = x.shape[-1] // 2
            a, b = x[..., :half], x[..., half:]
            s = a + b
            bp = s - a
            err = s - bp
            np.subtract(a, err, out=err)
            np.subtract(b, bp, out=bp)
            err += bp
            errs.append(err)
            x = s
        total = x[..., 0] + np.sum(np.concatenate(errs, axis=-1), axis=-1) if errs else x[..., 0]
    return float(total) if np.ndim(total) == 0 else total


@dataclass(frozen=True)
class PathIntegralResult:
    value: float
    n_steps: int
    overflow_flag: bool = False
    bad_index: Optional[int] = None


def _evaluate(g, t, w):
    """``g`` on the left endpoints; returns (values, bad_index)."""
    try:
        vals = np.broadcast_to(np.asarray(g(t[:-1], w[:-1]), dtype=float), w[:-1].shape)
    except RangeError as exc:
        return None, exc.index
    bad = ~np.isfinite(vals)
    if np.any(bad):
        return None, int(np.flatnonzero(bad)[0])
    return vals, None


def _left_sum(path: SamplePath, g, weights) -> PathIntegralResult:
    n = path.grid.n_steps
    vals, bad = _evaluate(g, path.t, path.w)
    if vals is None:
        return PathIntegralResult(float("nan"), n, True, bad)
    terms = vals * weights
    nonfinite = ~np.isfinite(terms)
    if np.any(nonfinite):
        return PathIntegralResult(float("nan"), n, True, int(np.flatnonzero(nonfinite)[0]))
    value = compensated_sum(terms)
    if not np.isfinite(value):
        return PathIntegralResult(float("nan"), n, True, None)
    return PathIntegralResult(float(value), n)


def ito_left_sum(path: SamplePath, g: IntegrandFn) -> PathIntegralResult:
    """``sum_i g(t_i, w_i) (w_{i+1} - w_i)``."""
    return _left_sum(path, g, np.diff(path.w))


def time_left_sum(path: SamplePath, g: IntegrandFn) -> PathIntegralResult:
    """``sum_i g(t_i, w_i) (t_{i+1} - t_i)``."""
    return _left_sum(path, g, np.diff(path.t))


def pathwise_l2_functional(path: SamplePath, g: IntegrandFn) -> PathIntegralResult:
    """Discrete ``int_0^T g^2 ds``; a finite value witnesses pathwise square integrability."""
    return time_left_sum(path, lambda t, w: np.square(g(t, w)))


def pathwise_l1_functional(path: SamplePath, g: IntegrandFn) -> PathIntegralResult:
    """Discrete ``int_0^T |g| ds``."""
    return time_left_sum(path, lambda t, w: np.abs(g(t, w)))


def ito_lemma_residual(path: SamplePath, table: AntiderivativeTable | None = None) -> float:
    """``f(w_n) - f(0) - sum h(w_i) dw_i - 1/2 sum h'(w_i) dt_i``.

    Range errors from ``h`` or the antiderivative table propagate.
    """
    table = table or default_table()
    w, t = path.w, path.t
    ito = compensated_sum(h(w[:-1]) * np.diff(w))
    drift = compensated_sum(h_prime(w[:-1]) * np.diff(t))
    return float(f_eval(w[-1], table) - f_eval(0.0, table) - ito - 0.5 * drift)


# Ensemble versions: rows of ``w`` are paths on the common ``grid``.


def _ensemble_sum(grid: TimeGrid, w, g, weights):
    w = np.asarray(w, dtype=float)
    t = np.broadcast_to(grid.t, w.shape)
    try:
        vals = np.broadcast_to(np.asarray(g(t[:, :-1], w[:, :-1]), dtype=float), w[:, :-1].shape)
    except RangeError:
        vals = np.full(w[:, :-1].shape, np.nan)
        for i in range(w.shape[0]):
            try:
                vals[i] = g(t[i, :-1], w[i, :-1])
            except RangeError:
                pass
    with np.errstate(invalid="ignore", over="ignore"):
        terms = vals * weights
        ok = np.all(np.isfinite(terms), axis=1)
        values = compensated_sum(np.where(ok[:, None], terms, 0.0))
    ok &= np.isfinite(values)
    return np.where(ok, values, np.nan), ok


def ito_left_sums(grid: TimeGrid, w, g: IntegrandFn):
    """Row-wise :func:`ito_left_sum`; returns ``(values, ok)`` with NaN where flagged."""
    return _ensemble_sum(grid, w, g, np.diff(np.asarray(w, dtype=float), axis=1))


def time_left_sums(grid: TimeGrid, w, g: IntegrandFn):
    """Row-wise :func:`time_left_sum`; returns ``(values, ok)``."""
    return _ensemble_sum(grid, w, g, grid.dt)


def ito_lemma_residuals(grid: TimeGrid, w, table: AntiderivativeTable | None = None):
    """Row-wise :func:`ito_lemma_residual`; every row must lie inside the table coverage."""
    table = table or default_table()
    w = np.asarray(w, dtype=float)
    left = w[:, :-1]
    ito = compensated_sum(h(left) * np.diff(w, axis=1))
    drift = compensated_sum(h_prime(left) * grid.dt)
    return f_eval(w[:, -1], table) - f_eval(0.0, table) - ito - 0.5 * drift
