"""Seeded Wiener paths on time grids, with Brownian-bridge refinement.

Every path is addressed by a :class:`SeedSpec` ``(root, stream)`` that keys a
Philox counter-based generator directly, so any path in an ensemble can be
regenerated on its own without replaying the ones before it.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

_U64 = 1 << 64


@dataclass(frozen=True)
class SeedSpec:
    root: int
    stream: int = 0

    def __post_init__(self):
        for name in ("root", "stream"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or not 0 <= int(v) < _U64:
                raise DomainError(f"{name} must be an unsigned 64-bit integer")
            object.__setattr__(self, name, int(v))

    def generator(self) -> np.random.Generator:
        key = np.array([self.root, self.stream], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def with_stream(self, stream) -> "SeedSpec":
        return SeedSpec(self.root, stream)


def refine_stream(stream, level):
    """Stream index for the ``level``-th bridge refinement of path ``stream`` (< 2**32)."""
    return (int(level) << 32) | int(stream)


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TimeGrid:
    t: np.ndarray

    def __post_init__(self):
        t = _readonly(self.t)
        if t.ndim != 1 or t.size == 0:
            raise DomainError("time grid must be a non-empty 1-d sequence")
        if t[0] != 0.0 or not np.all(np.isfinite(t)) or np.any(np.diff(t) <= 0.0):
            raise DomainError("time grid must start at 0 and increase strictly")
        object.__setattr__(self, "t", t)

    @classmethod
    def uniform(cls, horizon, n_steps):
        if horizon <= 0 or n_steps < 1:
            raise DomainError("need horizon > 0 and at least one step")
        t = horizon * np.arange(n_steps + 1, dtype=float) / n_steps
        return cls(t)

    @property
    def horizon(self):
        return float(self.t[-1])

    @property
    def n_steps(self):
        return self.t.size - 1

    @property
    def dt(self):
        return np.diff(self.t)

    def midpoints(self) -> "TimeGrid":
        """The grid with every interval bisected."""
        t = np.empty(2 * self.t.size - 1)
        t[::2] = self.t
        t[1::2] = 0.5 * (self.t[:-1] + self.t[1:])
        return TimeGrid(t)

    def __len__(self):
        return self.t.size


@dataclass(frozen=True, eq=False)
class SamplePath:
    grid: TimeGrid
    w: np.ndarray
    seed: SeedSpec | None = None

    def __post_init__(self):
        w = _readonly(self.w)
        if w.shape != self.grid.t.shape:
            raise DomainError("path values must match the grid length")
        if w[0] != 0.0:
            raise DomainError("a standard Wiener path starts at 0")
        object.__setattr__(self, "w", w)

    @property
    def t(self):
        return self.grid.t

    def to_csv(self, path):
        """Debug dump with columns ``t, w``."""
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["t", "w"])
            for ti, wi in zip(self.grid.t, self.w):
                out.writerow([repr(float(ti)), repr(float(wi))])


def _increments(grid: TimeGrid, seed: SeedSpec):
    return seed.generator().standard_normal(grid.n_steps) * np.sqrt(grid.dt)


def _cumulate(incr):
    w = np.zeros(incr.shape[:-1] + (incr.shape[-1] + 1,))
    np.cumsum(incr, axis=-1, out=w[..., 1:])
    return w


def sample_wiener(grid: TimeGrid, seed: SeedSpec) -> SamplePath:
    """A standard Wiener path on ``grid``: independent N(0, dt) increments from ``seed``."""
    return SamplePath(grid, _cumulate(_increments(grid, seed)), seed)


class _StreamCursor:
    """One Philox generator re-keyed per stream; same draws as ``SeedSpec(root, s).generator()``.

    Re-keying through the state dict is an order of magnitude cheaper than a
    fresh ``Philox``.  Not shareable across threads.
    """

    def __init__(self, root):
        self._bg = np.random.Philox(key=np.array([root, 0], dtype=np.uint64))
        self._gen = np.random.Generator(self._bg)
        self._state = self._bg.state

    def standard_normal(self, stream, out):
        st = self._state
        st["state"]["key"][1] = stream
        st["state"]["counter"][:] = 0
        st["buffer"][:] = 0
        st["buffer_pos"] = 4
        st["has_uint32"] = 0
        st["uinteger"] = 0
        self._bg.state = st
        return self._gen.standard_normal(out.shape[-1], out=out)


def wiener_ensemble(grid: TimeGrid, root, streams) -> np.ndarray:
    """Rows are ``sample_wiener(grid, SeedSpec(root, s)).w`` for each ``s`` in ``streams``."""
    streams = [SeedSpec(root, s).stream for s in streams]
    cursor = _StreamCursor(root)
    incr = np.empty((len(streams), grid.n_steps))
    for i, s in enumerate(streams):
        cursor.standard_normal(s, incr[i])
    incr *= np.sqrt(grid.dt)
    return _cumulate(incr)


def _bridge_midpoints(grid: TimeGrid, w, seed: SeedSpec):
    # midpoint of [t_i, t_{i+1}] given both ends: mean of ends, variance dt/4
    z = seed.generator().standard_normal(grid.n_steps)
    return 0.5 * (w[..., :-1] + w[..., 1:]) + z * np.sqrt(grid.dt / 4.0)


def _interleave(w, mid):
    out = np.empty(w.shape[:-1] + (2 * w.shape[-1] - 1,))
    out[..., ::2] = w
    out[..., 1::2] = mid
    return out


def bridge_refine(path: SamplePath, seed: SeedSpec) -> SamplePath:
    """Insert Brownian-bridge midpoints; existing values are kept bit-for-bit."""
    mid = _bridge_midpoints(path.grid, path.w, seed)
    return SamplePath(path.grid.midpoints(), _interleave(path.w, mid), path.seed)


def bridge_refine_ensemble(grid: TimeGrid, w, root, streams) -> np.ndarray:
    """Row-wise :func:`bridge_refine` with ``SeedSpec(root, streams[i])`` for row ``i``."""
    w = np.asarray(w, dtype=float)
    streams = [SeedSpec(root, s).stream for s in streams]
    cursor = _StreamCursor(root)
    z = np.empty((w.shape[0], grid.n_steps))
    for i, s in enumerate(streams):
        cursor.standard_normal(s, z[i])
    mid = 0.5 * (w[:, :-1] + w[:, 1:]) + z * np.sqrt(grid.dt / 4.0)
    return _interleave(w, mid)


def scale_path(path: SamplePath, sigma) -> SamplePath:
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    return SamplePath(path.grid, path.w * sigma, path.seed)
