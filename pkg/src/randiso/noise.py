"""Two-sided discretized Wiener paths and the metric dynamical system shift.

A :class:`NoisePath` stores Gaussian increments on a uniform grid covering
``[-S, S]``.  Time shifts are index offsets into the same storage, so
``shift`` never copies data and the composition law holds exactly on the grid.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "NoisePath",
    "NoiseWindowError",
    "sample_path",
    "zero_path",
    "shift",
    "evaluate",
    "dump_path",
    "load_path",
]

_HEADER = struct.Struct("<qddq")
_GRID_RTOL = 1e-9


class NoiseWindowError(ValueError):
    """Raised when a requested time lies outside the stored window or off-grid."""


def _grid_index(t, dt):
    k = round(t / dt)
    if abs(k * dt - t) > _GRID_RTOL * max(1.0, abs(t)):
        raise NoiseWindowError(f"time {t!r} is not a multiple of dt={dt!r}")
    return int(k)


@dataclass(frozen=True, eq=False)
class NoisePath:
    """Immutable two-sided Brownian path with an explicit time origin.

    ``increments[k]`` is the increment over ``[t_k, t_k + dt]`` where
    ``t_k = (k - origin_offset) * dt``.  ``W`` holds the cumulative sum
    anchored so that ``W[origin_offset] == 0`` for an unshifted path.
    """

    seed: int
    dt: float
    horizon: float
    channels: int
    increments: np.ndarray = field(repr=False)
    origin_offset: int
    W: np.ndarray = field(repr=False)
    base_origin: int = 0

    @property
    def n_steps(self):
        return self.increments.shape[0]

    @property
    def t_min(self):
        """Earliest time covered, relative to this path's origin."""
        return -self.origin_offset * self.dt

    @property
    def t_max(self):
        return (self.n_steps - self.origin_offset) * self.dt

    @property
    def is_shifted(self):
        return self.origin_offset != self.base_origin

    def index(self, t):
        """Grid index of time ``t`` (relative to this path's origin)."""
        k = _grid_index(t, self.dt) + self.origin_offset
        if k < 0 or k > self.n_steps:
            raise NoiseWindowError(
                f"time {t!r} outside path window [{self.t_min}, {self.t_max}]"
            )
        return k

    def covers(self, t0, t1):
        eps = _GRID_RTOL * max(1.0, abs(t0), abs(t1))
        return t0 >= self.t_min - eps and t1 <= self.t_max + eps

    def increments_between(self, t0, t1):
        """Read-only view of the increments over ``[t0, t1]``, shape ``(K, n)``."""
        if t1 < t0:
            raise ValueError("t1 must not precede t0")
        i0, i1 = self.index(t0), self.index(t1)
        return self.increments[i0:i1]

    def values_between(self, t0, t1):
        """``W`` on the grid ``t0, t0+dt, ..., t1`` relative to this origin."""
        i0, i1 = self.index(t0), self.index(t1)
        return self.W[i0 : i1 + 1] - self.W[self.origin_offset]

    def times_between(self, t0, t1):
        i0, i1 = self.index(t0), self.index(t1)
        return (np.arange(i0, i1 + 1) - self.origin_offset) * self.dt

    def coarsen(self, factor):
        """Same Brownian path observed on a grid ``factor`` times coarser."""
        factor = int(factor)
        if factor < 1:
            raise ValueError("factor must be a positive integer")
        if self.is_shifted or self.origin_offset % factor or self.n_steps % factor:
            raise ValueError("path grid is not divisible by the coarsening factor")
        inc = self.increments.reshape(-1, factor, self.channels).sum(axis=1)
        return _build(self.seed, self.dt * factor, self.horizon, inc,
                      self.origin_offset // factor)


def _build(seed, dt, horizon, increments, origin):
    increments = np.ascontiguousarray(increments, dtype=np.float64)
    n = increments.shape[1]
    W = np.empty((increments.shape[0] + 1, n))
    W[origin] = 0.0
    W[origin + 1 :] = np.cumsum(increments[origin:], axis=0)
    W[:origin] = -np.cumsum(increments[:origin][::-1], axis=0)[::-1]
    increments.setflags(write=False)
    W.setflags(write=False)
    return NoisePath(int(seed), float(dt), float(horizon), n, increments,
                     origin, W, origin)


def _check_grid(dt, horizon, channels):
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon!r}")
    if channels < 1:
        raise ValueError(f"need at least one channel, got {channels!r}")
    return _grid_index(horizon, dt)


def sample_path(seed, dt, horizon, channels=1):
    """Sample a Brownian path on ``[-horizon, horizon]`` with grid step ``dt``.

    Each (seed, channel, side) pair owns an independent counter-based Philox
    stream.  The forward side is drawn outward from 0 and the backward side
    outward from 0 as well, so paths with the same seed and dt agree on their
    common window whatever the horizon.
    """
    N = _check_grid(dt, horizon, channels)
    sd = np.sqrt(dt)
    inc = np.empty((2 * N, channels))
    for c in range(channels):
        for side in (0, 1):
            rng = np.random.Generator(
                np.random.Philox(np.random.SeedSequence([int(seed), c, side]))
            )
            z = rng.standard_normal(N) * sd
            if side == 0:
                inc[N:, c] = z
            else:
                inc[:N, c] = z[::-1]
    return _build(seed, dt, horizon, inc, N)


def zero_path(dt, horizon, channels=1):
    """All-zero path; driving a model with it gives the deterministic flow."""
    N = _check_grid(dt, horizon, channels)
    return _build(-1, dt, horizon, np.zeros((2 * N, channels)), N)


def shift(path, t):
    """Return ``theta_t path``: ``(theta_t w)(s) = w(s + t) - w(t)``."""
    k = _grid_index(t, path.dt)
    new = path.origin_offset + k
    if new < 0 or new > path.n_steps:
        raise NoiseWindowError(f"shift by {t!r} exhausts the path window")
    if k == 0:
        return path
    return NoisePath(path.seed, path.dt, path.horizon, path.channels,
                     path.increments, new, path.W, path.base_origin)


def evaluate(path, s):
    """Value ``W(s)`` (vector over channels) of the path at grid time ``s``."""
    return path.W[path.index(s)] - path.W[path.origin_offset]


def dump_path(path, fh):
    """Write an unshifted path to a binary stream (little-endian header + data)."""
    if path.is_shifted:
        raise ValueError("only unshifted paths can be dumped")
    fh.write(_HEADER.pack(path.seed, path.dt, path.horizon, path.channels))
    fh.write(path.increments.astype("<f8").tobytes())


def load_path(fh):
    """Inverse of :func:`dump_path`."""
    head = fh.read(_HEADER.size)
    if len(head) != _HEADER.size:
        raise ValueError("truncated path header")
    seed, dt, horizon, n = _HEADER.unpack(head)
    N = _check_grid(dt, horizon, n)
    data = fh.read()
    if len(data) != 2 * N * n * 8:
        raise ValueError("path payload does not match header")
    inc = np.frombuffer(data, dtype="<f8").reshape(2 * N, n).astype(np.float64)
    return _build(seed, dt, horizon, inc, N)
