"""Two-sided Brownian sample paths and keyed noise streams.

A path is stored on the grid ``t_k = k * dt`` (``k`` may be negative) and
anchored so that its value at time 0 is exactly zero.  The increment over
``[k dt, (k+1) dt]`` is the ``k``-th draw of the path's Philox stream, so
generating a longer window (in either direction) never alters values that
were already produced.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from . import io
from .kernels import philox

_ROLE_BITS = 62
_BLOCK_BITS = 48
_GRID_TOL = 1e-9


class NoiseError(ValueError):
    pass


class StreamRole(enum.IntEnum):
    common = 0
    intrinsic = 1
    init = 2


@dataclass(frozen=True)
class NoiseStreamKey:
    """Identity of one Gaussian stream.

    ``particle_id`` doubles as the path index for common-noise streams.
    """

    master_seed: int
    stream_role: StreamRole = StreamRole.common
    particle_id: int = 0
    block_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "stream_role", StreamRole(self.stream_role))
        if not 0 <= self.master_seed < 2**64:
            raise NoiseError("master_seed must fit in 64 bits")
        if not 0 <= self.particle_id < 2**_BLOCK_BITS:
            raise NoiseError("particle_id out of range")
        if not 0 <= self.block_index < 2**(_ROLE_BITS - _BLOCK_BITS):
            raise NoiseError("block_index out of range")

    @property
    def philox_key(self):
        k0 = np.uint64(self.master_seed)
        k1 = np.uint64((int(self.stream_role) << _ROLE_BITS) | (self.block_index << _BLOCK_BITS)
                       | self.particle_id)
        return k0, k1


def stream_k1(role, block_index=0):
    """Base of the second key word; add a particle id to obtain the full word."""
    return np.uint64((int(role) << _ROLE_BITS) | (block_index << _BLOCK_BITS))


def _grid_index(t, dt, what):
    k = t / dt
    r = round(k)
    if abs(k - r) > _GRID_TOL * max(1.0, abs(k)):
        raise NoiseError(f"{what}={t} is not a multiple of dt={dt}")
    return int(r)


def grid_steps(t, dt):
    """Number of ``dt`` steps to time ``t`` (must lie on the grid)."""
    return _grid_index(t, dt, "time")


@dataclass(frozen=True, eq=False)
class BrownianPath:
    """Discretized two-sided path; ``values[anchor]`` is the value at time 0.

    ``shift`` records a Wiener shift relative to the keyed path: the stored
    values equal ``xi(s + shift) - xi(shift)`` of the keyed path ``xi``.
    """

    dt: float
    values: np.ndarray
    anchor: int
    key: NoiseStreamKey | None = None
    shift: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if not self.dt > 0:
            raise NoiseError("dt must be positive")
        if not 0 <= self.anchor < v.shape[0]:
            raise NoiseError("anchor outside the stored window")

    @property
    def dim(self):
        return self.values.shape[1]

    @property
    def seed_id(self):
        return None if self.key is None else self.key.master_seed

    @property
    def n_points(self):
        return self.values.shape[0]

    @property
    def t_start(self):
        return -self.anchor * self.dt

    @property
    def t_end(self):
        return (self.n_points - 1 - self.anchor) * self.dt

    @property
    def times(self):
        return (np.arange(self.n_points) - self.anchor) * self.dt

    def covers(self, t0, t1):
        eps = _GRID_TOL * self.dt
        return self.t_start - eps <= t0 and t1 <= self.t_end + eps

    def __call__(self, t):
        """Piecewise-linear evaluation; returns shape ``t.shape + (dim,)`` (or ``(dim,)``)."""
        t = np.asarray(t, dtype=float)
        if np.any(t < self.t_start - _GRID_TOL * self.dt) or np.any(t > self.t_end + _GRID_TOL * self.dt):
            raise NoiseError(f"time outside path window [{self.t_start}, {self.t_end}]")
        s = np.clip((t - self.t_start) / self.dt, 0.0, self.n_points - 1)
        i = np.minimum(np.floor(s).astype(np.int64), self.n_points - 2) if self.n_points > 1 else np.zeros_like(s, dtype=np.int64)
        w = (s - i)[..., None]
        lo = self.values[i]
        if self.n_points == 1:
            return lo
        return lo + w * (self.values[i + 1] - lo)

    def increments(self, t0, n_steps, dt):
        """Increments of the path over ``n_steps`` consecutive steps of size ``dt`` from ``t0``.

        On-grid reads are exact differences of stored values.
        """
        t = t0 + dt * np.arange(n_steps + 1)
        if abs(dt - self.dt) < 1e-15 * self.dt:
            k0 = _grid_index(t0 - self.t_start, self.dt, "t0")
            if 0 <= k0 and k0 + n_steps < self.n_points:
                return np.diff(self.values[k0:k0 + n_steps + 1], axis=0)
        return np.diff(self(t), axis=0)

    def to_csv(self, path):
        cols = {"t": self.times}
        for j in range(self.dim):
            cols[f"b{j}"] = self.values[:, j]
        return io.write_csv(path, cols)

    @classmethod
    def from_csv(cls, path):
        data = io.read_csv(path)
        t = data.pop("t")
        if t.size < 2:
            raise NoiseError("path CSV needs at least two rows")
        dt = float(t[1] - t[0])
        anchor = int(np.argmin(np.abs(t)))
        if abs(t[anchor]) > _GRID_TOL * dt:
            raise NoiseError("path CSV has no sample at t = 0")
        vals = np.column_stack([data[k] for k in sorted(data, key=lambda s: int(s[1:]))])
        return cls(dt=dt, values=vals, anchor=anchor)

    @classmethod
    def zeros(cls, t_start, t_end, dt, dim=1):
        """The path beta = 0 on ``[t_start, t_end]``."""
        nb = max(0, math.ceil(-t_start / dt - _GRID_TOL))
        nf = max(0, math.ceil(t_end / dt - _GRID_TOL))
        return cls(dt=dt, values=np.zeros((nb + nf + 1, dim)), anchor=nb)

    @classmethod
    def from_function(cls, fn, t_start, t_end, dt, dim=1):
        """Deterministic path sampled from ``fn`` on the grid, re-anchored at 0."""
        nb = max(0, math.ceil(-t_start / dt - _GRID_TOL))
        nf = max(0, math.ceil(t_end / dt - _GRID_TOL))
        t = (np.arange(nb + nf + 1) - nb) * dt
        v = np.asarray([np.atleast_1d(fn(s)) for s in t], dtype=float).reshape(t.size, dim)
        return cls(dt=dt, values=v - v[nb], anchor=nb)


def sample_path(key: NoiseStreamKey, t_start, t_end, dt, dim=1) -> BrownianPath:
    """Brownian path on ``[t_start, t_end]`` (rounded outward to the dt grid)."""
    if not dt > 0:
        raise NoiseError("dt must be positive")
    if not t_start <= 0 <= t_end:
        raise NoiseError("need t_start <= 0 <= t_end")
    if t_start == t_end:
        raise NoiseError("empty interval")
    nb = max(0, math.ceil(-t_start / dt - _GRID_TOL))
    nf = max(0, math.ceil(t_end / dt - _GRID_TOL))
    k0, k1 = key.philox_key
    # increment j (signed) uses normals j*dim .. j*dim + dim - 1
    z = philox.normals(-nb * dim, (nb + nf) * dim, k0, k1).reshape(nb + nf, dim) * math.sqrt(dt)
    values = np.zeros((nb + nf + 1, dim))
    values[nb + 1:] = np.cumsum(z[nb:], axis=0)
    if nb:
        values[:nb] = -np.cumsum(z[:nb][::-1], axis=0)[::-1]
    return BrownianPath(dt=dt, values=values, anchor=nb, key=key)


def wiener_shift(path: BrownianPath, t) -> BrownianPath:
    """theta_t: ``s -> beta(s + t) - beta(t)``, kept on the path's own grid window."""
    if t == 0:
        return path
    if not path.t_start - _GRID_TOL * path.dt <= t <= path.t_end + _GRID_TOL * path.dt:
        raise NoiseError(f"shift {t} leaves the path window [{path.t_start}, {path.t_end}]")
    k = t / path.dt
    if abs(k - round(k)) <= _GRID_TOL * max(1.0, abs(k)):
        k = int(round(k))
        new_anchor = path.anchor + k
        values = path.values - path.values[new_anchor]
        return replace(path, values=values, anchor=new_anchor, shift=path.shift + k * path.dt)
    # off-grid shift: resample on a grid through the new origin
    lo = path.t_start - t
    hi = path.t_end - t
    nb = math.floor(-lo / path.dt + _GRID_TOL)
    nf = math.floor(hi / path.dt + _GRID_TOL)
    s = (np.arange(-nb, nf + 1)) * path.dt
    values = path(s + t) - path(t)
    return replace(path, values=values, anchor=nb, shift=path.shift + t)


def extend_backwards(path: BrownianPath, extra_duration) -> BrownianPath:
    """Same path on ``[t_start - extra_duration, t_end]``; existing values are untouched."""
    if not extra_duration > 0:
        raise NoiseError("extra_duration must be positive")
    new_start = path.t_start - extra_duration
    if path.key is None:
        if np.any(path.values != 0):
            raise NoiseError("cannot extend a path that has no generating key")
        nb = max(0, math.ceil(-new_start / path.dt - _GRID_TOL))
        return replace(path, values=np.zeros((path.n_points + nb - path.anchor, path.dim)), anchor=nb)
    base = sample_path(path.key, min(0.0, new_start + path.shift), max(0.0, path.t_end + path.shift),
                       path.dt, path.dim)
    shifted = wiener_shift(base, path.shift)
    # trim to the requested window; prefix values coincide with the old ones by construction
    nb = max(0, math.ceil(-new_start / path.dt - _GRID_TOL))
    i0 = shifted.anchor - nb
    i1 = shifted.anchor + (path.n_points - 1 - path.anchor)
    vals = np.array(shifted.values[i0:i1 + 1])
    # bit-identical overlap with the original path
    vals[nb - path.anchor:] = path.values
    return replace(path, values=vals, anchor=nb)


def ensure_window(path: BrownianPath, t0, t1) -> BrownianPath:
    """Extend ``path`` backwards if needed so that it covers ``[t0, t1]``."""
    if t1 > path.t_end + _GRID_TOL * path.dt:
        raise NoiseError(f"path ends at {path.t_end} < {t1}")
    if t0 < path.t_start - _GRID_TOL * path.dt:
        return extend_backwards(path, path.t_start - t0)
    return path
