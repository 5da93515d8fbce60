"""Euler-Maruyama particle kernels.

Each particle owns its state slot and its intrinsic Philox stream (key word
``k1base | particle_id``); the draw used at global step ``n`` and component
``j`` is normal number ``n * d + j`` of that stream.  No state is shared
between particles, so results do not depend on how the particle loop is
scheduled.

``status[i]`` is -1 for a healthy particle, otherwise the local step index at
which the particle left ``|x| <= limit`` or became non-finite.
"""
import numpy as np

from . import philox
from ._accel import HAS_NUMBA, njit, prange

_MAX_FALLBACK_DRAWS = 4_000_000


def _horner(c, x):
    v = c[c.shape[0] - 1]
    for k in range(c.shape[0] - 2, -1, -1):
        v = v * x + c[k]
    return v


def evolve_1d_numpy(x, dcoef, sigma, eta_db, dt, k0, k1base, pid0, step0, limit):
    """Pure-numpy path for d = 1.  ``x`` (N,) is updated in place."""
    n = x.shape[0]
    nsteps = eta_db.shape[0]
    status = np.full(n, -1, dtype=np.int64)
    alive = np.ones(n, dtype=bool)
    k1 = np.uint64(k1base) | (np.uint64(pid0) + np.arange(n, dtype=np.uint64))
    sq = np.sqrt(dt)
    chunk = max(4, (_MAX_FALLBACK_DRAWS // max(n, 1)) // 4 * 4)
    s = 0
    while s < nsteps:
        g0 = step0 + s
        cnt = min(chunk, nsteps - s)
        b0 = g0 // 4
        b1 = (g0 + cnt - 1) // 4
        blocks = np.arange(b0, b1 + 1, dtype=np.int64)
        z = philox.normal_block(blocks[None, :], k0, k1[:, None]).reshape(n, -1)
        off = g0 - 4 * b0
        for j in range(cnt):
            drift = np.polynomial.polynomial.polyval(x, dcoef)
            xn = x - drift * dt + sigma * sq * z[:, off + j] + eta_db[s + j]
            bad = alive & ~(np.abs(xn) <= limit)
            if np.any(bad):
                status[bad] = s + j
                alive &= ~bad
            x[alive] = xn[alive]
        s += cnt
    return status


def evolve_nd_numpy(x, c0, c1, sigma, eta_db, dt, k0, k1base, pid0, step0, limit):
    """Pure-numpy path for d > 1 with radial drift x (c0 + c1 |x|^2)."""
    n, d = x.shape
    nsteps = eta_db.shape[0]
    status = np.full(n, -1, dtype=np.int64)
    alive = np.ones(n, dtype=bool)
    k1 = np.uint64(k1base) | (np.uint64(pid0) + np.arange(n, dtype=np.uint64))
    sq = np.sqrt(dt)
    chunk = max(1, _MAX_FALLBACK_DRAWS // max(n * d, 1))
    s = 0
    while s < nsteps:
        cnt = min(chunk, nsteps - s)
        g0 = (step0 + s) * d
        b0 = g0 // 4
        b1 = (g0 + cnt * d - 1) // 4
        blocks = np.arange(b0, b1 + 1, dtype=np.int64)
        z = philox.normal_block(blocks[None, :], k0, k1[:, None]).reshape(n, -1)
        off = g0 - 4 * b0
        for j in range(cnt):
            dw = z[:, off + j * d: off + (j + 1) * d] * sq
            r2 = np.sum(x * x, axis=1)
            xn = x - x * (c0 + c1 * r2)[:, None] * dt + dw @ sigma.T + eta_db[s + j]
            bad = alive & ~np.all(np.abs(xn) <= limit, axis=1)
            if np.any(bad):
                status[bad] = s + j
                alive &= ~bad
            x[alive] = xn[alive]
        s += cnt
    return status


if HAS_NUMBA:
    _horner_nb = njit(inline="always")(_horner)

    @njit(parallel=True, cache=True)
    def evolve_1d_numba(x, dcoef, sigma, eta_db, dt, k0, k1base, pid0, step0, limit):
        n = x.shape[0]
        nsteps = eta_db.shape[0]
        status = np.full(n, -1, dtype=np.int64)
        sq = np.sqrt(dt)
        for i in prange(n):
            k1 = k1base | np.uint64(pid0 + i)
            xi = x[i]
            cur = np.int64(-(2 ** 62))
            z0 = z1 = z2 = z3 = 0.0
            for s in range(nsteps):
                g = step0 + s
                blk = g // 4
                if blk != cur:
                    cur = blk
                    z0, z1, z2, z3 = philox.normals4_nb(np.uint64(blk), k0, k1)
                lane = g - 4 * blk
                if lane == 0:
                    z = z0
                elif lane == 1:
                    z = z1
                elif lane == 2:
                    z = z2
                else:
                    z = z3
                xi = xi - _horner_nb(dcoef, xi) * dt + sigma * sq * z + eta_db[s]
                if not abs(xi) <= limit:
                    status[i] = s
                    break
                x[i] = xi
        return status

    @njit(parallel=True, cache=True)
    def evolve_nd_numba(x, c0, c1, sigma, eta_db, dt, k0, k1base, pid0, step0, limit):
        n, d = x.shape
        nsteps = eta_db.shape[0]
        status = np.full(n, -1, dtype=np.int64)
        sq = np.sqrt(dt)
        for i in prange(n):
            k1 = k1base | np.uint64(pid0 + i)
            xi = x[i].copy()
            dw = np.empty(d)
            buf = np.empty(4)
            cur = np.int64(-(2 ** 62))
            for s in range(nsteps):
                for j in range(d):
                    g = (step0 + s) * d + j
                    blk = g // 4
                    if blk != cur:
                        cur = blk
                        buf[0], buf[1], buf[2], buf[3] = philox.normals4_nb(np.uint64(blk), k0, k1)
                    dw[j] = buf[g - 4 * blk] * sq
                r2 = 0.0
                for j in range(d):
                    r2 += xi[j] * xi[j]
                fac = c0 + c1 * r2
                ok = True
                new = np.empty(d)
                for j in range(d):
                    nz = 0.0
                    for m in range(d):
                        nz += sigma[j, m] * dw[m]
                    new[j] = xi[j] - xi[j] * fac * dt + nz + eta_db[s, j]
                    if not abs(new[j]) <= limit:
                        ok = False
                if not ok:
                    status[i] = s
                    break
                xi[:] = new
            x[i, :] = xi
        return status
else:  # pragma: no cover
    evolve_1d_numba = evolve_nd_numba = None


def evolve_1d(x, dcoef, sigma, eta_db, dt, k0, k1base, pid0, step0, limit, use_numba=HAS_NUMBA):
    args = (x, np.ascontiguousarray(dcoef, dtype=np.float64), float(sigma),
            np.ascontiguousarray(eta_db, dtype=np.float64), float(dt), np.uint64(k0), np.uint64(k1base),
            np.int64(pid0), np.int64(step0), float(limit))
    if use_numba:
        return evolve_1d_numba(*args)
    return evolve_1d_numpy(*args)


def evolve_nd(x, c0, c1, sigma, eta_db, dt, k0, k1base, pid0, step0, limit, use_numba=HAS_NUMBA):
    args = (x, float(c0), float(c1), np.ascontiguousarray(sigma, dtype=np.float64),
            np.ascontiguousarray(eta_db, dtype=np.float64), float(dt), np.uint64(k0), np.uint64(k1base),
            np.int64(pid0), np.int64(step0), float(limit))
    if use_numba:
        return evolve_nd_numba(*args)
    return evolve_nd_numpy(*args)
