"""One time step of the flux-form 1D Fokker-Planck discretization.

``dq_i/dt = -(J_{i+1/2} - J_{i-1/2}) / dx`` with zero flux at both ends and

    J_{i+1/2} = (D / dx) [B(w) q_i - B(-w) q_{i+1}],   w = (U_{i+1} - U_i) / D.

``B(z) = z / (e^z - 1)`` gives exponential fitting (exact discrete
equilibrium exp(-U/D)); ``B(z) = 1 - z/2`` gives central differencing.
Columns of the operator sum to zero, so mass is conserved up to round-off.
Time stepping: ``(I - theta dt A_new) q' = (I + (1 - theta) dt A_old) q``.
"""
import numpy as np
from scipy.linalg import solve_banded

from ._accel import HAS_NUMBA, njit


def bernoulli(z):
    z = np.asarray(z, dtype=float)
    out = np.ones_like(z)
    nz = z != 0
    with np.errstate(over="ignore"):
        out[nz] = z[nz] / np.expm1(z[nz])
    return out


def face_coefficients(U, D, dx, central):
    """(left-to-right weight a_f, right-to-left weight b_f) per interior face, scaled by 1/dx^2."""
    w = np.diff(U) / D
    s = D / (dx * dx)
    if central:
        return s * (1.0 - 0.5 * w), s * (1.0 + 0.5 * w)
    return s * bernoulli(w), s * bernoulli(-w)


def apply_operator(q, a, b):
    """A q for the tridiagonal operator defined by face weights."""
    flux = a * q[:-1] - b * q[1:]  # dx * J / dx^2 units
    out = np.zeros_like(q)
    out[:-1] -= flux
    out[1:] += flux
    return out


def step_numpy(q, U_old, U_new, D, dx, dt, theta, central):
    rhs = q.copy()
    if theta < 1.0:
        a, b = face_coefficients(U_old, D, dx, central)
        rhs += (1.0 - theta) * dt * apply_operator(q, a, b)
    a, b = face_coefficients(U_new, D, dx, central)
    n = q.size
    ab = np.zeros((3, n))
    # diagonal: outflow weights; super: b_f into row i; sub: a_f into row i+1
    ab[1] = 1.0
    ab[1, :-1] += theta * dt * a
    ab[1, 1:] += theta * dt * b
    ab[0, 1:] = -theta * dt * b
    ab[2, :-1] = -theta * dt * a
    return solve_banded((1, 1), ab, rhs, overwrite_ab=True, overwrite_b=True, check_finite=False)


if HAS_NUMBA:
    @njit(inline="always")
    def _bern(z):
        if z == 0.0:
            return 1.0
        if z > 700.0:
            return 0.0
        return z / np.expm1(z)

    @njit(cache=True)
    def step_numba(q, U_old, U_new, D, dx, dt, theta, central):
        n = q.shape[0]
        s = D / (dx * dx)
        rhs = q.copy()
        if theta < 1.0:
            for f in range(n - 1):
                w = (U_old[f + 1] - U_old[f]) / D
                if central:
                    a = s * (1.0 - 0.5 * w)
                    b = s * (1.0 + 0.5 * w)
                else:
                    a = s * _bern(w)
                    b = s * _bern(-w)
                flux = (1.0 - theta) * dt * (a * q[f] - b * q[f + 1])
                rhs[f] -= flux
                rhs[f + 1] += flux
        diag = np.ones(n)
        up = np.zeros(n)
        lo = np.zeros(n)
        for f in range(n - 1):
            w = (U_new[f + 1] - U_new[f]) / D
            if central:
                a = s * (1.0 - 0.5 * w)
                b = s * (1.0 + 0.5 * w)
            else:
                a = s * _bern(w)
                b = s * _bern(-w)
            diag[f] += theta * dt * a
            diag[f + 1] += theta * dt * b
            up[f] = -theta * dt * b
            lo[f + 1] = -theta * dt * a
        # Thomas sweep
        cp = np.empty(n)
        dp = np.empty(n)
        cp[0] = up[0] / diag[0]
        dp[0] = rhs[0] / diag[0]
        for i in range(1, n):
            m = diag[i] - lo[i] * cp[i - 1]
            cp[i] = up[i] / m
            dp[i] = (rhs[i] - lo[i] * dp[i - 1]) / m
        out = np.empty(n)
        out[n - 1] = dp[n - 1]
        for i in range(n - 2, -1, -1):
            out[i] = dp[i] - cp[i] * out[i + 1]
        return out
else:  # pragma: no cover
    step_numba = None


def step(q, U_old, U_new, D, dx, dt, theta, central, use_numba=HAS_NUMBA):
    if use_numba:
        return step_numba(q, U_old, U_new, float(D), float(dx), float(dt), float(theta), bool(central))
    return step_numpy(q, U_old, U_new, D, dx, dt, theta, central)
