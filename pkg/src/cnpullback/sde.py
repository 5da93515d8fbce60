"""Euler-Maruyama particle engine with intrinsic and common additive noise.

All particles of an ensemble read the common increments from one stored
``BrownianPath``; particle ``i`` draws its intrinsic increments from the
Philox stream ``(master_seed, intrinsic, pid0 + i)`` indexed by the absolute
time-step number, so a run split into several calls consumes exactly the same
draws as a single call.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate

from . import density as dens
from . import io
from .kernels import particles as pk
from .kernels import philox
from .kernels._accel import HAS_NUMBA
from .noise import BrownianPath, NoiseError, StreamRole, ensure_window, grid_steps, stream_k1
from .potentials import Potential

BLOWUP_LIMIT = 1e6
DEFAULT_DT = 1e-3
DEFAULT_CELLS = 1024
TAU_CAP = 2.0 ** 10


class SdeError(ValueError):
    pass


class BlowUpError(RuntimeError):
    pass


def _as_matrix(m, dim, name):
    m = np.asarray(m, dtype=float)
    if m.ndim == 0:
        m = m * np.eye(dim)
    if m.shape != (dim, dim):
        raise SdeError(f"{name} must be a scalar or a {dim}x{dim} matrix")
    if not np.allclose(m, m.T, rtol=0, atol=1e-12 * max(1.0, np.abs(m).max())):
        raise SdeError(f"{name} must be symmetric")
    if np.min(np.linalg.eigvalsh(m)) < 0:
        raise SdeError(f"{name} must be positive (semi-)definite")
    return m


@dataclass(frozen=True, eq=False)
class SdeSpec:
    """dx = -grad V dt + sigma dW + eta dB.

    Zero noise strengths are accepted so that the deterministic limits can be run.
    """

    potential: Potential
    sigma: object
    eta: object
    dim: int = 1
    sigma_mat: np.ndarray = field(init=False, repr=False)
    eta_mat: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if int(self.dim) < 1:
            raise SdeError("dim must be >= 1")
        object.__setattr__(self, "dim", int(self.dim))
        if self.dim > 1 and not self.potential.supports_multid:
            raise SdeError("polynomial potentials are one-dimensional")
        object.__setattr__(self, "sigma_mat", _as_matrix(self.sigma, self.dim, "sigma"))
        object.__setattr__(self, "eta_mat", _as_matrix(self.eta, self.dim, "eta"))

    @property
    def sigma_scalar(self):
        if self.dim != 1:
            raise SdeError("scalar sigma only defined in 1D")
        return float(self.sigma_mat[0, 0])

    @property
    def eta_scalar(self):
        if self.dim != 1:
            raise SdeError("scalar eta only defined in 1D")
        return float(self.eta_mat[0, 0])

    @property
    def noise_var(self):
        """Largest eigenvalue of sigma sigma^T + eta eta^T (sigma^2 + eta^2 in 1D)."""
        m = self.sigma_mat @ self.sigma_mat.T + self.eta_mat @ self.eta_mat.T
        return float(np.max(np.linalg.eigvalsh(m)))

    def to_dict(self):
        conv = (lambda m: float(m[0, 0])) if self.dim == 1 else (lambda m: m.tolist())
        return {"potential": self.potential.to_dict(), "sigma": conv(self.sigma_mat),
                "eta": conv(self.eta_mat), "dim": self.dim}


def stationary_std(potential: Potential, noise_var):
    """Standard deviation of the 1D density proportional to exp(-2V/noise_var)."""
    if not noise_var > 0:
        # deterministic limit: size of the set of critical points
        crit = np.polynomial.polynomial.polyroots(potential.dcoeffs)
        crit = crit[np.abs(crit.imag) < 1e-9].real
        return max(1.0, float(np.max(np.abs(crit)))) / 3.0
    V = potential.eval
    xs = np.linspace(-50, 50, 20001)
    shift = float(np.min(V(xs)))
    w = lambda x: np.exp(-2.0 * (V(x) - shift) / noise_var)
    # locate the effective support before integrating
    support = xs[w(xs) > 1e-300]
    lo, hi = float(support.min()), float(support.max())
    z = integrate.quad(w, lo, hi, limit=200)[0]
    m1 = integrate.quad(lambda x: x * w(x), lo, hi, limit=200)[0] / z
    m2 = integrate.quad(lambda x: x * x * w(x), lo, hi, limit=200)[0] / z
    return math.sqrt(max(m2 - m1 * m1, 0.0))


def default_grid(spec: SdeSpec, n_cells=DEFAULT_CELLS, n_std=6.0):
    """Read-out grid ``[-L, L]`` with ``L = n_std`` stationary standard deviations."""
    return dens.Grid.symmetric(n_std * stationary_std(spec.potential, spec.noise_var), n_cells)


def em_step(x, spec: SdeSpec, dW, dB, dt):
    """One Euler-Maruyama step ``x - grad V(x) dt + sigma dW + eta dB``."""
    if not dt > 0:
        raise SdeError("dt must be positive")
    x = np.asarray(x, dtype=float)
    if spec.dim == 1:
        out = (x - spec.potential.grad(x) * dt + spec.sigma_scalar * np.asarray(dW)
               + spec.eta_scalar * np.asarray(dB))
    else:
        out = (x - spec.potential.grad(x, dim=spec.dim) * dt + np.asarray(dW) @ spec.sigma_mat.T
               + np.asarray(dB) @ spec.eta_mat.T)
    if not np.all(np.isfinite(out)):
        raise BlowUpError("non-finite state after Euler-Maruyama step")
    return out


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    """N particles at a common time; ``pid0`` offsets the intrinsic stream ids."""

    positions: np.ndarray
    time: float
    master_seed: int
    pid0: int = 0

    def __post_init__(self):
        p = np.array(self.positions, dtype=float)
        if p.ndim == 1:
            p = p[:, None]
        if p.ndim != 2 or p.shape[0] < 1:
            raise SdeError("positions must be an (N, d) array with N >= 1")
        p.setflags(write=False)
        object.__setattr__(self, "positions", p)

    @property
    def N(self):
        return self.positions.shape[0]

    @property
    def dim(self):
        return self.positions.shape[1]

    @classmethod
    def dirac(cls, point, N, time, master_seed, pid0=0):
        point = np.atleast_1d(np.asarray(point, dtype=float))
        return cls(np.tile(point, (int(N), 1)), time, master_seed, pid0)

    def to_csv(self, path):
        cols = {"particle_id": np.arange(self.pid0, self.pid0 + self.N)}
        for j in range(self.dim):
            cols[f"x{j}"] = self.positions[:, j]
        return io.write_csv(path, cols)


def sample_initial(p0, N, master_seed, dim=1, pid0=0):
    """(N, d) starting positions.

    ``p0`` may be a :class:`GridDensity` (sampled by inverse CDF from the
    ``init`` stream), a point (Dirac start) or an explicit array of positions.
    """
    if isinstance(p0, dens.GridDensity):
        if dim != 1:
            raise SdeError("grid densities are one-dimensional")
        k1 = stream_k1(StreamRole.init) | (np.uint64(pid0) + np.arange(N, dtype=np.uint64))
        u = philox.uniform_block(np.zeros(N, dtype=np.int64), np.uint64(master_seed), k1)[:, 0]
        F = p0.cdf_at_edges()
        F = F / F[-1]
        i = np.clip(np.searchsorted(F, u, side="right") - 1, 0, p0.n_cells - 1)
        w = (u - F[i]) / np.maximum(F[i + 1] - F[i], 1e-300)
        return (p0.grid.edges[i] + np.clip(w, 0.0, 1.0) * p0.dx)[:, None]
    arr = np.asarray(p0, dtype=float)
    if arr.ndim <= 1 and arr.size == dim:
        return np.tile(arr.reshape(1, dim), (int(N), 1))
    arr = arr.reshape(arr.shape[0], -1)
    if arr.shape[1] != dim:
        raise SdeError("initial positions have the wrong dimension")
    return arr


def evolve_ensemble(ens: ParticleEnsemble, spec: SdeSpec, common_path: BrownianPath, t_from, t_to, dt,
                    use_numba=None, limit=BLOWUP_LIMIT) -> ParticleEnsemble:
    """Advance every particle from ``t_from`` to ``t_to`` (both on the ``dt`` grid)."""
    if not dt > 0:
        raise SdeError("dt must be positive")
    if abs(ens.time - t_from) > 1e-9 * max(1.0, abs(t_from)):
        raise SdeError(f"ensemble is at t={ens.time}, not t_from={t_from}")
    if ens.dim != spec.dim or common_path.dim != spec.dim:
        raise SdeError("dimension mismatch between ensemble, spec and path")
    if t_to < t_from:
        raise SdeError("t_to must not precede t_from")
    try:
        step0 = grid_steps(t_from, dt)
        n_steps = grid_steps(t_to, dt) - step0
    except NoiseError as exc:
        raise SdeError(str(exc)) from None
    if not common_path.covers(t_from, t_to):
        raise NoiseError(f"[{t_from}, {t_to}] outside path window [{common_path.t_start}, {common_path.t_end}]")
    if n_steps == 0:
        return replace(ens, time=t_to)
    eta_db = common_path.increments(t_from, n_steps, dt) @ spec.eta_mat.T
    x = np.array(ens.positions)
    use_numba = HAS_NUMBA if use_numba is None else (use_numba and HAS_NUMBA)
    k0 = np.uint64(ens.master_seed)
    k1 = stream_k1(StreamRole.intrinsic)
    if spec.dim == 1:
        flat = np.ascontiguousarray(x[:, 0])
        status = pk.evolve_1d(flat, spec.potential.dcoeffs, spec.sigma_scalar, eta_db[:, 0], dt, k0, k1,
                              ens.pid0, step0, limit, use_numba=use_numba)
        x[:, 0] = flat
    else:
        c0, c1 = spec.potential.radial_coeffs()
        status = pk.evolve_nd(x, c0, c1, spec.sigma_mat, eta_db, dt, k0, k1, ens.pid0, step0, limit,
                              use_numba=use_numba)
    bad = np.flatnonzero(status >= 0)
    if bad.size:
        i = int(bad[0])
        raise BlowUpError(f"{bad.size} particle(s) left |x| <= {limit}; first: particle {ens.pid0 + i} "
                          f"at t={t_from + (status[i] + 1) * dt:.6g}")
    return replace(ens, positions=x, time=t_to)


@dataclass(frozen=True, eq=False)
class PullbackResult:
    density: dens.GridDensity | None
    ensemble: ParticleEnsemble
    tau: float


def pullback_run(p0, spec: SdeSpec, beta: BrownianPath, tau, dt=DEFAULT_DT, N=100_000, master_seed=0,
                 grid=None, method="histogram", use_numba=None, pid0=0) -> PullbackResult:
    """Evolve ``p0`` from ``-tau`` to 0 along ``beta``; keeps the final ensemble."""
    if tau < 0:
        raise SdeError("tau must be non-negative")
    beta = ensure_window(beta, -tau, 0.0)
    x0 = sample_initial(p0, N, master_seed, spec.dim, pid0)
    ens = ParticleEnsemble(x0, -tau, master_seed, pid0)
    ens = evolve_ensemble(ens, spec, beta, -tau, 0.0, dt, use_numba=use_numba)
    if spec.dim != 1:
        # densities are one-dimensional; multi-d runs return the particles only
        return PullbackResult(None, ens, tau)
    grid = default_grid(spec) if grid is None else grid
    return PullbackResult(dens.from_particles(ens.positions, grid, method), ens, tau)


def pullback_evolve(p0, spec: SdeSpec, beta: BrownianPath, tau, dt=DEFAULT_DT, N=100_000, master_seed=0,
                    grid=None, method="histogram", use_numba=None) -> dens.GridDensity:
    """Particle estimate of the density at time 0 started from ``p0`` at time ``-tau``."""
    return pullback_run(p0, spec, beta, tau, dt, N, master_seed, grid, method, use_numba).density


@dataclass(frozen=True, eq=False)
class ConvergenceReport:
    converged: bool
    tau_star: float
    density: dens.GridDensity
    history: list

    def to_dict(self):
        return {"converged": self.converged, "tau_star": self.tau_star,
                "history": [{"tau": t, "l1_to_previous": d} for t, d in self.history]}


def pullback_converged(spec: SdeSpec, beta: BrownianPath, p0, dt=DEFAULT_DT, N=100_000, tol=0.02,
                       master_seed=0, grid=None, tau_start=1.0, tau_cap=TAU_CAP, use_numba=None):
    """Double tau from ``tau_start`` until successive densities differ by less than ``tol`` in L1.

    Returns a :class:`ConvergenceReport`; ``converged`` is False when ``tau_cap`` is reached.
    """
    if not tol > 0:
        raise SdeError("tol must be positive")
    grid = default_grid(spec) if grid is None else grid
    tau = float(tau_start)
    prev = pullback_evolve(p0, spec, beta, tau, dt, N, master_seed, grid, use_numba=use_numba)
    history = [(tau, None)]
    while 2 * tau <= tau_cap:
        tau *= 2
        cur = pullback_evolve(p0, spec, beta, tau, dt, N, master_seed, grid, use_numba=use_numba)
        d = dens.l1_distance(prev, cur)
        history.append((tau, d))
        prev = cur
        if d < tol:
            return ConvergenceReport(True, tau, cur, history)
    return ConvergenceReport(False, tau, prev, history)
