"""Time averages along one common-noise path versus averages over many paths.

Along one long path the density observable g(p(t)) is averaged after a
burn-in; across independent paths g is evaluated on pullback densities.
Ergodicity says both converge to the same number.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import density as dens
from .noise import BrownianPath, NoiseStreamKey, StreamRole, sample_path
from .sde import DEFAULT_DT, ParticleEnsemble, SdeSpec, default_grid, evolve_ensemble, pullback_run, \
    sample_initial

N_BATCHES = 20


class ErgodicError(ValueError):
    pass


def observable_fn(observable):
    """(name, callable on GridDensity) for 'variance', 'mean', 'second_moment', 'one' or h(x)."""
    if callable(observable):
        return getattr(observable, "__name__", "custom"), lambda d: dens.moment(d, observable)
    table = {"variance": dens.variance, "mean": dens.mean, "second_moment": dens.second_moment,
             "one": lambda d: d.mass}
    if observable not in table:
        raise ErgodicError(f"unknown observable {observable!r}; expected one of {sorted(table)} or a callable")
    return observable, table[observable]


def batch_means_se(values, n_batches=N_BATCHES):
    """Standard error of the mean of a correlated series by non-overlapping batch means."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return float("nan")
    nb = min(n_batches, v.size)
    size = v.size // nb
    means = v[:nb * size].reshape(nb, size).mean(axis=1)
    return float(np.std(means, ddof=1) / math.sqrt(nb))


@dataclass(frozen=True, eq=False)
class ObservableSeries:
    times: np.ndarray
    values: np.ndarray
    observable_name: str
    burn_in: float
    running_average: np.ndarray
    final: dens.GridDensity | None = None

    @classmethod
    def from_values(cls, times, values, name, burn_in, final=None):
        times, values = np.asarray(times, float), np.asarray(values, float)
        after = times > burn_in
        run = np.full(times.shape, np.nan)
        if np.any(after):
            v = values[after]
            run[after] = np.cumsum(v) / np.arange(1, v.size + 1)
        return cls(times, values, name, float(burn_in), run, final)

    @property
    def average(self):
        return float(self.running_average[-1])

    @property
    def std_error(self):
        return batch_means_se(self.values[self.times > self.burn_in])

    def cauchy_gap(self):
        """|running average at T - running average at T/2|; NaN when T/2 precedes burn-in."""
        T = self.times[-1]
        j = int(np.searchsorted(self.times, 0.5 * T, side="right")) - 1
        return float(abs(self.running_average[-1] - self.running_average[j]))

    def to_columns(self):
        return {"t": self.times, "value": self.values, "running_average": self.running_average}


def default_burn_in(spec: SdeSpec):
    """Ten relaxation times: 1/c from the contraction profile, else 1/V'' at the deepest minimum."""
    from .contraction import ContractionError, build_profile

    if spec.dim == 1 and spec.sigma_scalar > 0:
        try:
            return 10.0 / build_profile(spec.potential, spec.sigma_scalar, n_r=1000).c
        except ContractionError:
            pass
    pot = spec.potential
    crit = np.polynomial.polynomial.polyroots(pot.dcoeffs)
    crit = crit[np.abs(crit.imag) < 1e-9].real
    xm = crit[np.argmin(pot.eval(crit))]
    return 10.0 / max(float(pot.laplacian(xm)), 1e-12)


def time_average(spec: SdeSpec, beta: BrownianPath, p0, observable="variance", T=500.0, burn_in=None,
                 dt_obs=0.1, mode="particles", N=100_000, dt=DEFAULT_DT, master_seed=0, grid=None,
                 fp_dx=None, use_numba=None) -> ObservableSeries:
    """Sample g(p(t)) every ``dt_obs`` on [0, T] along ``beta`` started from ``p0``.

    ``mode='particles'`` uses histogram densities of the particle engine;
    ``mode='fp'`` uses the Fokker-Planck solver (1D, no Monte Carlo error).
    """
    if burn_in is None:
        burn_in = default_burn_in(spec)
    if not T > burn_in:
        raise ErgodicError("T must exceed burn_in")
    if not beta.covers(0.0, T):
        raise ErgodicError(f"beta must cover [0, {T}]")
    name, g = observable_fn(observable)
    grid = default_grid(spec) if grid is None else grid
    n_obs = int(round(T / dt_obs))
    if abs(n_obs * dt_obs - T) > 1e-9 * T:
        raise ErgodicError("T must be a multiple of dt_obs")
    times = np.arange(n_obs + 1) * dt_obs
    values = np.empty(n_obs + 1)
    if mode == "particles":
        ens = ParticleEnsemble(sample_initial(p0, N, master_seed, spec.dim), 0.0, master_seed)
        q = dens.from_particles(ens.positions, grid)
        values[0] = g(q)
        for j in range(1, n_obs + 1):
            ens = evolve_ensemble(ens, spec, beta, times[j - 1], times[j], dt, use_numba=use_numba)
            q = dens.from_particles(ens.positions, grid)
            values[j] = g(q)
    elif mode == "fp":
        from .fokker_planck import FpGrid, solve_nonautonomous

        if fp_dx is not None:
            grid = dens.Grid(grid.x_min, grid.x_max, int(round((grid.x_max - grid.x_min) / fp_dx)))
        q = p0 if isinstance(p0, dens.GridDensity) else _dirac(grid, float(np.ravel(p0)[0]))
        q = q.remap(grid)
        values[0] = g(q)
        fg = FpGrid(dt)
        for j in range(1, n_obs + 1):
            # re-anchor the moving frame each observation interval
            sol = solve_nonautonomous(q, spec, beta, times[j - 1], times[j], fg, strict=False,
                                      use_numba=use_numba)
            q = sol.final.remap(grid)
            values[j] = g(q)
    else:
        raise ErgodicError(f"unknown mode {mode!r}")
    return ObservableSeries.from_values(times, values, name, burn_in, q)


def _dirac(grid, x):
    v = np.zeros(grid.n_cells)
    v[int(np.clip(np.floor((x - grid.x_min) / grid.dx), 0, grid.n_cells - 1))] = 1.0
    return dens.GridDensity.normalized(grid, v)


def path_key(master_seed, path_index):
    return NoiseStreamKey(master_seed, StreamRole.common, particle_id=path_index)


@dataclass(frozen=True)
class EnsembleEstimate:
    estimate: float
    std_error: float
    values: np.ndarray

    def to_dict(self):
        return {"estimate": self.estimate, "std_error": self.std_error, "n_paths": int(self.values.size)}


def beta_ensemble_average(spec: SdeSpec, observable="variance", n_paths=400, tau=20.0, N=2000, dt=DEFAULT_DT,
                          master_seed=0, grid=None, p0=0.0, path_offset=0, pid_base=0, use_numba=None) -> EnsembleEstimate:
    """Mean and standard error of g(p_beta) over ``n_paths`` independent paths.

    Path ``j`` uses common stream ``(master_seed, common, path_offset + j)`` and
    intrinsic ids ``pid_base + j N ..``, so results do not depend on the
    order in which paths are processed.
    """
    if n_paths < 2:
        raise ErgodicError("n_paths must be >= 2")
    name, g = observable_fn(observable)
    grid = default_grid(spec) if grid is None else grid
    vals = np.empty(n_paths)
    for j in range(n_paths):
        beta = sample_path(path_key(master_seed, path_offset + j), -tau, 0.0, dt, spec.dim)
        res = pullback_run(p0, spec, beta, tau, dt, N, master_seed, grid, use_numba=use_numba,
                           pid0=pid_base + (path_offset + j) * N)
        vals[j] = g(res.density)
    return EnsembleEstimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_paths)), vals)


@dataclass(frozen=True)
class ConsistencyReport:
    time_average: float
    time_se: float
    ensemble_average: float
    ensemble_se: float
    agree: bool
    n_se: float

    @property
    def combined_se(self):
        return math.hypot(self.time_se, self.ensemble_se)

    def to_dict(self):
        return {"time_average": self.time_average, "time_se": self.time_se,
                "ensemble_average": self.ensemble_average, "ensemble_se": self.ensemble_se,
                "combined_se": self.combined_se, "agree": self.agree, "n_se": self.n_se}


def compare_estimates(series: ObservableSeries, est: EnsembleEstimate, n_se=3.0) -> ConsistencyReport:
    ta, tse = series.average, series.std_error
    comb = math.hypot(tse, est.std_error)
    return ConsistencyReport(ta, tse, est.estimate, est.std_error, bool(abs(ta - est.estimate) <= n_se * comb), n_se)


def ergodic_consistency(spec: SdeSpec, observable="variance", T=500.0, n_paths=400, tau=20.0, burn_in=None,
                        N_time=100_000, N_paths=2000, dt=0.01, dt_obs=0.1, master_seed=0, grid=None,
                        use_numba=None):
    """Time average along one path against the beta-ensemble average.

    Returns ``(report, series, estimate)``; agreement means within 3 combined standard errors.
    """
    grid = default_grid(spec) if grid is None else grid
    # the long path has its own stream index, disjoint from the ensemble paths 1..n_paths
    beta = sample_path(path_key(master_seed, 0), 0.0, T, dt, spec.dim)
    series = time_average(spec, beta, 0.0, observable, T, burn_in, dt_obs, "particles", N_time, dt,
                          master_seed, grid, use_numba=use_numba)
    est = beta_ensemble_average(spec, observable, n_paths, tau, N_paths, dt, master_seed, grid,
                                path_offset=1, pid_base=N_time, use_numba=use_numba)
    return compare_estimates(series, est), series, est
