"""Non-autonomous Fokker-Planck solver in the moving frame y = x - eta (beta(t) - beta(t0)).

In that frame the common noise disappears and the density obeys

    dq/dt = d/dy (U'(y, t) q) + (sigma^2 / 2) d^2q/dy^2,   U(y, t) = V(y + eta (beta(t) - beta(t0))).

The y-grid is the initial grid padded by whole cells, so each x-frame snapshot
is the y-density on the y-grid translated by ``eta (beta(t) - beta(t0))``; no
interpolation is needed.  Solver nodes sit on the absolute grid ``k * dt``
(plus the end points), so splitting a solve at a grid time reproduces the
one-shot operator sequence.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import density as dens
from .kernels import fp as fpk
from .kernels._accel import HAS_NUMBA
from .noise import BrownianPath, NoiseError, wiener_shift
from .potentials import Potential
from .sde import SdeSpec

SCHEMES = ("chang_cooper", "central_crank_nicolson")
CFL_SAFETY = 0.5
LEAK_TOL = 1e-6
_EDGE_FRACTION = 0.02
_NODE_TOL = 1e-9


class FpError(ValueError):
    pass


@dataclass(frozen=True)
class FpGrid:
    """Solver settings; ``grid`` (optional) is the spatial grid the initial density is moved onto."""

    dt: float
    scheme: str = "chang_cooper"
    grid: dens.Grid | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise FpError("dt must be positive")
        if self.scheme not in SCHEMES:
            raise FpError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")

    @property
    def theta(self):
        return 1.0 if self.scheme == "chang_cooper" else 0.5

    @property
    def central(self):
        return self.scheme == "central_crank_nicolson"

    def to_dict(self):
        out = {"dt": self.dt, "scheme": self.scheme}
        if self.grid is not None:
            out["grid"] = self.grid.to_dict()
        return out


@dataclass(frozen=True, eq=False)
class FpSolution:
    """Snapshots in x-coordinates plus the y-frame data needed for diagnostics."""

    times: np.ndarray
    snapshots: list
    shifts: np.ndarray
    y_grid: dens.Grid
    beta_used: BrownianPath
    mass_log: np.ndarray
    step_times: np.ndarray
    boundary_mass: float
    clamped_mass: float = 0.0
    scheme: str = "chang_cooper"
    t0: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def final(self) -> dens.GridDensity:
        return self.snapshots[-1]

    def y_density(self, i) -> dens.GridDensity:
        return dens.GridDensity(self.y_grid, self.snapshots[i].values)

    def at(self, i, grid: dens.Grid) -> dens.GridDensity:
        """Snapshot ``i`` conservatively remapped onto ``grid``."""
        return self.snapshots[i].remap(grid)

    def max_mass_error(self):
        return float(np.max(np.abs(self.mass_log - 1.0)))

    def max_step_mass_change(self):
        return float(np.max(np.abs(np.diff(self.mass_log)))) if self.mass_log.size > 1 else 0.0


def _nodes(t0, t1, dt, extra=(), origin=0.0):
    k_lo = math.floor((t0 - origin) / dt + _NODE_TOL) + 1
    k_hi = math.ceil((t1 - origin) / dt - _NODE_TOL) - 1
    inner = origin + np.arange(k_lo, k_hi + 1) * dt
    pts = np.concatenate([[t0], inner, np.asarray(extra, float), [t1]])
    pts = np.unique(pts)
    keep = np.concatenate([[True], np.diff(pts) > _NODE_TOL * dt])
    pts = pts[keep]
    pts[-1] = t1
    return pts


def _edge_mass(q, dx):
    m = max(2, int(_EDGE_FRACTION * q.size))
    return float((q[:m].sum() + q[-m:].sum()) * dx)


def solve_nonautonomous(q0: dens.GridDensity, spec: SdeSpec, beta: BrownianPath, t0, t1, grid: FpGrid,
                        snapshot_every=None, output_times=(), strict=True, use_numba=None, node_origin=0.0) -> FpSolution:
    """Density at ``t1`` (and intermediate snapshots) of the SDE started from ``q0`` at ``t0``.

    ``snapshot_every`` stores a snapshot every that many solver steps;
    ``output_times`` are inserted as solver nodes and always stored.
    ``strict`` raises when more than 1e-6 of the mass reaches the outer cells.
    Interior solver nodes are ``node_origin + k * dt``.
    """
    if spec.dim != 1:
        raise FpError("the Fokker-Planck solver is one-dimensional")
    if not t1 >= t0:
        raise FpError("need t1 >= t0")
    if not beta.covers(t0, t1):
        raise NoiseError(f"[{t0}, {t1}] outside path window [{beta.t_start}, {beta.t_end}]")
    sigma, eta = spec.sigma_scalar, spec.eta_scalar
    D = 0.5 * sigma * sigma
    if not D > 0:
        raise FpError("the solver needs sigma > 0")
    if grid.grid is not None and not q0.grid.same_as(grid.grid):
        q0 = q0.remap(grid.grid)
    dx = q0.dx
    theta = grid.theta
    if theta < 1.0 and grid.dt > CFL_SAFETY * dx * dx / (sigma * sigma):
        raise FpError(f"dt={grid.dt} exceeds the stability guard {CFL_SAFETY} dx^2/sigma^2 = "
                      f"{CFL_SAFETY * dx * dx / sigma ** 2:.3g}")
    outs = np.asarray(sorted(t for t in output_times if t0 < t < t1), float)
    nodes = _nodes(t0, t1, grid.dt, outs, node_origin)
    b0 = float(beta(t0)[0])
    shifts = eta * (beta(nodes)[:, 0] - b0)
    pad_left = int(math.ceil(max(0.0, shifts.max()) / dx - 1e-12))
    pad_right = int(math.ceil(max(0.0, -shifts.min()) / dx - 1e-12))
    yg = q0.grid.padded(pad_left, pad_right)
    yc = yg.centres
    q = np.zeros(yg.n_cells)
    q[pad_left:pad_left + q0.n_cells] = q0.values
    dcoef = spec.potential.coeffs
    pot = lambda s: np.polynomial.polynomial.polyval(yc + s, dcoef)
    use_numba = HAS_NUMBA if use_numba is None else (use_numba and HAS_NUMBA)

    snap_idx = {0, nodes.size - 1}
    if snapshot_every:
        snap_idx.update(range(0, nodes.size, int(snapshot_every)))
    for t in outs:
        snap_idx.add(int(np.argmin(np.abs(nodes - t))))
    times, snaps, snap_shifts = [], [], []
    mass_log = np.empty(nodes.size)
    mass_log[0] = q.sum() * dx
    boundary = _edge_mass(q, dx)
    clamped = 0.0

    def record(i):
        times.append(float(nodes[i]))
        snap_shifts.append(float(shifts[i]))
        snaps.append(dens.GridDensity(yg.translated(shifts[i]), q))

    record(0)
    U_old = pot(shifts[0])
    for i in range(1, nodes.size):
        U_new = pot(shifts[i])
        q = fpk.step(q, U_old, U_new, D, dx, nodes[i] - nodes[i - 1], theta, grid.central, use_numba)
        if grid.central:
            neg = q < 0
            if np.any(neg):
                clamped += float(-q[neg].sum() * dx)
                q[neg] = 0.0
        mass_log[i] = q.sum() * dx
        U_old = U_new
        if i in snap_idx:
            boundary = max(boundary, _edge_mass(q, dx))
            if strict and boundary > LEAK_TOL:
                raise FpError(f"boundary mass {boundary:.3g} > {LEAK_TOL} at t={nodes[i]:.6g}: grid too small")
            record(i)
    if not np.all(np.isfinite(q)):
        raise FpError("non-finite density")
    return FpSolution(np.asarray(times), snaps, np.asarray(snap_shifts), yg, beta, mass_log, nodes, boundary,
                      clamped, grid.scheme, t0)


def autonomous_solve(q0: dens.GridDensity, potential: Potential, diffusion, t0, t1, grid: FpGrid,
                     **kwargs) -> FpSolution:
    """Solve with no common noise and diffusion coefficient ``diffusion`` (= (sigma^2 + eta^2) / 2)."""
    if not diffusion > 0:
        raise FpError("diffusion must be positive")
    spec = SdeSpec(potential, math.sqrt(2.0 * diffusion), 0.0)
    zero = BrownianPath.zeros(min(t0, 0.0), max(t1, 0.0), grid.dt)
    return solve_nonautonomous(q0, spec, zero, t0, t1, grid, **kwargs)


def check_wic(sol: FpSolution, potential: Potential) -> float:
    """Time integral over the annulus N < |y| < 2N of |y|^-1 |grad U| q, N = half the smaller y-extent."""
    yg = sol.y_grid
    n_ann = min(abs(yg.x_min), abs(yg.x_max)) / 2.0
    yc = yg.centres
    ay = np.abs(yc)
    mask = (ay > n_ann) & (ay < 2 * n_ann)
    if not np.any(mask) or sol.times.size < 2:
        return 0.0
    vals = np.empty(sol.times.size)
    for j, (snap, s) in enumerate(zip(sol.snapshots, sol.shifts)):
        gU = np.abs(potential.grad(yc[mask] + s))
        vals[j] = float(np.sum(gU / ay[mask] * snap.values[mask]) * yg.dx)
    trap = getattr(np, "trapezoid", None) or np.trapz
    return float(trap(vals, sol.times))


def _compare(d1: dens.GridDensity, d2: dens.GridDensity):
    """L1 distance on a common grid spanning both supports (conservative remap)."""
    dx = min(d1.dx, d2.dx)
    lo = min(d1.x_min, d2.x_min)
    hi = max(d1.x_max, d2.x_max)
    n = int(round((hi - lo) / dx))
    g = dens.Grid(lo, lo + n * dx, n)
    return dens.l1_distance(d1.remap(g), d2.remap(g))


def cocycle_check(spec: SdeSpec, beta: BrownianPath, q0: dens.GridDensity, t_mid, t_end, grid: FpGrid,
                  t0=0.0, use_numba=None) -> float:
    """L1 gap between one solve over [t0, t_end] and two solves split at ``t_mid``.

    The second leg runs on the shifted path from time 0, starting from the
    x-frame density at ``t_mid``, with its nodes on the one-shot lattice, so
    only the step containing ``t_mid`` differs between the two routes.
    """
    if not t0 < t_mid < t_end:
        raise FpError("need t0 < t_mid < t_end")
    one = solve_nonautonomous(q0, spec, beta, t0, t_end, grid, strict=False, use_numba=use_numba).final
    mid = solve_nonautonomous(q0, spec, beta, t0, t_mid, grid, strict=False, use_numba=use_numba).final
    k = t_mid / beta.dt
    if abs(k - round(k)) <= 1e-9 * max(1.0, abs(k)):
        shifted = wiener_shift(beta, t_mid)
        two = solve_nonautonomous(mid, spec, shifted, 0.0, t_end - t_mid, grid, strict=False,
                                  use_numba=use_numba, node_origin=-t_mid).final
    else:
        # theta_{t_mid} beta has the same increments; reading them off the stored
        # path avoids re-interpolating it on a grid through t_mid
        two = solve_nonautonomous(mid, spec, beta, t_mid, t_end, grid, strict=False,
                                  use_numba=use_numba).final
    return _compare(one, two)
