"""Cell-averaged densities on uniform 1D grids and the distances between them."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import io

MASS_TOL = 1e-8
OUT_OF_RANGE_LIMIT = 1e-3


class DensityError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    x_min: float
    x_max: float
    n_cells: int

    def __post_init__(self):
        if not self.x_max > self.x_min:
            raise DensityError("grid needs x_max > x_min")
        if int(self.n_cells) < 1:
            raise DensityError("grid needs at least one cell")
        object.__setattr__(self, "n_cells", int(self.n_cells))
        object.__setattr__(self, "x_min", float(self.x_min))
        object.__setattr__(self, "x_max", float(self.x_max))

    @classmethod
    def symmetric(cls, half_width, n_cells=1024):
        return cls(-half_width, half_width, n_cells)

    @property
    def dx(self):
        return (self.x_max - self.x_min) / self.n_cells

    @property
    def edges(self):
        return np.linspace(self.x_min, self.x_max, self.n_cells + 1)

    @property
    def centres(self):
        return self.x_min + (np.arange(self.n_cells) + 0.5) * self.dx

    def translated(self, offset):
        return Grid(self.x_min + offset, self.x_max + offset, self.n_cells)

    def padded(self, n_left, n_right):
        dx = self.dx
        return Grid(self.x_min - n_left * dx, self.x_max + n_right * dx, self.n_cells + n_left + n_right)

    def same_as(self, other, rtol=1e-12):
        scale = max(abs(self.x_min), abs(self.x_max), self.dx)
        return (self.n_cells == other.n_cells and abs(self.x_min - other.x_min) <= rtol * scale
                and abs(self.x_max - other.x_max) <= rtol * scale)

    def to_dict(self):
        return {"x_min": self.x_min, "x_max": self.x_max, "n_cells": self.n_cells}


@dataclass(frozen=True, eq=False)
class GridDensity:
    """Probability density as cell averages on ``grid``; immutable once built."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n_cells,):
            raise DensityError(f"expected {self.grid.n_cells} values, got shape {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def normalized(cls, grid, values):
        """Clip round-off negatives and rescale to unit mass."""
        v = np.asarray(values, dtype=float)
        if np.any(v < -1e-12 * max(1.0, float(np.max(np.abs(v))))):
            raise DensityError("density has negative values")
        v = np.clip(v, 0.0, None)
        mass = v.sum() * grid.dx
        if not mass > 0:
            raise DensityError("density has zero mass")
        return cls(grid, v / mass)

    @classmethod
    def from_function(cls, grid, pdf, subcells=8):
        """Cell averages of ``pdf`` by composite midpoint rule, then normalized."""
        h = grid.dx / subcells
        x = grid.x_min + (np.arange(grid.n_cells * subcells) + 0.5) * h
        v = np.asarray(pdf(x), dtype=float).reshape(grid.n_cells, subcells).mean(axis=1)
        return cls.normalized(grid, v)

    @classmethod
    def from_cdf(cls, grid, cdf):
        """Exact cell averages from a CDF, normalized to the mass inside the grid."""
        F = np.asarray(cdf(grid.edges), dtype=float)
        return cls.normalized(grid, np.diff(F) / grid.dx)

    # grid passthroughs
    @property
    def x_min(self):
        return self.grid.x_min

    @property
    def x_max(self):
        return self.grid.x_max

    @property
    def n_cells(self):
        return self.grid.n_cells

    @property
    def dx(self):
        return self.grid.dx

    @property
    def mass(self):
        return float(self.values.sum() * self.dx)

    def cdf_at_edges(self):
        F = np.empty(self.n_cells + 1)
        F[0] = 0.0
        np.cumsum(self.values * self.dx, out=F[1:])
        return F

    def __call__(self, x):
        """Pointwise evaluation by cell lookup (zero outside the grid)."""
        x = np.asarray(x, dtype=float)
        i = np.floor((x - self.x_min) / self.dx).astype(np.int64)
        inside = (i >= 0) & (i < self.n_cells)
        out = np.zeros(x.shape)
        out[inside] = self.values[i[inside]]
        return out

    def remap(self, grid: Grid) -> "GridDensity":
        """Conservative transfer to another grid via the piecewise-linear CDF."""
        F = np.interp(grid.edges, self.grid.edges, self.cdf_at_edges(), left=0.0, right=self.mass)
        return GridDensity.normalized(grid, np.diff(F) / grid.dx)

    def to_csv(self, path):
        return io.write_csv(path, {"x": self.grid.centres, "p": self.values})

    @classmethod
    def from_csv(cls, path):
        data = io.read_csv(path)
        x, p = data["x"], data["p"]
        dx = (x[-1] - x[0]) / (x.size - 1) if x.size > 1 else 1.0
        grid = Grid(x[0] - dx / 2, x[-1] + dx / 2, x.size)
        return cls(grid, p)


def write_overlay_csv(path, densities: dict):
    """Several densities on one shared grid: columns x, then one column per name."""
    items = list(densities.items())
    grid = items[0][1].grid
    for name, d in items:
        if not d.grid.same_as(grid):
            raise DensityError(f"density {name!r} is on a different grid")
    cols = {"x": grid.centres}
    cols.update({name: d.values for name, d in items})
    return io.write_csv(path, cols)


def from_particles(positions, grid: Grid, method="histogram", bandwidth=None):
    """Density estimate of a 1D particle cloud on ``grid``.

    Out-of-range particles are folded into the boundary cells when they carry
    less than 0.1% of the mass; otherwise :class:`DensityError` is raised.
    """
    x = np.asarray(positions, dtype=float)
    if x.ndim == 2:
        if x.shape[1] != 1:
            raise DensityError("density estimation is one-dimensional")
        x = x[:, 0]
    if x.size == 0:
        raise DensityError("need at least one particle")
    if not np.all(np.isfinite(x)):
        raise DensityError("non-finite particle positions")
    idx = np.floor((x - grid.x_min) / grid.dx).astype(np.int64)
    outside = (idx < 0) | (idx >= grid.n_cells)
    frac_out = np.count_nonzero(outside) / x.size
    if frac_out > OUT_OF_RANGE_LIMIT:
        raise DensityError(f"{frac_out:.3%} of particles fall outside [{grid.x_min}, {grid.x_max}]")
    if method == "histogram":
        np.clip(idx, 0, grid.n_cells - 1, out=idx)
        counts = np.bincount(idx, minlength=grid.n_cells).astype(float)
        return GridDensity(grid, counts / (x.size * grid.dx))
    if method == "gaussian_kde":
        h = silverman_bandwidth(x) if bandwidth is None else float(bandwidth)
        if not h > 0:
            raise DensityError("KDE bandwidth must be positive")
        return _kde(x, grid, h)
    raise DensityError(f"unknown estimator {method!r}")


def silverman_bandwidth(x):
    x = np.asarray(x, dtype=float)
    sd = np.std(x, ddof=1) if x.size > 1 else 0.0
    iqr = np.subtract(*np.percentile(x, [75, 25])) / 1.349 if x.size > 1 else 0.0
    spread = min(sd, iqr) if iqr > 0 else sd
    return 0.9 * spread * x.size ** (-0.2) if spread > 0 else 1e-12


def _kde(x, grid, h):
    from scipy.special import ndtr

    if x.size <= 20_000:
        # exact cell averages of the Gaussian mixture
        F = ndtr((grid.edges[None, :] - x[:, None]) / h).sum(axis=0)
        return GridDensity.normalized(grid, np.diff(F) / grid.dx)
    # large clouds: bin first, then convolve with the cell-averaged kernel
    idx = np.clip(np.floor((x - grid.x_min) / grid.dx).astype(np.int64), 0, grid.n_cells - 1)
    counts = np.bincount(idx, minlength=grid.n_cells).astype(float)
    offs = np.arange(-grid.n_cells + 1, grid.n_cells) * grid.dx
    kern = (ndtr((offs + grid.dx / 2) / h) - ndtr((offs - grid.dx / 2) / h)) / grid.dx
    v = np.convolve(counts, kern, mode="full")[grid.n_cells - 1:2 * grid.n_cells - 1]
    return GridDensity.normalized(grid, v)


def mean(d: GridDensity) -> float:
    return float(np.sum(d.grid.centres * d.values) * d.dx)


def second_moment(d: GridDensity) -> float:
    """Exact second moment of the piecewise-constant density."""
    c = d.grid.centres
    return float(np.sum((c * c + d.dx ** 2 / 12.0) * d.values) * d.dx)


def variance(d: GridDensity) -> float:
    """Variance of the piecewise-constant density (includes the dx^2/12 within-cell term)."""
    m = mean(d)
    c = d.grid.centres - m
    return float(np.sum((c * c + d.dx ** 2 / 12.0) * d.values) * d.dx)


def moment(d: GridDensity, h) -> float:
    """Midpoint quadrature of the expectation of ``h`` under ``d``."""
    return float(np.sum(np.asarray(h(d.grid.centres)) * d.values) * d.dx)


def _check_same_grid(d1, d2):
    if not d1.grid.same_as(d2.grid):
        raise DensityError("densities live on different grids")


def l1_distance(d1: GridDensity, d2: GridDensity) -> float:
    _check_same_grid(d1, d2)
    return float(np.sum(np.abs(d1.values - d2.values)) * d1.dx)


def _abs_linear_integral(a, b, h):
    """Integrals of |linear function| over segments of length h with end values a, b."""
    a, b, h = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float), np.asarray(h, float))
    out = 0.5 * h * np.abs(a + b)
    cross = a * b < 0
    if np.any(cross):
        aa, bb = a[cross], b[cross]
        out[cross] = 0.5 * h[cross] * (aa * aa + bb * bb) / (np.abs(aa) + np.abs(bb))
    return out


def wasserstein1(d1: GridDensity, d2: GridDensity) -> float:
    """W1 in 1D: the integral of |F1 - F2| with piecewise-linear CDFs (exact for cell averages)."""
    _check_same_grid(d1, d2)
    D = d1.cdf_at_edges() - d2.cdf_at_edges()
    return float(np.sum(_abs_linear_integral(D[:-1], D[1:], d1.dx)))


def wasserstein1_samples(x, y) -> float:
    """Exact W1 between two 1D empirical measures."""
    x = np.sort(np.ravel(np.asarray(x, dtype=float)))
    y = np.sort(np.ravel(np.asarray(y, dtype=float)))
    if x.size == y.size:
        return float(np.mean(np.abs(x - y)))
    from scipy.stats import wasserstein_distance

    return float(wasserstein_distance(x, y))


def _quantile_breakpoints(d1, d2):
    """Common breakpoints in u of the two piecewise-linear quantile functions."""
    F1 = d1.cdf_at_edges() / d1.mass
    F2 = d2.cdf_at_edges() / d2.mass
    u = np.unique(np.concatenate([F1, F2, [0.0, 1.0]]))
    u = u[(u >= 0) & (u <= 1)]
    e = d1.grid.edges
    q1 = _quantile(F1, e, u)
    q2 = _quantile(F2, d2.grid.edges, u)
    return u, q1, q2


def _quantile(F, edges, u):
    # generalised inverse on the strictly increasing part of F
    keep = np.concatenate([[True], np.diff(F) > 0])
    Fk, ek = F[keep], edges[keep]
    if Fk.size < 2:
        return np.full(np.shape(u), ek[0])
    # explicit interpolation: np.interp overflows on subnormal increments of F
    i = np.clip(np.searchsorted(Fk, u, side="right") - 1, 0, Fk.size - 2)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        t = (u - Fk[i]) / (Fk[i + 1] - Fk[i])
    t = np.clip(np.nan_to_num(t, nan=0.0), 0.0, 1.0)
    return ek[i] + t * (ek[i + 1] - ek[i])


def wf_upper(d1: GridDensity, d2: GridDensity, profile, sigma=1.0) -> float:
    """Upper bound on W_f: cost of the monotone (quantile) coupling under d_f = f(|x - y| / sigma).

    The coupling is exact between piecewise-linear quantile functions; f is
    integrated analytically along each linear segment using the profile's
    tabulated antiderivative.
    """
    _check_same_grid(d1, d2)
    profile.check_valid()
    u, q1, q2 = _quantile_breakpoints(d1, d2)
    D = (q1 - q2) / sigma
    du = np.diff(u)
    a, b = D[:-1], D[1:]
    total = 0.0
    same = a * b >= 0
    total += _segment_f_integral(profile, np.abs(a[same]), np.abs(b[same]), du[same])
    cross = ~same
    if np.any(cross):
        aa, bb, hh = np.abs(a[cross]), np.abs(b[cross]), du[cross]
        t = aa / (aa + bb)
        total += _segment_f_integral(profile, aa, np.zeros_like(aa), hh * t)
        total += _segment_f_integral(profile, np.zeros_like(bb), bb, hh * (1 - t))
    return float(total)


def _segment_f_integral(profile, ra, rb, h):
    """Sum over segments of the integral of f(r) where r runs linearly from ra to rb over length h."""
    if ra.size == 0:
        return 0.0
    diff = rb - ra
    small = np.abs(diff) < 1e-12
    out = np.empty_like(ra)
    out[small] = h[small] * profile.f_at(0.5 * (ra[small] + rb[small]))
    big = ~small
    out[big] = h[big] * (profile.F_at(rb[big]) - profile.F_at(ra[big])) / diff[big]
    return float(np.sum(out))


def w1_quantile(d1: GridDensity, d2: GridDensity, sigma=1.0) -> float:
    """W1 in the sigma-weighted norm computed through the same quantile coupling."""
    _check_same_grid(d1, d2)
    u, q1, q2 = _quantile_breakpoints(d1, d2)
    D = (q1 - q2) / sigma
    du = np.diff(u)
    return float(np.sum(_abs_linear_integral(D[:-1], D[1:], du)))


@dataclass(frozen=True)
class DistanceReport:
    l1: float
    w1: float
    wf_upper: float
    f_profile_id: str


def distance_report(d1, d2, profile=None, sigma=1.0):
    w1 = wasserstein1(d1, d2)
    wf = wf_upper(d1, d2, profile, sigma) if profile is not None else float("nan")
    pid = profile.profile_id if profile is not None else ""
    return DistanceReport(l1=l1_distance(d1, d2), w1=w1, wf_upper=wf, f_profile_id=pid)
