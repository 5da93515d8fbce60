"""Reflection-coupling contraction data for 1D gradient drifts.

For separation r in the norm |x - y| / sigma,

    k(r) = inf_m 2 (V'(m + h) - V'(m - h)) / (2h),   h = sigma r / 2,

and from it phi = exp(-1/4 int_0^r s k^-(s) ds), Phi = int phi, the constants
R0 and R1, the rate c, the weight g and the concave distance function f with
f' = phi g.  W1 in the weighted norm and the W_f distance are then comparable:
(phi(R0) / 2) W1 <= W_f <= W1.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import comb

from . import density as dens
from . import io
from .noise import BrownianPath
from .potentials import Potential, convexity_radius
from .sde import ParticleEnsemble, SdeSpec, evolve_ensemble, sample_initial

N_MIDPOINTS = 20_001
N_RGRID = 4000
R_MIN = 1e-3
_MAX_WIDEN = 4


class ContractionError(ValueError):
    pass


def _divided_difference_coeffs(dcoeffs):
    """Terms (coef, power of m, power of h) of (P(m + h) - P(m - h)) / (2h) for P = V'."""
    terms = []
    for k, c in enumerate(dcoeffs):
        if c == 0:
            continue
        for j in range(1, k + 1, 2):
            terms.append((c * comb(k, j, exact=True), k - j, j - 1))
    return terms


def _k_on_midpoints(terms, m, h):
    """2 (P(m + h) - P(m - h)) / (2h) on the outer grid h x m, as a matrix product.

    Terms are grouped by the power of h: sum_j h^j A_j(m), so the work is one
    (len(h), n_pow) @ (n_pow, len(m)) product.
    """
    m, h = np.ravel(m), np.ravel(h)
    n_pow = 1 + max((ph for _, _, ph in terms), default=0)
    A = np.zeros((n_pow, m.size))
    for c, pm, ph in terms:
        A[ph] += c * m ** pm
    H = h[:, None] ** np.arange(n_pow)[None, :]
    return 2.0 * (H @ A)


def _search_window(pot):
    return 3.0 * (convexity_radius(pot) + 1.0)


def compute_k(pot: Potential, sigma, r_grid, M=None, n_mid=N_MIDPOINTS):
    """k on ``r_grid`` by a midpoint search over [-M, M] (default M = 3 (convexity radius + 1)).

    The window is doubled while the infimum sits on its boundary; if it still
    does after a few widenings :class:`ContractionError` is raised.
    """
    if not sigma > 0:
        raise ContractionError("sigma must be positive")
    r = np.asarray(r_grid, dtype=float)
    if np.any(r < 0):
        raise ContractionError("r_grid must be non-negative")
    terms = _divided_difference_coeffs(pot.dcoeffs)
    M = _search_window(pot) if M is None else float(M)
    h = 0.5 * sigma * r
    for _ in range(_MAX_WIDEN):
        m = np.linspace(-M, M, n_mid | 1)
        out = np.empty(r.shape)
        on_edge = False
        for s in range(0, r.size, 256):
            vals = _k_on_midpoints(terms, m, h.ravel()[s:s + 256])
            inf = vals.min(axis=1)
            out.ravel()[s:s + 256] = inf
            edge = np.minimum(vals[:, 0], vals[:, -1])
            inner = vals[:, 1:-1].min(axis=1) if m.size > 2 else edge
            tol = 1e-12 * np.maximum(1.0, np.abs(inf))
            on_edge |= bool(np.any(edge < inner - tol))
        if not on_edge:
            return out
        M *= 2.0
    raise ContractionError(f"infimum of k still on the search boundary at M={M / 2}")


def _k_scalar(pot, sigma, r, M=None):
    return float(compute_k(pot, sigma, np.array([r]), M)[0])


def _find_R0(pot, sigma, r_probe):
    k = compute_k(pot, sigma, r_probe)
    neg = np.flatnonzero(k < 0)
    if neg.size == 0:
        return 0.0
    i = neg[-1]
    if i == r_probe.size - 1:
        raise ContractionError("k is negative at the end of the probe range: no convexity at infinity")
    return brentq(lambda s: _k_scalar(pot, sigma, s), r_probe[i], r_probe[i + 1], xtol=1e-14, rtol=1e-15)


def _find_R1(pot, sigma, R0, r_hi):
    """Smallest R > R0 with inf_{r >= R} k(r) * R (R - R0) >= 8, by bisection.

    The tail infimum is the exact k(R) combined with suffix minima of k
    tabulated once on a dense grid, so each bisection step is cheap.
    """
    top = max(r_hi, 4.0 * R0 + 4.0)
    grid = np.linspace(R0, top, 4001)
    kg = compute_k(pot, sigma, grid)
    suffix = np.minimum.accumulate(kg[::-1])[::-1]

    def tail_inf(R):
        if R >= top:
            return _k_scalar(pot, sigma, R)
        j = int(np.searchsorted(grid, R, side="right"))
        rest = suffix[j] if j < grid.size else np.inf
        return min(_k_scalar(pot, sigma, R), rest)

    G = lambda R: tail_inf(R) * R * (R - R0) - 8.0
    lo = R0
    hi = max(2.0 * R0, 1.0)
    while G(hi) < 0:
        lo, hi = hi, 2.0 * hi
        if hi > 1e6:
            raise ContractionError("no finite R1: k does not stay positive at infinity")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if G(mid) >= 0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-13 * max(1.0, hi):
            break
    return hi


def _cumtrapz(y, x):
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(x))
    return out


@dataclass(frozen=True, eq=False)
class ContractionProfile:
    r_grid: np.ndarray
    k_values: np.ndarray
    phi: np.ndarray
    Phi: np.ndarray
    g: np.ndarray
    f: np.ndarray
    f_prime: np.ndarray
    R0: float
    R1: float
    alpha: float
    c: float
    sigma: float = 1.0
    source: dict = field(default_factory=dict)

    @property
    def K(self):
        """Bridge constant 2 / phi(R0) between W1 and W_f."""
        return 2.0 / self.phi_R0

    @property
    def phi_R0(self):
        return float(np.interp(self.R0, self.r_grid, self.phi))

    @property
    def profile_id(self):
        h = hashlib.sha1(json.dumps(self.constants(), sort_keys=True).encode()).hexdigest()[:12]
        return f"profile-{h}"

    def constants(self):
        return {"R0": self.R0, "R1": self.R1, "alpha": self.alpha, "c": self.c, "K": self.K,
                "phi_R0": self.phi_R0, "sigma": self.sigma, **self.source}

    def check_valid(self, tol=1e-9):
        """Raise if any tabulated invariant fails."""
        r, f, fp = self.r_grid, self.f, self.f_prime
        problems = []
        if abs(f[0]) > tol or r[0] != 0.0:
            problems.append("f(0) != 0")
        if abs(fp[0] - 1.0) > tol:
            problems.append("f'(0) != 1")
        if np.any(np.diff(fp) > tol):
            problems.append("f' increases (f not concave)")
        lo = self.phi_R0 / 2.0
        if np.any(fp < lo - tol) or np.any(fp > 1.0 + tol):
            problems.append("f' leaves [phi(R0)/2, 1]")
        if np.any(f < 0.5 * self.Phi - tol * (1 + self.Phi)) or np.any(f > self.Phi + tol * (1 + self.Phi)):
            problems.append("f outside [Phi/2, Phi]")
        beyond = r >= self.R0
        if np.any(np.abs(self.phi[beyond] - self.phi_R0) > tol):
            problems.append("phi not constant beyond R0")
        if problems:
            raise ContractionError("invalid contraction profile: " + "; ".join(problems))
        return True

    # -- f and its antiderivative (f is piecewise linear in r) ---------------
    def f_at(self, r):
        r = np.asarray(r, dtype=float)
        r_end, f_end, s_end = self.r_grid[-1], self.f[-1], self.f_prime[-1]
        return np.where(r <= r_end, np.interp(r, self.r_grid, self.f), f_end + s_end * (r - r_end))

    def F_at(self, r):
        """Antiderivative of the piecewise-linear interpolant of f, linear extension beyond the table."""
        r = np.asarray(r, dtype=float)
        x, f = self.r_grid, self.f
        dx = np.diff(x)
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * dx)])
        i = np.clip(np.searchsorted(x, r, side="right") - 1, 0, x.size - 2)
        t = np.clip(r, None, x[-1]) - x[i]
        slope = (f[i + 1] - f[i]) / dx[i]
        inside = cum[i] + f[i] * t + 0.5 * slope * t * t
        extra = np.maximum(r - x[-1], 0.0)
        tail = f[-1] * extra + 0.5 * self.f_prime[-1] * extra * extra
        return inside + tail

    def to_csv(self, path):
        return io.write_csv(path, {"r": self.r_grid, "k": self.k_values, "phi": self.phi, "Phi": self.Phi,
                                   "g": self.g, "f": self.f})

    def write_constants(self, path):
        return io.write_json(path, self.constants())


def build_profile(pot: Potential, sigma, n_r=N_RGRID, r_min=R_MIN) -> ContractionProfile:
    """Tabulate k, phi, Phi, g, f on a logarithmic r-grid and derive R0, R1, alpha, c."""
    if not sigma > 0:
        raise ContractionError("sigma must be positive")
    probe = np.concatenate([[0.0], np.logspace(-3, 3, 600)])
    R0 = _find_R0(pot, sigma, probe)
    R1 = _find_R1(pot, sigma, R0, probe[-1])
    r = np.unique(np.concatenate([[0.0, R0, R1], np.logspace(math.log10(r_min), math.log10(4.0 * R1), n_r)]))
    k = compute_k(pot, sigma, r)
    kneg = np.maximum(-k, 0.0)
    kneg[r >= R0] = 0.0
    phi = np.exp(-0.25 * _cumtrapz(r * kneg, r))
    Phi = _cumtrapz(phi, r)
    ratio = Phi / phi
    inside = r <= R1
    I = _cumtrapz(ratio, r)
    I_R1 = float(I[np.flatnonzero(inside)[-1]])
    if not I_R1 > 0:
        raise ContractionError("degenerate profile: R1 = 0")
    alpha = 1.0  # scalar sigma in 1D: sup |sigma^-1 z|^2 over ||z|| = 1
    c = 1.0 / (alpha * I_R1)
    g = np.where(inside, 1.0 - 0.5 * I / I_R1, 0.5)
    g = np.clip(g, 0.5, 1.0)
    fp = phi * g
    f = _cumtrapz(fp, r)
    return ContractionProfile(r, k, phi, Phi, g, f, fp, float(R0), float(R1), alpha, float(c), float(sigma),
                              {"potential": pot.to_dict()})


def double_well_closed_form(a, sigma):
    """Closed forms for V = x^4/4 - a x^2/2: k(r) = sigma^2 r^2 / 2 - 2a, R0 = 2 sqrt(a) / sigma."""
    R0 = 2.0 * math.sqrt(a) / sigma
    k = lambda r: 0.5 * sigma ** 2 * np.asarray(r) ** 2 - 2.0 * a
    phi = lambda r: np.exp(-0.25 * (a * np.minimum(r, R0) ** 2 - sigma ** 2 * np.minimum(r, R0) ** 4 / 8.0))
    return {"R0": R0, "k": k, "phi": phi, "phi_R0": math.exp(-0.5 * a * a / sigma ** 2)}


@dataclass(frozen=True)
class ContractionReport:
    times: np.ndarray
    w1_sigma: np.ndarray
    bound: np.ndarray
    passed: bool
    slack: float
    K: float
    c: float

    def to_dict(self):
        return {"times": self.times.tolist(), "w1_sigma": self.w1_sigma.tolist(), "bound": self.bound.tolist(),
                "passed": self.passed, "slack": self.slack, "K": self.K, "c": self.c}


def verify_contraction(spec: SdeSpec, beta: BrownianPath, mu0, nu0, profile: ContractionProfile, T=None,
                       checkpoints=(1.0, 2.0, 4.0, 8.0), N=20_000, dt=1e-3, master_seed=0, slack=1.1,
                       mc_allowance=0.0, use_numba=None) -> ContractionReport:
    """Evolve two ensembles along the same beta with independent intrinsic noise and test

        W1_sigma(t) <= slack * K * exp(-c t) * W1_sigma(0) + mc_allowance

    at each checkpoint.  W1 is the exact empirical distance.
    """
    sigma = spec.sigma_scalar
    cps = np.asarray(sorted(checkpoints), dtype=float)
    T = float(cps[-1]) if T is None else float(T)
    if cps[-1] > T + 1e-12:
        raise ContractionError("checkpoints beyond T")
    # the second ensemble uses particle ids N..2N-1: independent intrinsic streams
    xa = sample_initial(mu0, N, master_seed, 1, pid0=0)
    xb = sample_initial(nu0, N, master_seed, 1, pid0=N)
    ea = ParticleEnsemble(xa, 0.0, master_seed, 0)
    eb = ParticleEnsemble(xb, 0.0, master_seed, N)
    w0 = dens.wasserstein1_samples(xa, xb) / sigma
    if not w0 > 0:
        raise ContractionError("initial distributions coincide; the bound is vacuous")
    times, w = [0.0], [w0]
    t = 0.0
    for cp in cps:
        ea = evolve_ensemble(ea, spec, beta, t, cp, dt, use_numba=use_numba)
        eb = evolve_ensemble(eb, spec, beta, t, cp, dt, use_numba=use_numba)
        t = cp
        times.append(cp)
        w.append(dens.wasserstein1_samples(ea.positions, eb.positions) / sigma)
    times, w = np.asarray(times), np.asarray(w)
    bound = slack * profile.K * np.exp(-profile.c * times) * w0 + mc_allowance
    ok = bool(np.all(w[1:] <= bound[1:]))
    return ContractionReport(times, w, bound, ok, slack, profile.K, profile.c)
