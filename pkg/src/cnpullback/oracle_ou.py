"""Closed-form laws of the Ornstein-Uhlenbeck system dx = -a x dt + sigma dW + eta dB.

Given a common-noise path beta, the conditional law is Gaussian with mean
``m_beta`` and a variance independent of beta; averaging over beta gives the
stationary law N(0, (sigma^2 + eta^2) / 2a).  The double-well stationary
density is exp(-2V / (sigma^2 + eta^2)) up to a quadrature normalizer.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import ndtr

from . import density as dens
from .noise import BrownianPath, NoiseError
from .potentials import Potential


class OracleError(ValueError):
    pass


@dataclass(frozen=True)
class OuParams:
    a: float
    sigma: float
    eta: float = 0.0

    def __post_init__(self):
        if not self.a > 0:
            raise OracleError("a must be positive")
        if not self.sigma > 0:
            raise OracleError("sigma must be positive")
        if not self.eta >= 0:
            raise OracleError("eta must be non-negative")

    @property
    def pullback_var(self):
        return self.sigma ** 2 / (2 * self.a)

    @property
    def stationary_var(self):
        return (self.sigma ** 2 + self.eta ** 2) / (2 * self.a)

    def transition_var(self, elapsed):
        return self.sigma ** 2 * -math.expm1(-2 * self.a * elapsed) / (2 * self.a)

    def potential(self):
        return Potential.quadratic(self.a)

    def default_tau(self):
        return 20.0 / self.a


def _gaussian(grid, m, var):
    sd = math.sqrt(var)
    return dens.GridDensity.from_cdf(grid, lambda e: ndtr((e - m) / sd))


def default_grid(params: OuParams, n_cells=1024, n_std=6.0):
    return dens.Grid.symmetric(n_std * math.sqrt(params.stationary_var), n_cells)


def _stieltjes_nodes(beta: BrownianPath, s, t):
    """Nodes s = u_0 < ... < u_n = t: the path grid points inside (s, t) plus both ends."""
    if not beta.covers(s, t):
        raise NoiseError(f"[{s}, {t}] outside path window [{beta.t_start}, {beta.t_end}]")
    grid_t = beta.times
    eps = 1e-9 * beta.dt
    inner = grid_t[(grid_t > s + eps) & (grid_t < t - eps)]
    return np.concatenate([[s], inner, [t]])


def ou_mbeta(params: OuParams, beta: BrownianPath, t, s, x_s):
    """x_s e^{-a(t-s)} + eta * sum_j e^{-a(t-u_j)} (beta(u_{j+1}) - beta(u_j)), left points u_j."""
    if t < s:
        raise OracleError("need t >= s")
    decay = x_s * math.exp(-params.a * (t - s))
    if t == s or params.eta == 0:
        return decay
    u = _stieltjes_nodes(beta, s, t)
    b = beta(u)[:, 0]
    return decay + params.eta * float(np.sum(np.exp(-params.a * (t - u[:-1])) * np.diff(b)))


def ou_transition_density(params: OuParams, beta: BrownianPath, t, s, x_s, grid=None):
    """Law of x(t) given x(s) = x_s and the path beta."""
    if not t > s:
        raise OracleError("need t > s")
    grid = default_grid(params) if grid is None else grid
    return _gaussian(grid, ou_mbeta(params, beta, t, s, x_s), params.transition_var(t - s))


def ou_pullback_moments(params: OuParams, beta: BrownianPath, truncation_tau=None):
    """Mean and variance of the pullback density, with the e^{-a tau} truncation bound."""
    tau = params.default_tau() if truncation_tau is None else float(truncation_tau)
    if not tau > 0:
        raise OracleError("truncation_tau must be positive")
    m = ou_mbeta(params, beta, 0.0, -tau, 0.0)
    return {"mean": m, "var": params.pullback_var, "truncation_bound": math.exp(-params.a * tau)}


def ou_pullback_density(params: OuParams, beta: BrownianPath, truncation_tau=None, grid=None):
    grid = default_grid(params) if grid is None else grid
    mom = ou_pullback_moments(params, beta, truncation_tau)
    return _gaussian(grid, mom["mean"], mom["var"])


def ou_stationary_density(params: OuParams, grid=None):
    grid = default_grid(params) if grid is None else grid
    return _gaussian(grid, 0.0, params.stationary_var)


def dw_stationary_density(a, sigma2_plus_eta2, grid=None, subcells=8):
    """Stationary double-well density exp(-2V/s) / N with N from adaptive quadrature."""
    if not a > 0 or not sigma2_plus_eta2 > 0:
        raise OracleError("a and sigma^2 + eta^2 must be positive")
    V = Potential.double_well(a).eval
    s = float(sigma2_plus_eta2)
    vmin = -a * a / 4.0
    w = lambda x: np.exp(-2.0 * (V(x) - vmin) / s)
    norm = integrate.quad(w, -np.inf, np.inf, limit=200)[0]
    if grid is None:
        m2 = integrate.quad(lambda x: x * x * w(x), -np.inf, np.inf, limit=200)[0] / norm
        grid = dens.Grid.symmetric(6.0 * math.sqrt(m2), 1024)
    return dens.GridDensity.from_function(grid, lambda x: w(x) / norm, subcells=subcells)


def dw_stationary_moments(a, sigma2_plus_eta2):
    """(normalizer, second moment) of the double-well stationary law."""
    V = Potential.double_well(a).eval
    w = lambda x: np.exp(-2.0 * (V(x) + a * a / 4.0) / sigma2_plus_eta2)
    norm = integrate.quad(w, -np.inf, np.inf, limit=200)[0]
    m2 = integrate.quad(lambda x: x * x * w(x), -np.inf, np.inf, limit=200)[0] / norm
    return norm, m2
