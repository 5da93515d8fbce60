"""Polynomial potentials, their exact derivatives and structural checks."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

KINDS = ("quadratic", "double_well", "polynomial")

# dissipation-check grid
_DISS_HALF_WIDTH = 20.0
_DISS_POINTS = 100_001


class PotentialError(ValueError):
    pass


@dataclass(frozen=True)
class Potential:
    """Analytic potential ``V``.

    ``quadratic``: ``[a]`` with V = a x^2 / 2.
    ``double_well``: ``[a]`` with V = x^4/4 - a x^2/2.
    ``polynomial`` (1D only): coefficients in ascending powers, V = sum c_k x^k;
    the degree must be even with a positive leading coefficient.

    Quadratic and double-well act radially in d > 1 (x^2 -> |x|^2).
    """

    kind: str
    params: tuple = field(default=())

    def __post_init__(self):
        params = tuple(float(p) for p in np.atleast_1d(self.params))
        object.__setattr__(self, "params", params)
        if self.kind not in KINDS:
            raise PotentialError(f"unknown potential kind {self.kind!r}; expected one of {KINDS}")
        if self.kind in ("quadratic", "double_well"):
            if len(params) != 1:
                raise PotentialError(f"{self.kind} takes exactly one parameter 'a'")
            if not params[0] > 0:
                raise PotentialError(f"{self.kind} parameter a must be positive, got {params[0]}")
        else:
            c = np.trim_zeros(np.asarray(params), "b")
            if c.size < 3 or (c.size - 1) % 2:
                raise PotentialError("polynomial potential needs even degree >= 2")
            if not c[-1] > 0:
                raise PotentialError("polynomial leading coefficient must be positive")
            object.__setattr__(self, "params", tuple(c))

    # -- construction helpers -------------------------------------------------
    @classmethod
    def quadratic(cls, a):
        return cls("quadratic", (a,))

    @classmethod
    def double_well(cls, a):
        return cls("double_well", (a,))

    @classmethod
    def polynomial(cls, coeffs):
        return cls("polynomial", tuple(coeffs))

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {"kind", "params"}
        if unknown:
            raise PotentialError(f"unknown potential keys: {sorted(unknown)}")
        return cls(d["kind"], tuple(d.get("params", ())))

    def to_dict(self):
        return {"kind": self.kind, "params": list(self.params)}

    # -- polynomial view ------------------------------------------------------
    @property
    def coeffs(self):
        """1D coefficients of V in ascending powers."""
        if self.kind == "quadratic":
            return np.array([0.0, 0.0, self.params[0] / 2])
        if self.kind == "double_well":
            return np.array([0.0, 0.0, -self.params[0] / 2, 0.0, 0.25])
        return np.asarray(self.params, dtype=float)

    @property
    def degree(self):
        return self.coeffs.size - 1

    @property
    def supports_multid(self):
        return self.kind != "polynomial"

    def radial_coeffs(self):
        """(c0, c1) with grad V(x) = x (c0 + c1 |x|^2) for radial kinds."""
        a = self.params[0]
        if self.kind == "quadratic":
            return a, 0.0
        if self.kind == "double_well":
            return -a, 1.0
        raise PotentialError("polynomial potentials are one-dimensional")

    # -- evaluation -----------------------------------------------------------
    def _radial_sq(self, x):
        x = np.asarray(x, dtype=float)
        return np.sum(x * x, axis=-1)

    def eval(self, x, dim=1):
        """V(x).  With ``dim > 1`` the trailing axis of ``x`` holds coordinates."""
        if dim == 1:
            return np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), self.coeffs)
        self._check_multid()
        r2 = self._radial_sq(x)
        a = self.params[0]
        if self.kind == "quadratic":
            return 0.5 * a * r2
        return 0.25 * r2 * r2 - 0.5 * a * r2

    def grad(self, x, dim=1):
        if dim == 1:
            return np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), self.dcoeffs)
        self._check_multid()
        x = np.asarray(x, dtype=float)
        c0, c1 = self.radial_coeffs()
        return x * (c0 + c1 * self._radial_sq(x))[..., None]

    def laplacian(self, x, dim=1):
        if dim == 1:
            return np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), self.d2coeffs)
        self._check_multid()
        c0, c1 = self.radial_coeffs()
        # div(x (c0 + c1 r^2)) = d c0 + (d + 2) c1 r^2
        return dim * c0 + (dim + 2) * c1 * self._radial_sq(x)

    @property
    def dcoeffs(self):
        return np.polynomial.polynomial.polyder(self.coeffs)

    @property
    def d2coeffs(self):
        return np.polynomial.polynomial.polyder(self.coeffs, 2)

    def _check_multid(self):
        if not self.supports_multid:
            raise PotentialError("polynomial potentials are one-dimensional")


def check_dissipation(pot: Potential):
    """Decide whether V'(x) x^3 >= x^6/2 - C holds for some finite C (1D).

    The constant is certified on |x| <= 20 (10^5 points); behaviour at infinity
    comes from the leading terms of V'(x) x^3 - x^6/2.

    Returns ``{"satisfied": bool, "constant_C": float | None}``.
    """
    dc = pot.dcoeffs
    # h(x) = V'(x) x^3 - x^6 / 2 as a polynomial
    h = np.zeros(max(dc.size + 3, 7))
    h[3:3 + dc.size] += dc
    h[6] -= 0.5
    h = np.trim_zeros(h, "b")
    deg = h.size - 1
    lead = h[-1] if h.size else 0.0
    # bounded below at infinity iff even degree with positive lead (or constant)
    bounded = deg == 0 or (deg % 2 == 0 and lead > 0)
    if not bounded:
        return {"satisfied": False, "constant_C": None}
    x = np.linspace(-_DISS_HALF_WIDTH, _DISS_HALF_WIDTH, _DISS_POINTS)
    xmin = x[np.argmin(np.polynomial.polynomial.polyval(x, h))]
    # polish the grid minimiser with the critical points of h nearby
    crit = np.polynomial.polynomial.polyroots(np.polynomial.polynomial.polyder(h)) if deg > 1 else np.array([])
    crit = crit[np.abs(crit.imag) < 1e-9].real if crit.size else crit
    cand = np.concatenate([[xmin], crit[np.abs(crit) <= _DISS_HALF_WIDTH]]) if crit.size else np.array([xmin])
    hmin = float(np.min(np.polynomial.polynomial.polyval(cand, h)))
    return {"satisfied": True, "constant_C": max(0.0, -hmin)}


def convexity_radius(pot: Potential) -> float:
    """Smallest R with V''(x) > 0 for all |x| > R (0 when globally convex)."""
    d2 = np.trim_zeros(pot.d2coeffs, "b")
    if d2.size <= 1:
        if d2.size == 1 and d2[0] > 0:
            return 0.0
        raise PotentialError("potential is not strictly convex outside any ball")
    roots = np.polynomial.polynomial.polyroots(d2)
    real = roots[np.abs(roots.imag) < 1e-9 * np.maximum(1.0, np.abs(roots))].real
    if real.size == 0:
        return 0.0
    return float(np.max(np.abs(real)))
