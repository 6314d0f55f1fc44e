"""Problem data: flux, gravity, wave speed, density and Bernoulli profiles.

The streamline density function rho(p) lives on [p0, 0] and must be positive
and nonincreasing; the Bernoulli function beta(s) lives on [0, |p0|].  Both
may be given in closed form (polynomial coefficients) or as tabulated samples
interpolated with a monotone cubic.  Derived quantities (B and its minimum,
||rho'||_inf, the explicit bifurcation constant eps0 and the size condition)
are computed here once and cached; everything downstream treats the bundle as
immutable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial import Polynomial
from scipy.integrate import quad
from scipy.interpolate import PchipInterpolator

from .errors import ProfileError

TWO_PI = 2.0 * math.pi

# Dense sampling used for ||rho'||_inf and B_min.  Profiles are smooth
# (C^{1+alpha}), so sampling error is negligible next to solver tolerances.
SAMPLE_POINTS = 2048

# Monotonicity violations below this (relative) size are roundoff, not data.
_MONO_TOL = 1e-12


@dataclass(frozen=True)
class FlowParams:
    """Scalar problem data.

    g: gravitational acceleration (length/time^2), > 0.
    c: wave speed (length/time), > 0; used only for field reconstruction.
    p0: relative pseudo-volumetric mass flux, < 0.
    wavelength: fixed to 2*pi by the scaling of the formulation.
    """

    g: float
    c: float
    p0: float
    wavelength: float = TWO_PI

    def __post_init__(self):
        if not (self.g > 0.0):
            raise ProfileError(f"g must be positive, got {self.g}")
        if not (self.c > 0.0):
            raise ProfileError(f"c must be positive, got {self.c}")
        if not (self.p0 < 0.0):
            raise ProfileError(f"p0 must be negative, got {self.p0}")
        if self.wavelength != TWO_PI:
            raise ProfileError("wavelength is fixed to 2*pi by the scaling")


class _Curve:
    """A scalar function on [lo, hi]: polynomial or monotone-cubic table.

    Evaluation clamps the argument to the domain, which realizes the constant
    extension of the profiles outside their native interval.
    """

    def __init__(self, lo: float, hi: float, fn: Callable, dfn: Callable,
                 afn: Callable, source: str):
        self.lo = float(lo)
        self.hi = float(hi)
        self._fn = fn
        self._dfn = dfn
        self._afn = afn  # antiderivative with afn(0) == 0 (or None)
        self.source = source

    @classmethod
    def from_poly(cls, coeffs, lo, hi, source=None):
        poly = Polynomial(np.asarray(coeffs, dtype=float))
        dpoly = poly.deriv()
        apoly = poly.integ(lbnd=0.0)
        src = source or "poly(" + ", ".join(repr(float(c)) for c in coeffs) + ")"
        return cls(lo, hi, poly, dpoly, apoly, src)

    @classmethod
    def from_table(cls, x, y, source=None):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.ndim != 1 or x.shape != y.shape or x.size < 2:
            raise ProfileError("table needs two equally long columns")
        if np.any(np.diff(x) <= 0):
            raise ProfileError("table abscissae must be strictly increasing")
        interp = PchipInterpolator(x, y, extrapolate=True)
        return cls(x[0], x[-1], interp, interp.derivative(),
                   interp.antiderivative(), source or f"table({x.size} rows)")

    def clamp(self, x):
        return np.clip(x, self.lo, self.hi)

    def value(self, x):
        return self._fn(self.clamp(x))

    def deriv(self, x):
        return self._dfn(self.clamp(x))

    def anti(self, x):
        """Antiderivative vanishing at 0 (only meaningful when 0 = lo)."""
        a = self._afn(self.clamp(x))
        a0 = self._afn(0.0)
        return a - a0


def _validation_grid(curve: _Curve, n_samples: int) -> np.ndarray:
    return np.linspace(curve.lo, curve.hi, n_samples)


@dataclass(frozen=True)
class DensityProfile:
    """Streamline density rho(p) on [p0, 0]; positive, nonincreasing in p."""

    curve: _Curve
    p0: float

    @classmethod
    def from_poly(cls, coeffs, p0: float) -> "DensityProfile":
        prof = cls(_Curve.from_poly(coeffs, p0, 0.0), float(p0))
        prof._validate(SAMPLE_POINTS)
        return prof

    @classmethod
    def from_table(cls, p, values) -> "DensityProfile":
        curve = _Curve.from_table(p, values)
        if abs(curve.hi) > 1e-12:
            raise ProfileError("density table must end at p = 0")
        prof = cls(curve, curve.lo)
        # 10x oversampled relative to the table itself
        prof._validate(max(10 * np.asarray(p).size, 2))
        return prof

    def _validate(self, n_samples: int):
        grid = _validation_grid(self.curve, n_samples)
        vals = self.curve.value(grid)
        deriv = self.curve.deriv(grid)
        if np.min(vals) <= 0.0:
            raise ProfileError("density must be positive on [p0, 0]")
        scale = max(1.0, float(np.max(np.abs(deriv))))
        if np.max(deriv) > _MONO_TOL * scale:
            raise ProfileError("density must be nonincreasing in p")

    def eval(self, p):
        """Return (rho, rho_p) with p clamped to [p0, 0]."""
        return self.curve.value(p), self.curve.deriv(p)

    @property
    def rho0(self) -> float:
        return float(self.curve.value(0.0))


@dataclass(frozen=True)
class BernoulliProfile:
    """Bernoulli function beta(s) on [0, |p0|] and its antiderivative.

    B(p) = int_0^p beta(-s) ds = -A(-p) where A(s) = int_0^s beta.
    """

    curve: _Curve
    p0: float

    @classmethod
    def from_poly(cls, coeffs, p0: float) -> "BernoulliProfile":
        return cls(_Curve.from_poly(coeffs, 0.0, abs(p0)), float(p0))

    @classmethod
    def from_table(cls, s, values, p0: float | None = None) -> "BernoulliProfile":
        curve = _Curve.from_table(s, values)
        if abs(curve.lo) > 1e-12:
            raise ProfileError("beta table must start at s = 0")
        return cls(curve, -curve.hi if p0 is None else float(p0))

    def beta(self, s):
        return self.curve.value(s)

    def eval_B(self, p):
        return -self.curve.anti(-np.asarray(p, dtype=float))


def _minimum_B(beta: BernoulliProfile, p0: float) -> float:
    grid = np.linspace(p0, 0.0, SAMPLE_POINTS)
    return float(np.min(beta.eval_B(grid)))


def _rho_prime_inf(rho: DensityProfile) -> float:
    grid = np.linspace(rho.p0, 0.0, SAMPLE_POINTS)
    return float(np.max(np.abs(rho.curve.deriv(grid))))


def epsilon0_terms(g: float, p0: float, rho0: float, rho_prime_inf: float):
    """The four explicit terms whose maximum defines eps0."""
    r = rho_prime_inf
    return (
        (2.0 * g * r * p0 * p0 * math.exp(abs(p0))) ** (2.0 / 3.0),
        (2.0 * g * r) ** 2,
        (4.0 * r) ** 2,
        (8.0 * g * abs(p0) * rho0) ** (2.0 / 3.0),
    )


@dataclass(frozen=True)
class ProfileBundle:
    """Everything the solver stages need: params, rho, beta, cached scalars.

    eps0 follows the convention that it degenerates to 0 in the homogeneous
    case (||rho'||_inf = 0); otherwise it is the explicit four-term maximum.
    """

    params: FlowParams
    rho: DensityProfile
    beta: BernoulliProfile
    rho0: float = field(init=False)
    rho_prime_inf: float = field(init=False)
    B_min: float = field(init=False)
    eps0: float = field(init=False)

    def __post_init__(self):
        if abs(self.rho.p0 - self.params.p0) > 1e-12 * abs(self.params.p0):
            raise ProfileError("density profile domain does not match p0")
        if abs(self.beta.p0 - self.params.p0) > 1e-12 * abs(self.params.p0):
            raise ProfileError("Bernoulli profile domain does not match p0")
        object.__setattr__(self, "rho0", self.rho.rho0)
        object.__setattr__(self, "rho_prime_inf", _rho_prime_inf(self.rho))
        object.__setattr__(self, "B_min", _minimum_B(self.beta, self.params.p0))
        if self.rho_prime_inf == 0.0:
            eps0 = 0.0
        else:
            eps0 = max(epsilon0_terms(self.params.g, self.params.p0,
                                      self.rho0, self.rho_prime_inf))
        object.__setattr__(self, "eps0", eps0)

    # -- evaluation ---------------------------------------------------------

    def eval_density(self, p):
        """(rho, rho_p) at p, clamped to [p0, 0]."""
        return self.rho.eval(p)

    def eval_beta(self, s):
        return self.beta.beta(s)

    def eval_B(self, p):
        """B(p) = int_0^p beta(-s) ds; B(0) = 0."""
        return self.beta.eval_B(p)

    def epsilon0(self) -> float:
        return self.eps0

    # -- admissibility ------------------------------------------------------

    def check_size_condition(self) -> tuple[bool, float]:
        """Evaluate the explicit sufficient condition for local bifurcation.

        Returns (holds, margin) where margin = LHS - RHS; the condition holds
        when g*rho(0)*p0^2 strictly exceeds the profile integral on the right.
        """
        g = self.params.g
        p0 = self.params.p0
        lhs = g * self.rho0 * p0 * p0

        two_eps = 2.0 * self.eps0
        two_bmin = 2.0 * self.B_min

        def integrand(p):
            shifted = 2.0 * float(self.eval_B(p)) - two_bmin + two_eps
            shifted = max(shifted, 0.0)
            _, rho_p = self.rho.eval(p)
            return shifted ** 1.5 + (p - p0) ** 2 * (math.sqrt(shifted) + g * float(rho_p))

        rhs, _ = quad(integrand, p0, 0.0, epsabs=1e-12, epsrel=1e-12, limit=200)
        margin = lhs - rhs
        return margin > 0.0, margin


def make_bundle(g: float, c: float, p0: float, rho: DensityProfile,
                beta: BernoulliProfile) -> ProfileBundle:
    return ProfileBundle(FlowParams(g=g, c=c, p0=p0), rho, beta)


def constant_density_bundle(g: float = 1.0, c: float = 1.0,
                            p0: float = -1.0) -> ProfileBundle:
    """rho = 1, beta = 0: the homogeneous irrotational reference case."""
    return make_bundle(g, c, p0,
                       DensityProfile.from_poly([1.0], p0),
                       BernoulliProfile.from_poly([0.0], p0))
