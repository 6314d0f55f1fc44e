"""Laminar (flat-surface shear) flows H(p; lambda) and their lambda-derivatives.

The family is produced by integrating the first-order system

    dp/ds = sqrt(lambda + 2F),   dF/ds = (B'(p) - g s rho'(p)) sqrt(lambda + 2F)

downward in the physical height s from (s, p, F) = (0, 0, 0) until p crosses
p0; the crossing height is -d.  Fields are resampled onto a uniform p grid by
monotone inversion of p(s).  The lambda-derivative of G := 2F solves a linear
Volterra equation of the second kind whose kernel is separable, so the
product-trapezoid march costs O(Np).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid, solve_ivp
from scipy.optimize import brentq

from .errors import (LambdaRangeError, NoBedReached, NoMinimumInRange,
                     NonMonotone)
from .profiles import ProfileBundle

# Fraction of the unit scale (1 - 2*B_min) used as the lower lambda margin
# when eps0 = 0 (homogeneous case): the family degenerates as
# lambda -> -2*B_min, so sweeps and searches need a positive floor there.
LAMBDA_FLOOR_FRAC = 0.02

# Sweep upper bound multiplier; mu(lambda) >= -1 holds for large lambda.
SWEEP_SPAN = 50.0


@dataclass(frozen=True)
class LaminarFlow:
    """One laminar solution on a uniform p grid of Np+1 nodes."""

    lam: float
    p_grid: np.ndarray
    Y: np.ndarray        # height below the surface, Y(0) = 0, Y(p0) = -d
    H: np.ndarray        # height above the bed, H = Y + d
    H_p: np.ndarray      # (lambda + G)^{-1/2}
    F: np.ndarray
    G: np.ndarray        # 2F along the flow
    d: float             # mean depth
    Q: float             # head parameter, Q = lambda + 2 g rho(0) d

    @property
    def a(self) -> np.ndarray:
        """H_p^{-1} = sqrt(lambda + G), the coefficient used downstream."""
        return np.sqrt(self.lam + self.G)


@dataclass(frozen=True)
class LaminarDiagnostics:
    lam: float
    Gdot: np.ndarray
    Ydot: np.ndarray
    Qdot: float
    Qddot: float


@dataclass(frozen=True)
class Lambda0Result:
    value: float
    boundary_minimum: bool = False

    def __float__(self):
        return self.value


def lambda_min(bundle: ProfileBundle) -> float:
    """Left end of the admissible lambda range used by sweeps and searches."""
    floor = -2.0 * bundle.B_min
    if bundle.eps0 > 0.0:
        return floor + bundle.eps0
    return floor + LAMBDA_FLOOR_FRAC * (1.0 - 2.0 * bundle.B_min)


def lambda_max_default(bundle: ProfileBundle) -> float:
    return SWEEP_SPAN * (1.0 - 2.0 * bundle.B_min + bundle.eps0)


def solve_laminar(bundle: ProfileBundle, lam: float, Np: int = 256, *,
                  allow_below_floor: bool = False, s_budget_factor: float = 8.0,
                  rtol: float = 1e-12, atol: float = 1e-14) -> LaminarFlow:
    """Integrate the laminar system at `lam` and resample to Np+1 p-nodes.

    Raises LambdaRangeError below the admissible floor (unless overridden;
    lam <= -2*B_min is always rejected), NoBedReached if the s budget is
    exhausted, NonMonotone if lambda + 2F collapses (corrupt profiles).
    """
    g = bundle.params.g
    p0 = bundle.params.p0
    eps = lam + 2.0 * bundle.B_min
    if eps <= 0.0:
        raise LambdaRangeError(
            f"lambda = {lam} is outside the family (needs lambda > {-2.0 * bundle.B_min})")
    if not allow_below_floor and lam < lambda_min(bundle) * (1.0 - 1e-12):
        raise LambdaRangeError(
            f"lambda = {lam} below the admissible floor {lambda_min(bundle)}")

    beta = bundle.beta
    rho = bundle.rho

    def rhs(s, u):
        p, F = u
        speed_sq = lam + 2.0 * F
        speed = math.sqrt(speed_sq) if speed_sq > 0.0 else 0.0
        _, rho_p = rho.eval(p)
        return (speed, (float(beta.beta(-p)) - g * s * float(rho_p)) * speed)

    def hit_bed(s, u):
        return u[0] - p0
    hit_bed.terminal = True
    hit_bed.direction = -1

    guard_level = 0.25 * eps

    def speed_guard(s, u):
        return lam + 2.0 * u[1] - guard_level
    speed_guard.terminal = True
    speed_guard.direction = -1

    s_budget = s_budget_factor * abs(p0) / math.sqrt(eps)
    sol = solve_ivp(rhs, (0.0, -s_budget), (0.0, 0.0), method="DOP853",
                    rtol=rtol, atol=atol, dense_output=True,
                    events=(hit_bed, speed_guard))
    if sol.t_events[1].size:
        raise NonMonotone("dp/ds lost its lower bound; profiles inconsistent")
    if not sol.t_events[0].size:
        raise NoBedReached(
            f"p did not reach p0 within s-budget {s_budget} (lambda too small?)")

    s_bed = float(sol.t_events[0][0])
    d = -s_bed
    if abs(float(sol.sol(s_bed)[0]) - p0) > 1e-10 * abs(p0):
        raise NoBedReached("event localization failed the endpoint residual")

    p_grid = np.linspace(p0, 0.0, Np + 1)
    s = _invert_monotone(sol, lam, s_bed, p_grid)
    vals = sol.sol(s)
    F = vals[1].copy()
    F[-1] = 0.0  # exact initial condition at p = 0
    Y = s.copy()
    Y[0] = s_bed
    Y[-1] = 0.0
    G = 2.0 * F
    H_p = 1.0 / np.sqrt(lam + G)
    Q = lam + 2.0 * g * bundle.rho0 * d
    return LaminarFlow(lam=lam, p_grid=p_grid, Y=Y, H=Y + d, H_p=H_p,
                       F=F, G=G, d=d, Q=Q)


def _invert_monotone(sol, lam: float, s_bed: float,
                     p_grid: np.ndarray) -> np.ndarray:
    """Solve p(s) = p_grid node-wise; p is strictly increasing in s."""
    ts = sol.t
    ps = sol.y[0]
    order = np.argsort(ps)
    s = np.interp(p_grid, ps[order], ts[order])
    s = np.clip(s, s_bed, 0.0)
    target_tol = 1e-12 * max(1.0, abs(p_grid[0]))
    for _ in range(8):
        vals = sol.sol(s)
        err = vals[0] - p_grid
        if np.max(np.abs(err)) <= target_tol:
            break
        dpds = np.sqrt(np.maximum(lam + 2.0 * vals[1], 1e-300))
        s = np.clip(s - err / dpds, s_bed, 0.0)
    else:
        # Newton stalled somewhere; fall back to bisection per bad node.
        err = sol.sol(s)[0] - p_grid
        for i in np.nonzero(np.abs(err) > target_tol)[0]:
            s[i] = brentq(lambda t: float(sol.sol(t)[0]) - p_grid[i], s_bed, 0.0,
                          xtol=1e-15, rtol=8.9e-16)
    s[0] = s_bed
    s[-1] = 0.0
    return s


def g_dot(bundle: ProfileBundle, lam: float, Np: int = 256, *,
          flow: LaminarFlow | None = None, with_qddot: bool = True,
          fd_step: float | None = None) -> LaminarDiagnostics:
    """Gdot, Ydot, Qdot by the Volterra solve; Qddot by centered differences.

    The Volterra equation for w = 1 + Gdot,

        w(p) = 1 + int_p^0 g (rho(s) - rho(p)) (lambda + G(s))^{-3/2} w(s) ds,

    is marched from the surface with trapezoid product integration; the
    kernel vanishes on the diagonal so every step is explicit, and the
    separable structure reduces the march to suffix sums.
    """
    if flow is None:
        flow = solve_laminar(bundle, lam, Np)
    w, Ydot = _volterra_w_ydot(bundle, flow)
    Qdot = 1.0 - 2.0 * bundle.params.g * bundle.rho0 * Ydot[0]

    Qddot = math.nan
    if with_qddot:
        h = fd_step if fd_step is not None else 1e-4 * max(1.0, abs(lam))
        qd = []
        for lam_s in (lam + h, lam - h):
            fl = solve_laminar(bundle, lam_s, Np, allow_below_floor=True)
            _, yd = _volterra_w_ydot(bundle, fl)
            qd.append(1.0 - 2.0 * bundle.params.g * bundle.rho0 * yd[0])
        Qddot = (qd[0] - qd[1]) / (2.0 * h)

    return LaminarDiagnostics(lam=lam, Gdot=w - 1.0, Ydot=Ydot,
                              Qdot=Qdot, Qddot=Qddot)


def _volterra_w_ydot(bundle: ProfileBundle, flow: LaminarFlow):
    p = flow.p_grid
    hp = p[1] - p[0]
    g = bundle.params.g
    rho_vals, _ = bundle.eval_density(p)
    rho_vals = np.asarray(rho_vals, dtype=float)
    c = (flow.lam + flow.G) ** (-1.5)

    n = p.size - 1  # surface index
    w = np.empty_like(p)
    w[n] = 1.0
    # suffix sums S1 = sum tau_j rho_j c_j w_j, S2 = sum tau_j c_j w_j over
    # j > i, with the surface node carrying the half trapezoid weight.
    s1 = 0.5 * hp * rho_vals[n] * c[n] * w[n]
    s2 = 0.5 * hp * c[n] * w[n]
    for i in range(n - 1, -1, -1):
        w[i] = 1.0 + g * (s1 - rho_vals[i] * s2)
        s1 += hp * rho_vals[i] * c[i] * w[i]
        s2 += hp * c[i] * w[i]

    # Ydot(p) = 1/2 int_p^0 (lambda + G)^{-3/2} w dr
    integrand = c * w
    tail = cumulative_trapezoid(integrand[::-1], dx=hp, initial=0.0)[::-1]
    Ydot = 0.5 * tail
    return w, Ydot


def qddot_volterra(bundle: ProfileBundle, lam: float, Np: int = 256, *,
                   flow: LaminarFlow | None = None,
                   diag: LaminarDiagnostics | None = None) -> float:
    """Qddot via the second Volterra equation (cross-check route).

    Yddot(p) = ell(p) + int_p^0 g rho'(r) (C(r) - C(p)) Yddot(r) dr with
    C the antiderivative of (lambda + G)^{-3/2} and
    ell(p) = -(3/4) int_p^0 (1+Gdot)^2 (lambda+G)^{-5/2} dr,
    the coefficient coming from differentiating the Ydot integral in lambda.
    """
    if flow is None:
        flow = solve_laminar(bundle, lam, Np)
    if diag is None:
        diag = g_dot(bundle, lam, Np, flow=flow, with_qddot=False)
    p = flow.p_grid
    hp = p[1] - p[0]
    g = bundle.params.g
    _, rho_p = bundle.eval_density(p)
    rho_p = np.asarray(rho_p, dtype=float)
    w = 1.0 + diag.Gdot
    c32 = (flow.lam + flow.G) ** (-1.5)
    c52 = (flow.lam + flow.G) ** (-2.5)

    C = cumulative_trapezoid(c32, dx=hp, initial=0.0)
    ell = -0.75 * cumulative_trapezoid((w * w * c52)[::-1], dx=hp, initial=0.0)[::-1]

    n = p.size - 1
    ydd = np.empty_like(p)
    ydd[n] = ell[n]  # = 0
    s1 = 0.5 * hp * rho_p[n] * C[n] * ydd[n]
    s2 = 0.5 * hp * rho_p[n] * ydd[n]
    for i in range(n - 1, -1, -1):
        ydd[i] = ell[i] + g * (s1 - C[i] * s2)
        s1 += hp * rho_p[i] * C[i] * ydd[i]
        s2 += hp * rho_p[i] * ydd[i]
    return -2.0 * g * bundle.rho0 * ydd[0]


_INV_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def find_lambda0(bundle: ProfileBundle, lambda_max: float | None = None,
                 Np: int = 256, rel_tol: float = 1e-10) -> Lambda0Result:
    """Unique minimizer of the convex Q(lambda) by golden-section search."""
    lo = lambda_min(bundle)
    hi = lambda_max if lambda_max is not None else lambda_max_default(bundle)

    def qdot(lam):
        return g_dot(bundle, lam, Np, with_qddot=False).Qdot

    if qdot(lo) > 0.0:
        return Lambda0Result(lo, boundary_minimum=True)
    if qdot(hi) < 0.0:
        raise NoMinimumInRange(
            f"Q still decreasing at lambda = {hi}; enlarge the range")

    def q_of(lam):
        return solve_laminar(bundle, lam, Np).Q

    a, b = lo, hi
    x1 = b - _INV_GOLDEN * (b - a)
    x2 = a + _INV_GOLDEN * (b - a)
    f1, f2 = q_of(x1), q_of(x2)
    while (b - a) > rel_tol * max(1.0, 0.5 * abs(a + b)):
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _INV_GOLDEN * (b - a)
            f1 = q_of(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _INV_GOLDEN * (b - a)
            f2 = q_of(x2)
    return Lambda0Result(0.5 * (a + b), boundary_minimum=False)
