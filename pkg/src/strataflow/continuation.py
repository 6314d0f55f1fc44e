"""Branch switching at lambda* and pseudo-arclength continuation.

The branch leaves the laminar curve along the eigenfunction predictor
h = H(lambda*) + s0 * phi*, phi* = M(p) cos q, corrected by a bordered Newton
solve with the phase/amplitude constraint <phi*, h - H> = s0 (discrete L2
pairing, normalized so the predictor satisfies it exactly).  Subsequent steps
use a secant tangent and a pseudo-arclength constraint; the step metric is the
discrete H1(R) x R product norm, which keeps `ds` commensurate with surface
amplitude.  Diagnostics are recomputed from the field at every accepted point
and classified against the global-bifurcation alternatives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import (MonitorStop, NoConvergence, SingularJacobian,
                     StagnationGuard, StepFailure)
from .heightpde import (Constraint, Grid, HeightField, dp_full, dq, dqq,
                        laminar_field, mean_top, newton_solve)
from .profiles import ProfileBundle
from .sturm import BifurcationPoint


# -- metric -------------------------------------------------------------------

def area_weights(grid: Grid) -> np.ndarray:
    """Full-period trapezoid weights on the half-period grid (reflection)."""
    wq = np.full(grid.Nq, 2.0 * grid.hq)
    wq[0] = wq[-1] = grid.hq
    wp = np.full(grid.Np, grid.hp)
    wp[0] = wp[-1] = 0.5 * grid.hp
    return np.outer(wp, wq)


def inner_l2(grid: Grid, u: np.ndarray, v: np.ndarray) -> float:
    return float(np.sum(area_weights(grid) * u * v))


def product_norm(grid: Grid, u: np.ndarray, dQ: float) -> float:
    """Discrete H2(R) x R norm of a field/parameter increment.

    The continuation operates on classical (curvature-controlled) solutions,
    so the step metric weighs second derivatives too; this keeps a given ds
    commensurate across grids and the corrector safely inside its basin.
    """
    w = area_weights(grid)
    up = dp_full(u, grid.hp)
    uq = dq(u, grid.hq)
    upp = dp_full(up, grid.hp)
    upq = dq(up, grid.hq)
    uqq = dqq(u, grid.hq)
    total = np.sum(w * (u * u + up * up + uq * uq
                        + upp * upp + 2.0 * upq * upq + uqq * uqq))
    return math.sqrt(float(total) + dQ * dQ)


# -- diagnostics --------------------------------------------------------------

@dataclass(frozen=True)
class NodalReport:
    """Sign pattern of h_q on the half-domain, edges and corners."""

    hq_interior: bool
    hqp_bottom: bool
    hqq_left: bool
    hqq_right: bool
    corner_bottom_left: bool
    corner_bottom_right: bool
    corner_top_left: bool
    corner_top_right: bool
    margins: dict

    @property
    def all_ok(self) -> bool:
        return all((self.hq_interior, self.hqp_bottom, self.hqq_left,
                    self.hqq_right, self.corner_bottom_left,
                    self.corner_bottom_right, self.corner_top_left,
                    self.corner_top_right))


_NODAL_TOL = -1e-12


def nodal_check(field: HeightField) -> NodalReport:
    """Single crest/trough pattern: h_q < 0 inside the half-domain, with the
    edge-derivative and corner signs that characterize it."""
    grid = field.grid
    hp, hq = grid.hp, grid.hq
    h_q = dq(field.h, hq)
    h_qq = dqq(field.h, hq)

    inner = h_q[1:, 1:-1]  # interior and top rows, q strictly inside (0, pi)
    hq_ok = bool(np.all(inner < _NODAL_TOL))

    # h_qp on the bottom edge by the one-sided second-order stencil
    hqp_bot = (-3.0 * h_q[0, 1:-1] + 4.0 * h_q[1, 1:-1] - h_q[2, 1:-1]) / (2.0 * hp)
    hqp_ok = bool(np.all(hqp_bot < _NODAL_TOL))

    left = h_qq[1:-1, 0]
    right = h_qq[1:-1, -1]
    left_ok = bool(np.all(left < _NODAL_TOL))
    right_ok = bool(np.all(right > -_NODAL_TOL))

    hqq_l = h_qq[:, 0]
    hqq_r = h_qq[:, -1]
    corner_bl = (-3.0 * hqq_l[0] + 4.0 * hqq_l[1] - hqq_l[2]) / (2.0 * hp)
    corner_br = (-3.0 * hqq_r[0] + 4.0 * hqq_r[1] - hqq_r[2]) / (2.0 * hp)

    margins = {
        "hq_interior": float(np.max(inner)) if inner.size else 0.0,
        "hqp_bottom": float(np.max(hqp_bot)),
        "hqq_left": float(np.max(left)),
        "hqq_right": float(np.min(right)),
        "corner_bottom_left": float(corner_bl),
        "corner_bottom_right": float(corner_br),
        "corner_top_left": float(hqq_l[-1]),
        "corner_top_right": float(hqq_r[-1]),
    }
    return NodalReport(
        hq_interior=hq_ok,
        hqp_bottom=hqp_ok,
        hqq_left=left_ok,
        hqq_right=right_ok,
        corner_bottom_left=bool(corner_bl < _NODAL_TOL),
        corner_bottom_right=bool(corner_br > -_NODAL_TOL),
        corner_top_left=bool(hqq_l[-1] < _NODAL_TOL),
        corner_top_right=bool(hqq_r[-1] > -_NODAL_TOL),
        margins=margins,
    )


@dataclass(frozen=True)
class Diagnostics:
    amplitude: float
    max_hp: float
    min_hp: float
    min_c_minus_u: float
    d: float
    hq_inf: float
    nodal_ok: bool
    surface_gap: float
    eta_mean: float


def surface_elevation(field: HeightField) -> np.ndarray:
    return field.h[-1] - mean_top(field)


def compute_diagnostics(bundle: ProfileBundle, field: HeightField) -> Diagnostics:
    grid = field.grid
    h_p = dp_full(field.h, grid.hp)
    h_q = dq(field.h, grid.hq)
    rho_vals, _ = bundle.eval_density(grid.p)
    rho_col = np.asarray(rho_vals, dtype=float)[:, None]
    eta = surface_elevation(field)
    d = mean_top(field)
    w_top = grid.top_weights()
    gap = field.Q - 2.0 * bundle.params.g * bundle.rho0 * field.h[-1]
    return Diagnostics(
        amplitude=float(np.max(eta) - np.min(eta)),
        max_hp=float(np.max(h_p)),
        min_hp=float(np.min(h_p)),
        min_c_minus_u=float(np.min(1.0 / (np.sqrt(rho_col) * h_p))),
        d=d,
        hq_inf=float(np.max(np.abs(h_q))),
        nodal_ok=nodal_check(field).all_ok,
        surface_gap=float(np.min(gap)),
        eta_mean=float(w_top @ eta),
    )


@dataclass(frozen=True)
class BranchPoint:
    s: float
    field: HeightField
    diagnostics: Diagnostics
    newton_iterations: int
    newton_residual: float
    stop_reason: str | None = None


def branch_point(bundle: ProfileBundle, field: HeightField, s: float = 0.0,
                 iterations: int = 0) -> BranchPoint:
    from .heightpde import residual_flat

    res = float(np.max(np.abs(residual_flat(bundle, field))))
    return BranchPoint(s=s, field=field,
                       diagnostics=compute_diagnostics(bundle, field),
                       newton_iterations=iterations, newton_residual=res)


# -- monitors -----------------------------------------------------------------

@dataclass(frozen=True)
class Monitors:
    """Thresholds for the global-bifurcation alternatives."""

    delta: float
    q_max: float
    hp_stagnation: float
    hp_blowup: float
    hq_tol: float
    lambda_tol: float
    lambda_star: float

    def __post_init__(self):
        if not self.delta > 0.0:
            raise ValueError("delta must be positive")


def default_monitors(bifpoint: BifurcationPoint) -> Monitors:
    hp0 = bifpoint.laminar.H_p
    delta = 1e-3 * float(np.min(hp0))
    return Monitors(
        delta=delta,
        q_max=100.0 * max(1.0, abs(bifpoint.Q_star)),
        hp_stagnation=100.0 * float(np.max(hp0)),
        hp_blowup=0.1 * delta,
        hq_tol=1e-8,
        lambda_tol=1e-6 * (1.0 + abs(bifpoint.lambda_star)),
        lambda_star=bifpoint.lambda_star,
    )


@dataclass(frozen=True)
class MonitorStatus:
    stop: bool
    reason: str | None
    margins: dict


def alternative_monitor(point: BranchPoint, monitors: Monitors,
                        bundle: ProfileBundle) -> MonitorStatus:
    """Classify a branch point against the alternatives, in precedence order:
    unbounded Q, stagnation (max h_p), leftward blow-up (min h_p -> 0),
    boundary of the uniform-ellipticity set, laminar return."""
    d = point.diagnostics
    Q = point.field.Q
    g = bundle.params.g
    rho0 = bundle.rho0
    p0 = bundle.params.p0
    # The head is controlled by the flux: Q <= max (c-u)^2 rho + 2 g rho0 |p0| max h_p,
    # with sqrt(rho)(c-u) = 1/h_p; reported as a diagnostic bound.
    q_bound = 1.0 / d.min_hp ** 2 + 2.0 * g * rho0 * abs(p0) * d.max_hp
    lambda_est = Q - 2.0 * g * rho0 * d.d
    margins = {
        "q_abs": abs(Q),
        "q_bound_estimate": q_bound,
        "max_hp": d.max_hp,
        "min_hp": d.min_hp,
        "surface_gap": d.surface_gap,
        "hq_inf": d.hq_inf,
        "lambda_estimate": lambda_est,
        "max_c_minus_u": 1.0 / (math.sqrt(rho0) * d.min_hp),
        "eta_inf": d.amplitude,
    }
    if abs(Q) >= monitors.q_max:
        return MonitorStatus(True, "unbounded_q", margins)
    if d.max_hp >= monitors.hp_stagnation:
        return MonitorStatus(True, "stagnation", margins)
    if d.min_hp <= monitors.hp_blowup:
        return MonitorStatus(True, "leftward_blowup", margins)
    if d.min_hp <= monitors.delta or d.surface_gap <= monitors.delta:
        return MonitorStatus(True, "boundary_o_delta", margins)
    if d.hq_inf <= monitors.hq_tol and \
            abs(lambda_est - monitors.lambda_star) > monitors.lambda_tol:
        return MonitorStatus(True, "laminar_return", margins)
    return MonitorStatus(False, None, margins)


# -- branch switching and continuation ----------------------------------------

def eigen_mode(bifpoint: BifurcationPoint, grid: Grid) -> np.ndarray:
    """phi* = M(p) cos q on the continuation grid (M interpolated if needed)."""
    from scipy.interpolate import PchipInterpolator

    M_src = bifpoint.eigen.M
    p_src = bifpoint.eigen.p_grid
    if p_src.size == grid.Np:
        M = M_src
    else:
        M = PchipInterpolator(p_src, M_src)(grid.p)
    return np.outer(M, np.cos(grid.q))


def initial_tangent(bifpoint: BifurcationPoint, s0: float, grid: Grid, *,
                    newton_tol: float = 1e-10,
                    max_iter: int = 30) -> tuple[HeightField, Constraint, HeightField]:
    """First corrected branch point via the eigenfunction predictor.

    Returns (corrected field, the phase/amplitude constraint used, laminar
    base field on the same grid).  s0 = 0 reproduces the laminar point.
    """
    bundle = bifpoint.bundle
    base = laminar_field(bundle, bifpoint.laminar, grid)
    phi = eigen_mode(bifpoint, grid)
    w = area_weights(grid)
    norm2 = float(np.sum(w * phi * phi))
    vec = (w * phi)[1:].ravel() / norm2
    target = float(vec @ base.interior_flat()) + s0
    constraint = Constraint(vec=vec, coef_Q=0.0, target=target)

    h0 = base.h + s0 * phi
    h0[0] = 0.0
    guess = HeightField(grid, h0, base.Q)
    result = newton_solve(bundle, guess, constraint=constraint,
                          max_iter=max_iter, tol=newton_tol)
    return result.field, constraint, base


class Branch:
    """Append-only continuation branch with adaptive pseudo-arclength steps."""

    def __init__(self, bifpoint: BifurcationPoint, grid: Grid, *,
                 s0: float | None = None, monitors: Monitors | None = None,
                 ds_min: float = 1e-10, ds_max: float | None = None,
                 newton_tol: float = 1e-10, max_iter: int = 30):
        self.bifpoint = bifpoint
        self.bundle = bifpoint.bundle
        self.grid = grid
        self.monitors = monitors if monitors is not None else default_monitors(bifpoint)
        self.newton_tol = newton_tol
        self.max_iter = max_iter
        self.ds_min = ds_min
        self.ds_max = ds_max
        self._easy = 0
        self.ds_next: float | None = None

        s0 = 1e-2 * bifpoint.laminar.d if s0 is None else s0
        first, _, base = initial_tangent(bifpoint, s0, grid,
                                         newton_tol=newton_tol, max_iter=max_iter)
        self.base = base
        dist = product_norm(grid, first.h - base.h, first.Q - base.Q)
        if dist > 0.0:
            self.tangent = ((first.h - base.h) / dist, (first.Q - base.Q) / dist)
        else:
            phi = eigen_mode(bifpoint, grid)
            nrm = product_norm(grid, phi, 0.0)
            self.tangent = (phi / nrm, 0.0)
        self.points: list[BranchPoint] = [branch_point(self.bundle, first, s=dist)]

    @property
    def last(self) -> BranchPoint:
        return self.points[-1]

    def step(self, ds: float) -> BranchPoint:
        """One accepted continuation step (internally adaptive in ds).

        Halves ds on corrector failure down to ds_min (StepFailure), grows it
        by 1.3 after two consecutive easy successes up to ds_max.  Raises
        MonitorStop after appending a point that triggers an alternative.
        """
        grid = self.grid
        w = area_weights(grid)
        ds_cur = ds if self.ds_next is None else min(ds, self.ds_next)
        if self.ds_max is not None:
            ds_cur = min(ds_cur, self.ds_max)
        tau_h, tau_Q = self.tangent
        prev = self.last
        kappa = float(np.sum(w * tau_h * tau_h)) + tau_Q * tau_Q
        vec = (w * tau_h)[1:].ravel()
        while True:
            h0 = prev.field.h + ds_cur * tau_h
            h0[0] = 0.0
            guess = HeightField(grid, h0, prev.field.Q + ds_cur * tau_Q)
            target = (float(vec @ prev.field.interior_flat())
                      + tau_Q * prev.field.Q + ds_cur * kappa)
            constraint = Constraint(vec=vec, coef_Q=tau_Q, target=target)
            try:
                result = newton_solve(self.bundle, guess, constraint=constraint,
                                      max_iter=self.max_iter, tol=self.newton_tol)
                break
            except (NoConvergence, StagnationGuard, SingularJacobian):
                ds_cur *= 0.5
                self._easy = 0
                if ds_cur < self.ds_min:
                    raise StepFailure(
                        f"step size underflowed ds_min = {self.ds_min}") from None

        new = result.field
        dist = product_norm(grid, new.h - prev.field.h, new.Q - prev.field.Q)
        self.tangent = ((new.h - prev.field.h) / dist,
                        (new.Q - prev.field.Q) / dist)
        point = branch_point(self.bundle, new, s=prev.s + dist,
                             iterations=result.iterations)

        if result.iterations <= 4:
            self._easy += 1
        else:
            self._easy = 0
        if self._easy >= 2:
            self.ds_next = 1.3 * ds_cur
            self._easy = 0
        else:
            self.ds_next = ds_cur
        if self.ds_max is not None:
            self.ds_next = min(self.ds_next, self.ds_max)

        status = alternative_monitor(point, self.monitors, self.bundle)
        if status.stop:
            point = replace(point, stop_reason=status.reason)
            self.points.append(point)
            raise MonitorStop(status)
        self.points.append(point)
        return point
