"""Discrete height equation: residual, Jacobian and Newton solves for (h, Q).

The unknown h lives on a half-period grid q in [0, pi], p in [p0, 0]; evenness
is structural (derivatives in q use even reflection at both ends).  The bottom
row h = 0 is eliminated; interior nodes carry the quasilinear operator with
the nonlocal mean d(h) over the top boundary, top nodes carry the nonlinear
Bernoulli condition with a second-order one-sided h_p.  The Jacobian is a
banded matrix (row-major node ordering) plus the rank-one coupling
g rho_p h_p^3 (x) mean-top weights; linear solves run banded LU with a
Sherman-Morrison correction, and an optional bordering row/column handles the
parameter Q or an arclength constraint.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import LinAlgError, solve_banded

from .errors import InvalidField, NoConvergence, SingularJacobian, StagnationGuard
from .laminar import LaminarFlow, solve_laminar
from .profiles import ProfileBundle


@dataclass(frozen=True)
class Grid:
    """Half-period tensor grid; Nq nodes on [0, pi], Np nodes on [p0, 0]."""

    Nq: int
    Np: int
    p0: float

    def __post_init__(self):
        if self.Nq < 16 or self.Np < 16:
            raise InvalidField("grid needs Nq >= 16 and Np >= 16")
        if not self.p0 < 0.0:
            raise InvalidField("grid needs p0 < 0")

    @property
    def hq(self) -> float:
        return math.pi / (self.Nq - 1)

    @property
    def hp(self) -> float:
        return abs(self.p0) / (self.Np - 1)

    @property
    def q(self) -> np.ndarray:
        return np.linspace(0.0, math.pi, self.Nq)

    @property
    def p(self) -> np.ndarray:
        return np.linspace(self.p0, 0.0, self.Np)

    @property
    def n_unknowns(self) -> int:
        return (self.Np - 1) * self.Nq

    def top_weights(self) -> np.ndarray:
        """Trapezoid weights of the full-period mean of the top row."""
        w = np.full(self.Nq, 2.0)
        w[0] = w[-1] = 1.0
        return w / (2.0 * (self.Nq - 1))


@dataclass(frozen=True)
class HeightField:
    grid: Grid
    h: np.ndarray  # (Np, Nq), bottom row identically 0
    Q: float

    def __post_init__(self):
        if self.h.shape != (self.grid.Np, self.grid.Nq):
            raise InvalidField("h has the wrong shape for its grid")
        if np.max(np.abs(self.h[0])) != 0.0:
            raise InvalidField("h must vanish identically on the bottom row")

    def interior_flat(self) -> np.ndarray:
        return self.h[1:].ravel().copy()

    def with_interior(self, xflat: np.ndarray, Q: float | None = None) -> "HeightField":
        h = np.zeros_like(self.h)
        h[1:] = xflat.reshape(self.grid.Np - 1, self.grid.Nq)
        return HeightField(self.grid, h, self.Q if Q is None else float(Q))


# -- differencing with even reflection in q ----------------------------------

def dq(u: np.ndarray, hq: float) -> np.ndarray:
    out = np.empty_like(u)
    out[:, 1:-1] = (u[:, 2:] - u[:, :-2]) / (2.0 * hq)
    out[:, 0] = 0.0
    out[:, -1] = 0.0
    return out


def dqq(u: np.ndarray, hq: float) -> np.ndarray:
    out = np.empty_like(u)
    out[:, 1:-1] = (u[:, 2:] - 2.0 * u[:, 1:-1] + u[:, :-2]) / hq ** 2
    out[:, 0] = 2.0 * (u[:, 1] - u[:, 0]) / hq ** 2
    out[:, -1] = 2.0 * (u[:, -2] - u[:, -1]) / hq ** 2
    return out


def dp_full(u: np.ndarray, hp: float) -> np.ndarray:
    """Centered in the interior, second-order one-sided on both p edges."""
    out = np.empty_like(u)
    out[1:-1] = (u[2:] - u[:-2]) / (2.0 * hp)
    out[0] = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * hp)
    out[-1] = (3.0 * u[-1] - 4.0 * u[-2] + u[-3]) / (2.0 * hp)
    return out


def dp_top(u: np.ndarray, hp: float) -> np.ndarray:
    return (3.0 * u[-1] - 4.0 * u[-2] + u[-3]) / (2.0 * hp)


def min_hp(field: HeightField) -> float:
    return float(np.min(dp_full(field.h, field.grid.hp)))


def mean_top(field: HeightField) -> float:
    """Trapezoid mean of h over the full-period top boundary (linear in h)."""
    return float(field.grid.top_weights() @ field.h[-1])


def _coeff_columns(bundle: ProfileBundle, grid: Grid):
    _, rho_p = bundle.eval_density(grid.p)
    beta_vals = bundle.eval_beta(-grid.p)
    return (np.asarray(rho_p, dtype=float)[:, None],
            np.asarray(beta_vals, dtype=float)[:, None])


def residual(bundle: ProfileBundle, field: HeightField,
             sigma: float | None = None):
    """(R1 interior rows, R2 top row) of the discrete operator.

    With sigma = None the nonlocal mean d(h) is used (the full operator);
    a real sigma gives the frozen operator, which only changes R1.
    """
    g = bundle.params.g
    grid = field.grid
    h = field.h
    hp, hq = grid.hp, grid.hq
    rho_p, beta_vals = _coeff_columns(bundle, grid)

    h_p = dp_full(h, hp)
    if np.min(h_p) <= 0.0:
        raise StagnationGuard("h_p lost positivity; the field left u < c")
    h_q = dq(h, hq)
    h_qq = dqq(h, hq)
    h_pp = (h[2:] - 2.0 * h[1:-1] + h[:-2]) / hp ** 2
    h_pq = dq(h_p, hq)

    d = mean_top(field) if sigma is None else float(sigma)

    sl = slice(1, -1)
    R1 = ((1.0 + h_q[sl] ** 2) * h_pp
          + h_qq[sl] * h_p[sl] ** 2
          - 2.0 * h_q[sl] * h_p[sl] * h_pq[sl]
          - g * (h[sl] - d) * h_p[sl] ** 3 * rho_p[sl]
          + h_p[sl] ** 3 * beta_vals[sl])

    hp_t = dp_top(h, hp)
    R2 = 1.0 + h_q[-1] ** 2 + hp_t ** 2 * (2.0 * g * bundle.rho0 * h[-1] - field.Q)
    return R1, R2


def frozen_residual(bundle: ProfileBundle, field: HeightField, sigma: float):
    """The frozen operator: d(h) replaced by the scalar sigma (R2 unchanged)."""
    return residual(bundle, field, sigma=sigma)


def residual_flat(bundle: ProfileBundle, field: HeightField) -> np.ndarray:
    R1, R2 = residual(bundle, field)
    return np.concatenate([R1.ravel(), R2])


@dataclass
class JacobianSystem:
    """Banded local part + rank-one nonlocal part + dR2/dQ column."""

    grid: Grid
    ab: np.ndarray          # solve_banded storage, shape (l+u+1, n)
    l: int
    u: int
    u_vec: np.ndarray       # rank-one left factor over equation rows
    w_vec: np.ndarray       # rank-one right factor (top-row mean weights)
    dQ: np.ndarray          # dR/dQ column

    def matvec(self, xflat: np.ndarray, dQ_scalar: float = 0.0) -> np.ndarray:
        n = xflat.size
        y = np.zeros(n)
        for band in range(self.ab.shape[0]):
            off = band - self.u  # row - col
            vals = self.ab[band]
            if off >= 0:
                cols = np.arange(0, n - off)
                y[cols + off] += vals[cols] * xflat[cols]
            else:
                cols = np.arange(-off, n)
                y[cols + off] += vals[cols] * xflat[cols]
        y += self.u_vec * float(self.w_vec @ xflat)
        y += self.dQ * dQ_scalar
        return y

    def to_dense(self, with_rank_one: bool = True) -> np.ndarray:
        n = self.ab.shape[1]
        A = np.zeros((n, n))
        for band in range(self.ab.shape[0]):
            off = band - self.u
            for c in range(max(0, -off), min(n, n - off)):
                A[c + off, c] = self.ab[band, c]
        if with_rank_one:
            A += np.outer(self.u_vec, self.w_vec)
        return A

    def solve_columns(self, B: np.ndarray) -> np.ndarray:
        """(A + u w^T)^{-1} B via banded LU and Sherman-Morrison."""
        stacked = np.column_stack([B, self.u_vec])
        try:
            X = solve_banded((self.l, self.u), self.ab, stacked)
        except LinAlgError as exc:
            raise SingularJacobian(str(exc)) from exc
        if not np.all(np.isfinite(X)):
            raise SingularJacobian("banded solve produced non-finite values")
        Au = X[:, -1]
        X = X[:, :-1]
        denom = 1.0 + float(self.w_vec @ Au)
        if abs(denom) < 1e-14:
            raise SingularJacobian("Sherman-Morrison denominator vanished")
        corr = (self.w_vec @ X) / denom
        return X - np.outer(Au, corr)


def jacobian(bundle: ProfileBundle, field: HeightField) -> JacobianSystem:
    """Exact Frechet derivative of the discrete residual at (h, Q)."""
    g = bundle.params.g
    grid = field.grid
    h = field.h
    Nq, Np = grid.Nq, grid.Np
    hp, hq = grid.hp, grid.hq
    rho_p, beta_vals = _coeff_columns(bundle, grid)

    h_p = dp_full(h, hp)
    if np.min(h_p) <= 0.0:
        raise StagnationGuard("h_p lost positivity; the field left u < c")
    h_q = dq(h, hq)
    h_qq = dqq(h, hq)
    h_pp = (h[2:] - 2.0 * h[1:-1] + h[:-2]) / hp ** 2
    h_pq = dq(h_p, hq)
    d = mean_top(field)

    n = grid.n_unknowns
    l, u = 2 * Nq, Nq + 1
    ab = np.zeros((l + u + 1, n))

    sl = slice(1, -1)
    c_pp = 1.0 + h_q[sl] ** 2
    c_qq = h_p[sl] ** 2
    c_pq = -2.0 * h_q[sl] * h_p[sl]
    c_q = 2.0 * h_q[sl] * h_pp - 2.0 * h_p[sl] * h_pq[sl]
    c_p = (2.0 * h_qq[sl] * h_p[sl] - 2.0 * h_q[sl] * h_pq[sl]
           - 3.0 * g * (h[sl] - d) * rho_p[sl] * h_p[sl] ** 2
           + 3.0 * beta_vals[sl] * h_p[sl] ** 2)
    c_0 = -g * rho_p[sl] * h_p[sl] ** 3

    I, J = np.meshgrid(np.arange(1, Np - 1), np.arange(Nq), indexing="ij")
    rows = (I - 1) * Nq + J

    def scatter(di, dj, coef):
        ii = I + di
        jj = J + dj
        jj = np.where(jj < 0, -jj, jj)
        jj = np.where(jj > Nq - 1, 2 * (Nq - 1) - jj, jj)
        mask = ii >= 1  # couplings to the bottom row drop (h = 0 there)
        cols = (ii - 1) * Nq + jj
        np.add.at(ab, (u + rows[mask] - cols[mask], cols[mask]),
                  np.broadcast_to(coef, rows.shape)[mask])

    scatter(1, 0, c_pp / hp ** 2 + c_p / (2.0 * hp))
    scatter(-1, 0, c_pp / hp ** 2 - c_p / (2.0 * hp))
    scatter(0, 0, -2.0 * c_pp / hp ** 2 - 2.0 * c_qq / hq ** 2 + c_0)
    scatter(0, 1, c_qq / hq ** 2 + c_q / (2.0 * hq))
    scatter(0, -1, c_qq / hq ** 2 - c_q / (2.0 * hq))
    quarter = c_pq / (4.0 * hp * hq)
    scatter(1, 1, quarter)
    scatter(1, -1, -quarter)
    scatter(-1, 1, -quarter)
    scatter(-1, -1, quarter)

    # top boundary rows: R2 linearization (3-point one-sided in p)
    hp_t = dp_top(h, hp)
    obli = 2.0 * hp_t * (2.0 * g * bundle.rho0 * h[-1] - field.Q)
    jt = np.arange(Nq)
    rows_t = (Np - 2) * Nq + jt

    def scatter_top(di, dj, coef):
        jj = jt + dj
        jj = np.where(jj < 0, -jj, jj)
        jj = np.where(jj > Nq - 1, 2 * (Nq - 1) - jj, jj)
        cols = (Np - 2 + di) * Nq + jj
        np.add.at(ab, (u + rows_t - cols, cols), np.broadcast_to(coef, jt.shape))

    hq_t = h_q[-1]
    scatter_top(0, 1, hq_t / hq)
    scatter_top(0, -1, -hq_t / hq)
    scatter_top(0, 0, 2.0 * g * bundle.rho0 * hp_t ** 2 + obli * 3.0 / (2.0 * hp))
    scatter_top(-1, 0, obli * (-4.0) / (2.0 * hp))
    scatter_top(-2, 0, obli / (2.0 * hp))

    # rank-one nonlocal part: +g rho_p h_p^3 at interior rows (x) top weights
    u_vec = np.zeros(n)
    u_vec[: (Np - 2) * Nq] = (g * rho_p[sl] * h_p[sl] ** 3).ravel()
    w_vec = np.zeros(n)
    w_vec[(Np - 2) * Nq:] = grid.top_weights()

    dQ = np.zeros(n)
    dQ[(Np - 2) * Nq:] = -hp_t ** 2

    return JacobianSystem(grid=grid, ab=ab, l=l, u=u, u_vec=u_vec,
                          w_vec=w_vec, dQ=dQ)


# -- Newton -------------------------------------------------------------------

@dataclass(frozen=True)
class Constraint:
    """Linear scalar constraint vec . x + coef_Q * Q = target over unknowns."""

    vec: np.ndarray
    coef_Q: float
    target: float

    def value(self, xflat: np.ndarray, Q: float) -> float:
        return float(self.vec @ xflat) + self.coef_Q * Q - self.target


@dataclass(frozen=True)
class NewtonResult:
    field: HeightField
    iterations: int
    residual_norm: float


def _scale(field: HeightField) -> float:
    return max(1.0, abs(field.Q), float(np.max(np.abs(field.h))))


def newton_solve(bundle: ProfileBundle, field: HeightField, *,
                 constraint: Constraint | None = None, max_iter: int = 30,
                 tol: float = 1e-10, step_tol: float = 1e-12) -> NewtonResult:
    """Damped Newton on the discrete height equation.

    With constraint = None the head Q is held fixed; otherwise the system is
    bordered with the constraint row and the dR/dQ column and (h, Q) are
    solved together.  Steps are damped to keep min h_p > 0 (the trust region
    of the formulation).  Raises NoConvergence / StagnationGuard /
    SingularJacobian accordingly.
    """
    grid = field.grid
    x = field.interior_flat()
    Q = float(field.Q)
    cur = field.with_interior(x, Q)
    last_step = math.inf

    for it in range(max_iter + 1):
        R = residual_flat(bundle, cur)
        res_norm = float(np.max(np.abs(R)))
        c_res = constraint.value(x, Q) if constraint is not None else 0.0
        scale = _scale(cur)
        if max(res_norm, abs(c_res)) <= tol * scale and \
                (it == 0 or last_step <= step_tol * scale):
            return NewtonResult(cur, it, res_norm)
        if it == max_iter:
            raise NoConvergence(
                f"Newton stalled after {max_iter} iterations (|R| = {res_norm:.3g})")

        jac = jacobian(bundle, cur)
        if constraint is None:
            dx = jac.solve_columns(-R[:, None])[:, 0]
            dQ_step = 0.0
        else:
            X = jac.solve_columns(np.column_stack([-R, jac.dQ]))
            x1, x2 = X[:, 0], X[:, 1]
            denom = constraint.coef_Q - float(constraint.vec @ x2)
            if abs(denom) < 1e-14 * max(1.0, abs(constraint.coef_Q)):
                raise SingularJacobian("bordered system is singular")
            dQ_step = (-c_res - float(constraint.vec @ x1)) / denom
            dx = x1 - dQ_step * x2

        alpha = 1.0
        while True:
            trial = cur.with_interior(x + alpha * dx, Q + alpha * dQ_step)
            if np.all(np.isfinite(trial.h)) and min_hp(trial) > 0.0:
                break
            alpha *= 0.5
            if alpha < 2.0 ** -20:
                raise StagnationGuard(
                    "damping cannot keep h_p positive along the Newton step")
        x = x + alpha * dx
        Q = Q + alpha * dQ_step
        cur = trial
        last_step = alpha * max(float(np.max(np.abs(dx))), abs(dQ_step))


# -- constructors and snapshots ----------------------------------------------

def laminar_field(bundle: ProfileBundle, lam_or_flow, grid: Grid) -> HeightField:
    """Embed a laminar solution H(p; lambda) as a q-independent HeightField."""
    if isinstance(lam_or_flow, LaminarFlow):
        flow = lam_or_flow
        if flow.p_grid.size != grid.Np:
            flow = solve_laminar(bundle, flow.lam, grid.Np - 1)
    else:
        flow = solve_laminar(bundle, float(lam_or_flow), grid.Np - 1)
    h = np.repeat(flow.H[:, None], grid.Nq, axis=1)
    h[0] = 0.0
    return HeightField(grid, h, flow.Q)


def save_snapshot(field: HeightField, csv_path) -> None:
    """CSV `q,p,h` in row-major node order plus a JSON sidecar."""
    csv_path = Path(csv_path)
    grid = field.grid
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["q", "p", "h"])
        for i, p in enumerate(grid.p):
            for j, q in enumerate(grid.q):
                writer.writerow([repr(float(q)), repr(float(p)),
                                 repr(float(field.h[i, j]))])
    sidecar = {"Q": field.Q, "d": mean_top(field), "Nq": grid.Nq,
               "Np": grid.Np, "p0": grid.p0}
    csv_path.with_suffix(".json").write_text(
        json.dumps(sidecar, sort_keys=True, indent=2) + "\n")


def load_snapshot(csv_path) -> HeightField:
    csv_path = Path(csv_path)
    meta = json.loads(csv_path.with_suffix(".json").read_text())
    grid = Grid(Nq=int(meta["Nq"]), Np=int(meta["Np"]), p0=float(meta["p0"]))
    data = np.loadtxt(csv_path, delimiter=",", skiprows=1)
    if data.shape[0] != grid.Np * grid.Nq:
        raise InvalidField("snapshot row count does not match its grid")
    h = data[:, 2].reshape(grid.Np, grid.Nq)
    if np.max(np.abs(h[0])) > 0.0:
        raise InvalidField("snapshot has nonzero h on the bottom row")
    return HeightField(grid, h, float(meta["Q"]))
