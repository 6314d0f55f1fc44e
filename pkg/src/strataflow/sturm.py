"""Linearized problem along the laminar family: eigenvalues and bifurcation.

The principal eigenvalue mu(lambda) of the Rayleigh minimization is computed
from a symmetric tridiagonal pencil: P1 stiffness for -{H_p^{-3} M'}' with the
surface term -g rho(0) M(0)^2 folded into the last diagonal entry (Robin), a
lumped trapezoid mass with density H_p^{-1} + g rho_p, and Dirichlet M = 0 at
the bed.  The smallest eigenvalue is extracted by Sturm-sequence bisection
plus inverse iteration (LAPACK, via eigh_tridiagonal).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal, solve_banded
from scipy.optimize import brentq

from .errors import DegenerateDenominator, LBViolated, StrataflowError
from .laminar import (LaminarDiagnostics, LaminarFlow, find_lambda0, g_dot,
                      lambda_max_default, lambda_min, solve_laminar)
from .profiles import ProfileBundle


@dataclass(frozen=True)
class EigenResult:
    """Principal eigenpair at one lambda; max|M| = 1 and M(0) > 0."""

    lam: float
    mu: float
    M: np.ndarray
    p_grid: np.ndarray


@dataclass(frozen=True)
class BifurcationPoint:
    bundle: ProfileBundle
    lambda_star: float
    eigen: EigenResult
    Q_star: float
    laminar: LaminarFlow
    diagnostics: LaminarDiagnostics
    lambda0: float
    xi: float


def _pencil(bundle: ProfileBundle, flow: LaminarFlow, k: int = 1):
    """Tridiagonal A and diagonal B over the interior+surface unknowns."""
    p = flow.p_grid
    hp = p[1] - p[0]
    g = bundle.params.g
    _, rho_p = bundle.eval_density(p)
    a3 = (flow.lam + flow.G) ** 1.5
    b = k * k * flow.a + g * np.asarray(rho_p, dtype=float)
    if np.min(b) <= 0.0:
        raise DegenerateDenominator(
            f"H_p^-1 + g rho_p not positive at lambda = {flow.lam}")
    cmid = 0.5 * (a3[:-1] + a3[1:])

    n = p.size - 1
    diag = np.empty(n)
    diag[:-1] = (cmid[:-1] + cmid[1:]) / hp
    diag[-1] = cmid[-1] / hp - g * bundle.rho0
    off = -cmid[1:] / hp
    mass = np.empty(n)
    mass[:-1] = hp * b[1:-1]
    mass[-1] = 0.5 * hp * b[-1]
    return diag, off, mass


def principal_eigen(bundle: ProfileBundle, lam: float, Np: int = 256, *,
                    flow: LaminarFlow | None = None, k: int = 1) -> EigenResult:
    """Smallest eigenvalue mu and ground state M of the linearized pencil.

    k is the transverse wavenumber of the separated mode M(p) cos(kq); the
    bifurcation theory (and everything downstream) uses k = 1, other values
    are exposed for experimentation only.

    Sturm-sequence bisection (LAPACK) locates the eigenvalue to roughly
    eps * ||T||, which grows like hp^{-2}; one inverse-iteration step plus a
    Rayleigh-quotient polish brings it back to working accuracy on fine grids.
    """
    if flow is None:
        flow = solve_laminar(bundle, lam, Np)
    diag, off, mass = _pencil(bundle, flow, k)
    scale = 1.0 / np.sqrt(mass)
    d_t = diag * scale * scale
    e_t = off * scale[:-1] * scale[1:]
    vals, vecs = eigh_tridiagonal(d_t, e_t, select="i", select_range=(0, 0))
    mu = float(vals[0])
    y = vecs[:, 0]

    def tmatvec(v):
        out = d_t * v
        out[:-1] += e_t * v[1:]
        out[1:] += e_t * v[:-1]
        return out

    n = d_t.size
    ab = np.zeros((3, n))
    ab[0, 1:] = e_t
    ab[1] = d_t - mu
    ab[2, :-1] = e_t
    try:
        w = solve_banded((1, 1), ab, y)
        w /= np.linalg.norm(w)
    except Exception:
        w = y
    mu = float(w @ tmatvec(w))

    M = np.concatenate(([0.0], w * scale))
    M = M / M[np.argmax(np.abs(M))]
    return EigenResult(lam=lam, mu=mu, M=M, p_grid=flow.p_grid)


def rayleigh(bundle: ProfileBundle, lam: float, phi: np.ndarray,
             Np: int | None = None, *, flow: LaminarFlow | None = None) -> float:
    """Rayleigh quotient of a grid function phi with phi(p0) = 0.

    Uses the same discrete quadratic forms as the eigen pencil, so the
    quotient of a computed eigenpair reproduces its eigenvalue.
    """
    phi = np.asarray(phi, dtype=float)
    if flow is None:
        flow = solve_laminar(bundle, lam, phi.size - 1 if Np is None else Np)
    if phi.size != flow.p_grid.size:
        raise ValueError("phi must live on the laminar p grid")
    if abs(phi[0]) > 1e-12 * max(1.0, np.max(np.abs(phi))):
        raise ValueError("phi must vanish at p0")
    p = flow.p_grid
    hp = p[1] - p[0]
    g = bundle.params.g
    _, rho_p = bundle.eval_density(p)
    a3 = (flow.lam + flow.G) ** 1.5
    cmid = 0.5 * (a3[:-1] + a3[1:])
    num = float(np.sum(cmid * np.diff(phi) ** 2) / hp) - g * bundle.rho0 * phi[-1] ** 2
    b = flow.a + g * np.asarray(rho_p, dtype=float)
    w = np.full(p.size, hp)
    w[0] = w[-1] = 0.5 * hp
    den = float(np.sum(w * b * phi ** 2))
    if den <= 0.0:
        raise DegenerateDenominator("quotient denominator not positive")
    return num / den


def mu_curve(bundle: ProfileBundle, n_points: int = 64, Np: int = 256, *,
             lambda_hi: float | None = None, threads: int = 1, k: int = 1):
    """mu(lambda) on a logarithmic sweep of the admissible range."""
    lo = lambda_min(bundle)
    hi = lambda_hi if lambda_hi is not None else lambda_max_default(bundle)
    lams = np.geomspace(lo, hi, n_points)

    def one(lam):
        return principal_eigen(bundle, float(lam), Np, k=k).mu

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            mus = np.fromiter(ex.map(one, lams), dtype=float, count=lams.size)
    else:
        mus = np.fromiter((one(l) for l in lams), dtype=float, count=lams.size)
    return lams, mus


def check_lb_condition(bundle: ProfileBundle, n_points: int = 64,
                       Np: int = 256, *, threads: int = 1,
                       k: int = 1) -> tuple[bool, float]:
    """Local bifurcation condition: inf over the sweep of mu(lambda) < -1."""
    _, mus = mu_curve(bundle, n_points, Np, threads=threads, k=k)
    inf_estimate = float(np.min(mus))
    return inf_estimate < -1.0, inf_estimate


def find_lambda_star(bundle: ProfileBundle, Np: int = 512, *,
                     n_sweep: int = 64, mu_tol: float = 1e-9,
                     threads: int = 1) -> BifurcationPoint:
    """Locate the unique lambda* with mu(lambda*) = -1 and assemble the point.

    Brackets the root on the logarithmic sweep (auto-extending the upper end
    x4 up to twice, since mu >= -1 for lambda large), then runs a Brent solve
    on mu + 1.  Raises LBViolated when the sweep never dips below -1.
    """
    hi = lambda_max_default(bundle)
    lams = mus = None
    for _ in range(3):
        lams, mus = mu_curve(bundle, n_sweep, Np, lambda_hi=hi, threads=threads)
        if np.min(mus) >= -1.0:
            raise LBViolated(
                f"mu(lambda) never below -1 on the sweep (inf = {np.min(mus):.6g})")
        if mus[-1] > -1.0:
            break
        hi *= 4.0
    else:
        raise LBViolated("mu + 1 has no sign change even after extending the sweep")

    below = np.nonzero(mus < -1.0)[0]
    i = int(below[-1])
    a, b = float(lams[i]), float(lams[i + 1])

    def f(lam):
        return principal_eigen(bundle, lam, Np).mu + 1.0

    lam_star = brentq(f, a, b, xtol=1e-14 * max(1.0, b), rtol=8.9e-16,
                      maxiter=200)
    eigen = principal_eigen(bundle, lam_star, Np)
    if abs(eigen.mu + 1.0) > mu_tol:
        raise StrataflowError(
            f"root polish failed: |mu+1| = {abs(eigen.mu + 1.0):.3g}")

    flow = solve_laminar(bundle, lam_star, Np)
    diag = g_dot(bundle, lam_star, Np, flow=flow)
    lam0 = find_lambda0(bundle).value
    if not lam_star < lam0:
        raise StrataflowError(
            f"lambda* = {lam_star} not left of lambda0 = {lam0}")
    xi = _xi_terms(bundle, flow, diag, eigen).total
    return BifurcationPoint(bundle=bundle, lambda_star=lam_star, eigen=eigen,
                            Q_star=flow.Q, laminar=flow, diagnostics=diag,
                            lambda0=lam0, xi=xi)


# -- transversality -----------------------------------------------------------

@dataclass(frozen=True)
class XiTerms:
    """The seven summands of the crossing integral (q-integrals folded to pi)."""

    terms: tuple
    total: float
    reduced: float


def _grid_derivative(f: np.ndarray, hp: float) -> np.ndarray:
    out = np.empty_like(f)
    out[1:-1] = (f[2:] - f[:-2]) / (2.0 * hp)
    out[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * hp)
    out[-1] = (3.0 * f[-1] - 4.0 * f[-2] + f[-3]) / (2.0 * hp)
    return out


def _xi_terms(bundle: ProfileBundle, flow: LaminarFlow,
              diag: LaminarDiagnostics, eigen: EigenResult) -> XiTerms:
    p = flow.p_grid
    hp = p[1] - p[0]
    g = bundle.params.g
    lam = flow.lam
    _, rho_p = bundle.eval_density(p)
    rho_p = np.asarray(rho_p, dtype=float)
    beta_vals = np.asarray(bundle.eval_beta(-p), dtype=float)
    a = flow.a
    w1 = 1.0 + diag.Gdot
    M = eigen.M
    Mp = _grid_derivative(M, hp)

    def area(f):
        return math.pi * float(np.trapezoid(f, dx=hp))

    xi1 = area(w1 / a * M ** 2)
    xi2 = -3.0 * area(w1 / a * beta_vals * M * Mp)
    xi3 = -3.0 * area(g * diag.Ydot * a * rho_p * M * Mp)
    xi4 = 3.0 * area(g * flow.Y * w1 / a * rho_p * M * Mp)
    xi5 = 1.5 * area(g * w1 / a ** 2 * rho_p * M ** 2)
    xi6 = -2.0 * math.pi * g * bundle.rho0 * M[-1] ** 2 / lam
    xi7 = -0.5 * math.pi * math.sqrt(lam) * M[-1] * Mp[-1]
    total = xi1 + xi2 + xi3 + xi4 + xi5 + xi6 + xi7
    reduced = -0.5 * xi1 - 1.5 * area(a * w1 * Mp ** 2) + 0.5 * xi6
    return XiTerms(terms=(xi1, xi2, xi3, xi4, xi5, xi6, xi7),
                   total=total, reduced=reduced)


def transversality_xi(bifpoint: BifurcationPoint) -> float:
    """Seven-term crossing integral Xi at the bifurcation point (Xi < 0)."""
    return _xi_terms(bifpoint.bundle, bifpoint.laminar,
                     bifpoint.diagnostics, bifpoint.eigen).total


def xi_identity_pair(bifpoint: BifurcationPoint) -> tuple[float, float]:
    """(Xi, reduced form -Xi1/2 - 3/2 int a(1+Gdot)(phi*_p)^2 + Xi6/2)."""
    t = _xi_terms(bifpoint.bundle, bifpoint.laminar,
                  bifpoint.diagnostics, bifpoint.eigen)
    return t.total, t.reduced
