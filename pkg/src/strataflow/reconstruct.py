"""Map height-equation solutions back to physical variables and verify them.

The physical sample points are the images of the (q, p) nodes (a
streamline-fitted mesh over one full period), so no interpolation enters the
residual checks; x-derivatives wrap periodically and p-derivatives transform
through the semi-Lagrangian chain rule.  Pressure comes from the hydraulic
head E(psi) = E|_surface + int_0^psi beta, with E|_surface recovered from the
head parameter as Q/2 + P_atm - g rho(0) d.  All pressures are reported
relative to P_atm = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import PchipInterpolator

from .errors import StagnationGuard
from .heightpde import HeightField, dp_full, dq, dp_top, mean_top
from .profiles import ProfileBundle

P_ATM = 0.0


@dataclass(frozen=True)
class PhysicalField:
    """Velocities, density, pressure and surface on one full period.

    Arrays have shape (Np, Mx) with Mx = 2*(Nq - 1) periodic columns; row 0
    is the bed, row Np-1 the free surface.  psi equals the streamline label
    -p on every column.
    """

    x: np.ndarray
    y: np.ndarray
    u: np.ndarray
    v: np.ndarray
    rho: np.ndarray
    P: np.ndarray
    psi: np.ndarray
    eta: np.ndarray
    p: np.ndarray
    d: float
    Q: float
    c: float
    hq: float
    hp: float


def _mirror(a: np.ndarray, odd: bool = False) -> np.ndarray:
    """Extend a half-period (Np, Nq) array to the full period by evenness."""
    body = a[:, -2:0:-1]
    return np.concatenate([a, -body if odd else body], axis=1)


def to_physical(bundle: ProfileBundle, field: HeightField) -> PhysicalField:
    grid = field.grid
    g = bundle.params.g
    c = bundle.params.c
    h = field.h
    hp, hq = grid.hp, grid.hq

    h_p = dp_full(h, hp)
    if np.min(h_p) <= 0.0:
        raise StagnationGuard("h_p lost positivity; cannot reconstruct u < c")
    h_q = dq(h, hq)
    d = mean_top(field)

    rho_vals, _ = bundle.eval_density(grid.p)
    rho_col = np.asarray(rho_vals, dtype=float)[:, None]
    sqrho = np.sqrt(rho_col)

    u_half = c - 1.0 / (sqrho * h_p)
    v_half = -h_q / (sqrho * h_p)
    y_half = h - d

    # hydraulic head along streamlines: E(psi = -p) = Q/2 - g rho(0) d + B(p).
    # The sign of the B term is fixed by hydrostatic balance of the laminar
    # flows (the formulation's beta enters the height equation with the
    # opposite sign to the head derivative along psi).
    B_col = np.asarray(bundle.eval_B(grid.p), dtype=float)[:, None]
    E = field.Q / 2.0 + P_ATM - g * bundle.rho0 * d + B_col
    kinetic = 0.5 * rho_col * ((u_half - c) ** 2 + v_half ** 2)
    P_half = E - kinetic - g * rho_col * y_half

    Mx = 2 * (grid.Nq - 1)
    x = np.arange(Mx) * hq
    return PhysicalField(
        x=x,
        y=_mirror(y_half),
        u=_mirror(u_half),
        v=_mirror(v_half, odd=True),
        rho=_mirror(np.broadcast_to(rho_col, h.shape)),
        P=_mirror(P_half),
        psi=np.broadcast_to(-grid.p[:, None], (grid.Np, Mx)).copy(),
        eta=_mirror(y_half[-1:])[0],
        p=grid.p.copy(),
        d=d,
        Q=field.Q,
        c=c,
        hq=hq,
        hp=hp,
    )


@dataclass(frozen=True)
class VerificationReport:
    """Max-norm residuals of the Euler system and its boundary conditions."""

    incompressibility: float
    mass_transport: float
    momentum_x: float
    momentum_y: float
    kinematic_surface: float
    pressure_surface: float
    bed_impermeability: float
    flux_deviation: float
    surface_bernoulli: float
    yih: float
    hq: float
    hp: float

    def as_dict(self) -> dict:
        return {k: float(getattr(self, k)) for k in self.__dataclass_fields__}

    def max_entry(self) -> float:
        keys = ("incompressibility", "mass_transport", "momentum_x",
                "momentum_y", "kinematic_surface", "pressure_surface",
                "bed_impermeability", "flux_deviation", "surface_bernoulli",
                "yih")
        return max(float(getattr(self, k)) for k in keys)


def _ddx(a: np.ndarray, hq: float) -> np.ndarray:
    return (np.roll(a, -1, axis=1) - np.roll(a, 1, axis=1)) / (2.0 * hq)


def euler_residual(bundle: ProfileBundle, pf: PhysicalField) -> VerificationReport:
    """Centered residuals of the moving-frame Euler system on the mesh."""
    g = bundle.params.g
    c = pf.c
    hq, hp = pf.hq, pf.hp

    h_full = pf.y + pf.d
    h_p = dp_full(h_full, hp)
    h_q = _ddx(h_full, hq)

    def grad(f):
        f_p = dp_full(f, hp)
        f_q = _ddx(f, hq)
        return f_q - (h_q / h_p) * f_p, f_p / h_p

    u_x, u_y = grad(pf.u)
    v_x, v_y = grad(pf.v)
    P_x, P_y = grad(pf.P)
    rho_x, rho_y = grad(pf.rho)

    rel = pf.u - c
    r_inc = u_x + v_y
    r_mass = rel * rho_x + pf.v * rho_y
    r_momx = rel * u_x + pf.v * u_y + P_x / pf.rho
    r_momy = rel * v_x + pf.v * v_y + P_y / pf.rho + g

    # Field-equation norms are taken where values and their differences both
    # come from pure centered stencils (two rows in from either p boundary);
    # the boundary rows are measured by the dedicated boundary residuals.
    sl = slice(2, -2)

    eta_x = _ddx(pf.eta[None, :], hq)[0]
    r_kin = pf.v[-1] - (pf.u[-1] - c) * eta_x
    r_pres = pf.P[-1] - P_ATM
    r_bed = pf.v[0]

    # per-column pseudo-mass flux (x-independent, equals p0)
    flux = np.trapezoid(np.sqrt(pf.rho) * rel, pf.y, axis=0)
    r_flux = flux - bundle.params.p0

    # surface Bernoulli: |grad psi|^2 + 2 g rho (eta + d) = Q
    hp_t = dp_top(h_full, hp)
    hq_t = h_q[-1]
    grad_psi_sq = (1.0 + hq_t ** 2) / hp_t ** 2
    r_bern = grad_psi_sq + 2.0 * g * bundle.rho0 * (pf.eta + pf.d) - pf.Q

    # Yih's equation: Delta psi + beta(-p) - g y rho_p = 0 with psi = -p
    psi_x = h_q / h_p
    psi_y = -1.0 / h_p
    lap = grad(psi_x)[0] + grad(psi_y)[1]
    _, rho_p = bundle.eval_density(pf.p)
    beta_vals = np.asarray(bundle.eval_beta(-pf.p), dtype=float)[:, None]
    r_yih = lap + beta_vals - g * pf.y * np.asarray(rho_p, dtype=float)[:, None]

    def mx(a):
        return float(np.max(np.abs(a)))

    return VerificationReport(
        incompressibility=mx(r_inc[sl]),
        mass_transport=mx(r_mass[sl]),
        momentum_x=mx(r_momx[sl]),
        momentum_y=mx(r_momy[sl]),
        kinematic_surface=mx(r_kin),
        pressure_surface=mx(r_pres),
        bed_impermeability=mx(r_bed),
        flux_deviation=mx(r_flux),
        surface_bernoulli=mx(r_bern),
        yih=mx(r_yih[sl]),
        hq=hq,
        hp=hp,
    )


@dataclass(frozen=True)
class StreamCheck:
    deviation: float
    bed_depth_error: float
    y0: float


def stream_consistency(bundle: ProfileBundle, field: HeightField,
                       column: int = 0) -> StreamCheck:
    """Rebuild psi along one column by integrating psi_y = -F(x0, -psi).

    F = 1/h_p is interpolated in p; the ODE starts from psi = 0 at the
    surface and runs down to the bed label psi = -p0.  Returns the maximal
    deviation from the streamline labels at the column's node heights and the
    error of the reconstructed bed depth y0 against -d.
    """
    grid = field.grid
    j = int(column)
    h_col = field.h[:, j]
    d = mean_top(field)
    y_col = h_col - d
    h_p = dp_full(field.h, grid.hp)[:, j]
    if np.min(h_p) <= 0.0:
        raise StagnationGuard("h_p lost positivity on the requested column")
    F_of_p = PchipInterpolator(grid.p, 1.0 / h_p)
    p0 = grid.p0

    def rhs(y, psi):
        label = np.clip(-psi[0], p0, 0.0)
        return (-float(F_of_p(label)),)

    def hit_bed_label(y, psi):
        return psi[0] + p0
    hit_bed_label.terminal = True
    hit_bed_label.direction = 1

    y_top = y_col[-1]
    span = (y_top, y_top - 1.5 * (y_top - y_col[0]) - 1e-12)
    sol = solve_ivp(rhs, span, (0.0,), method="DOP853", rtol=1e-12, atol=1e-14,
                    dense_output=True, events=(hit_bed_label,))
    if not sol.t_events[0].size:
        return StreamCheck(deviation=math.inf, bed_depth_error=math.inf,
                           y0=math.nan)
    y0 = float(sol.t_events[0][0])
    ys = np.clip(y_col, y0, y_top)
    psi_vals = sol.sol(ys)[0]
    deviation = float(np.max(np.abs(psi_vals + grid.p)))
    return StreamCheck(deviation=deviation, bed_depth_error=abs(y0 + d), y0=y0)


# -- exports -------------------------------------------------------------------

def physical_csv_rows(pf: PhysicalField):
    """Rows x,y,u,v,rho,P in row-major (p outer, x inner) order."""
    for i in range(pf.y.shape[0]):
        for j in range(pf.x.size):
            yield (pf.x[j], pf.y[i, j], pf.u[i, j], pf.v[i, j],
                   pf.rho[i, j], pf.P[i, j])


def write_vtk(pf: PhysicalField, path) -> None:
    """Legacy plain-text structured-grid file for common visualization tools."""
    nx = pf.x.size
    ny = pf.y.shape[0]
    lines = [
        "# vtk DataFile Version 3.0",
        "strataflow physical field",
        "ASCII",
        "DATASET STRUCTURED_GRID",
        f"DIMENSIONS {nx} {ny} 1",
        f"POINTS {nx * ny} double",
    ]
    for i in range(ny):
        for j in range(nx):
            lines.append(f"{float(pf.x[j])!r} {float(pf.y[i, j])!r} 0.0")
    lines.append(f"POINT_DATA {nx * ny}")
    for name, arr in (("rho", pf.rho), ("pressure", pf.P), ("psi", pf.psi)):
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        for i in range(ny):
            for j in range(nx):
                lines.append(repr(float(arr[i, j])))
    lines.append("VECTORS velocity double")
    for i in range(ny):
        for j in range(nx):
            lines.append(f"{float(pf.u[i, j])!r} {float(pf.v[i, j])!r} 0.0")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def resample_cartesian(pf: PhysicalField, ny: int):
    """Uniform-y resampling per column (export convenience only).

    Returns (x, y_levels, fields dict); entries above the local surface are
    NaN.  Residual checks never use this path.
    """
    y_levels = np.linspace(float(np.min(pf.y[0])), float(np.max(pf.eta)), ny)
    out = {name: np.full((ny, pf.x.size), np.nan)
           for name in ("u", "v", "rho", "P")}
    for j in range(pf.x.size):
        col_y = pf.y[:, j]
        mask = y_levels <= col_y[-1] + 1e-14
        for name in out:
            vals = getattr(pf, name)[:, j]
            interp = PchipInterpolator(col_y, vals)
            out[name][mask, j] = interp(np.clip(y_levels[mask], col_y[0],
                                                col_y[-1]))
    return pf.x.copy(), y_levels, out
