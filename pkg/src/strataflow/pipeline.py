"""Batch pipeline: check -> laminar sweep -> bifurcate -> continue -> verify.

Every artifact is deterministic: fixed iteration orders, no randomness, no
wall-clock content.  JSON is written with sorted keys; CSV floats use repr
(shortest round-trip form).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import laminar as lam_mod
from . import sturm as sturm_mod
from .config import RunConfig
from .continuation import (Branch, Monitors, default_monitors,
                           surface_elevation)
from .errors import (MonitorStop, StepFailure, StrataflowError)
from .heightpde import Grid, HeightField, load_snapshot, mean_top, save_snapshot
from .profiles import ProfileBundle
from .reconstruct import (euler_residual, physical_csv_rows, stream_consistency,
                          to_physical, write_vtk)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def write_csv(path, header, rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


@dataclass
class StageError(StrataflowError):
    stage: str
    error: Exception

    def __str__(self):
        return f"[{self.stage}] {type(self.error).__name__}: {self.error}"


def run_check(cfg: RunConfig, bundle: ProfileBundle, outdir: Path) -> dict:
    holds_size, margin = bundle.check_size_condition()
    holds_lb, inf_est = sturm_mod.check_lb_condition(
        bundle, cfg.sweep_points, cfg.Np_eigen // 2, threads=cfg.threads,
        k=cfg.wavenumber)
    report = {
        "epsilon0": bundle.eps0,
        "B_min": bundle.B_min,
        "rho_prime_inf": bundle.rho_prime_inf,
        "size_condition_holds": bool(holds_size),
        "size_condition_margin": margin,
        "lb_condition_holds": bool(holds_lb),
        "lb_sweep_inf": inf_est,
        "lambda_admissible_min": lam_mod.lambda_min(bundle),
    }
    write_json(outdir / "check.json", report)
    return report


def run_laminar(cfg: RunConfig, bundle: ProfileBundle, outdir: Path,
                lam_values) -> list[dict]:
    """Laminar profiles plus diagnostics at the requested lambda values."""
    summaries = []
    many = len(lam_values) > 1
    for k, lam in enumerate(lam_values):
        flow = lam_mod.solve_laminar(bundle, float(lam), cfg.Np_eigen // 2)
        diag = lam_mod.g_dot(bundle, float(lam), cfg.Np_eigen // 2, flow=flow,
                             with_qddot=False)
        name = f"laminar_{k:03d}.csv" if many else "laminar.csv"
        write_csv(outdir / name, ["p", "H", "H_p", "F", "G", "Gdot"],
                  zip(flow.p_grid, flow.H, flow.H_p, flow.F, flow.G, diag.Gdot))
        summaries.append({"lambda": flow.lam, "d": flow.d, "Q": flow.Q,
                          "Qdot": diag.Qdot, "csv": name})
    write_json(outdir / "laminar.json",
               summaries if many else summaries[0])
    return summaries


def run_bifurcate(cfg: RunConfig, bundle: ProfileBundle, outdir: Path):
    lams, mus = sturm_mod.mu_curve(bundle, cfg.sweep_points,
                                   cfg.Np_eigen // 2, threads=cfg.threads)
    write_csv(outdir / "mu_curve.csv", ["lambda", "mu"], zip(lams, mus))
    bif = sturm_mod.find_lambda_star(bundle, cfg.Np_eigen,
                                     n_sweep=cfg.sweep_points,
                                     mu_tol=cfg.mu_tol, threads=cfg.threads)
    write_csv(outdir / "eigenfunction.csv", ["p", "M"],
              zip(bif.eigen.p_grid, bif.eigen.M))
    summary = {
        "lambda_star": bif.lambda_star,
        "Q_star": bif.Q_star,
        "lambda0": bif.lambda0,
        "mu_curve_csv": "mu_curve.csv",
        "eigenfunction_csv": "eigenfunction.csv",
        "xi": bif.xi,
        "mu_at_lambda_star": bif.eigen.mu,
        "d_star": bif.laminar.d,
    }
    write_json(outdir / "bifurcation.json", summary)
    return bif, summary


def _branch_rows(points):
    for pt in points:
        dg = pt.diagnostics
        yield (pt.s, pt.field.Q, dg.amplitude, dg.d, dg.max_hp, dg.min_hp,
               int(dg.nodal_ok), pt.stop_reason or "")


def run_continue(cfg: RunConfig, bif, outdir: Path):
    """Advance the branch; returns (points, stop_reason)."""
    header = ["s", "Q", "amplitude", "d", "max_hp", "min_hp", "nodal_ok",
              "stop_reason"]
    if cfg.steps == 0:
        write_csv(outdir / "branch_log.csv", header, [])
        return [], "step_budget"

    grid = Grid(cfg.Nq, cfg.Np, cfg.p0)
    d_star = bif.laminar.d
    s0 = cfg.s0 if cfg.s0 is not None else 1e-2 * d_star
    if cfg.direction == "-":
        s0 = -s0
    ds = cfg.ds if cfg.ds is not None else 0.02 * d_star
    monitors = default_monitors(bif)
    if cfg.delta is not None:
        monitors = Monitors(delta=cfg.delta, q_max=monitors.q_max,
                            hp_stagnation=monitors.hp_stagnation,
                            hp_blowup=0.1 * cfg.delta,
                            hq_tol=monitors.hq_tol,
                            lambda_tol=monitors.lambda_tol,
                            lambda_star=monitors.lambda_star)
    branch = Branch(bif, grid, s0=s0, monitors=monitors,
                    newton_tol=cfg.newton_tol)
    stop_reason = "step_budget"
    try:
        for _ in range(cfg.steps):
            branch.step(ds)
    except MonitorStop as stop:
        stop_reason = stop.status.reason

    points = branch.points
    write_csv(outdir / "branch_log.csv", header, _branch_rows(points))
    for k, pt in enumerate(points):
        last = k == len(points) - 1
        if cfg.snapshot_every and (k % cfg.snapshot_every == 0 or last):
            save_snapshot(pt.field, outdir / f"snapshot_{k:03d}.csv")
    return points, stop_reason


def verification_payload(bundle: ProfileBundle, field: HeightField) -> dict:
    pf = to_physical(bundle, field)
    report = euler_residual(bundle, pf)
    stream = stream_consistency(bundle, field)
    eta = surface_elevation(field)
    payload = report.as_dict()
    payload.update({
        "stream_deviation": stream.deviation,
        "bed_depth_error": stream.bed_depth_error,
        "eta_mean": float(field.grid.top_weights() @ eta),
        "d": mean_top(field),
        "Q": field.Q,
    })
    return payload


def run_verify(bundle: ProfileBundle, snapshot_path, out_path=None) -> dict:
    field = load_snapshot(snapshot_path)
    payload = verification_payload(bundle, field)
    if out_path is not None:
        write_json(out_path, payload)
    return payload


def run_export(bundle: ProfileBundle, snapshot_path, outdir: Path) -> dict:
    field = load_snapshot(snapshot_path)
    pf = to_physical(bundle, field)
    stem = Path(snapshot_path).stem
    files = {
        "physical_csv": f"{stem}_physical.csv",
        "surface_csv": f"{stem}_surface.csv",
        "vtk": f"{stem}.vtk",
    }
    write_csv(outdir / files["physical_csv"], ["x", "y", "u", "v", "rho", "P"],
              physical_csv_rows(pf))
    write_csv(outdir / files["surface_csv"], ["x", "eta"],
              zip(pf.x, pf.eta))
    write_vtk(pf, outdir / files["vtk"])
    return files


def run_pipeline(cfg: RunConfig, base_dir: Path | None = None) -> int:
    """Full batch run; returns the process exit code."""
    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    try:
        bundle = cfg.bundle(base_dir)
    except StrataflowError as err:
        raise StageError("profiles", err)

    summary: dict = {}
    try:
        check = run_check(cfg, bundle, outdir)
        summary["check"] = check
    except StrataflowError as err:
        raise StageError("check", err)

    if not check["lb_condition_holds"]:
        write_json(outdir / "summary.json", summary)
        raise StageError("bifurcate", StrataflowError(
            "the (L-B) condition does not hold for this data"))

    try:
        lam_lo = lam_mod.lambda_min(bundle)
        lam_hi = lam_mod.lambda_max_default(bundle)
        sweep = np.geomspace(lam_lo, lam_hi, 9)
        run_laminar(cfg, bundle, outdir, sweep)
    except StrataflowError as err:
        raise StageError("laminar", err)

    try:
        bif, bif_summary = run_bifurcate(cfg, bundle, outdir)
        summary["bifurcation"] = bif_summary
    except StrataflowError as err:
        raise StageError("bifurcate", err)

    try:
        points, stop_reason = run_continue(cfg, bif, outdir)
        summary["continuation"] = {
            "points": len(points),
            "stop_reason": stop_reason,
            "final_amplitude": points[-1].diagnostics.amplitude if points else 0.0,
            "final_Q": points[-1].field.Q if points else bif.Q_star,
        }
    except (StepFailure, StrataflowError) as err:
        raise StageError("continue", err)

    try:
        if points:
            payload = verification_payload(bundle, points[-1].field)
            write_json(outdir / "verify_final.json", payload)
            summary["verification"] = payload
    except StrataflowError as err:
        raise StageError("verify", err)

    write_json(outdir / "summary.json", summary)
    return EXIT_OK
