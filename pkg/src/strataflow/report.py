"""Render figures from a run's output directory, next to the CSV artifacts.

Reads only the delimited files the pipeline emitted, so it can be re-run on
any finished (or partial) output directory.  Figures are written as PNG with
the Agg backend; nothing here is needed by the solver path.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _read_csv(path: Path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    cols = {name: [] for name in header}
    for row in rows[1:]:
        for name, val in zip(header, row):
            cols[name].append(val)
    return {k: np.array([_maybe_float(v) for v in vals])
            for k, vals in cols.items()}


def _maybe_float(s: str):
    try:
        return float(s)
    except ValueError:
        return np.nan


def _save(fig, outdir: Path, name: str, written: list[str]):
    path = outdir / name
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    written.append(name)


def render_report(outdir) -> list[str]:
    """Render every figure supported by the files present; returns the names."""
    outdir = Path(outdir)
    written: list[str] = []

    mu_path = outdir / "mu_curve.csv"
    if mu_path.exists():
        data = _read_csv(mu_path)
        fig, ax = plt.subplots(figsize=(5, 3.4))
        ax.semilogx(data["lambda"], data["mu"], "-", lw=1.2)
        ax.axhline(-1.0, color="crimson", lw=0.8, ls="--", label=r"$\mu = -1$")
        ax.set_xlabel(r"$\lambda$")
        ax.set_ylabel(r"$\mu(\lambda)$")
        ax.set_ylim(max(-10, float(np.min(data["mu"])) * 1.05), None)
        ax.legend(frameon=False)
        _save(fig, outdir, "mu_curve.png", written)

    eig_path = outdir / "eigenfunction.csv"
    if eig_path.exists():
        data = _read_csv(eig_path)
        fig, ax = plt.subplots(figsize=(4.2, 3.4))
        ax.plot(data["M"], data["p"], "-", lw=1.2)
        ax.set_xlabel("M(p)")
        ax.set_ylabel("p")
        _save(fig, outdir, "eigenfunction.png", written)

    log_path = outdir / "branch_log.csv"
    if log_path.exists():
        data = _read_csv(log_path)
        if data["s"].size:
            fig, axes = plt.subplots(1, 2, figsize=(8.6, 3.4))
            axes[0].plot(data["Q"], data["amplitude"], "o-", ms=3, lw=1.0)
            axes[0].set_xlabel("Q")
            axes[0].set_ylabel("amplitude")
            axes[1].plot(data["s"], data["max_hp"], label=r"max $h_p$", lw=1.0)
            axes[1].plot(data["s"], data["min_hp"], label=r"min $h_p$", lw=1.0)
            axes[1].set_xlabel("arclength s")
            axes[1].legend(frameon=False)
            _save(fig, outdir, "branch_diagram.png", written)

    snaps = sorted(p for p in outdir.glob("snapshot_[0-9][0-9][0-9].csv")
                   if p.with_suffix(".json").exists())
    if snaps:
        last = snaps[-1]
        meta = json.loads(last.with_suffix(".json").read_text())
        data = np.loadtxt(last, delimiter=",", skiprows=1)
        Np, Nq = int(meta["Np"]), int(meta["Nq"])
        h = data[:, 2].reshape(Np, Nq)
        q = data[:, 0].reshape(Np, Nq)[0]
        p = data[:, 1].reshape(Np, Nq)[:, 0]

        fig, ax = plt.subplots(figsize=(5.4, 3.4))
        x_full = np.concatenate([q, 2 * q[-1] - q[-2:0:-1]])
        eta = h[-1] - float(meta["d"])
        eta_full = np.concatenate([eta, eta[-2:0:-1]])
        ax.plot(x_full, eta_full, lw=1.2)
        ax.axhline(0.0, color="gray", lw=0.6)
        ax.set_xlabel("x")
        ax.set_ylabel(r"$\eta(x)$")
        _save(fig, outdir, "surface.png", written)

        fig, ax = plt.subplots(figsize=(5.4, 3.4))
        im = ax.pcolormesh(q, p, h, shading="auto")
        fig.colorbar(im, ax=ax, label="h(q,p)")
        ax.set_xlabel("q")
        ax.set_ylabel("p")
        _save(fig, outdir, "height_field.png", written)

    lam_paths = sorted(outdir.glob("laminar_*.csv")) or \
        ([outdir / "laminar.csv"] if (outdir / "laminar.csv").exists() else [])
    if lam_paths:
        fig, ax = plt.subplots(figsize=(4.6, 3.4))
        for path in lam_paths:
            data = _read_csv(path)
            ax.plot(data["H"], data["p"], lw=0.9)
        ax.set_xlabel("H(p)")
        ax.set_ylabel("p")
        _save(fig, outdir, "laminar_profiles.png", written)

    return written
