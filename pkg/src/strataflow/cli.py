"""Command-line front end.

Subcommands: check, laminar, bifurcate, continue, verify, export, report.
Exit codes: 0 scientific stop or success, 2 configuration error, 3 solver
failure.  STRATAFLOW_THREADS overrides the config's `threads` knob.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import laminar as lam_mod
from .config import load_config
from .errors import ConfigError, ProfileError, StrataflowError
from .pipeline import (EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, StageError,
                       run_bifurcate, run_check, run_continue, run_export,
                       run_laminar, run_pipeline, run_verify, write_json)


def _add_config(parser):
    parser.add_argument("--config", required=True, help="run configuration file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="strataflow",
        description="Steady periodic stratified water waves "
                    "(height-equation formulation).")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="admissibility: eps0, size condition, (L-B)")
    _add_config(p)

    p = sub.add_parser("laminar", help="laminar flow profiles and diagnostics")
    _add_config(p)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--sweep", default=None, metavar="A:B:N",
                   help="lambda sweep start:stop:count")

    p = sub.add_parser("bifurcate", help="locate lambda* and the kernel data")
    _add_config(p)

    p = sub.add_parser("continue", help="full pipeline with branch continuation")
    _add_config(p)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--ds", type=float, default=None)
    p.add_argument("--direction", choices=["+", "-"], default=None)
    p.add_argument("--force", action="store_true",
                   help="run even if the (L-B) sweep fails")

    p = sub.add_parser("verify", help="verify a field snapshot against Euler")
    _add_config(p)
    p.add_argument("snapshot", help="snapshot CSV path")

    p = sub.add_parser("export", help="export physical fields from a snapshot")
    _add_config(p)
    p.add_argument("snapshot", help="snapshot CSV path")

    p = sub.add_parser("report", help="render figures from an output directory")
    p.add_argument("--outdir", required=True)

    return parser


def _load(args):
    cfg = load_config(args.config)
    env_threads = os.environ.get("STRATAFLOW_THREADS")
    if env_threads:
        cfg.threads = max(1, int(env_threads))
    return cfg


def _outdir(cfg) -> Path:
    out = Path(cfg.outdir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (ConfigError, ProfileError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as err:
        print(err, file=sys.stderr)
        return EXIT_SOLVER
    except StrataflowError as err:
        print(f"solver failure: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_SOLVER


def _dispatch(args) -> int:
    if args.command == "report":
        from .report import render_report

        written = render_report(args.outdir)
        print(json.dumps({"figures": written}, sort_keys=True, indent=2))
        return EXIT_OK

    cfg = _load(args)
    base = Path(args.config).parent

    if args.command == "check":
        bundle = cfg.bundle(base)
        report = run_check(cfg, bundle, _outdir(cfg))
        print(json.dumps(report, sort_keys=True, indent=2))
        return EXIT_OK

    if args.command == "laminar":
        bundle = cfg.bundle(base)
        if args.sweep:
            try:
                a, b, n = args.sweep.split(":")
                lams = np.linspace(float(a), float(b), int(n))
            except ValueError:
                raise ConfigError(f"bad sweep spec {args.sweep!r}")
        elif args.lam is not None:
            lams = [args.lam]
        else:
            lams = [lam_mod.lambda_min(bundle) * 1.5]
        summaries = run_laminar(cfg, bundle, _outdir(cfg), lams)
        print(json.dumps(summaries if len(summaries) > 1 else summaries[0],
                         sort_keys=True, indent=2))
        return EXIT_OK

    if args.command == "bifurcate":
        bundle = cfg.bundle(base)
        _, summary = run_bifurcate(cfg, bundle, _outdir(cfg))
        print(json.dumps(summary, sort_keys=True, indent=2))
        return EXIT_OK

    if args.command == "continue":
        if args.steps is not None:
            cfg.steps = args.steps
        if args.ds is not None:
            cfg.ds = args.ds
        if args.direction is not None:
            cfg.direction = args.direction
        cfg.validate()
        if args.force:
            return _run_forced(cfg, base)
        code = run_pipeline(cfg, base)
        summary = json.loads((Path(cfg.outdir) / "summary.json").read_text())
        print(json.dumps(summary, sort_keys=True, indent=2))
        return code

    if args.command == "verify":
        bundle = cfg.bundle(base)
        out = _outdir(cfg)
        name = Path(args.snapshot).stem + "_verify.json"
        payload = run_verify(bundle, args.snapshot, out / name)
        print(json.dumps(payload, sort_keys=True, indent=2))
        return EXIT_OK

    if args.command == "export":
        bundle = cfg.bundle(base)
        files = run_export(bundle, args.snapshot, _outdir(cfg))
        print(json.dumps(files, sort_keys=True, indent=2))
        return EXIT_OK

    raise ConfigError(f"unknown command {args.command!r}")


def _run_forced(cfg, base) -> int:
    """`continue --force`: skip the (L-B) gate, keep the rest of the pipeline."""
    bundle = cfg.bundle(base)
    out = _outdir(cfg)
    run_check(cfg, bundle, out)
    bif, bif_summary = run_bifurcate(cfg, bundle, out)
    points, stop_reason = run_continue(cfg, bif, out)
    summary = {"bifurcation": bif_summary,
               "continuation": {"points": len(points),
                                "stop_reason": stop_reason}}
    write_json(out / "summary.json", summary)
    print(json.dumps(summary, sort_keys=True, indent=2))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
