"""Plain-text `key = value` run configuration.

Profiles use two small grammars: `poly(c0, c1, ...)` for closed-form
coefficients and `table(path.csv)` for two-column CSV samples (`p,value` for
rho on [p0, 0]; `s,value` for beta on [0, |p0|]).  Reals parse in decimal or
scientific notation.  The serializer writes values with `repr`, so a config
round-trips bit-exactly.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .profiles import (BernoulliProfile, DensityProfile, ProfileBundle,
                       make_bundle)

_POLY_RE = re.compile(r"^poly\((?P<body>.*)\)$")
_TABLE_RE = re.compile(r"^table\((?P<body>.*)\)$")


@dataclass
class RunConfig:
    """Validated configuration for the solve pipeline."""

    g: float = 1.0
    c: float = 1.0
    p0: float = -1.0
    rho: str = "poly(1.0)"
    beta: str = "poly(0.0)"
    Nq: int = 64
    Np: int = 64
    Np_eigen: int = 512
    steps: int = 25
    ds: float | None = None          # None -> 0.02 * d(lambda*)
    s0: float | None = None          # None -> 1e-2 * d(lambda*)
    direction: str = "+"
    delta: float | None = None       # None -> monitor default
    newton_tol: float = 1e-10
    mu_tol: float = 1e-9
    sweep_points: int = 64
    snapshot_every: int = 5
    threads: int = 1
    wavenumber: int = 1   # transverse mode k for experimentation; the
                          # bifurcation pipeline itself is k = 1
    outdir: str = "out"

    def validate(self):
        if self.direction not in ("+", "-"):
            raise ConfigError(f"direction must be + or -, got {self.direction!r}")
        for name in ("newton_tol", "mu_tol"):
            if not getattr(self, name) > 0.0:
                raise ConfigError(f"{name} must be positive")
        for name in ("ds", "s0", "delta"):
            val = getattr(self, name)
            if val is not None and not val > 0.0:
                raise ConfigError(f"{name} must be positive when given")
        for name in ("Nq", "Np", "Np_eigen", "sweep_points"):
            if getattr(self, name) < 16:
                raise ConfigError(f"{name} must be at least 16")
        if self.steps < 0 or self.snapshot_every < 0 or self.threads < 1:
            raise ConfigError("steps/snapshot_every must be >= 0, threads >= 1")
        if self.wavenumber < 1:
            raise ConfigError("wavenumber must be a positive integer")
        return self

    # -- serialization -----------------------------------------------------

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            val = getattr(self, f.name)
            if val is None:
                continue
            lines.append(f"{f.name} = {val!r}" if isinstance(val, float)
                         else f"{f.name} = {val}")
        return "\n".join(lines) + "\n"

    def bundle(self, base_dir: Path | None = None) -> ProfileBundle:
        base = Path(base_dir) if base_dir is not None else Path(".")
        rho = _parse_density(self.rho, self.p0, base)
        beta = _parse_bernoulli(self.beta, self.p0, base)
        return make_bundle(self.g, self.c, self.p0, rho, beta)


_INT_FIELDS = {"Nq", "Np", "Np_eigen", "steps", "sweep_points",
               "snapshot_every", "threads", "wavenumber"}
_FLOAT_FIELDS = {"g", "c", "p0", "ds", "s0", "delta", "newton_tol", "mu_tol"}
_STR_FIELDS = {"rho", "beta", "direction", "outdir"}


def parse_config(text: str) -> RunConfig:
    cfg = RunConfig()
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        if "=" not in line:
            raise ConfigError("expected `key = value`", ln, 1)
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        col = raw.index("=") + 2
        if key in _INT_FIELDS:
            try:
                setattr(cfg, key, int(value))
            except ValueError:
                raise ConfigError(f"{key} expects an integer, got {value!r}", ln, col)
        elif key in _FLOAT_FIELDS:
            try:
                setattr(cfg, key, float(value))
            except ValueError:
                raise ConfigError(f"{key} expects a real, got {value!r}", ln, col)
        elif key in _STR_FIELDS:
            if key in ("rho", "beta"):
                _check_profile_grammar(value, ln, col)
            setattr(cfg, key, value)
        else:
            raise ConfigError(f"unknown key {key!r}", ln, 1)
    return cfg.validate()


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text())


def _check_profile_grammar(value: str, ln: int, col: int):
    if _POLY_RE.match(value):
        body = _POLY_RE.match(value).group("body")
        pos = col + value.index("(") + 1
        if body.strip() == "":
            raise ConfigError("poly() needs at least one coefficient", ln, pos)
        for part in body.split(","):
            try:
                float(part)
            except ValueError:
                raise ConfigError(f"bad coefficient {part.strip()!r}", ln, pos)
            pos += len(part) + 1
        return
    if _TABLE_RE.match(value):
        if not _TABLE_RE.match(value).group("body").strip():
            raise ConfigError("table() needs a CSV path", ln, col)
        return
    # pinpoint the first structural problem for the error message
    if value.startswith("poly(") or value.startswith("table("):
        raise ConfigError("unclosed parenthesis in profile spec",
                          ln, col + len(value))
    raise ConfigError(f"profile spec must be poly(...) or table(...), got {value!r}",
                      ln, col)


def _read_table(path: Path):
    xs, ys = [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                xs.append(float(row[0]))
                ys.append(float(row[1]))
            except (ValueError, IndexError):
                raise ConfigError(f"bad table row {row!r} in {path}")
    return np.asarray(xs), np.asarray(ys)


def _parse_density(spec: str, p0: float, base: Path) -> DensityProfile:
    m = _POLY_RE.match(spec)
    if m:
        coeffs = [float(s) for s in m.group("body").split(",")]
        return DensityProfile.from_poly(coeffs, p0)
    m = _TABLE_RE.match(spec)
    xs, ys = _read_table(base / m.group("body").strip())
    return DensityProfile.from_table(xs, ys)


def _parse_bernoulli(spec: str, p0: float, base: Path) -> BernoulliProfile:
    m = _POLY_RE.match(spec)
    if m:
        coeffs = [float(s) for s in m.group("body").split(",")]
        return BernoulliProfile.from_poly(coeffs, p0)
    m = _TABLE_RE.match(spec)
    xs, ys = _read_table(base / m.group("body").strip())
    return BernoulliProfile.from_table(xs, ys, p0)
