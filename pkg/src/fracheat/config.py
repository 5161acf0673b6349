"""Run configuration: INI parsing, data presets and validation.

A configuration looks like::

    [problem]
    kind = robin            ; dirichlet | robin | auxiliary
    order = 0.5
    omega = -1, 1

    [mesh]
    n_interior = 64
    n_exterior = 64
    truncation_radius = 2

    [time]
    horizon = 1
    dt = 0.015625

    [data]
    source = bump(1, 0, 0.5)
    exterior = constant(0.25)
    initial = decay(poly(1, 0, -1))

    [checks]
    names = energy, positivity, linf-robin
    seed = 0
    samples = 1000

    [output]
    dir = out

Preset grammar: ``zero``, ``constant(c)``, ``bump(amplitude, center, width)``,
``poly(c0, c1, ...)`` and ``decay(<preset>)`` for e^{-t} times a spatial preset.
An optional ``[data_hi]`` section with the same keys supplies the upper data set for
the comparison check.
"""
from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.polynomial import Polynomial

from .verify import REGISTRY

__all__ = ["ConfigError", "Preset", "RunConfig", "parse_preset", "load_config", "parse_config",
           "PROBLEM_KINDS"]

PROBLEM_KINDS = ("dirichlet", "robin", "auxiliary")


class ConfigError(ValueError):
    def __init__(self, where: str, message: str):
        super().__init__(f"{where}: {message}")
        self.where = where


def _critical_points(coef, lo: float, hi: float) -> list[float]:
    """Real critical points of a polynomial in [lo, hi], plus a dense safety grid."""
    c = np.asarray(coef, dtype=float)
    d = Polynomial(c).deriv().trim(tol=1e-14 * max(np.abs(c).max(), 1e-300))
    roots = d.roots() if d.degree() > 0 else np.empty(0)
    pts = [r.real for r in roots if abs(r.imag) < 1e-9 * (1 + abs(r)) and lo <= r.real <= hi]
    return pts + list(np.linspace(lo, hi, 257))


@dataclass(frozen=True)
class Preset:
    """A named, bounded, piecewise-smooth space-time function."""

    name: str
    args: tuple = ()

    def spatial(self, x):
        x = np.asarray(x, dtype=float)
        if self.name == "zero":
            return np.zeros_like(x)
        if self.name == "constant":
            return np.full_like(x, self.args[0])
        if self.name == "bump":
            amp, center, width = self.args
            return amp * np.maximum(0.0, 1.0 - ((x - center) / width) ** 2)
        if self.name == "poly":
            return Polynomial(self.args)(x) * np.ones_like(x)
        if self.name == "decay":
            return self.args[0].spatial(x)
        raise AssertionError(self.name)

    def __call__(self, x, t: float = 0.0):
        v = self.spatial(x)
        return math.exp(-t) * v if self.name == "decay" else v

    def sup(self, intervals) -> float:
        """Exact sup of |spatial part| over a union of closed intervals."""
        if self.name == "zero":
            return 0.0
        if self.name == "constant":
            return abs(self.args[0])
        if self.name == "decay":
            return self.args[0].sup(intervals)
        best = 0.0
        for lo, hi in intervals:
            cand = [lo, hi]
            if self.name == "bump":
                cand.append(min(max(self.args[1], lo), hi))
            else:
                cand += _critical_points(self.args, lo, hi)
            best = max(best, float(np.abs(self.spatial(np.array(cand))).max()))
        return best

    def sign_bounds(self, intervals) -> tuple[float, float]:
        """(min, max) of the spatial part over the intervals (time factor is in (0, 1])."""
        pts = []
        for lo, hi in intervals:
            pts += list(np.linspace(lo, hi, 2001))
            base = self.args[0] if self.name == "decay" else self
            if base.name == "bump":
                pts.append(min(max(base.args[1], lo), hi))
            if base.name == "poly":
                pts += _critical_points(base.args, lo, hi)
        v = self.spatial(np.array(pts))
        return float(v.min()), float(v.max())

    def text(self) -> str:
        if self.name == "zero":
            return "zero"
        if self.name == "decay":
            return f"decay({self.args[0].text()})"
        return f"{self.name}(" + ", ".join(repr(float(a)) for a in self.args) + ")"


_CALL = re.compile(r"^\s*([a-z_]+)\s*(?:\((.*)\))?\s*$", re.S)
_ARITY = {"zero": (0, 0), "constant": (1, 1), "bump": (3, 3), "poly": (1, 64)}


def parse_preset(text: str) -> Preset:
    m = _CALL.match(text or "")
    if not m:
        raise ValueError(f"cannot parse data preset {text!r}")
    name, inner = m.group(1), m.group(2)
    if name == "decay":
        if inner is None:
            raise ValueError("decay(...) needs a spatial preset")
        base = parse_preset(inner)
        if base.name == "decay":
            raise ValueError("decay cannot be nested")
        return Preset("decay", (base,))
    if name not in _ARITY:
        raise ValueError(f"unknown preset {name!r}; expected one of zero, constant, bump, poly, decay")
    args = () if inner is None or not inner.strip() else tuple(float(a) for a in inner.split(","))
    lo, hi = _ARITY[name]
    if not lo <= len(args) <= hi:
        raise ValueError(f"preset {name} takes {lo}..{hi} arguments, got {len(args)}")
    if not all(math.isfinite(a) for a in args):
        raise ValueError(f"preset {name} has non-finite arguments")
    if name == "bump" and not args[2] > 0:
        raise ValueError("bump width must be positive")
    return Preset(name, args)


ZERO = Preset("zero")


@dataclass(frozen=True)
class DataSet:
    source: Preset = ZERO
    exterior: Preset = ZERO
    initial: Preset = ZERO


@dataclass(frozen=True)
class RunConfig:
    problem: str = "dirichlet"
    order: float = 0.5
    omega: tuple[float, float] = (-1.0, 1.0)
    n_interior: int = 64
    n_exterior: int = 64
    truncation_radius: float = 2.0
    horizon: float = 1.0
    dt: float = 1.0 / 64
    data: DataSet = field(default_factory=DataSet)
    data_hi: Optional[DataSet] = None
    checks: tuple[str, ...] = ()
    seed: int = 0
    samples: int = 1000
    output_dir: str = "fracheat-out"

    @property
    def interior_interval(self):
        return [self.omega]

    @property
    def collar_intervals(self):
        a, b = self.omega
        R = self.truncation_radius
        return [(a - R, a), (b, b + R)]


def _get(cp, section, key, conv, default, where=None):
    where = where or f"[{section}] {key}"
    if not cp.has_option(section, key):
        return default
    raw = cp.get(section, key)
    try:
        return conv(raw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(where, f"invalid value {raw!r} ({exc})") from None


def _int(raw: str) -> int:
    v = float(raw)
    if v != int(v):
        raise ValueError("not an integer")
    return int(v)


def _interval(raw: str) -> tuple[float, float]:
    parts = [float(p) for p in raw.replace("(", "").replace(")", "").split(",")]
    if len(parts) != 2:
        raise ValueError("expected 'a, b'")
    return parts[0], parts[1]


def _dataset(cp, section) -> DataSet:
    return DataSet(*(_get(cp, section, k, parse_preset, ZERO) for k in ("source", "exterior", "initial")))


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("config", str(exc).splitlines()[0]) from None
    known = {"problem", "mesh", "time", "data", "data_hi", "checks", "output"}
    for sec in cp.sections():
        if sec not in known:
            raise ConfigError(f"[{sec}]", "unknown section")
    d = RunConfig()
    names = _get(cp, "checks", "names", lambda r: tuple(n.strip() for n in r.split(",") if n.strip()), ())
    cfg = RunConfig(
        problem=_get(cp, "problem", "kind", str.strip, d.problem),
        order=_get(cp, "problem", "order", float, d.order),
        omega=_get(cp, "problem", "omega", _interval, d.omega),
        n_interior=_get(cp, "mesh", "n_interior", _int, d.n_interior),
        n_exterior=_get(cp, "mesh", "n_exterior", _int, d.n_exterior),
        truncation_radius=_get(cp, "mesh", "truncation_radius", float, d.truncation_radius),
        horizon=_get(cp, "time", "horizon", float, d.horizon),
        dt=_get(cp, "time", "dt", float, d.dt),
        data=_dataset(cp, "data"),
        data_hi=_dataset(cp, "data_hi") if cp.has_section("data_hi") else None,
        checks=names,
        seed=_get(cp, "checks", "seed", _int, d.seed),
        samples=_get(cp, "checks", "samples", _int, d.samples),
        output_dir=_get(cp, "output", "dir", str.strip, d.output_dir),
    )
    validate(cfg)
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config ({exc.strerror})") from None
    return parse_config(text)


def validate(cfg: RunConfig) -> None:
    if cfg.problem not in PROBLEM_KINDS:
        raise ConfigError("[problem] kind", f"must be one of {PROBLEM_KINDS}, got {cfg.problem!r}")
    if not 0.0 < cfg.order < 1.0:
        raise ConfigError("[problem] order", f"must lie in (0, 1), got {cfg.order!r}")
    a, b = cfg.omega
    if not (math.isfinite(a) and math.isfinite(b) and b > a):
        raise ConfigError("[problem] omega", f"need a < b, got {cfg.omega!r}")
    if cfg.n_interior < 2:
        raise ConfigError("[mesh] n_interior", f"must be >= 2, got {cfg.n_interior}")
    if cfg.n_exterior < 0:
        raise ConfigError("[mesh] n_exterior", f"must be >= 0, got {cfg.n_exterior}")
    if cfg.problem != "dirichlet" and cfg.n_exterior < 1:
        raise ConfigError("[mesh] n_exterior", f"{cfg.problem} problems need an exterior collar (>= 1)")
    if cfg.n_exterior > 0 and not (cfg.truncation_radius > 0 and math.isfinite(cfg.truncation_radius)):
        raise ConfigError("[mesh] truncation_radius", f"must be positive, got {cfg.truncation_radius!r}")
    if not (cfg.horizon > 0 and math.isfinite(cfg.horizon)):
        raise ConfigError("[time] horizon", f"must be positive, got {cfg.horizon!r}")
    if not (cfg.dt > 0 and math.isfinite(cfg.dt)):
        raise ConfigError("[time] dt", f"must be positive, got {cfg.dt!r}")
    n = round(cfg.horizon / cfg.dt)
    if n < 1 or abs(n * cfg.dt - cfg.horizon) > 1e-12 * max(1.0, cfg.horizon):
        raise ConfigError("[time] dt", f"horizon {cfg.horizon!r} is not a multiple of dt {cfg.dt!r}")
    for ds, sec in ((cfg.data, "data"), (cfg.data_hi, "data_hi")):
        if ds is not None and cfg.problem == "dirichlet" and ds.exterior.name != "zero":
            raise ConfigError(f"[{sec}] exterior", "dirichlet problems take no exterior datum")
    for name in cfg.checks:
        if name not in REGISTRY:
            raise ConfigError("[checks] names", f"unknown check {name!r}; known: {sorted(REGISTRY)}")
    if cfg.samples < 1:
        raise ConfigError("[checks] samples", "must be >= 1")


def manifest_text(cfg: RunConfig, extra: Optional[dict] = None) -> str:
    """INI text that reproduces ``cfg`` exactly when parsed again."""
    lines = []
    if extra:
        lines += [f"# {k}: {v}" for k, v in extra.items()]
    lines += [
        "[problem]", f"kind = {cfg.problem}", f"order = {cfg.order!r}",
        f"omega = {cfg.omega[0]!r}, {cfg.omega[1]!r}", "",
        "[mesh]", f"n_interior = {cfg.n_interior}", f"n_exterior = {cfg.n_exterior}",
        f"truncation_radius = {cfg.truncation_radius!r}", "",
        "[time]", f"horizon = {cfg.horizon!r}", f"dt = {cfg.dt!r}", "",
    ]
    for sec, ds in (("data", cfg.data), ("data_hi", cfg.data_hi)):
        if ds is None:
            continue
        lines += [f"[{sec}]", f"source = {ds.source.text()}", f"exterior = {ds.exterior.text()}",
                  f"initial = {ds.initial.text()}", ""]
    lines += ["[checks]", "names = " + ", ".join(cfg.checks), f"seed = {cfg.seed}",
              f"samples = {cfg.samples}", "", "[output]", f"dir = {cfg.output_dir}", ""]
    return "\n".join(lines)
