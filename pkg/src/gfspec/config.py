"""Strict INI configuration for the command-line runner."""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field

import numpy as np

from .grid import Grid, make_grid
from .kernels import (FragmentationModel, OffspringDist, TotalRate, age_structured_model,
                      cell_division_model, self_similar_model)


class ConfigError(ValueError):
    """Malformed or inconsistent configuration; the message names the field."""


SCHEMA = {
    "model": {"kind", "rate", "K0", "K1", "gamma", "x0", "x1", "c", "r", "a", "b",
              "offspring", "sigma", "theta", "matrix"},
    "grid": {"L", "N"},
    "run": {"T", "dt", "scheme", "seeds"},
    "spectral": {"tol", "max_iter", "shift"},
    "output": {"directory", "dump_states"},
    "gre": {"j", "init", "factor", "refine"},
    "matrixlab": {"suite", "count", "size", "seed", "center", "radius", "nodes"},
}
KINDS = ("mitosis", "smooth_cell_division", "self_similar", "age_structured", "matrix")


@dataclass
class ExperimentConfig:
    kind: str
    model: FragmentationModel | None
    matrix: np.ndarray | None
    L: float
    N: int
    T: float = 10.0
    dt: float = 1e-2
    scheme: str = "implicit_euler"
    seeds: tuple = (0, 1, 2)
    tol: float = 1e-10
    max_iter: int = 200
    shift: float | None = None
    directory: str = "out"
    dump_states: bool = False
    gre: dict = field(default_factory=dict)
    matrixlab: dict = field(default_factory=dict)

    def grid(self) -> Grid | None:
        return None if self.kind == "matrix" else make_grid(self.L, self.N)


def _parser() -> configparser.ConfigParser:
    p = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    p.optionxform = str  # keys are case sensitive (K0 vs k0)
    return p


class _Section:
    def __init__(self, cp, name):
        self.name = name
        self.data = dict(cp[name]) if cp.has_section(name) else {}

    def has(self, key) -> bool:
        return key in self.data

    def str(self, key, default=None, choices=None):
        if key not in self.data:
            if default is None:
                raise ConfigError(f"missing required field {self.name}.{key}")
            return default
        v = self.data[key].strip()
        if choices and v not in choices:
            raise ConfigError(f"{self.name}.{key} = {v!r}; expected one of {', '.join(choices)}")
        return v

    def float(self, key, default=None):
        if key not in self.data:
            if default is None:
                raise ConfigError(f"missing required field {self.name}.{key}")
            return float(default)
        try:
            v = float(self.data[key])
        except ValueError:
            raise ConfigError(f"{self.name}.{key} is not a number: {self.data[key]!r}") from None
        if not np.isfinite(v):
            raise ConfigError(f"{self.name}.{key} must be finite")
        return v

    def int(self, key, default=None):
        v = self.float(key, default)
        if v != int(v):
            raise ConfigError(f"{self.name}.{key} must be an integer")
        return int(v)

    def bool(self, key, default=False):
        if key not in self.data:
            return default
        v = self.data[key].strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{self.name}.{key} is not a boolean: {self.data[key]!r}")


def _rate(s: _Section) -> TotalRate:
    kind = s.str("rate", choices=("constant", "power", "bounded_power", "exponential", "indicator"))
    if kind == "constant":
        return TotalRate.constant(s.float("K0"))
    if kind == "power":
        return TotalRate.power(s.float("gamma"), s.float("K0", 1.0))
    if kind == "bounded_power":
        return TotalRate.bounded_power(s.float("gamma"), s.float("K0"), s.float("K1"),
                                       s.float("x0"), s.float("x1"))
    if kind == "exponential":
        return TotalRate.exponential(s.float("c"), s.float("r", 1.0))
    return TotalRate.indicator(s.float("c"), s.float("a"), s.float("b"))


def _offspring(s: _Section) -> OffspringDist:
    kind = s.str("offspring", choices=("mitosis", "binary", "uniform", "power"))
    if kind == "mitosis":
        return OffspringDist.mitosis()
    if kind == "binary":
        return OffspringDist.binary(s.float("sigma"))
    if kind == "uniform":
        return OffspringDist.uniform()
    return OffspringDist.power(s.float("theta"))


def _matrix(text: str) -> np.ndarray:
    try:
        rows = [[float(v) for v in row.split(",")] for row in text.split(";") if row.strip()]
        M = np.array(rows, dtype=float)
    except ValueError:
        raise ConfigError("model.matrix must be rows of comma-separated numbers joined by ';'") from None
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.size == 0:
        raise ConfigError("model.matrix must be square")
    return M


def _build(cp: configparser.ConfigParser) -> ExperimentConfig:
    for name in cp.sections():
        if name not in SCHEMA:
            raise ConfigError(f"unknown section [{name}]")
        extra = set(cp[name]) - SCHEMA[name]
        if extra:
            raise ConfigError(f"unknown field {name}.{sorted(extra)[0]}")
    if not cp.has_section("model"):
        raise ConfigError("missing section [model]")
    ms = _Section(cp, "model")
    kind = ms.str("kind", choices=KINDS)
    model = matrix = None
    if kind == "matrix":
        matrix = _matrix(ms.str("matrix"))
    else:
        if kind != "self_similar" and not ms.has("rate"):
            raise ConfigError("missing required field model.rate")
        try:
            if kind == "self_similar":
                model = self_similar_model(ms.float("gamma"), _offspring(ms))
            elif kind == "age_structured":
                model = age_structured_model(_rate(ms))
            else:
                model = cell_division_model(_rate(ms), _offspring(ms))
                if model.kind != kind:
                    raise ConfigError(f"model.kind = {kind} does not match model.offspring")
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"model: {exc}") from None

    gs = _Section(cp, "grid")
    L = gs.float("L", 10.0 if kind == "self_similar" else 20.0)
    N = gs.int("N", 2049 if kind in ("mitosis", "smooth_cell_division") else 513)
    if kind != "matrix":
        try:
            make_grid(L, N)
        except ValueError as exc:
            raise ConfigError(f"grid: {exc}") from None
        if kind == "mitosis" and N % 2 == 0:
            raise ConfigError("grid.N must be odd for mitosis (daughter nodes x/2)")

    rs = _Section(cp, "run")
    T, dt = rs.float("T", 10.0), rs.float("dt", 1e-2)
    if T <= 0.0 or dt <= 0.0:
        raise ConfigError("run.T and run.dt must be positive")
    scheme = rs.str("scheme", "implicit_euler", ("implicit_euler", "explicit_euler"))
    try:
        seeds = tuple(int(s) for s in rs.str("seeds", "0,1,2").split(",") if s.strip())
    except ValueError:
        raise ConfigError("run.seeds must be a comma-separated list of integers") from None
    if not seeds:
        raise ConfigError("run.seeds is empty")

    ss = _Section(cp, "spectral")
    tol = ss.float("tol", 1e-10)
    max_iter = ss.int("max_iter", 200)
    shift = ss.float("shift") if ss.has("shift") else None
    if tol <= 0.0 or max_iter < 1:
        raise ConfigError("spectral.tol must be positive and spectral.max_iter >= 1")

    os_ = _Section(cp, "output")
    gre = _Section(cp, "gre")
    gre_cfg = {"j": gre.str("j", "quadratic", ("quadratic", "abs")),
               "init": gre.str("init", "modulated", ("modulated", "equilibrium", "scaled")),
               "factor": gre.float("factor", 2.0),
               "refine": gre.bool("refine", False)}
    ml = _Section(cp, "matrixlab")
    ml_cfg = {"suite": ml.str("suite", "builtin", ("builtin", "random", "contour")),
              "count": ml.int("count", 50), "size": ml.int("size", 10),
              "seed": ml.int("seed", 0), "center": ml.float("center", 0.0),
              "radius": ml.float("radius", 1.0), "nodes": ml.int("nodes", 64)}
    return ExperimentConfig(kind=kind, model=model, matrix=matrix, L=L, N=N, T=T, dt=dt,
                            scheme=scheme, seeds=seeds, tol=tol, max_iter=max_iter, shift=shift,
                            directory=os_.str("directory", "out"),
                            dump_states=os_.bool("dump_states", False),
                            gre=gre_cfg, matrixlab=ml_cfg)


def load_config(path) -> ExperimentConfig:
    cp = _parser()
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"config syntax: {exc}") from None
    return _build(cp)


def parse_config(text: str) -> ExperimentConfig:
    cp = _parser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config syntax: {exc}") from None
    return _build(cp)
