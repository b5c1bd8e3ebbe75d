"""Run configuration: a strictly validated INI file with one section per module.

Example::

    [model]
    d = 2
    alpha = 6.283185307179586
    beta = 0.25
    gamma = 1.0

    [grid]
    T = 0.5
    N = 100

    [estimator]
    M = 100000
    seed = 42
    chunk_size = 2048
    accumulation_mode = log-sum-exp

    [output]
    format = csv
    path = estimates.csv

    [points]
    values = Y_N; 2Z_N
    axes = 1, 2
    resolution = 128
    half_width = 5.0
    center = Y_N

    [table]
    dims = 1, 2, 5
    realizations = 5

``[model] name`` selects a model registered with :func:`register_model`;
those models take no further ``[model]`` keys. Points are separated by
``;`` and coordinates by ``,``. ``2Z_N`` stands for ``Z_N / (gamma T)``.
Omitted keys take the defaults of the benchmark experiment. Unknown sections
or keys are rejected. A ``[run]`` section is tolerated and ignored so that the
metadata written into output files parses back into the same configuration.
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidParameterError, ZakaiError
from .estimator import ACCUMULATION_MODES, EstimatorConfig
from .model import ExampleModelParams, FilteringModel, build_example_model
from .simulate import TimeGrid


class ConfigError(ZakaiError, ValueError):
    """Invalid configuration; the message names the section, key and line."""


# -- custom model registry --------------------------------------------------

_REGISTRY: dict[str, Callable[[], tuple[FilteringModel, float]]] = {}


def register_model(name: str, factory: Callable[[], tuple[FilteringModel, float]]) -> None:
    """Make a library-defined model selectable with ``[model] name = <name>``.

    ``factory`` returns the model and the precision ``alpha`` of the Gaussian
    used to draw the initial signal state.
    """
    if name == "example":
        raise ValueError("'example' is reserved for the built-in model")
    _REGISTRY[name] = factory


def registered_models() -> list[str]:
    return sorted(_REGISTRY)


# -- schema -----------------------------------------------------------------

TOKENS = ("Y_N", "2Z_N")

_SCHEMA = {
    "model": {"name", "d", "alpha", "beta", "gamma"},
    "grid": {"T", "N"},
    "estimator": {"M", "seed", "chunk_size", "accumulation_mode"},
    "output": {"format", "path"},
    "points": {"values", "axes", "resolution", "half_width", "center"},
    "table": {"dims", "realizations"},
    "run": None,
}


@dataclass(frozen=True)
class ModelSpec:
    name: str = "example"
    params: ExampleModelParams = field(default_factory=ExampleModelParams)

    def build(self) -> tuple[FilteringModel, float]:
        if self.name == "example":
            return build_example_model(self.params), self.params.alpha
        return _REGISTRY[self.name]()


@dataclass(frozen=True)
class OutputSpec:
    format: str = "csv"
    path: str | None = None


@dataclass(frozen=True)
class PointsSpec:
    """Evaluation points: explicit vectors or the tokens ``Y_N`` / ``2Z_N``,
    and for grids the free axes (1-based), resolution, half width and centre."""

    values: tuple = ("Y_N", "2Z_N")
    axes: tuple[int, ...] = (1,)
    resolution: int = 1024
    half_width: float = 5.0
    center: object = "Y_N"


@dataclass(frozen=True)
class TableSpec:
    dims: tuple[int, ...] = (1, 2, 5, 10, 20, 25)
    realizations: int = 5


@dataclass(frozen=True)
class RunConfig:
    model: ModelSpec = field(default_factory=ModelSpec)
    grid: TimeGrid = field(default_factory=lambda: TimeGrid(T=0.5, N=100))
    estimator: EstimatorConfig = field(default_factory=lambda: EstimatorConfig(M=4_096_000, chunk_size=4096))
    output: OutputSpec = field(default_factory=OutputSpec)
    points: PointsSpec = field(default_factory=PointsSpec)
    table: TableSpec = field(default_factory=TableSpec)

    def to_sections(self) -> dict[str, dict[str, str]]:
        """Sectioned key/value form; :func:`parse_config` inverts it."""
        p = self.model.params
        model = {"name": self.model.name}
        if self.model.name == "example":
            model.update(d=str(p.d), alpha=repr(p.alpha), beta=repr(p.beta), gamma=repr(p.gamma))
        out = {
            "model": model,
            "grid": {"T": repr(float(self.grid.T)), "N": str(self.grid.N)},
            "estimator": {
                "M": str(self.estimator.M),
                "seed": str(self.estimator.seed),
                "chunk_size": str(self.estimator.chunk_size),
                "accumulation_mode": self.estimator.accumulation_mode,
            },
            "output": {"format": self.output.format},
            "points": {
                "values": _format_points(self.points.values),
                "axes": ", ".join(str(a) for a in self.points.axes),
                "resolution": str(self.points.resolution),
                "half_width": repr(float(self.points.half_width)),
                "center": _format_points((self.points.center,)),
            },
            "table": {
                "dims": ", ".join(str(d) for d in self.table.dims),
                "realizations": str(self.table.realizations),
            },
        }
        if self.output.path is not None:
            out["output"]["path"] = self.output.path
        return out

    def to_ini(self) -> str:
        lines = []
        for section, entries in self.to_sections().items():
            lines.append(f"[{section}]")
            lines.extend(f"{k} = {v}" for k, v in entries.items())
            lines.append("")
        return "\n".join(lines)


def _format_points(values) -> str:
    parts = []
    for v in values:
        if isinstance(v, str):
            parts.append(v)
        else:
            parts.append(", ".join(repr(float(c)) for c in v))
    return "; ".join(parts)


# -- parsing ----------------------------------------------------------------


def _line_of(text: str, section: str, key: str | None) -> int | None:
    current = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        m = re.match(r"\[(.+)\]$", s)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return lineno
            continue
        if current == section and key is not None:
            k = re.split(r"[=:]", s, maxsplit=1)[0].strip()
            if k == key:
                return lineno
    return None


class _Reader:
    def __init__(self, text: str, parser: configparser.ConfigParser):
        self.text = text
        self.parser = parser

    def fail(self, section, key, msg):
        line = _line_of(self.text, section, key)
        where = f"[{section}]" + (f" {key}" if key else "")
        if line is not None:
            where = f"line {line}: {where}"
        raise ConfigError(f"{where}: {msg}")

    def get(self, section, key):
        if self.parser.has_option(section, key):
            return self.parser.get(section, key).strip()
        return None

    def number(self, section, key, default, kind=float, check=None, what="invalid value"):
        raw = self.get(section, key)
        if raw is None:
            return default
        try:
            val = kind(raw)
        except ValueError:
            self.fail(section, key, f"cannot parse {raw!r} as {kind.__name__}")
        if kind is float and not math.isfinite(val):
            self.fail(section, key, f"{raw!r} is not finite")
        if check is not None and not check(val):
            self.fail(section, key, f"{what}: {raw!r}")
        return val

    def int_list(self, section, key, default):
        raw = self.get(section, key)
        if raw is None:
            return default
        try:
            vals = tuple(int(v) for v in raw.replace(",", " ").split())
        except ValueError:
            self.fail(section, key, f"expected integers, got {raw!r}")
        if not vals:
            self.fail(section, key, "empty list")
        return vals


def _parse_point_list(reader, section, key, raw):
    out = []
    for part in raw.split(";"):
        part = part.strip()
        if not part:
            continue
        if part in TOKENS:
            out.append(part)
            continue
        try:
            out.append(tuple(float(c) for c in part.replace(",", " ").split()))
        except ValueError:
            reader.fail(section, key, f"cannot parse point {part!r}; use numbers or one of {TOKENS}")
    if not out:
        reader.fail(section, key, "no points given")
    return tuple(out)


def parse_config(text: str) -> RunConfig:
    """Parse and validate configuration text."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from None
    r = _Reader(text, parser)

    for section in parser.sections():
        if section not in _SCHEMA:
            r.fail(section, None, f"unknown section; expected one of {sorted(k for k in _SCHEMA)}")
        allowed = _SCHEMA[section]
        if allowed is None:
            continue
        for key in parser.options(section):
            if key not in allowed:
                r.fail(section, key, f"unknown key; expected one of {sorted(allowed)}")

    defaults = RunConfig()

    name = r.get("model", "name") or "example"
    if name == "example":
        dp = defaults.model.params
        try:
            params = ExampleModelParams(
                d=r.number("model", "d", dp.d, int, lambda v: v >= 1, "d must be >= 1"),
                alpha=r.number("model", "alpha", dp.alpha, float, lambda v: v > 0, "alpha must be > 0"),
                beta=r.number("model", "beta", dp.beta),
                gamma=r.number("model", "gamma", dp.gamma),
            )
        except InvalidParameterError as exc:
            r.fail("model", None, str(exc))
        model = ModelSpec("example", params)
    else:
        if name not in _REGISTRY:
            r.fail("model", "name", f"unknown model {name!r}; registered: {['example'] + registered_models()}")
        for key in ("d", "alpha", "beta", "gamma"):
            if r.get("model", key) is not None:
                r.fail("model", key, f"not configurable for custom model {name!r}")
        model = ModelSpec(name)

    grid = TimeGrid(
        T=r.number("grid", "T", defaults.grid.T, float, lambda v: v > 0, "T must be > 0"),
        N=r.number("grid", "N", defaults.grid.N, int, lambda v: v >= 1, "N must be >= 1"),
    )

    de = defaults.estimator
    M = r.number("estimator", "M", de.M, int, lambda v: v >= 1, "M must be >= 1")
    mode = r.get("estimator", "accumulation_mode") or de.accumulation_mode
    if mode not in ACCUMULATION_MODES:
        r.fail("estimator", "accumulation_mode", f"expected one of {ACCUMULATION_MODES}, got {mode!r}")
    chunk = r.number("estimator", "chunk_size", min(de.chunk_size, M), int, lambda v: v >= 1, "chunk_size must be >= 1")
    if chunk > M:
        r.fail("estimator", "chunk_size", f"chunk_size {chunk} exceeds M = {M}")
    estimator = EstimatorConfig(
        M=M,
        seed=r.number("estimator", "seed", de.seed, int, lambda v: 0 <= v < 2**64, "seed must be a u64"),
        chunk_size=chunk,
        accumulation_mode=mode,
    )

    fmt = r.get("output", "format") or "csv"
    if fmt not in ("csv", "json"):
        r.fail("output", "format", f"expected csv or json, got {fmt!r}")
    output = OutputSpec(format=fmt, path=r.get("output", "path") or None)

    dpts = defaults.points
    raw = r.get("points", "values")
    values = dpts.values if raw is None else _parse_point_list(r, "points", "values", raw)
    raw = r.get("points", "center")
    if raw is None:
        center = dpts.center
    else:
        parsed = _parse_point_list(r, "points", "center", raw)
        if len(parsed) != 1:
            r.fail("points", "center", "expected a single point")
        center = parsed[0]
    axes = r.int_list("points", "axes", dpts.axes)
    if len(axes) not in (1, 2) or len(set(axes)) != len(axes):
        r.fail("points", "axes", "give one or two distinct axes")
    points = PointsSpec(
        values=values,
        axes=axes,
        resolution=r.number("points", "resolution", dpts.resolution, int, lambda v: v >= 1, "resolution must be >= 1"),
        half_width=r.number("points", "half_width", dpts.half_width, float, lambda v: v > 0, "half_width must be > 0"),
        center=center,
    )

    table = TableSpec(
        dims=r.int_list("table", "dims", defaults.table.dims),
        realizations=r.number("table", "realizations", defaults.table.realizations, int, lambda v: v >= 1, "realizations must be >= 1"),
    )
    if any(d < 1 for d in table.dims):
        r.fail("table", "dims", "dimensions must be positive")

    cfg = RunConfig(model=model, grid=grid, estimator=estimator, output=output, points=points, table=table)
    _check_dims(cfg, r)
    return cfg


def _check_dims(cfg: RunConfig, r: _Reader) -> None:
    if cfg.model.name != "example":
        return
    d = cfg.model.params.d
    for v in cfg.points.values:
        if not isinstance(v, str) and len(v) != d:
            r.fail("points", "values", f"point {v} does not have d={d} coordinates")
    if not isinstance(cfg.points.center, str) and len(cfg.points.center) != d:
        r.fail("points", "center", f"center does not have d={d} coordinates")
    if any(not 1 <= a <= d for a in cfg.points.axes):
        r.fail("points", "axes", f"axes must lie in 1..{d}")


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def resolve_point(token, obs, model_spec: ModelSpec, T: float) -> np.ndarray:
    """Turn ``Y_N``, ``2Z_N`` or an explicit tuple into a coordinate vector."""
    if token == "Y_N":
        if obs.Y is None:
            raise InvalidParameterError("Y_N requested but the observation file has no signal columns")
        return np.array(obs.Y_N, dtype=float)
    if token == "2Z_N":
        if model_spec.name != "example":
            raise InvalidParameterError("2Z_N is defined for the built-in model only")
        gamma = model_spec.params.gamma
        if gamma == 0:
            raise InvalidParameterError("2Z_N = Z_N / (gamma T) is undefined for gamma = 0")
        return np.array(obs.Z_N, dtype=float) / (gamma * T)
    return np.array(token, dtype=float)
