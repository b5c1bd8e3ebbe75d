"""Discretized signal/observation realizations and their CSV persistence."""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Mapping, TextIO

import numpy as np

from .errors import DimensionError, InvalidParameterError, SimulationError
from .model import FilteringModel
from .rng import INITIAL_STREAM, OBSERVATION_STREAM, SIGNAL_STREAM


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``0 = t_0 < ... < t_N = T``."""

    T: float
    N: int

    def __post_init__(self):
        if not (np.isfinite(self.T) and self.T > 0):
            raise InvalidParameterError(f"T must be positive, got {self.T!r}")
        if int(self.N) != self.N or self.N < 1:
            raise InvalidParameterError(f"N must be a positive integer, got {self.N!r}")

    @property
    def dt(self) -> float:
        return self.T / self.N

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.N + 1) * self.dt


@dataclass(frozen=True)
class SignalObservationPath:
    """Discretized signal ``Y`` and observation ``Z`` on a :class:`TimeGrid`.

    ``Y`` has shape ``(N + 1, d)`` and ``Z`` has shape ``(N + 1, k)`` with
    ``Z[0] == 0``. ``Y`` may be ``None`` when only the observations are known.
    """

    grid: TimeGrid
    Y: np.ndarray | None
    Z: np.ndarray

    def __post_init__(self):
        Z = np.atleast_2d(np.asarray(self.Z, dtype=float))
        if Z.shape[0] != self.grid.N + 1:
            raise DimensionError(f"Z needs {self.grid.N + 1} rows, got {Z.shape[0]}")
        if np.any(Z[0] != 0):
            raise InvalidParameterError("observation path must start at zero")
        object.__setattr__(self, "Z", Z)
        if self.Y is not None:
            Y = np.atleast_2d(np.asarray(self.Y, dtype=float))
            if Y.shape[0] != self.grid.N + 1:
                raise DimensionError(f"Y needs {self.grid.N + 1} rows, got {Y.shape[0]}")
            object.__setattr__(self, "Y", Y)

    @property
    def d(self) -> int | None:
        return None if self.Y is None else self.Y.shape[1]

    @property
    def k(self) -> int:
        return self.Z.shape[1]

    @property
    def Y_N(self) -> np.ndarray:
        return self.Y[-1]

    @property
    def Z_N(self) -> np.ndarray:
        return self.Z[-1]


def sample_initial(alpha: float, d: int, stream) -> np.ndarray:
    """Draw ``Y_0 ~ N(0, I_d / alpha)``."""
    if not alpha > 0:
        raise InvalidParameterError(f"alpha must be positive, got {alpha!r}")
    return alpha**-0.5 * stream.normal(int(d))


def simulate_signal_observation(
    model: FilteringModel,
    grid: TimeGrid,
    alpha_init: float,
    streams,
    y0=None,
) -> SignalObservationPath:
    """Euler scheme for the signal and trapezoidal rule for the observation.

    ``Y_n = Y_{n-1} + mu(Y_{n-1}) dt + sigma dW_n`` and
    ``Z_n = Z_{n-1} + (h(Y_{n-1}) + h(Y_n)) dt / 2 + dV_n``.
    ``streams`` maps stream ids to Gaussian streams (see :mod:`zakai.rng`);
    ``y0`` overrides the random initial state.
    """
    d, k, N, dt = model.d, model.k, grid.N, grid.dt
    if y0 is None:
        y0 = sample_initial(alpha_init, d, streams.stream(INITIAL_STREAM))
    y0 = model.check_point(y0)
    if y0.shape != (d,):
        raise DimensionError(f"y0 must have shape ({d},), got {y0.shape}")
    sqdt = np.sqrt(dt)
    dW = sqdt * streams.stream(SIGNAL_STREAM).normal((N, d))
    dV = sqdt * streams.stream(OBSERVATION_STREAM).normal((N, k))

    Y = np.empty((N + 1, d))
    Z = np.empty((N + 1, k))
    Y[0] = y0
    Z[0] = 0.0
    h_prev = model.h(Y[0])
    for n in range(1, N + 1):
        Y[n] = Y[n - 1] + model.mu(Y[n - 1]) * dt + model.sigma @ dW[n - 1]
        h_cur = model.h(Y[n])
        Z[n] = Z[n - 1] + 0.5 * (h_prev + h_cur) * dt + dV[n - 1]
        if not (np.all(np.isfinite(Y[n])) and np.all(np.isfinite(Z[n]))):
            raise SimulationError(f"non-finite signal/observation value at step {n}", step=n)
        h_prev = h_cur
    return SignalObservationPath(grid=grid, Y=Y, Z=Z)


# -- CSV persistence --------------------------------------------------------


def _fmt(v: float) -> str:
    return repr(float(v))


def format_metadata(metadata: Mapping[str, Mapping[str, object]] | None) -> str:
    """Render sectioned metadata as ``#``-prefixed INI lines."""
    if not metadata:
        return ""
    lines = []
    for section, entries in metadata.items():
        lines.append(f"# [{section}]")
        for key, value in entries.items():
            lines.append(f"# {key} = {value}")
    return "\n".join(lines) + "\n"


def split_metadata(text: str) -> tuple[str, str]:
    """Separate leading ``#`` comment lines (returned uncommented) from the body."""
    meta, body = [], []
    in_header = True
    for line in text.splitlines(keepends=True):
        if in_header and line.startswith("#"):
            meta.append(line[2:] if line.startswith("# ") else line[1:])
        else:
            in_header = False
            body.append(line)
    return "".join(meta), "".join(body)


def write_path_csv(path: SignalObservationPath, fh: TextIO, metadata=None) -> None:
    if path.Y is None:
        raise DimensionError("writing a path requires the signal Y")
    d, k = path.Y.shape[1], path.Z.shape[1]
    fh.write(format_metadata(metadata))
    header = ["n", "t"] + [f"Y_{j + 1}" for j in range(d)] + [f"Z_{j + 1}" for j in range(k)]
    fh.write(",".join(header) + "\n")
    times = path.grid.times
    times[-1] = path.grid.T
    for n in range(path.grid.N + 1):
        row = [str(n), _fmt(times[n])]
        row += [_fmt(v) for v in path.Y[n]]
        row += [_fmt(v) for v in path.Z[n]]
        fh.write(",".join(row) + "\n")


def read_path_csv(fh: TextIO) -> tuple[SignalObservationPath, str]:
    """Parse a path file; returns the path and its uncommented metadata text."""
    meta, body = split_metadata(fh.read())
    lines = [ln for ln in body.splitlines() if ln.strip()]
    if not lines:
        raise InvalidParameterError("empty path file")
    header = lines[0].split(",")
    if header[:2] != ["n", "t"]:
        raise InvalidParameterError(f"unexpected path header {lines[0]!r}")
    y_cols = [i for i, c in enumerate(header) if c.startswith("Y_")]
    z_cols = [i for i, c in enumerate(header) if c.startswith("Z_")]
    if not y_cols or not z_cols:
        raise InvalidParameterError("path file needs Y_ and Z_ columns")
    data = np.loadtxt(io.StringIO("\n".join(lines[1:])), delimiter=",", ndmin=2)
    if data.shape[1] != len(header):
        raise InvalidParameterError("ragged path file")
    n = data[:, 0]
    N = len(n) - 1
    if N < 1 or not np.array_equal(n, np.arange(N + 1)):
        raise InvalidParameterError("path rows must be indexed 0..N")
    grid = TimeGrid(T=float(data[-1, 1]), N=N)
    return SignalObservationPath(grid=grid, Y=data[:, y_cols], Z=data[:, z_cols]), meta
