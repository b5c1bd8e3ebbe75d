"""Monte Carlo estimation of the Zakai solution at the final time.

For each sample ``i`` an auxiliary path is run backwards through the
observation record,

    R_0 = x,
    R_n = R_{n-1} + drift_R(Z_{N-n+1}, R_{n-1}) dt + sigma dU_n,

and contributes the weight

    phi(R_N) * exp( sum_n dt/2 [B_{N-n}(R_n) + B_{N-n+1}(R_{n-1})] + <h(x), Z_N> )

where ``B_m`` is the potential evaluated with observation value ``Z_m``. The
estimate is the sample mean of the weights. Sample ``i`` always draws from
stream ``3 + i`` so results do not depend on how samples are batched.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Iterable, Iterator, TextIO

import numpy as np

from .errors import DimensionError, InvalidParameterError, SimulationError
from .model import B_general, FilteringModel, drift_R
from .rng import StreamFamily
from .simulate import SignalObservationPath, format_metadata

Q975 = 1.959963985
"""97.5% quantile of the standard normal distribution."""

REDUCTION_BLOCK = 256
"""Samples per reduction block; fixes the floating-point summation order."""

ACCUMULATION_MODES = ("plain", "log-sum-exp")


@dataclass(frozen=True)
class EstimatorConfig:
    M: int
    seed: int = 0
    chunk_size: int = 1024
    accumulation_mode: str = "log-sum-exp"

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 1:
            raise InvalidParameterError(f"M must be a positive integer, got {self.M!r}")
        if int(self.chunk_size) != self.chunk_size or self.chunk_size < 1:
            raise InvalidParameterError(f"chunk_size must be a positive integer, got {self.chunk_size!r}")
        if self.chunk_size > self.M:
            object.__setattr__(self, "chunk_size", int(self.M))
        if self.accumulation_mode not in ACCUMULATION_MODES:
            raise InvalidParameterError(
                f"accumulation_mode must be one of {ACCUMULATION_MODES}, got {self.accumulation_mode!r}"
            )
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidParameterError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")


@dataclass(frozen=True)
class Estimate:
    x: np.ndarray
    value: float
    std_error: float
    ci_lo: float
    ci_hi: float
    M: int
    max_log_weight: float
    log_value: float = math.nan
    note: str = ""

    def as_dict(self) -> dict:
        out = asdict(self)
        out["x"] = [float(v) for v in self.x]
        return out


def confidence_interval(mean: float, s2: float, M: int) -> tuple[float, float]:
    """Normal-approximation 95% interval ``mean -/+ q * sqrt(s2 / M)``."""
    if s2 < 0:
        raise InvalidParameterError(f"sample variance must be nonnegative, got {s2!r}")
    if M < 1:
        raise InvalidParameterError(f"M must be positive, got {M!r}")
    half = Q975 * math.sqrt(s2 / M)
    return mean - half, mean + half


# -- path recursion ---------------------------------------------------------


def _check_obs(model: FilteringModel, obs: SignalObservationPath) -> None:
    if obs.k != model.k:
        raise DimensionError(f"observation dimension {obs.k} does not match model k={model.k}")
    if obs.d is not None and obs.d != model.d:
        raise DimensionError(f"signal dimension {obs.d} does not match model d={model.d}")


def _propagate(model, obs, x, noise, record=False):
    """Run the auxiliary recursion for a batch of samples and points.

    ``x`` has shape ``(P, d)``; ``noise`` holds standard normal draws of shape
    ``(B, N, d)``. Returns log weights of shape ``(B, P)`` and, if ``record``,
    the paths with shape ``(B, N + 1, P, d)``.
    """
    grid = obs.grid
    N, dt = grid.N, grid.dt
    Z = obs.Z
    B = noise.shape[0]
    # sigma dU_n for every sample, shape (B, N, d)
    kicks = np.sqrt(dt) * np.einsum("bnj,ij->bni", noise, model.sigma)
    R = np.broadcast_to(x, (B,) + x.shape).copy()
    paths = None
    if record:
        paths = np.empty((B, N + 1) + x.shape)
        paths[:, 0] = R
    half_dt = grid.T / (2 * N)
    b_prev = B_general(model, Z[N], R)
    acc = np.zeros(R.shape[:-1])
    for n in range(1, N + 1):
        R = R + drift_R(model, Z[N - n + 1], R) * dt + kicks[:, n - 1, None, :]
        if not np.all(np.isfinite(R)):
            raise SimulationError(f"non-finite auxiliary path value at step {n}", step=n)
        b_cur = B_general(model, Z[N - n], R)
        acc += half_dt * (b_cur + b_prev)
        b_prev = b_cur
        if record:
            paths[:, n] = R
    hz = np.sum(model.h(x) * Z[N], axis=-1)
    log_w = model.log_phi(R) + acc + hz
    bad = np.isnan(log_w) | (log_w == np.inf)
    if np.any(bad):
        raise SimulationError("non-finite log weight", step=N)
    return log_w, paths


def _as_point(model, x) -> np.ndarray:
    x = model.check_point(x)
    if x.ndim != 1:
        raise DimensionError(f"expected a single point of shape ({model.d},), got {x.shape}")
    return x


def simulate_R_path(model: FilteringModel, obs: SignalObservationPath, x, stream) -> np.ndarray:
    """One auxiliary path ``R_0..R_N`` started at ``x``; shape ``(N + 1, d)``."""
    _check_obs(model, obs)
    x = _as_point(model, x)
    noise = stream.normal((obs.grid.N, model.d))[None]
    _, paths = _propagate(model, obs, x[None], noise, record=True)
    return paths[0, :, 0]


def sample_log_weight(model: FilteringModel, obs: SignalObservationPath, x, stream) -> float:
    """Log of one Monte Carlo summand for the point ``x``."""
    _check_obs(model, obs)
    x = _as_point(model, x)
    noise = stream.normal((obs.grid.N, model.d))[None]
    log_w, _ = _propagate(model, obs, x[None], noise)
    return float(log_w[0, 0])


# -- streaming reduction ----------------------------------------------------


@dataclass
class _Moments:
    """Mergeable per-point statistics of weights ``exp(l - shift)``."""

    count: int
    shift: np.ndarray
    mean: np.ndarray
    m2: np.ndarray
    max_log: np.ndarray

    @classmethod
    def from_block(cls, log_w: np.ndarray, mode: str) -> "_Moments":
        max_log = np.max(log_w, axis=0)
        if mode == "plain":
            shift = np.zeros_like(max_log)
        else:
            shift = np.where(np.isfinite(max_log), max_log, 0.0)
        w = np.exp(log_w - shift)
        mean = np.mean(w, axis=0)
        dev = w - mean
        m2 = np.sum(dev * dev, axis=0)
        return cls(log_w.shape[0], shift, mean, m2, max_log)

    def merge(self, other: "_Moments") -> "_Moments":
        n = self.count + other.count
        shift = np.maximum(self.shift, other.shift)
        a = np.exp(self.shift - shift)
        b = np.exp(other.shift - shift)
        mean_a, mean_b = self.mean * a, other.mean * b
        delta = mean_b - mean_a
        mean = mean_a + delta * (other.count / n)
        m2 = self.m2 * a * a + other.m2 * b * b + delta * delta * (self.count * other.count / n)
        return _Moments(n, shift, mean, m2, np.maximum(self.max_log, other.max_log))


def _blocks(chunks: Iterable[np.ndarray], block: int) -> Iterator[np.ndarray]:
    """Re-cut consecutive sample chunks into fixed-size blocks."""
    pending: list[np.ndarray] = []
    held = 0
    for chunk in chunks:
        pending.append(chunk)
        held += chunk.shape[0]
        if held < block:
            continue
        data = np.concatenate(pending, axis=0)
        cut = (held // block) * block
        for start in range(0, cut, block):
            yield data[start : start + block]
        pending = [data[cut:]] if cut < held else []
        held -= cut
    if held:
        yield np.concatenate(pending, axis=0)


def _chunk_log_weights(model, obs, points, streams, start, stop):
    noise = np.stack([streams.sample_stream(i).normal((obs.grid.N, model.d)) for i in range(start, stop)])
    log_w, _ = _propagate(model, obs, points, noise)
    return log_w


def _ordered_results(fn, bounds, workers):
    if workers <= 1:
        for b in bounds:
            yield fn(*b)
        return
    window = 2 * workers
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = []
        it = iter(bounds)
        for b in it:
            futures.append(pool.submit(fn, *b))
            if len(futures) >= window:
                break
        while futures:
            # ascending chunk order regardless of completion order
            result = futures.pop(0).result()
            nxt = next(it, None)
            if nxt is not None:
                futures.append(pool.submit(fn, *nxt))
            yield result


def estimate_grid(
    model: FilteringModel,
    obs: SignalObservationPath,
    points,
    config: EstimatorConfig,
    streams=None,
    workers: int = 1,
) -> list[Estimate]:
    """Estimates at several points sharing each sample's noise increments."""
    _check_obs(model, obs)
    pts = model.check_point(points)
    if pts.ndim == 1:
        pts = pts[None]
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise DimensionError("points must be a non-empty (P, d) array")
    if streams is None:
        streams = StreamFamily(config.seed)
    M, chunk = config.M, config.chunk_size
    bounds = [(s, min(s + chunk, M)) for s in range(0, M, chunk)]

    def work(start, stop):
        return _chunk_log_weights(model, obs, pts, streams, start, stop)

    stats = None
    for block in _blocks(_ordered_results(work, bounds, workers), REDUCTION_BLOCK):
        part = _Moments.from_block(block, config.accumulation_mode)
        stats = part if stats is None else stats.merge(part)

    out = []
    for p in range(pts.shape[0]):
        out.append(_finish(pts[p], stats, p, M))
    return out


def _finish(x, stats: _Moments, p: int, M: int) -> Estimate:
    scale = math.exp(stats.shift[p])
    mean = float(stats.mean[p])
    value = mean * scale
    log_value = math.log(mean) + float(stats.shift[p]) if mean > 0 else -math.inf
    if M > 1:
        s2 = float(stats.m2[p]) / (M - 1) * scale * scale
        std_error = math.sqrt(s2 / M)
        lo, hi = confidence_interval(value, s2, M)
    else:
        std_error, lo, hi = math.nan, math.nan, math.nan
    note = "degenerate variance: all weights equal" if stats.m2[p] == 0 and M > 1 else ""
    return Estimate(
        x=np.array(x, dtype=float),
        value=value,
        std_error=std_error,
        ci_lo=lo,
        ci_hi=hi,
        M=M,
        max_log_weight=float(stats.max_log[p]),
        log_value=log_value,
        note=note,
    )


def estimate_point(
    model: FilteringModel,
    obs: SignalObservationPath,
    x,
    config: EstimatorConfig,
    streams=None,
    workers: int = 1,
) -> Estimate:
    """Monte Carlo estimate of the unnormalized filter density at ``x``."""
    if config.M < 2:
        raise InvalidParameterError("a confidence interval needs M >= 2")
    x = _as_point(model, x)
    return estimate_grid(model, obs, x[None], config, streams=streams, workers=workers)[0]


# -- output -----------------------------------------------------------------


def _fmt(v: float) -> str:
    return repr(float(v))


def write_estimates_csv(estimates: list[Estimate], fh: TextIO, metadata=None) -> None:
    if not estimates:
        raise InvalidParameterError("no estimates to write")
    d = len(estimates[0].x)
    fh.write(format_metadata(metadata))
    header = [f"x_{j + 1}" for j in range(d)] + ["value", "std_error", "ci_lo", "ci_hi"]
    fh.write(",".join(header) + "\n")
    for e in estimates:
        row = [_fmt(v) for v in e.x] + [_fmt(e.value), _fmt(e.std_error), _fmt(e.ci_lo), _fmt(e.ci_hi)]
        fh.write(",".join(row) + "\n")


def write_estimates_json(estimates: list[Estimate], fh: TextIO, metadata=None) -> None:
    doc = {
        "metadata": metadata or {},
        "estimates": [e.as_dict() for e in estimates],
    }
    json.dump(doc, fh, indent=2, default=_json_default)
    fh.write("\n")


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")
