"""Counter-based random streams keyed by ``(seed, stream_id)``.

Every stream is a Philox-4x64 generator whose key is the run seed and whose
256-bit counter starts at ``stream_id << 192``. Streams therefore occupy
disjoint counter ranges, and the value of any draw is a pure function of
``(seed, stream_id, draw index)``; no state is shared between workers.

Stream layout used throughout the package::

    0        initial signal state Y_0
    1        signal noise W
    2        observation noise V
    3 + i    auxiliary noise U for Monte Carlo sample i
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError

INITIAL_STREAM = 0
SIGNAL_STREAM = 1
OBSERVATION_STREAM = 2
SAMPLE_STREAM_OFFSET = 3

_U64 = 2**64


def _check_u64(name: str, value: int) -> int:
    value = int(value)
    if not 0 <= value < _U64:
        raise InvalidParameterError(f"{name} must be an unsigned 64-bit integer, got {value}")
    return value


class GaussianStream:
    """Standard normal draws from one counter range."""

    def __init__(self, seed: int, stream_id: int):
        bitgen = np.random.Philox(key=seed, counter=[0, 0, 0, stream_id])
        self._gen = np.random.Generator(bitgen)

    def normal(self, shape) -> np.ndarray:
        return self._gen.standard_normal(shape)


class ZeroStream:
    """Test stream whose every Gaussian draw is exactly zero."""

    def normal(self, shape) -> np.ndarray:
        return np.zeros(shape)


@dataclass(frozen=True)
class RngStreamSpec:
    seed: int
    stream_id: int

    def __post_init__(self):
        _check_u64("seed", self.seed)
        _check_u64("stream_id", self.stream_id)

    def stream(self) -> GaussianStream:
        return GaussianStream(self.seed, self.stream_id)


class StreamFamily:
    """Factory for all streams belonging to one seed."""

    def __init__(self, seed: int):
        self.seed = _check_u64("seed", seed)

    def stream(self, stream_id: int) -> GaussianStream:
        return RngStreamSpec(self.seed, stream_id).stream()

    def sample_stream(self, i: int) -> GaussianStream:
        return self.stream(SAMPLE_STREAM_OFFSET + i)

    def __repr__(self):
        return f"StreamFamily(seed={self.seed})"


class ZeroStreamFamily:
    """Stream family that yields :class:`ZeroStream` for every id."""

    def stream(self, stream_id: int) -> ZeroStream:
        return ZeroStream()

    def sample_stream(self, i: int) -> ZeroStream:
        return ZeroStream()


def gaussian_vector(stream, n: int) -> np.ndarray:
    """``n`` independent standard normal variates from ``stream``."""
    return stream.normal(int(n))


def derive_seed(seed: int, *path: int) -> int:
    """Deterministic child seed, e.g. one per (dimension, realization) pair."""
    ss = np.random.SeedSequence(_check_u64("seed", seed), spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
