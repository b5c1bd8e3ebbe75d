import numpy as np
import pytest

from zakai import ExampleModelParams, FilteringModel, build_example_model


class FixedStream:
    """Returns preset draws (reshaped) instead of random numbers."""

    def __init__(self, values):
        self.values = np.asarray(values, dtype=float)

    def normal(self, shape):
        return np.broadcast_to(self.values, shape).copy() if self.values.ndim == 0 else self.values.reshape(shape).copy()


class FixedFamily:
    def __init__(self, by_id, default=0.0):
        self.by_id = by_id
        self.default = default

    def stream(self, stream_id):
        return FixedStream(self.by_id.get(stream_id, self.default))

    def sample_stream(self, i):
        return self.stream(3 + i)


def linear_model(d=1, sigma=1.0):
    """h(x) = x, mu = 0: the smallest nontrivial model."""
    return FilteringModel(
        d=d,
        k=d,
        sigma=sigma * np.eye(d),
        mu=lambda x: np.zeros_like(x),
        div_mu=lambda x: np.zeros(np.shape(x)[:-1]),
        h=lambda x: np.asarray(x, dtype=float),
        dh=lambda x: np.broadcast_to(np.eye(d), np.shape(x)[:-1] + (d, d)),
        trace_hess_h=lambda x, z: np.zeros(np.shape(x)[:-1]),
        log_phi=lambda x: -0.5 * np.sum(x * x, axis=-1) - 0.5 * d * np.log(2 * np.pi),
    )


@pytest.fixture
def paper_params():
    return ExampleModelParams(d=1, alpha=2 * np.pi, beta=0.25, gamma=1.0)


@pytest.fixture
def paper_model(paper_params):
    return build_example_model(paper_params)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
