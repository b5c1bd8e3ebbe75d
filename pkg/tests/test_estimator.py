import dataclasses
import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zakai import (
    Q975,
    EstimatorConfig,
    ExampleModelParams,
    InvalidParameterError,
    SignalObservationPath,
    SimulationError,
    StreamFamily,
    TimeGrid,
    ZeroStreamFamily,
    build_example_model,
    confidence_interval,
    estimate_grid,
    estimate_point,
    sample_log_weight,
    simulate_R_path,
    simulate_signal_observation,
)
from zakai.estimator import write_estimates_csv, write_estimates_json
from zakai.rng import ZeroStream

from conftest import linear_model


def hand_obs():
    return SignalObservationPath(TimeGrid(0.5, 1), None, np.array([[0.0], [0.2]]))


@pytest.fixture(scope="module")
def paper_obs():
    p = ExampleModelParams(d=1)
    m = build_example_model(p)
    return m, simulate_signal_observation(m, TimeGrid(0.5, 50), p.alpha, StreamFamily(31))


# -- auxiliary path ---------------------------------------------------------


def test_R_path_static_without_drift_or_noise():
    m = linear_model(d=2)
    obs = SignalObservationPath(TimeGrid(1.0, 5), None, np.zeros((6, 2)))
    path = simulate_R_path(m, obs, np.array([0.3, -0.4]), ZeroStream())
    np.testing.assert_array_equal(path, np.tile([0.3, -0.4], (6, 1)))


def test_R_single_hand_step_uses_last_observation():
    m = build_example_model(ExampleModelParams(d=1, beta=0.0, gamma=1.0))
    path = simulate_R_path(m, hand_obs(), np.array([1.0]), ZeroStream())
    assert path[0, 0] == 1.0
    assert path[1, 0] == pytest.approx(1.1, abs=1e-15)


def test_R_reverses_observation_index():
    m = build_example_model(ExampleModelParams(d=1, beta=0.0, gamma=1.0))
    Z = np.array([[0.0], [1.0], [3.0], [6.0]])
    obs = SignalObservationPath(TimeGrid(3.0, 3), None, Z)
    path = simulate_R_path(m, obs, np.array([0.0]), ZeroStream())
    # step n adds Z_{N-n+1} dt with dt = 1
    np.testing.assert_allclose(path[:, 0], [0.0, 6.0, 9.0, 10.0])


def test_R_endpoint_variance_is_brownian():
    m = build_example_model(ExampleModelParams(d=1, beta=0.0, gamma=0.0))
    obs = SignalObservationPath(TimeGrid(0.5, 4), None, np.zeros((5, 1)))
    fam = StreamFamily(13)
    ends = np.array([simulate_R_path(m, obs, np.array([0.2]), fam.sample_stream(i))[-1, 0] for i in range(20_000)])
    assert np.var(ends - 0.2, ddof=1) == pytest.approx(0.5 * m.diffusion[0, 0], rel=0.05)


# -- single sample ------------------------------------------------------------


def test_log_weight_all_terms_vanish():
    m = build_example_model(ExampleModelParams(d=1, alpha=2 * np.pi, beta=0.0, gamma=0.0))
    assert sample_log_weight(m, hand_obs(), np.array([0.0]), ZeroStream()) == pytest.approx(0.0, abs=1e-15)


def test_log_weight_hand_computation():
    m = build_example_model(ExampleModelParams(d=1, alpha=2 * np.pi, beta=0.0, gamma=1.0))
    lw = sample_log_weight(m, hand_obs(), np.array([1.0]), ZeroStream())
    # trapezoid 0.25 * [B_0(1.1) + B_1(1)] = 0.25 * [-0.605 - 0.48]
    expected = -math.pi * 1.21 - 0.27125 + 0.2
    assert lw == pytest.approx(expected, abs=1e-13)
    assert lw == pytest.approx(-3.872577, abs=1e-6)
    assert math.exp(lw) == pytest.approx(0.0208047, abs=1e-7)


def test_weights_nonnegative(paper_obs):
    m, obs = paper_obs
    for i in range(20):
        assert math.exp(sample_log_weight(m, obs, obs.Y_N, StreamFamily(1).sample_stream(i))) >= 0


# -- point estimates ------------------------------------------------------------


def test_identical_samples_give_phi():
    p = ExampleModelParams(d=1, beta=0.0, gamma=0.0)
    m = build_example_model(p)
    obs = SignalObservationPath(TimeGrid(0.5, 10), None, np.zeros((11, 1)))
    x = np.array([0.4])
    e = estimate_point(m, obs, x, EstimatorConfig(M=37), streams=ZeroStreamFamily())
    phi = math.exp(m.log_phi(x))
    assert e.value == phi
    assert e.std_error == 0.0
    assert e.ci_lo == e.ci_hi == phi
    assert e.note


def test_two_sample_formulas(paper_obs):
    m, obs = paper_obs
    x = obs.Y_N
    fam = StreamFamily(21)
    w1, w2 = (math.exp(sample_log_weight(m, obs, x, fam.sample_stream(i))) for i in range(2))
    e = estimate_point(m, obs, x, EstimatorConfig(M=2, seed=21))
    assert e.value == pytest.approx((w1 + w2) / 2, rel=1e-14)
    s2 = (w1 - w2) ** 2 / 2
    assert e.std_error == pytest.approx(math.sqrt(s2 / 2), rel=1e-12)


def test_estimate_needs_two_samples(paper_obs):
    m, obs = paper_obs
    with pytest.raises(InvalidParameterError):
        estimate_point(m, obs, obs.Y_N, EstimatorConfig(M=1))


def test_estimate_invariants(paper_obs):
    m, obs = paper_obs
    e = estimate_point(m, obs, obs.Y_N, EstimatorConfig(M=500, seed=3))
    assert e.value >= 0
    assert e.ci_lo <= e.value <= e.ci_hi
    assert e.ci_hi - e.ci_lo == pytest.approx(2 * Q975 * e.std_error, rel=1e-12)


def test_gaussian_convolution_closed_form():
    p = ExampleModelParams(d=1, alpha=2 * np.pi, beta=0.0, gamma=0.0)
    m = build_example_model(p)
    obs = SignalObservationPath(TimeGrid(0.5, 100), None, np.zeros((101, 1)))
    e = estimate_point(m, obs, np.zeros(1), EstimatorConfig(M=20_000, seed=8))
    exact = (2 * np.pi * (1 / (2 * np.pi) + 0.5)) ** -0.5
    assert abs(e.value - exact) <= 4 * e.std_error


def test_small_horizon_recovers_initial_density():
    p = ExampleModelParams(d=1)
    m = build_example_model(p)
    obs = simulate_signal_observation(m, TimeGrid(1e-3, 4), p.alpha, StreamFamily(6))
    for x in (np.zeros(1), np.ones(1)):
        e = estimate_point(m, obs, x, EstimatorConfig(M=5000, seed=6))
        target = math.exp(m.log_phi(x) + float(m.h(x) @ obs.Z_N))
        assert abs(e.value - target) <= 5 * e.std_error + 0.01 * math.exp(m.log_phi(x))


def test_blowup_aborts_estimate(paper_obs):
    m, obs = paper_obs
    bad = dataclasses.replace(m, mu=lambda x: np.where(np.abs(x) > 0, np.inf, 0.0))
    with pytest.raises(SimulationError):
        estimate_point(bad, obs, obs.Y_N, EstimatorConfig(M=4))


# -- invariance ---------------------------------------------------------------


@pytest.mark.parametrize("chunk", [1, 3, 64, 256, 300, 1000])
def test_chunk_size_invariance(paper_obs, chunk):
    m, obs = paper_obs
    pts = np.array([obs.Y_N, [0.0], [1.5]])
    ref = estimate_grid(m, obs, pts, EstimatorConfig(M=1000, seed=4, chunk_size=1000))
    got = estimate_grid(m, obs, pts, EstimatorConfig(M=1000, seed=4, chunk_size=chunk))
    for a, b in zip(ref, got):
        assert (a.value, a.std_error, a.ci_lo, a.ci_hi) == (b.value, b.std_error, b.ci_lo, b.ci_hi)


@pytest.mark.parametrize("workers", [2, 5])
def test_worker_invariance(paper_obs, workers):
    m, obs = paper_obs
    cfg = EstimatorConfig(M=900, seed=4, chunk_size=50)
    a = estimate_point(m, obs, obs.Y_N, cfg)
    b = estimate_point(m, obs, obs.Y_N, cfg, workers=workers)
    assert (a.value, a.std_error) == (b.value, b.std_error)


def test_chunk_invariance_multidimensional():
    p = ExampleModelParams(d=5)
    m = build_example_model(p)
    obs = simulate_signal_observation(m, TimeGrid(0.5, 20), p.alpha, StreamFamily(2))
    a = estimate_point(m, obs, obs.Y_N, EstimatorConfig(M=600, seed=1, chunk_size=600))
    b = estimate_point(m, obs, obs.Y_N, EstimatorConfig(M=600, seed=1, chunk_size=17))
    assert (a.value, a.std_error) == (b.value, b.std_error)


@pytest.mark.parametrize("d", [1, 2, 5])
def test_accumulation_modes_agree(d):
    p = ExampleModelParams(d=d)
    m = build_example_model(p)
    obs = simulate_signal_observation(m, TimeGrid(0.5, 40), p.alpha, StreamFamily(d))
    for x in (obs.Y_N, obs.Z_N / 0.5):
        a = estimate_point(m, obs, x, EstimatorConfig(M=2000, seed=9, accumulation_mode="plain"))
        b = estimate_point(m, obs, x, EstimatorConfig(M=2000, seed=9, accumulation_mode="log-sum-exp"))
        assert a.value == pytest.approx(b.value, rel=1e-10)
        assert a.std_error == pytest.approx(b.std_error, rel=1e-10)


def test_log_sum_exp_survives_underflow():
    # every weight is below the smallest double; only the shifted mode can represent the mean
    p = ExampleModelParams(d=1, alpha=2 * np.pi, beta=0.0, gamma=0.0)
    m = build_example_model(p)
    shifted = dataclasses.replace(m, log_phi=lambda x: m.log_phi(x) - 800.0)
    obs = SignalObservationPath(TimeGrid(0.5, 10), None, np.zeros((11, 1)))
    plain = estimate_point(shifted, obs, np.zeros(1), EstimatorConfig(M=200, accumulation_mode="plain"))
    lse = estimate_point(shifted, obs, np.zeros(1), EstimatorConfig(M=200))
    assert plain.value == 0.0 and plain.log_value == -math.inf
    assert lse.max_log_weight < -700
    ref = estimate_point(m, obs, np.zeros(1), EstimatorConfig(M=200))
    assert lse.log_value == pytest.approx(math.log(ref.value) - 800.0, abs=1e-10)


@settings(max_examples=10, deadline=None)
@given(c=st.floats(-5, 5), seed=st.integers(0, 1000))
def test_linearity_in_initial_density(paper_obs, c, seed):
    m, obs = paper_obs
    shifted = dataclasses.replace(m, log_phi=lambda x: m.log_phi(x) + c)
    cfg = EstimatorConfig(M=300, seed=seed)
    a = estimate_point(m, obs, obs.Y_N, cfg)
    b = estimate_point(shifted, obs, obs.Y_N, cfg)
    f = math.exp(c)
    for u, v in ((a.value, b.value), (a.std_error, b.std_error), (a.ci_lo, b.ci_lo), (a.ci_hi, b.ci_hi)):
        assert v == pytest.approx(f * u, rel=1e-12, abs=1e-300)


# -- grids --------------------------------------------------------------------


def test_single_point_grid_matches_point(paper_obs):
    m, obs = paper_obs
    cfg = EstimatorConfig(M=700, seed=2, chunk_size=100)
    (g,) = estimate_grid(m, obs, obs.Y_N[None], cfg)
    p = estimate_point(m, obs, obs.Y_N, cfg)
    assert g == p or (g.value, g.std_error, g.ci_lo, g.ci_hi) == (p.value, p.std_error, p.ci_lo, p.ci_hi)


def test_duplicate_points_identical(paper_obs):
    m, obs = paper_obs
    a, b = estimate_grid(m, obs, np.array([[0.3], [0.3]]), EstimatorConfig(M=300, seed=5))
    assert (a.value, a.std_error) == (b.value, b.std_error)


def test_grid_curve_single_mode_near_signal():
    p = ExampleModelParams(d=1)
    m = build_example_model(p)
    obs = simulate_signal_observation(m, TimeGrid(0.5, 20), p.alpha, StreamFamily(101))
    y = obs.Y_N[0]
    xs = np.linspace(y - 5, y + 5, 1024)
    est = estimate_grid(m, obs, xs[:, None], EstimatorConfig(M=2000, seed=3, chunk_size=250))
    v = np.array([e.value for e in est])
    assert np.all(v >= 0)
    peak = int(np.argmax(v))
    assert abs(xs[peak] - y) < 1.5
    # shared increments make the curve smooth: increasing then decreasing
    assert np.all(np.diff(v[: peak + 1]) >= -1e-12 * v.max())
    assert np.all(np.diff(v[peak:]) <= 1e-12 * v.max())


# -- confidence intervals ---------------------------------------------------------


def test_confidence_interval_examples():
    assert confidence_interval(0.3, 0.0, 1000) == (0.3, 0.3)
    lo, hi = confidence_interval(0.5, 0.01, 10_000)
    assert (round(lo, 6), round(hi, 6)) == (0.49804, 0.50196)
    lo, hi = confidence_interval(0.0, 1.0, 4)
    assert lo == pytest.approx(-0.979982, abs=1e-6) and hi == pytest.approx(0.979982, abs=1e-6)
    with pytest.raises(InvalidParameterError):
        confidence_interval(0.0, -1e-9, 10)


def test_config_validation():
    with pytest.raises(InvalidParameterError):
        EstimatorConfig(M=0)
    with pytest.raises(InvalidParameterError):
        EstimatorConfig(M=10, accumulation_mode="fast")
    assert EstimatorConfig(M=10, chunk_size=50).chunk_size == 10


# -- output -------------------------------------------------------------------


def test_csv_and_json_writers(paper_obs):
    m, obs = paper_obs
    est = estimate_grid(m, obs, np.array([[0.0], [1.0]]), EstimatorConfig(M=50, seed=1))
    buf = io.StringIO()
    write_estimates_csv(est, buf, {"run": {"seed": 1}})
    lines = buf.getvalue().splitlines()
    assert lines[:3] == ["# [run]", "# seed = 1", "x_1,value,std_error,ci_lo,ci_hi"]
    row = [float(v) for v in lines[3].split(",")]
    assert row[1] == est[0].value and row[2] == est[0].std_error
    buf = io.StringIO()
    write_estimates_json(est, buf, {"run": {"seed": 1, "M": 50}})
    doc = json.loads(buf.getvalue())
    assert doc["metadata"]["run"]["M"] == 50
    assert doc["estimates"][1]["x"] == [1.0]
    assert doc["estimates"][1]["value"] == est[1].value
