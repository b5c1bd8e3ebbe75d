"""Independent reference solutions used to validate the Monte Carlo estimator.

* :func:`kalman_bucy_density` -- exact Gaussian filter for the linear case
  (``beta = 0``), run on the discretized observation increments.
* :func:`crank_nicolson_random_pde` -- finite differences for the pathwise
  parabolic PDE in one dimension.
* :func:`check_conjugation_identity` -- numerical check of the identity
  ``e^{-f} L(e^f g) = L g + <a grad f, grad g> + (1/2 <a grad f, grad f> + L f) g``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy.linalg import solve_banded

from .estimator import Estimate
from .errors import DimensionError, InvalidParameterError, SimulationError
from .model import B_general, ExampleModelParams, FilteringModel, drift_R
from .simulate import SignalObservationPath


@dataclass(frozen=True)
class KalmanState:
    mean: np.ndarray
    cov: np.ndarray


def kalman_steps(params: ExampleModelParams, obs: SignalObservationPath):
    """Yield the filter state after each observation increment.

    Predict: ``P += sigma sigma^T dt``. Update with ``dZ_n = gamma dt Y_n + noise``,
    noise covariance ``dt I``.
    """
    if params.beta != 0:
        raise InvalidParameterError("the Kalman oracle needs a linear signal (beta = 0)")
    d = params.d
    if obs.k != d:
        raise DimensionError(f"observation dimension {obs.k} does not match d={d}")
    dt = obs.grid.dt
    sigma = params.sigma()
    Q = sigma @ sigma.T * dt
    H = params.gamma * dt * np.eye(d)
    Rn = dt * np.eye(d)
    eye = np.eye(d)
    m = np.zeros(d)
    P = eye / params.alpha
    dZ = np.diff(obs.Z, axis=0)
    for n in range(obs.grid.N):
        P = P + Q
        S = H @ P @ H.T + Rn
        K = np.linalg.solve(S, H @ P).T
        m = m + K @ (dZ[n] - H @ m)
        # Joseph form keeps P positive semidefinite
        A = eye - K @ H
        P = A @ P @ A.T + K @ Rn @ K.T
        P = 0.5 * (P + P.T)
        yield KalmanState(mean=m, cov=P)


def kalman_filter(params: ExampleModelParams, obs: SignalObservationPath) -> KalmanState:
    """Posterior mean and covariance of ``Y_N`` given the discrete observations."""
    state = None
    for state in kalman_steps(params, obs):
        pass
    return state


def kalman_bucy_density(params: ExampleModelParams, obs: SignalObservationPath, points) -> np.ndarray:
    """Normalized posterior density ``N(m_N, P_N)`` evaluated at ``points``."""
    state = kalman_filter(params, obs)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[-1] != params.d:
        raise DimensionError(f"points must have trailing dimension {params.d}")
    diff = pts - state.mean
    L = np.linalg.cholesky(state.cov)
    sol = np.linalg.solve(L, diff.T)
    quad = np.sum(sol * sol, axis=0)
    log_det = 2.0 * np.sum(np.log(np.diag(L)))
    return np.exp(-0.5 * quad - 0.5 * log_det - 0.5 * params.d * np.log(2 * np.pi))


# -- 1-d Crank-Nicolson -----------------------------------------------------


@dataclass(frozen=True)
class PdeGrid1d:
    """Uniform space-time grid; ``values`` holds ``u(t_n, x_j)`` once solved.

    Boundary columns are homogeneous Dirichlet. As a rule of thumb, keep both
    ends at least six posterior standard deviations from the mass.
    """

    x_lo: float
    x_hi: float
    J: int
    N_t: int
    values: np.ndarray | None = None
    X_final: np.ndarray | None = None

    def __post_init__(self):
        if not self.x_lo < self.x_hi:
            raise InvalidParameterError("x_lo must be below x_hi")
        if self.J < 4:
            raise InvalidParameterError("J must be at least 4")
        if self.N_t < 0:
            raise InvalidParameterError("N_t must be nonnegative")

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_lo, self.x_hi, self.J + 1)

    @property
    def dx(self) -> float:
        return (self.x_hi - self.x_lo) / self.J


def crank_nicolson_random_pde(
    model: FilteringModel, obs: SignalObservationPath, grid: PdeGrid1d, blowup: float = 1e12
) -> PdeGrid1d:
    """Solve ``u_t = sigma^2/2 u_xx + b(t,x) u_x + B(t,x) u``, ``u(0) = phi``.

    ``b`` and ``B`` use the piecewise-linear interpolant of the observation
    path, sampled at half steps. The returned grid carries ``u`` on every time
    level and ``X_final = u(T, x) exp(<h(x), Z_N>)``.
    """
    if model.d != 1 or model.k != 1:
        raise DimensionError("the finite-difference oracle is one-dimensional")
    x = grid.x
    xi = x[1:-1, None]
    J, N_t = grid.J, grid.N_t
    T = obs.grid.T
    dx = grid.dx
    half_var = 0.5 * float(model.diffusion[0, 0])
    t_obs = obs.grid.times
    z_obs = obs.Z[:, 0]

    u = np.exp(model.log_phi(x[:, None]))
    u[0] = u[-1] = 0.0
    values = np.empty((N_t + 1, J + 1))
    values[0] = u

    if N_t > 0:
        dt = T / N_t
        diff_coef = half_var / dx**2
        for n in range(N_t):
            t_half = (n + 0.5) * dt
            z = np.array([np.interp(t_half, t_obs, z_obs)])
            b = drift_R(model, z, xi)[:, 0]
            pot = B_general(model, z, xi)
            lower = diff_coef - b / (2 * dx)
            upper = diff_coef + b / (2 * dx)
            diag = -2.0 * diff_coef + pot
            ui = u[1:-1]
            Lu = diag * ui
            Lu[1:] += lower[1:] * ui[:-1]
            Lu[:-1] += upper[:-1] * ui[1:]
            rhs = ui + 0.5 * dt * Lu
            ab = np.zeros((3, J - 1))
            ab[0, 1:] = -0.5 * dt * upper[:-1]
            ab[1] = 1.0 - 0.5 * dt * diag
            ab[2, :-1] = -0.5 * dt * lower[1:]
            u = np.zeros(J + 1)
            u[1:-1] = solve_banded((1, 1), ab, rhs)
            if not np.all(np.isfinite(u)) or np.max(np.abs(u)) > blowup:
                raise SimulationError(f"Crank-Nicolson solution blew up at time step {n + 1}", step=n + 1)
            values[n + 1] = u

    X_final = values[-1] * np.exp(np.sum(model.h(x[:, None]) * obs.Z[-1], axis=-1))
    return replace(grid, values=values, X_final=X_final)


def as_estimates(points, values, note: str = "oracle") -> list[Estimate]:
    """Wrap exact reference values so the estimate writers can export them.

    Standard error is zero and the interval collapses onto the value.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    vals = np.asarray(values, dtype=float).reshape(-1)
    if pts.shape[0] != vals.size:
        raise DimensionError(f"{pts.shape[0]} points but {vals.size} values")
    return [
        Estimate(x=p.copy(), value=float(v), std_error=0.0, ci_lo=float(v), ci_hi=float(v), M=0,
                 max_log_weight=np.nan, log_value=float(np.log(v)) if v > 0 else -np.inf, note=note)
        for p, v in zip(pts, vals)
    ]


# -- operator conjugation identity -----------------------------------------


def _grad(f, x, s):
    d = x.size
    g = np.empty(d)
    for i in range(d):
        e = np.zeros(d)
        e[i] = s
        g[i] = (f(x + e) - f(x - e)) / (2 * s)
    return g


def _hess(f, x, s):
    d = x.size
    H = np.empty((d, d))
    f0 = f(x)
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = s
        H[i, i] = (f(x + ei) - 2 * f0 + f(x - ei)) / s**2
        for j in range(i + 1, d):
            ej = np.zeros(d)
            ej[j] = s
            H[i, j] = H[j, i] = (
                f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)
            ) / (4 * s**2)
    return H


def generator_action(model: FilteringModel, w: Callable, x, fd_step: float) -> float:
    """``L w(x) = 1/2 Tr(a Hess w) - <mu, grad w>`` with finite differences."""
    x = np.asarray(x, dtype=float)
    a = model.diffusion
    return 0.5 * float(np.sum(a * _hess(w, x, fd_step))) - float(model.mu(x) @ _grad(w, x, fd_step))


def check_conjugation_identity(model: FilteringModel, f: Callable, g: Callable, x, fd_step: float) -> float:
    """Absolute residual of the conjugation identity at ``x``.

    ``f`` and ``g`` map a point of shape ``(d,)`` to a scalar.
    """
    if not fd_step > 0:
        raise InvalidParameterError("fd_step must be positive")
    x = np.asarray(x, dtype=float).reshape(model.d)
    a = model.diffusion

    def efg(y):
        return np.exp(f(y)) * g(y)

    lhs = np.exp(-f(x)) * generator_action(model, efg, x, fd_step)
    gf = _grad(f, x, fd_step)
    gg = _grad(g, x, fd_step)
    rhs = (
        generator_action(model, g, x, fd_step)
        + gf @ a @ gg
        + (0.5 * gf @ a @ gf + generator_action(model, f, x, fd_step)) * g(x)
    )
    return float(abs(lhs - rhs))
