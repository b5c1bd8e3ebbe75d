"""Filtering models: coefficient bundles for a Zakai problem.

A model describes the signal ``dY = mu(Y) dt + sigma dW`` observed through
``dZ = h(Y) dt + dV``. All user-supplied callables operate on batches: ``x``
has shape ``(..., d)`` and results keep the leading batch shape.

The regularity the Monte Carlo representation relies on (bounded derivatives
of ``mu`` up to third order, of ``h`` up to fourth order, polynomially growing
derivatives of ``phi``) is a documented contract and is not checked at run
time. :func:`check_model_consistency` only verifies first derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DimensionError, InvalidParameterError

Array = np.ndarray


def _default_dh_vjp(dh: Callable[[Array], Array]) -> Callable[[Array, Array], Array]:
    def vjp(x: Array, z: Array) -> Array:
        # Dh(x)^T z with Dh of shape (..., k, d)
        return np.einsum("...kd,...k->...d", dh(x), z)

    return vjp


@dataclass(frozen=True)
class FilteringModel:
    """Coefficients of one Zakai filtering problem.

    Parameters
    ----------
    d, k : int
        Signal and observation dimensions.
    sigma : (d, d) array
        Constant diffusion matrix of the signal.
    mu : callable ``(..., d) -> (..., d)``
        Signal drift.
    div_mu : callable ``(..., d) -> (...)``
        Divergence of ``mu``.
    h : callable ``(..., d) -> (..., k)``
        Observation function.
    dh : callable ``(..., d) -> (..., k, d)``
        Jacobian of ``h``.
    trace_hess_h : callable ``((..., d), (k,)) -> (...)``
        ``Tr(sigma sigma^T Hess_x <h(x), z>)``.
    log_phi : callable ``(..., d) -> (...)``
        Log of the initial density; ``-inf`` where the density vanishes.
    dh_vjp : callable ``((..., d), (k,)) -> (..., d)``, optional
        Fast path for ``Dh(x)^T z``. Derived from ``dh`` when omitted. May
        return an array that merely broadcasts against ``x``.
    """

    d: int
    k: int
    sigma: Array
    mu: Callable[[Array], Array]
    div_mu: Callable[[Array], Array]
    h: Callable[[Array], Array]
    dh: Callable[[Array], Array]
    trace_hess_h: Callable[[Array, Array], Array]
    log_phi: Callable[[Array], Array]
    dh_vjp: Callable[[Array, Array], Array] | None = None
    diffusion: Array = field(init=False, repr=False)

    def __post_init__(self):
        if int(self.d) < 1 or int(self.k) < 1:
            raise InvalidParameterError(f"dimensions must be positive, got d={self.d}, k={self.k}")
        sigma = np.array(self.sigma, dtype=float)
        if sigma.shape != (self.d, self.d):
            raise DimensionError(f"sigma must have shape ({self.d}, {self.d}), got {sigma.shape}")
        sigma.setflags(write=False)
        a = sigma @ sigma.T
        a.setflags(write=False)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "diffusion", a)
        if self.dh_vjp is None:
            object.__setattr__(self, "dh_vjp", _default_dh_vjp(self.dh))

    def check_point(self, x) -> Array:
        x = np.asarray(x, dtype=float)
        if x.ndim == 0 or x.shape[-1] != self.d:
            raise DimensionError(f"expected points with trailing dimension {self.d}, got shape {x.shape}")
        return x

    def check_observation(self, z) -> Array:
        z = np.asarray(z, dtype=float)
        if z.ndim == 0 or z.shape[-1] != self.k:
            raise DimensionError(f"expected observation values of length {self.k}, got shape {z.shape}")
        return z


@dataclass(frozen=True)
class ExampleModelParams:
    """Parameters of the benchmark model with bounded radial drift.

    ``mu(x) = beta x / (1 + |x|^2)``, ``h(x) = gamma x``, ``sigma_ij = d^{-1/2}``
    and a centred Gaussian initial density with precision ``alpha``.
    """

    d: int = 1
    alpha: float = 2.0 * np.pi
    beta: float = 0.25
    gamma: float = 1.0

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise InvalidParameterError(f"d must be a positive integer, got {self.d!r}")
        if not (np.isfinite(self.alpha) and self.alpha > 0):
            raise InvalidParameterError(f"alpha must be positive, got {self.alpha!r}")
        if not (np.isfinite(self.beta) and np.isfinite(self.gamma)):
            raise InvalidParameterError("beta and gamma must be finite")

    def sigma(self) -> Array:
        return np.full((self.d, self.d), self.d ** -0.5)


def build_example_model(params: ExampleModelParams) -> FilteringModel:
    """Build the :class:`FilteringModel` for the benchmark problem."""
    d = params.d
    alpha, beta, gamma = float(params.alpha), float(params.beta), float(params.gamma)
    log_norm = 0.5 * d * np.log(alpha / (2.0 * np.pi))

    def mu(x):
        r2 = np.sum(x * x, axis=-1, keepdims=True)
        return beta * x / (1.0 + r2)

    def div_mu(x):
        r2 = np.sum(x * x, axis=-1)
        q = 1.0 / (1.0 + r2)
        return d * beta * q - 2.0 * beta * r2 * q * q

    def h(x):
        return gamma * np.asarray(x, dtype=float)

    def dh(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(gamma * np.eye(d), x.shape[:-1] + (d, d))

    def dh_vjp(x, z):
        # Dh = gamma I does not depend on x
        return gamma * np.asarray(z, dtype=float)

    def trace_hess_h(x, z):
        return np.zeros(np.shape(x)[:-1])

    def log_phi(x):
        return log_norm - 0.5 * alpha * np.sum(x * x, axis=-1)

    return FilteringModel(
        d=d,
        k=d,
        sigma=params.sigma(),
        mu=mu,
        div_mu=div_mu,
        h=h,
        dh=dh,
        trace_hess_h=trace_hess_h,
        log_phi=log_phi,
        dh_vjp=dh_vjp,
    )


def drift_R(model: FilteringModel, z, x) -> Array:
    """Drift ``sigma sigma^T Dh(x)^T z - mu(x)`` of the auxiliary process."""
    x = model.check_point(x)
    z = model.check_observation(z)
    v = np.asarray(model.dh_vjp(x, z), dtype=float)
    return v @ model.diffusion - model.mu(x)


def B_general(model: FilteringModel, z, x) -> Array:
    """Potential term of the Feynman-Kac weight for an arbitrary model.

    Returns ``1/2 |sigma^T Dh^T z|^2 - 1/2 |h|^2 + 1/2 Tr(sigma sigma^T Hess<h, z>)
    - <mu, Dh^T z> - div mu`` evaluated at ``x``; ``z`` is the observation
    value at the relevant instant.
    """
    x = model.check_point(x)
    z = model.check_observation(z)
    v = np.asarray(model.dh_vjp(x, z), dtype=float)
    s = v @ model.sigma
    hx = model.h(x)
    mux = model.mu(x)
    return (
        0.5 * np.sum(s * s, axis=-1)
        - 0.5 * np.sum(hx * hx, axis=-1)
        + 0.5 * model.trace_hess_h(x, z)
        - np.sum(mux * v, axis=-1)
        - model.div_mu(x)
    )


def B_example(params: ExampleModelParams, sigma, z, x) -> Array:
    """Closed-form potential for the benchmark model (independent of :func:`B_general`)."""
    sigma = np.asarray(sigma, dtype=float)
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    d = params.d
    if sigma.shape != (d, d) or x.shape[-1] != d or z.shape[-1] != d:
        raise DimensionError(
            f"shapes sigma={sigma.shape}, z={z.shape}, x={x.shape} do not match d={d}"
        )
    beta, gamma = params.beta, params.gamma
    sz = z @ sigma
    r2 = np.sum(x * x, axis=-1)
    q = 1.0 / (1.0 + r2)
    return (
        0.5 * gamma**2 * np.sum((sz + x) * (sz - x), axis=-1)
        - beta * gamma * q * np.sum(x * z, axis=-1)
        - d * beta * q
        + 2.0 * beta * r2 * q * q
    )


@dataclass(frozen=True)
class ConsistencyReport:
    dh_deviation: float
    div_mu_deviation: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.dh_deviation <= self.tol and self.div_mu_deviation <= self.tol


def check_model_consistency(model: FilteringModel, x, step: float = 1e-5, tol: float = 1e-6) -> ConsistencyReport:
    """Compare ``dh`` and ``div_mu`` against central finite differences at ``x``."""
    if not step > 0 or not tol > 0:
        raise InvalidParameterError("step and tol must be positive")
    x = model.check_point(x)
    if x.ndim != 1:
        raise DimensionError("check_model_consistency takes a single point")
    jac = np.empty((model.k, model.d))
    div = 0.0
    for j in range(model.d):
        e = np.zeros(model.d)
        e[j] = step
        jac[:, j] = (model.h(x + e) - model.h(x - e)) / (2 * step)
        div += (model.mu(x + e)[j] - model.mu(x - e)[j]) / (2 * step)
    dh_dev = float(np.max(np.abs(np.asarray(model.dh(x)) - jac)))
    div_dev = float(abs(float(model.div_mu(x)) - div))
    return ConsistencyReport(dh_deviation=dh_dev, div_mu_deviation=div_dev, tol=tol)
