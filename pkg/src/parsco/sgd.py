"""Warm-started composite SGD for quadratic-plus-linear regularized objectives.

The target problem is min_x <g + v, x> + ||x - z||^2_H + (Lambda/2) ||x||^2,
split as h1(x) = <g, x> + ||x - z||^2_H (stochastic access only) and
h2(x) = <v, x> + (Lambda/2) ||x||^2 (exact prox).  `unconstrained_sgd` is the
generic loop; `unconstrained_sgd_conv` is the Gaussian-smoothing
specialization whose estimator samples are all drawn in one oracle round and
whose iterate recursion is an affine rank-1 recurrence, so the whole
trajectory is delegated to the prefix engine (chunk size S per solve).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from parsco.core import OracleHandle, RngStream
from parsco.rank1 import Rank1Recurrence, solve_all_batch

__all__ = [
    "CompositeSgdConfig",
    "ConvSamples",
    "unconstrained_sgd",
    "sgd_conv_step_closed_form",
    "unconstrained_sgd_conv",
    "sgd_conv_runs",
    "map_to_recurrence",
]


@dataclass
class CompositeSgdConfig:
    """Parameters of the composite SGD family.

    Lambda is the strong convexity of h2; (v, z) the linear part and anchor;
    L1, L2 the estimator moment parameters (E||g1(x)||^2 <= L1^2 +
    L2^2 ||x-z||^2, with L2 >= Lambda required by the analysis); rho the
    smoothing width for the convolution path; S the engine chunk size.

    The warm-started schedule is eta_t = 2 / (Lambda (t + T0)) with
    T0 = 8 L2^2 / Lambda^2, so eta_0 L2^2 = Lambda / 4 exactly.
    """

    Lambda: float
    v: np.ndarray
    z: np.ndarray
    T: int
    rho: float | None = None
    S: int | None = None
    L1: float = 0.0
    L2: float = 0.0
    x0_init: str = "half"  # "half": -v/(2 Lambda); "argmin": -v/Lambda exact h2 minimizer

    def __post_init__(self) -> None:
        self.v = np.asarray(self.v, dtype=np.float64)
        self.z = np.asarray(self.z, dtype=np.float64)
        if self.Lambda <= 0:
            raise ValueError("Lambda must be positive")
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.v.shape != self.z.shape or self.v.ndim != 1:
            raise ValueError("v and z must be same-length vectors")
        if self.rho is not None and self.rho <= 0:
            raise ValueError("rho must be positive when given")
        if self.L1 < 0 or self.L2 < 0:
            raise ValueError("L1 and L2 must be nonnegative")
        if self.L2 < self.Lambda:
            raise ValueError("L2 >= Lambda is required by the step-size analysis")
        if self.S is not None and not (1 <= self.S <= self.T):
            raise ValueError("chunk S must satisfy 1 <= S <= T")
        if self.x0_init not in ("half", "argmin"):
            raise ValueError("x0_init must be 'half' or 'argmin'")

    @classmethod
    def for_smoothed(cls, L, rho, Lambda, z, v, T, S=None, x0_init="half"):
        """Moment parameters of the two-query smoothing estimator:
        L1^2 = 2 L^2 and L2^2 = 8 L^2 / rho^2 (raised to Lambda if smaller,
        which is still a valid moment bound and keeps the schedule sane)."""
        L2 = max(math.sqrt(8.0) * L / rho, Lambda)
        return cls(
            Lambda=Lambda, v=v, z=z, T=T, rho=rho, S=S,
            L1=math.sqrt(2.0) * L, L2=L2, x0_init=x0_init,
        )

    @property
    def d(self) -> int:
        return self.v.shape[0]

    @property
    def T0(self) -> float:
        return 8.0 * self.L2 * self.L2 / (self.Lambda * self.Lambda)

    def eta(self, t: int) -> float:
        return 2.0 / (self.Lambda * (t + self.T0))

    def etas(self) -> np.ndarray:
        return 2.0 / (self.Lambda * (np.arange(self.T) + self.T0))

    def x0(self) -> np.ndarray:
        scale = 2.0 if self.x0_init == "half" else 1.0
        return -self.v / (scale * self.Lambda)


@dataclass
class ConvSamples:
    """Pre-drawn randomness of one run: xi_t ~ N(0, rho^2 I), g_t = g(xi_t),
    g'_t = g(z - xi_t), each of shape (T, d)."""

    xi: np.ndarray
    g: np.ndarray
    g_prime: np.ndarray

    def __post_init__(self) -> None:
        self.xi = np.asarray(self.xi, dtype=np.float64)
        self.g = np.asarray(self.g, dtype=np.float64)
        self.g_prime = np.asarray(self.g_prime, dtype=np.float64)
        if not (self.xi.shape == self.g.shape == self.g_prime.shape) or self.xi.ndim != 2:
            raise ValueError("xi, g, g_prime must share shape (T, d)")


def unconstrained_sgd(h2_minimizer, h2_prox, g1_sampler, config: CompositeSgdConfig) -> np.ndarray:
    """Generic composite SGD; returns the uniform average of x_0..x_{T-1}.

    h2_minimizer: the starting point argmin h2 (vector, or nullary callable).
    h2_prox: (y, eta) -> argmin_x eta h2(x) + ||x - y||^2 / 2.
    g1_sampler: (x, t) -> one unbiased sample of grad h1(x).
    """
    x = np.asarray(h2_minimizer() if callable(h2_minimizer) else h2_minimizer, dtype=np.float64)
    acc = np.zeros_like(x)
    for t in range(config.T):
        acc += x
        eta = config.eta(t)
        g = np.asarray(g1_sampler(x, t), dtype=np.float64)
        x = np.asarray(h2_prox(x - eta * g, eta), dtype=np.float64)
    return acc / config.T


def sgd_conv_step_closed_form(x_t, eta_t, Lambda, v, g_prime, g, xi, z, rho) -> np.ndarray:
    """One explicit update:

    x_{t+1} = (x_t - eta v - eta g' - (2 eta / rho^2) <xi, x_t - z> g) / (1 + eta Lambda).
    """
    x_t = np.asarray(x_t, dtype=np.float64)
    coef = (2.0 * eta_t / (rho * rho)) * float(np.dot(xi, x_t - np.asarray(z, dtype=np.float64)))
    inner = x_t - eta_t * np.asarray(v, dtype=np.float64) - eta_t * np.asarray(g_prime, dtype=np.float64) - coef * np.asarray(g, dtype=np.float64)
    return inner / (1.0 + eta_t * Lambda)


def map_to_recurrence(samples: ConvSamples, config: CompositeSgdConfig) -> Rank1Recurrence:
    """Rewrite the explicit update as x_t = c_t (I - u_t v_t^T) x_{t-1} + w_t:

    c_t = 1/(1 + eta Lambda),  u_t = (2 eta / rho^2) g,  v_t = xi,
    w_t = -c_t (eta (v + g') - (2 eta / rho^2) <xi, z> g),

    with eta, g, g', xi taken at step index t-1.  Feeding the result to the
    sequential evaluator reproduces the explicit loop step for step.
    """
    if config.rho is None:
        raise ValueError("config.rho is required for the convolution recurrence")
    if samples.xi.shape != (config.T, config.d):
        raise ValueError(f"samples must have shape {(config.T, config.d)}")
    rho2 = config.rho * config.rho
    etas = config.etas()
    c = 1.0 / (1.0 + etas * config.Lambda)
    scale = (2.0 * etas / rho2)[:, None]
    u = scale * samples.g
    xi_dot_z = samples.xi @ config.z
    w = -c[:, None] * (
        etas[:, None] * (config.v[None, :] + samples.g_prime)
        - (scale * xi_dot_z[:, None]) * samples.g
    )
    return Rank1Recurrence(x0=config.x0(), c=c, u=u, v=samples.xi, w=w)


def sgd_conv_runs(
    oracle: OracleHandle,
    config: CompositeSgdConfig,
    streams: list[RngStream],
    backend=None,
) -> np.ndarray:
    """k independent runs sharing one oracle round; returns (k, d) averages.

    All k*T Gaussians are drawn up front and all 2kT queries {xi} and {z - xi}
    are submitted as a single batch, so query depth is 1 and query count 2kT
    regardless of k.  Iterates come from the prefix engine in chunks of S.
    """
    if config.rho is None:
        raise ValueError("config.rho is required")
    if not streams:
        raise ValueError("at least one stream required")
    k, T, d = len(streams), config.T, config.d
    xis = np.stack([config.rho * s.standard_normal((T, d)) for s in streams])
    flat = xis.reshape(k * T, d)
    queries = np.concatenate([flat, config.z[None, :] - flat], axis=0)
    samples = oracle.submit_batch(queries)
    g = samples[: k * T].reshape(k, T, d)
    gp = samples[k * T :].reshape(k, T, d)
    recs = [map_to_recurrence(ConvSamples(xis[i], g[i], gp[i]), config) for i in range(k)]
    outs = solve_all_batch(recs, backend=backend, chunk=config.S or T, ledger=oracle.ledger)
    x0 = config.x0()
    return np.stack([(x0 + out[: T - 1].sum(axis=0)) / T for out in outs])


def unconstrained_sgd_conv(
    oracle: OracleHandle,
    config: CompositeSgdConfig,
    stream: RngStream,
    backend=None,
) -> np.ndarray:
    """Single run of the smoothed-estimator SGD; returns x_avg.

    Query depth 1 (one round of 2T queries); the stream is consumed directly
    for the T Gaussian draws, so runs are reproducible from (seed, label).
    """
    return sgd_conv_runs(oracle, config, [stream], backend=backend)[0]
