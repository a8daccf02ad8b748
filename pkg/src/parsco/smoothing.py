"""Gaussian-convolution machinery.

For ``f_rho = f * gamma_rho`` (convolution with N(0, rho^2 I)) this module
provides the unbiased one-sample estimator of the linearization

    grad f_rho(z) + 2 grad^2 f_rho(0) (x - z),

built from two subgradient queries at ``z - xi`` and ``xi`` with
``xi ~ N(0, rho^2 I)``, plus Monte-Carlo value/Hessian estimators for
validation, the rho selection rule, and Hessian-stability certificates
(the "A within exp(eps_mul) of B plus eps_add I" relation between smoothed
Hessians at nearby points).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from parsco.core import OracleHandle, RngStream

__all__ = [
    "SmoothingParams",
    "StabilityCert",
    "rho_for_target",
    "smoothed_value_mc",
    "grad_estimator",
    "grad_estimator_batch",
    "grad_estimator_points",
    "hessian_mc",
    "check_approx",
    "stability_cert",
    "reg_stability_radius",
]


@dataclass(frozen=True)
class SmoothingParams:
    """Smoothing width rho of the Gaussian convolution."""

    rho: float

    def __post_init__(self) -> None:
        if not (self.rho > 0 and math.isfinite(self.rho)):
            raise ValueError("rho must be positive and finite")


@dataclass(frozen=True)
class StabilityCert:
    """Certificate (eps_add, eps_mul): A <= exp(eps_mul) B + eps_add I both ways."""

    eps_add: float
    eps_mul: float

    def __post_init__(self) -> None:
        if not (self.eps_add >= 0 and self.eps_mul >= 0):
            raise ValueError("certificate entries must be nonnegative")
        if not (math.isfinite(self.eps_add) and math.isfinite(self.eps_mul)):
            raise ValueError("certificate entries must be finite")


def rho_for_target(eps: float, L: float, d: int) -> float:
    """Smoothing width eps/(2 L sqrt(d)): costs at most eps/2 accuracy.

    Smoothing overshoots f by at most L rho sqrt(d), so this choice leaves
    half the accuracy budget for optimizing f_rho.
    """
    if eps <= 0 or L <= 0:
        raise ValueError("eps and L must be positive")
    if d < 1:
        raise ValueError("d must be >= 1")
    return eps / (2.0 * L * math.sqrt(d))


def _eval_values(value_fn, pts: np.ndarray) -> np.ndarray:
    try:
        out = np.asarray(value_fn(pts), dtype=np.float64)
        if out.shape == (pts.shape[0],):
            return out
    except (TypeError, ValueError):
        pass
    return np.array([float(value_fn(p)) for p in pts])


def smoothed_value_mc(value_fn, x, rho: float, n_samples: int, stream: RngStream) -> float:
    """Monte-Carlo estimate of f_rho(x) = E f(x - xi); test helper, unledgered."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    x = np.asarray(x, dtype=np.float64)
    if rho == 0.0:
        return float(value_fn(x))
    xi = rho * stream.standard_normal((n_samples, x.size))
    return float(np.mean(_eval_values(value_fn, x[None, :] - xi)))


def grad_estimator(oracle: OracleHandle, x, z, rho: float, stream: RngStream) -> np.ndarray:
    """One sample of g(z - xi) + (2/rho^2) <xi, x - z> g(xi).

    Unbiased for grad f_rho(z) + 2 grad^2 f_rho(0)(x - z).  Both queries go
    out in a single batch: depth cost 1, count cost 2.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    xi = rho * stream.standard_normal(x.size)
    samples = oracle.submit_batch(np.stack([z - xi, xi]))
    coef = (2.0 / (rho * rho)) * float(xi @ (x - z))
    return samples[0] + coef * samples[1]


def grad_estimator_batch(oracle: OracleHandle, x, z, rho: float, n: int, stream: RngStream) -> np.ndarray:
    """n independent estimator samples from one batch of 2n queries (depth 1)."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    if n < 1:
        raise ValueError("n must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    xi = rho * stream.standard_normal((n, x.size))
    samples = oracle.submit_batch(np.concatenate([z[None, :] - xi, xi], axis=0))
    coef = (2.0 / (rho * rho)) * (xi @ (x - z))
    return samples[:n] + coef[:, None] * samples[n:]


def grad_estimator_points(oracle: OracleHandle, points, z, rho: float, stream: RngStream) -> np.ndarray:
    """One estimator sample per row of points, all from a single batch (depth 1).

    Row p gets its own xi_p, so distinct rows are independent samples and
    repeated rows are independent samples at the same location.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    P = np.asarray(points, dtype=np.float64)
    if P.ndim != 2 or P.shape[0] == 0:
        raise ValueError("points must be a nonempty (n, d) array")
    z = np.asarray(z, dtype=np.float64)
    n = P.shape[0]
    xi = rho * stream.standard_normal(P.shape)
    samples = oracle.submit_batch(np.concatenate([z[None, :] - xi, xi], axis=0))
    coef = (2.0 / (rho * rho)) * np.sum(xi * (P - z[None, :]), axis=1)
    return samples[:n] + coef[:, None] * samples[n:]


def hessian_mc(oracle: OracleHandle, x, rho: float, n: int, stream: RngStream) -> np.ndarray:
    """Symmetrized (1/(2 n rho^2)) sum of (g_i xi_i^T + xi_i g_i^T) -> grad^2 f_rho(x)."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    if n < 1:
        raise ValueError("n must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    xi = rho * stream.standard_normal((n, x.size))
    g = oracle.submit_batch(x[None, :] + xi)
    M = (g.T @ xi) / (n * rho * rho)
    return 0.5 * (M + M.T)


def _require_symmetric(H: np.ndarray, name: str, tol: float) -> np.ndarray:
    H = np.asarray(H, dtype=np.float64)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError(f"{name} must be a square matrix")
    if np.max(np.abs(H - H.T)) > tol * max(1.0, float(np.max(np.abs(H)))):
        raise ValueError(f"{name} must be symmetric")
    return 0.5 * (H + H.T)


def check_approx(Hx, Hy, cert: StabilityCert, tol: float = 1e-8) -> bool:
    """Both Loewner inequalities of the certificate, up to eigenvalue slack tol."""
    A = _require_symmetric(Hx, "Hx", 1e-8)
    B = _require_symmetric(Hy, "Hy", 1e-8)
    if A.shape != B.shape:
        raise ValueError("Hx and Hy must have identical shapes")
    em = math.exp(cert.eps_mul)
    eye = np.eye(A.shape[0])

    def dominates(P, Q):  # Q <= P up to tol
        return float(np.linalg.eigvalsh(P - Q)[0]) >= -tol

    return dominates(em * B + cert.eps_add * eye, A) and dominates(em * A + cert.eps_add * eye, B)


def stability_cert(x, y, rho: float, L: float, delta: float) -> StabilityCert:
    """Certificate relating grad^2 f_rho(x) and grad^2 f_rho(y):

    eps_mul = ||x-y||^2/rho^2 + 2 ||x-y|| sqrt(log(1/delta)) / rho,
    eps_add = sqrt(2) L delta / rho.
    """
    if not (0.0 < delta < 1.0):
        raise ValueError("delta must lie in (0, 1)")
    if rho <= 0 or L <= 0:
        raise ValueError("rho and L must be positive")
    dist = float(np.linalg.norm(np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)))
    eps_mul = (dist * dist) / (rho * rho) + 2.0 * dist * math.sqrt(math.log(1.0 / delta)) / rho
    eps_add = math.sqrt(2.0) * L * delta / rho
    return StabilityCert(eps_add=eps_add, eps_mul=eps_mul)


def reg_stability_radius(rho: float, L: float, lam: float) -> float:
    """Largest ball radius with the (0, log 2) regularized-Hessian guarantee:

    r = (rho/6) / sqrt(max(log(2L/(lam rho)), 1)).

    Within B(center, r) the lambda-regularized smoothed Hessians at any two
    points approximate each other with a factor of at most 2 and no additive
    error.  The log floor keeps r <= rho/6 when lam rho is close to 2L.
    """
    if rho <= 0 or L <= 0 or lam <= 0:
        raise ValueError("rho, L, lam must be positive")
    if lam * rho >= 2.0 * L:
        raise ValueError("requires lam * rho < 2 L")
    return (rho / 6.0) / math.sqrt(max(math.log(2.0 * L / (lam * rho)), 1.0))
