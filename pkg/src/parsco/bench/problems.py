"""Synthetic convex problems with certified constants and known optima.

Every family plants its minimizer at a point of norm ``xstar_norm`` and
is normalized so the certified Lipschitz constant is exactly ``L``.  The
optimum value is 0 by construction, which keeps measured gaps free of
cancellation.  ``verify_problem`` independently confirms the recorded
optimum (linear programming for the polyhedral family, multi-start local
refinement plus a dense grid for the rest) before a problem is used as
ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..core import CostLedger, OracleHandle, RngStream

__all__ = [
    "PROBLEM_KINDS",
    "TestProblem",
    "make_problem",
    "verify_problem",
]

PROBLEM_KINDS = (
    "max-of-linear",
    "norm-distance",
    "smooth-quadratic",
    "abs-coordinate",
)


@dataclass(frozen=True)
class TestProblem:
    """One benchmark instance: exact values, subgradients, and constants.

    ``L`` is the analytic Lipschitz constant over the queried domain
    B(0, 2R) and ``opt_value`` / ``argmin`` are exact.  ``subgrad`` returns
    a member of the subdifferential; methods that need oracle accounting
    should go through :meth:`handle`, which wraps the batch subgradient
    map in a fresh :class:`OracleHandle` per run.
    """

    kind: str
    d: int
    L: float
    R: float
    opt_value: float
    argmin: np.ndarray
    value: Callable[[np.ndarray], float]
    subgrad: Callable[[np.ndarray], np.ndarray]
    subgrad_batch: Callable[[np.ndarray], np.ndarray]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in PROBLEM_KINDS:
            raise ValueError(f"unknown problem kind {self.kind!r}")
        if float(np.linalg.norm(self.argmin)) > self.R + 1e-12:
            raise ValueError("argmin must lie inside B(0, R)")
        if abs(self.value(self.argmin) - self.opt_value) > 1e-9:
            raise ValueError("recorded optimum does not match value(argmin)")

    def gap(self, x) -> float:
        return self.value(np.asarray(x, dtype=np.float64)) - self.opt_value

    def handle(self, tally: dict | None = None) -> OracleHandle:
        """Fresh counted oracle.  ``tally``, when given, receives an
        independent second count of queries and rounds (keys ``queries``
        and ``rounds``) so ledger totals can be cross-checked."""

        def query(points, stream):
            if tally is not None:
                tally["queries"] = tally.get("queries", 0) + len(points)
                tally["rounds"] = tally.get("rounds", 0) + 1
            return self.subgrad_batch(points)

        return OracleHandle(query, CostLedger())


def _planted_point(d: int, norm: float, stream: RngStream) -> np.ndarray:
    u = stream.standard_normal(shape=(d,))
    return u / np.linalg.norm(u) * norm


def _max_of_linear(d, stream, xstar_norm, m, L):
    if m < 2:
        raise ValueError(f"need at least 2 pieces, got {m}")
    A = stream.standard_normal(shape=(m - 1, d))
    A = A / np.linalg.norm(A, axis=1, keepdims=True)
    last = -A.sum(axis=0)
    norm_last = np.linalg.norm(last)
    if norm_last < 1e-9:  # random rows summed to ~0; nudge deterministically
        last = A[0].copy()
        last[0] += 1.0
        norm_last = np.linalg.norm(last)
    A = np.vstack([A, last / norm_last])  # 0 in the convex hull of the rows
    scales = 0.5 + 0.5 * stream.uniform(shape=(m,))
    scales[int(np.argmax(scales))] = 1.0
    A = A * (L * scales[:, None])  # L = max row norm exactly
    xstar = _planted_point(d, xstar_norm, stream)
    b = -(A @ xstar)

    def value(x):
        return float(np.max(A @ x + b))

    def subgrad(x):
        return A[int(np.argmax(A @ x + b))].copy()

    def subgrad_batch(points):
        idx = np.argmax(points @ A.T + b, axis=1)
        return A[idx]

    return value, subgrad, subgrad_batch, xstar, {"A": A, "b": b, "m": m}


def _norm_distance(d, stream, xstar_norm, L):
    xstar = _planted_point(d, xstar_norm, stream)

    def value(x):
        return L * float(np.linalg.norm(x - xstar))

    def subgrad(x):
        u = x - xstar
        n = float(np.linalg.norm(u))
        return L * u / n if n > 0 else np.zeros(d)

    def subgrad_batch(points):
        u = points - xstar
        n = np.linalg.norm(u, axis=1, keepdims=True)
        return np.where(n > 0, L * u / np.maximum(n, 1e-300), 0.0)

    return value, subgrad, subgrad_batch, xstar, {}


def _smooth_quadratic(d, stream, xstar_norm, L, R):
    # gradient norm mu*||x - x*|| reaches L exactly at the domain edge
    mu = L / (2.0 * R + xstar_norm)
    xstar = _planted_point(d, xstar_norm, stream)

    def value(x):
        u = x - xstar
        return 0.5 * mu * float(u @ u)

    def subgrad(x):
        return mu * (x - xstar)

    def subgrad_batch(points):
        return mu * (points - xstar)

    return value, subgrad, subgrad_batch, xstar, {"mu": mu}


def _abs_coordinate(d, stream, xstar_norm, L):
    w = 0.5 + 0.5 * stream.uniform(shape=(d,))
    w = w * (L / np.linalg.norm(w))  # ||subgrad||_2 <= ||w||_2 = L, tight a.e.
    xstar = _planted_point(d, xstar_norm, stream)

    def value(x):
        return float(w @ np.abs(x - xstar))

    def subgrad(x):
        return w * np.sign(x - xstar)

    def subgrad_batch(points):
        return w * np.sign(points - xstar)

    return value, subgrad, subgrad_batch, xstar, {"w": w}


def make_problem(kind: str, d: int, stream: RngStream, *,
                 xstar_norm: float = 0.5, L: float = 1.0, R: float = 1.0,
                 m: int = 6) -> TestProblem:
    """Draw one instance of the named family.

    All families are built at ``L = 1``; other values rescale the raw
    functions.  ``xstar_norm`` must not exceed ``R``.
    """
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    if not 0 < xstar_norm <= R:
        raise ValueError(f"xstar_norm must lie in (0, R], got {xstar_norm}")
    if kind == "max-of-linear":
        built = _max_of_linear(d, stream, xstar_norm, m, L)
    elif kind == "norm-distance":
        built = _norm_distance(d, stream, xstar_norm, L)
    elif kind == "smooth-quadratic":
        built = _smooth_quadratic(d, stream, xstar_norm, L, R)
    elif kind == "abs-coordinate":
        built = _abs_coordinate(d, stream, xstar_norm, L)
    else:
        raise ValueError(f"unknown problem kind {kind!r}; "
                         f"choose from {PROBLEM_KINDS}")
    value, subgrad, subgrad_batch, xstar, meta = built
    return TestProblem(kind=kind, d=d, L=L, R=R, opt_value=0.0, argmin=xstar,
                       value=value, subgrad=subgrad,
                       subgrad_batch=subgrad_batch, meta=meta)


def _lp_optimum(problem: TestProblem) -> float:
    """Exact optimum of a max-of-linear instance via its epigraph LP."""
    from scipy.optimize import linprog

    A, b = problem.meta["A"], problem.meta["b"]
    m, d = A.shape
    # minimize t subject to A x + b <= t, ||x||_inf <= 2R (inactive box)
    c = np.zeros(d + 1)
    c[-1] = 1.0
    A_ub = np.hstack([A, -np.ones((m, 1))])
    bounds = [(-2.0 * problem.R, 2.0 * problem.R)] * d + [(None, None)]
    res = linprog(c, A_ub=A_ub, b_ub=-b, bounds=bounds, method="highs")
    if not res.success:
        raise RuntimeError(f"epigraph LP failed: {res.message}")
    return float(res.fun)


def _refined_optimum(problem: TestProblem, stream: RngStream,
                     starts: int = 8) -> float:
    """Best value found by multi-start local refinement inside B(0, R)."""
    from scipy.optimize import minimize

    best = problem.value(problem.argmin)
    points = [problem.argmin]
    for _ in range(starts):
        points.append(_planted_point(problem.d, 0.9 * problem.R, stream))
    for x0 in points:
        res = minimize(problem.value, x0, method="Powell",
                       options={"xtol": 1e-10, "ftol": 1e-12, "maxiter": 4000})
        best = min(best, float(res.fun))
    return best


def verify_problem(problem: TestProblem, *, tol: float = 1e-6,
                   grid_step: float = 0.05, seed: int = 0) -> None:
    """Confirm the recorded optimum independently; raises on disagreement.

    Only sensible for d <= 3 where the grid is dense enough to exclude a
    lower minimum anywhere in B(0, R).
    """
    if problem.d > 3:
        raise ValueError("verification is supported for d <= 3 only")
    if abs(problem.value(problem.argmin) - problem.opt_value) > tol:
        raise AssertionError("argmin does not achieve the recorded optimum")

    if problem.kind == "max-of-linear":
        lp = _lp_optimum(problem)
        if not problem.opt_value - tol <= lp <= problem.opt_value + tol:
            raise AssertionError(
                f"LP optimum {lp:.3e} disagrees with recorded "
                f"{problem.opt_value:.3e}")
    else:
        refined = _refined_optimum(problem, RngStream(seed, ("verify",)))
        if refined < problem.opt_value - tol:
            raise AssertionError(
                f"refinement found value {refined:.3e} below recorded "
                f"optimum {problem.opt_value:.3e}")

    axes = [np.arange(-problem.R, problem.R + grid_step / 2, grid_step)] \
        * problem.d
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    pts = grid.reshape(-1, problem.d)
    vals = np.array([problem.value(p) for p in pts])
    gmin = float(vals.min())
    if gmin < problem.opt_value - tol:
        raise AssertionError(f"grid point below recorded optimum: {gmin:.3e}")
    slack = problem.L * grid_step * np.sqrt(problem.d)
    if gmin > problem.opt_value + slack + tol:
        raise AssertionError(
            f"grid minimum {gmin:.3e} too far above recorded optimum; "
            "the argmin may be wrong")
