"""Ball-constrained minimization of the regularized smoothed objective.

Solves min over the ball B(xbar, r) of f_rho(x) + (lam/2) ||x - xbar||^2 to
expected gap phi.  The outer loop is an approximate Newton method whose
quadratic model at the iterate z is

    F(x) = <grad f_rho(z) - lam z, x> + ||x - z||^2 at grad^2 f_rho(0),

minimized over the ball together with lam ||x||^2.  The constraint is lifted
by a geometric binary search on the multiplier alpha of (alpha/2) ||x||^2,
each probe solved by batched composite-SGD runs boosted to high probability:
a clustering phase oracle locates the regularized minimizer to relative
accuracy, a gap phase oracle refines to additive accuracy via a tournament.

Two budget presets drive every loop bound: `theory` keeps the constants of
the accuracy analysis, `desk` caps them at interactively runnable sizes.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from parsco.boost import (
    TournamentConfig,
    gap_comparator,
    majority_cluster_point,
    tournament,
)
from parsco.core import CostLedger, OracleHandle, RngStream
from parsco.sgd import CompositeSgdConfig, sgd_conv_runs
from parsco.smoothing import grad_estimator_points, reg_stability_radius

logger = logging.getLogger(__name__)

__all__ = [
    "SolverBudget",
    "BallOracleParams",
    "PhaseOracleSpec",
    "QuadraticF",
    "reg_minima_check",
    "NewtonSubproblem",
    "newton_subproblem_F",
    "phase_one",
    "phase_two",
    "BinarySearchState",
    "BinarySearchResult",
    "BinarySearchOverrun",
    "binary_search",
    "binary_search_call_caps",
    "constrained_newton",
    "newton_iters",
    "oracle_query_bound",
    "ball_optimization_oracle",
]


# ---------------------------------------------------------------------------
# budgets


@dataclass(frozen=True)
class SolverBudget:
    """Loop-size policy for the ball oracle stack.

    Every iteration bound below is `ceil(mult * formula)` clipped to `cap`
    (a cap of None means uncapped).  `theory()` keeps the constants under
    which the accuracy statements are proved; `desk()` trades those fully
    certified constants for sizes that run in seconds, which is honest as
    long as the measured success rates stay above what the aggregation and
    tournament layers require.

    delta_floor bounds below the per-subcall failure budget delta/Z inside
    the full oracle, so desk runs do not inflate run counts to absurdity.
    chunk_C in [1, L^2/(lam^2 r^2)] divides the engine chunk length S,
    trading query depth against parallel work.  bs_Delta_mult loosens the
    binary-search value tolerance inside the full oracle (Delta = mult *
    phi/40); values above 1 shorten the stage-two bisection at the cost
    of per-call tightness, which the end-to-end measurements arbitrate.
    """

    phase1_T_mult: float
    phase2_T_mult: float
    agg_runs_mult: float = 1.0
    newton_mult: float = 1.0
    phase1_T_cap: int | None = None
    phase2_T_cap: int | None = None
    agg_runs_cap: int | None = None
    tour_samples_cap: int | None = None
    tour_groups_cap: int | None = None
    newton_cap: int | None = None
    delta_floor: float = 0.0
    chunk_C: float = 1.0
    bs_Delta_mult: float = 1.0

    @classmethod
    def theory(cls) -> "SolverBudget":
        # Phase one must push the expected gap below (alpha/6) q^2 with
        # q = (r + ||x*||)/320 and moment slack (1 + ||x*||^2/rho^2) <= 4,
        # hence the 66 * 6 * 320^2 * 4 leading constant.  Phase two needs
        # gap Delta/6 with slack <= 10.
        return cls(
            phase1_T_mult=66.0 * 6.0 * 320.0**2 * 4.0,
            phase2_T_mult=66.0 * 6.0 * 10.0,
        )

    @classmethod
    def desk(cls) -> "SolverBudget":
        return cls(
            phase1_T_mult=48.0,
            phase2_T_mult=6.0,
            phase1_T_cap=8192,
            phase2_T_cap=1024,
            agg_runs_cap=16,
            tour_samples_cap=64,
            tour_groups_cap=12,
            newton_cap=8,
            delta_floor=0.05,
            chunk_C=1.0,
        )

    def _clip(self, raw: float, cap: int | None) -> int:
        n = max(1, int(math.ceil(raw)))
        return n if cap is None else min(n, int(cap))

    def phase_one_T(self, L: float, rho: float, alpha: float, r: float) -> int:
        logterm = max(math.log(L / (alpha * r)), 1.0)
        base = rho * rho / (r * r) + L * L * logterm / (alpha * alpha * r * r)
        return self._clip(self.phase1_T_mult * base, self.phase1_T_cap)

    def phase_two_T(self, L: float, rho: float, alpha: float, Delta: float) -> int:
        logterm = max(math.log(L * L / (alpha * Delta)), 1.0)
        base = alpha * rho * rho / Delta + L * L * logterm / (alpha * Delta)
        return self._clip(self.phase2_T_mult * base, self.phase2_T_cap)

    def agg_runs(self, delta: float) -> int:
        # 36 log(1/delta) independent runs make a 2/3-majority fail with
        # probability below delta.
        return self._clip(self.agg_runs_mult * 36.0 * math.log(1.0 / delta), self.agg_runs_cap)

    def agg_runs_two(self, delta: float) -> int:
        # Phase two aggregates at delta/3 and additionally needs
        # log_3(3/delta) runs so the best run beats Markov's 2/3 bound.
        raw = max(
            self.agg_runs_mult * 36.0 * math.log(3.0 / delta),
            math.log(3.0 / delta) / math.log(3.0),
        )
        return self._clip(raw, self.agg_runs_cap)

    def newton_iters(self, L: float, lam: float, r: float, phi: float) -> int:
        raw = self.newton_mult * 16.0 * math.log(20.0 * (L * r + lam * r * r) / phi)
        return self._clip(raw, self.newton_cap)

    def chunk_len(self, L: float, alpha: float, lam: float, r: float, T: int) -> int:
        # S = L^2/(C alpha lam r^2): one engine chunk per S steps.  C = 1 is
        # the depth-optimal corner of the depth/work tradeoff.
        s = L * L / (self.chunk_C * alpha * lam * r * r)
        return int(min(max(1.0, s), float(T)))


# ---------------------------------------------------------------------------
# parameter records


@dataclass(frozen=True)
class BallOracleParams:
    """Inputs of one ball-oracle call: minimize f_rho + (lam/2)||. - center||^2
    over B(center, r) to expected gap phi.

    Admissibility: r within the regularized-Hessian stability radius,
    rho <= L/lam, and 0 < phi <= lam r^2 / 100.
    """

    phi: float
    lam: float
    r: float
    center: np.ndarray
    rho: float
    L: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64))
        if self.center.ndim != 1:
            raise ValueError("center must be a vector")
        for name in ("phi", "lam", "r", "rho", "L"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.phi > self.lam * self.r * self.r / 100.0 * (1 + 1e-12):
            raise ValueError("phi must satisfy phi <= lam r^2 / 100")
        if self.rho > self.L / self.lam * (1 + 1e-12):
            raise ValueError("rho must satisfy rho <= L / lam")
        r_max = reg_stability_radius(self.rho, self.L, self.lam)
        if self.r > r_max * (1 + 1e-12):
            raise ValueError(
                f"r = {self.r} exceeds the Hessian stability radius {r_max}"
            )


@dataclass(frozen=True)
class PhaseOracleSpec:
    """Contract of one phase oracle: admissible multipliers alpha >= beta,
    failure probability delta; phase two also carries its gap target Delta."""

    kind: str
    beta: float
    delta: float
    Delta: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("one", "two"):
            raise ValueError("kind must be 'one' or 'two'")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if not (0.0 < self.delta < 1.0):
            raise ValueError("delta must lie in (0, 1)")
        if self.kind == "two":
            if self.Delta is None or self.Delta <= 0:
                raise ValueError("phase two requires a positive Delta")
        elif self.Delta is not None:
            raise ValueError("phase one takes no Delta")


# ---------------------------------------------------------------------------
# closed-form quadratic family (reference + regularized-minima report)


@dataclass(frozen=True)
class QuadraticF:
    """F(x) = <g, x> + x^T M x + c0 with M symmetric PSD; the closed forms
    for min F + (alpha/2)||x||^2 back every stochastic-path check."""

    g: np.ndarray
    M: np.ndarray
    c0: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "g", np.asarray(self.g, dtype=np.float64))
        object.__setattr__(self, "M", np.asarray(self.M, dtype=np.float64))
        if self.g.ndim != 1 or self.M.shape != (self.g.size, self.g.size):
            raise ValueError("g must be a d-vector and M a (d, d) matrix")
        if not np.allclose(self.M, self.M.T, atol=1e-10):
            raise ValueError("M must be symmetric")

    @property
    def d(self) -> int:
        return self.g.size

    def value(self, x) -> float:
        x = np.asarray(x, dtype=np.float64)
        return float(self.g @ x + x @ self.M @ x + self.c0)

    def grad(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return self.g + 2.0 * self.M @ x

    def reg_value(self, x, alpha: float) -> float:
        x = np.asarray(x, dtype=np.float64)
        return self.value(x) + 0.5 * alpha * float(x @ x)

    def xstar(self, alpha: float) -> np.ndarray:
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        A = 2.0 * self.M + alpha * np.eye(self.d)
        return np.linalg.solve(A, -self.g)

    def reg_min(self, alpha: float) -> float:
        return self.reg_value(self.xstar(alpha), alpha)


def reg_minima_check(F: QuadraticF, alphas, r: float | None = None) -> dict:
    """Verify the regularized-minimum path x*_alpha = argmin F + (alpha/2)||x||^2
    along increasing alphas: the norm decreases strictly, consecutive minima
    obey ||x*_a - x*_a'|| <= ||x*_a|| log(a'/a), and alpha ||x*_alpha|| never
    exceeds ||grad F(0)||.  With r given, alphas >= 4 ||grad F(0)|| / r must
    land within r/2.  Returns the measured quantities plus pass flags.
    """
    alphas = np.asarray(sorted(float(a) for a in alphas), dtype=np.float64)
    if alphas.size < 2:
        raise ValueError("need at least two alphas")
    if alphas[0] <= 0:
        raise ValueError("alphas must be positive")
    xs = np.stack([F.xstar(a) for a in alphas])
    norms = np.linalg.norm(xs, axis=1)
    g0 = float(np.linalg.norm(F.grad(np.zeros(F.d))))
    tol = 1e-10 * max(1.0, g0)

    decreasing = bool(np.all(np.diff(norms) < tol))
    log_ok = True
    for i in range(alphas.size - 1):
        for j in range(i + 1, alphas.size):
            shift = float(np.linalg.norm(xs[i] - xs[j]))
            if shift > norms[i] * math.log(alphas[j] / alphas[i]) + tol:
                log_ok = False
    sharp_ok = bool(np.all(alphas * norms <= g0 + tol))
    report = {
        "alphas": alphas,
        "norms": norms,
        "grad0_norm": g0,
        "strictly_decreasing": decreasing,
        "log_shift_ok": log_ok,
        "alpha_norm_bound_ok": sharp_ok,
    }
    if r is not None:
        big = alphas >= 4.0 * g0 / r
        report["shrink_ok"] = bool(np.all(norms[big] <= r / 2.0 + tol))
        report["shrink_checked"] = int(big.sum())
    return report


# ---------------------------------------------------------------------------
# the Newton quadratic subproblem


@dataclass
class NewtonSubproblem:
    """Handle for F(x) = <grad f_rho(z) - lam z, x> + ||x - z||^2 at
    grad^2 f_rho(0), accessed through the two-query smoothing estimator.

    grad_F_sampler draws one unbiased sample of grad F per requested point,
    all within a single oracle round.  h2_evaluator(alpha) is the exact
    complement <-lam z, x> + (alpha/2)||x||^2, so their sum is the
    regularized model F + (alpha/2)||x||^2 the phase oracles minimize.

    When the exact pair (hessian H, grad f_rho(z)) is supplied the closed
    forms of the regularized minima are exposed for verification.
    """

    z: np.ndarray
    lam: float
    rho: float
    L: float
    oracle: OracleHandle | None = None
    sampler: object = None
    H: np.ndarray | None = None
    grad_rho_z: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.z = np.asarray(self.z, dtype=np.float64)
        if self.z.ndim != 1:
            raise ValueError("z must be a vector")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if min(self.rho, self.L) <= 0:
            raise ValueError("rho and L must be positive")
        if self.oracle is None and self.sampler is None:
            raise ValueError("either an oracle or a direct sampler is required")
        if self.H is not None:
            self.H = np.asarray(self.H, dtype=np.float64)
        if self.grad_rho_z is not None:
            self.grad_rho_z = np.asarray(self.grad_rho_z, dtype=np.float64)

    @property
    def d(self) -> int:
        return self.z.size

    @property
    def v(self) -> np.ndarray:
        return -self.lam * self.z

    def g1_sampler(self, points, stream: RngStream) -> np.ndarray:
        """Unbiased samples of grad h1 = grad f_rho(z) + 2 H (x - z), one
        per row, one oracle round."""
        if self.oracle is not None:
            return grad_estimator_points(self.oracle, points, self.z, self.rho, stream)
        return self.sampler(points, stream)

    def grad_F_sampler(self, points, stream: RngStream) -> np.ndarray:
        return self.g1_sampler(points, stream) + self.v[None, :]

    def h2_evaluator(self, alpha: float):
        v = self.v

        def h2(x) -> float:
            x = np.asarray(x, dtype=np.float64)
            return float(v @ x) + 0.5 * alpha * float(x @ x)

        return h2

    def sgd_config(self, alpha: float, T: int, S: int | None = None) -> CompositeSgdConfig:
        return CompositeSgdConfig.for_smoothed(
            L=self.L, rho=self.rho, Lambda=alpha, z=self.z, v=self.v, T=T, S=S
        )

    # exact-view methods, available when H and grad_rho_z are supplied

    @property
    def has_exact(self) -> bool:
        return self.H is not None and self.grad_rho_z is not None

    def _require_exact(self) -> None:
        if not self.has_exact:
            raise ValueError("exact H and grad_rho_z were not supplied")

    def as_quadratic(self) -> QuadraticF:
        """F itself as an explicit quadratic:
        F(x) = <grad f_rho(z) - lam z - 2 H z, x> + x^T H x + z^T H z."""
        self._require_exact()
        g = self.grad_rho_z + self.v - 2.0 * self.H @ self.z
        return QuadraticF(g=g, M=self.H, c0=float(self.z @ self.H @ self.z))

    def xstar(self, alpha: float) -> np.ndarray:
        return self.as_quadratic().xstar(alpha)

    def reg_value(self, x, alpha: float) -> float:
        return self.as_quadratic().reg_value(x, alpha)

    def reg_gap(self, x, alpha: float) -> float:
        q = self.as_quadratic()
        return q.reg_value(x, alpha) - q.reg_min(alpha)


def newton_subproblem_F(z, lam: float, grad_est, hess_quadratic=None, *, rho: float, L: float) -> NewtonSubproblem:
    """Build the quadratic-model handle at anchor z.

    grad_est is either the subgradient oracle handle (the smoothing
    estimator is wired to it) or a callable (points, stream) -> samples.
    hess_quadratic, when given, is the exact pair (H, grad f_rho(z))
    unlocking closed-form minima for verification.
    """
    H = grad_z = None
    if hess_quadratic is not None:
        H, grad_z = hess_quadratic
    if isinstance(grad_est, OracleHandle):
        return NewtonSubproblem(z=z, lam=lam, rho=rho, L=L, oracle=grad_est, H=H, grad_rho_z=grad_z)
    if not callable(grad_est):
        raise TypeError("grad_est must be an OracleHandle or a callable")
    return NewtonSubproblem(z=z, lam=lam, rho=rho, L=L, sampler=grad_est, H=H, grad_rho_z=grad_z)


# ---------------------------------------------------------------------------
# phase oracles


def _run_batch(sub: NewtonSubproblem, alpha: float, T: int, S: int, k: int, stream: RngStream, backend) -> np.ndarray:
    if sub.oracle is None:
        raise ValueError("phase oracles need an oracle-backed subproblem")
    cfg = sub.sgd_config(alpha, T, S=S)
    streams = [stream.child("run", i) for i in range(k)]
    return sgd_conv_runs(sub.oracle, cfg, streams, backend=backend)


def phase_one(
    sub: NewtonSubproblem,
    alpha: float,
    r: float,
    spec: PhaseOracleSpec,
    stream: RngStream,
    budget: SolverBudget | None = None,
    backend=None,
) -> np.ndarray:
    """Locate x*_alpha = argmin F + (alpha/2)||x||^2 within
    (r + ||x*_alpha||) / 100, with failure probability spec.delta.

    Runs agg_runs(delta) SGD averages in one oracle round, then keeps the
    majority cluster.  The cluster radius comes from the measured median
    run norm: each run is within (r + ||x*||)/320 with probability 2/3,
    so 0.99 (r + median)/100 sits safely between three per-run radii and
    the certified output radius.
    """
    budget = budget or SolverBudget.desk()
    if spec.kind != "one":
        raise ValueError("phase_one requires a kind='one' spec")
    if spec.beta < 2.0 * sub.lam * (1 - 1e-12):
        raise ValueError("spec.beta must be at least 2 lam")
    if alpha < spec.beta * (1 - 1e-12):
        raise ValueError("alpha below the admissible beta")
    if r <= 0:
        raise ValueError("r must be positive")
    if sub.lam > 0 and sub.rho > sub.L / sub.lam * (1 + 1e-12):
        raise ValueError("rho must satisfy rho <= L / lam")
    T = budget.phase_one_T(sub.L, sub.rho, alpha, r)
    k = budget.agg_runs(spec.delta)
    pts = _run_batch(sub, alpha, T, T, k, stream, backend)
    med = float(np.median(np.linalg.norm(pts, axis=1)))
    radius = 0.99 * (r + med) / 100.0
    return majority_cluster_point(pts, radius).point


def phase_two(
    sub: NewtonSubproblem,
    alpha: float,
    Delta: float,
    r: float,
    spec: PhaseOracleSpec,
    stream: RngStream,
    budget: SolverBudget | None = None,
    backend=None,
) -> np.ndarray:
    """Return a point with F + (alpha/2)||x||^2 gap at most Delta, with
    failure probability spec.delta, valid whenever ||x*_alpha|| <= 3r.

    Pipeline: k runs whose chunked averages each reach expected gap Delta/6;
    geometric aggregation at radius 3 sqrt(Delta/alpha); the candidates
    within 4 sqrt(Delta/alpha) of the aggregate enter a tournament at
    accuracy Delta/2.  The estimator moment bound for the tournament is
    evaluated on the surviving candidates, not the worst case.
    """
    budget = budget or SolverBudget.desk()
    if spec.kind != "two":
        raise ValueError("phase_two requires a kind='two' spec")
    if sub.lam <= 0:
        raise ValueError("phase_two requires a positive lam")
    if spec.beta < 2.0 * sub.lam * (1 - 1e-12):
        raise ValueError("spec.beta must be at least 2 lam")
    if alpha < spec.beta * (1 - 1e-12):
        raise ValueError("alpha below the admissible beta")
    if Delta <= 0 or r <= 0:
        raise ValueError("Delta and r must be positive")
    if Delta > sub.lam * r * r / 100.0 * (1 + 1e-12):
        raise ValueError("Delta must satisfy Delta <= lam r^2 / 100")
    if not (r * (1 - 1e-12) <= sub.rho <= sub.L / sub.lam * (1 + 1e-12)):
        raise ValueError("rho must lie in [r, L / lam]")
    T = budget.phase_two_T(sub.L, sub.rho, alpha, Delta)
    S = budget.chunk_len(sub.L, alpha, sub.lam, r, T)
    k = budget.agg_runs_two(spec.delta)
    pts = _run_batch(sub, alpha, T, S, k, stream, backend)
    return _phase_two_select(sub, pts, alpha, Delta, spec.delta, stream.child("select"), budget)


def _phase_two_select(
    sub: NewtonSubproblem,
    points: np.ndarray,
    alpha: float,
    Delta: float,
    delta: float,
    stream: RngStream,
    budget: SolverBudget,
) -> np.ndarray:
    """Aggregation, ball filter, and tournament over finished run averages."""
    points = np.asarray(points, dtype=np.float64)
    rad = math.sqrt(Delta / alpha)
    agg = majority_cluster_point(points, 3.0 * rad)
    if agg.degenerate:
        logger.warning(
            "phase-two aggregation found no majority cluster at radius %.3g; "
            "proceeding with the best-voted run", 3.0 * rad,
        )
    # The aggregate is itself one of the runs, so the filter ball is never
    # empty and pairwise distances inside it stay below 8 rad.
    keep = np.linalg.norm(points - agg.point[None, :], axis=1) <= 4.0 * rad + 1e-12
    cands = points[keep]
    if cands.shape[0] == 1:
        return cands[0].copy()
    dists = np.linalg.norm(cands - sub.z[None, :], axis=1)
    L_tour = sub.L * math.sqrt(2.0 + 8.0 * float(np.max(dists)) ** 2 / (sub.rho * sub.rho))
    cfg = TournamentConfig(eps=Delta / 2.0, delta=delta / 3.0, L=L_tour, R=8.0 * rad)
    comparator = gap_comparator(
        sub.g1_sampler,
        sub.h2_evaluator(alpha),
        L_tour,
        8.0 * rad,
        samples_cap=budget.tour_samples_cap,
        groups_cap=budget.tour_groups_cap,
    )
    winner = tournament([c for c in cands], comparator, cfg, stream.child("tour"))
    return cands[winner].copy()


# ---------------------------------------------------------------------------
# binary search on the constraint multiplier


class BinarySearchOverrun(RuntimeError):
    """A probe-budget ceiling was hit; carries the bracket diagnostic."""


@dataclass
class BinarySearchState:
    """Bracket of the multiplier search; valid while ell < u."""

    ell: float
    u: float
    phase: str
    alpha_prime: float | None = None

    def __post_init__(self) -> None:
        if self.phase not in ("one", "two"):
            raise ValueError("phase must be 'one' or 'two'")
        if self.ell >= self.u:
            raise ValueError("bracket requires ell < u")

    @property
    def m(self) -> float:
        return math.sqrt(self.ell * self.u)


@dataclass
class BinarySearchResult:
    point: np.ndarray
    alpha_prime: float
    ell: float
    u: float
    o1_calls: int
    o2_calls: int
    interior: bool


def binary_search_call_caps(L: float, lam: float, r: float, Delta: float, slack: float = 10.0) -> tuple[int, int]:
    """Probe ceilings: slack times the logarithmic call bounds of the
    two search phases."""
    if min(L, lam, r, Delta) <= 0:
        raise ValueError("L, lam, r, Delta must be positive")
    o1 = int(math.ceil(slack * max(math.log(L / (lam * r)), 1.0)))
    o2 = int(math.ceil(slack * max(math.log((L * r + lam * r * r) / Delta), 1.0)))
    return o1, o2


class _MemoProbe:
    """Memoizes a phase oracle by the exact multiplier bit pattern and
    enforces the distinct-call ceiling."""

    def __init__(self, fn, cap: int, label: str):
        self.fn = fn
        self.cap = cap
        self.label = label
        self.cache: dict[float, np.ndarray] = {}
        self.calls = 0

    def __call__(self, alpha: float) -> np.ndarray:
        key = float(alpha)
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        if self.calls >= self.cap:
            raise BinarySearchOverrun(
                f"{self.label} exceeded its {self.cap}-call ceiling; "
                f"probed multipliers: {sorted(self.cache)}"
            )
        self.calls += 1
        out = np.asarray(self.fn(key), dtype=np.float64)
        self.cache[key] = out
        return out


def binary_search(
    lam: float,
    r: float,
    Delta: float,
    L: float,
    O1,
    O2,
    *,
    o1_cap: int | None = None,
    o2_cap: int | None = None,
) -> BinarySearchResult:
    """Minimize F + lam ||x||^2 over B(0, r) to gap O(Delta) given the two
    phase oracles as functions of the multiplier alpha.

    Stage one doubles u from 2 lam until the located minimizer enters
    2.5 r, then bisects geometrically into the window [2.1 r, 2.9 r],
    yielding alpha' with ||x*_{alpha'}|| comparable to r.  Stage two
    bisects [alpha', 4L/r + 2 lam] down to relative width
    Delta / (10 (L r + lam r^2)) maintaining ||O2(u)|| <= r; the output is
    the feasible probe at u when the constraint is slack at 2 lam, else the
    convex combination of the probes at ell and u placed exactly on the
    sphere of radius r.

    Oracles are memoized by multiplier; distinct calls beyond the ceilings
    abort with BinarySearchOverrun.
    """
    if min(lam, r, Delta, L) <= 0:
        raise ValueError("lam, r, Delta, L must be positive")
    caps = binary_search_call_caps(L, lam, r, Delta)
    probe1 = _MemoProbe(O1, caps[0] if o1_cap is None else o1_cap, "phase-one oracle")
    probe2 = _MemoProbe(O2, caps[1] if o2_cap is None else o2_cap, "phase-two oracle")

    u = 2.0 * lam
    while float(np.linalg.norm(probe1(u))) > 2.5 * r:
        u = 2.0 * u
    if u == 2.0 * lam:
        alpha_prime = 2.0 * lam
    else:
        state = BinarySearchState(ell=u / 2.0, u=u, phase="one")
        alpha_prime = None
        while alpha_prime is None:
            m = state.m
            if not (state.ell < m < state.u):
                raise BinarySearchOverrun(
                    f"phase-one bracket collapsed numerically at "
                    f"[{state.ell}, {state.u}]"
                )
            nm = float(np.linalg.norm(probe1(m)))
            if 2.1 * r <= nm <= 2.9 * r:
                alpha_prime = m
            elif nm > 2.9 * r:
                state = replace(state, ell=m)
            else:
                state = replace(state, u=m)

    u2 = 4.0 * L / r + 2.0 * lam
    if alpha_prime >= u2:
        raise BinarySearchOverrun(
            f"stage-two bracket is empty: alpha' = {alpha_prime} >= {u2}; "
            "the phase-one oracle violated its location guarantee"
        )
    if alpha_prime == 2.0 * lam:
        # The constraint may already be slack at the smallest admissible
        # multiplier: one value-certified probe settles it and skips the
        # whole bisection.  Infeasible probes are memoized for reuse below.
        x_low = probe2(alpha_prime)
        if float(np.linalg.norm(x_low)) <= r:
            return BinarySearchResult(
                point=x_low.copy(), alpha_prime=alpha_prime,
                ell=alpha_prime, u=u2,
                o1_calls=probe1.calls, o2_calls=probe2.calls, interior=True,
            )
    state = BinarySearchState(ell=alpha_prime, u=u2, phase="two", alpha_prime=alpha_prime)
    width = 1.0 + Delta / (10.0 * (L * r + lam * r * r))
    while state.u / state.ell > width:
        m = state.m
        if not (state.ell < m < state.u):
            break
        if float(np.linalg.norm(probe2(m))) > r:
            state = replace(state, ell=m)
        else:
            state = replace(state, u=m)

    x2 = probe2(state.u)
    if state.ell == 2.0 * lam:
        # Constraint slack at the smallest admissible multiplier: the
        # feasible probe at u already certifies the gap.
        return BinarySearchResult(
            point=x2.copy(), alpha_prime=alpha_prime, ell=state.ell, u=state.u,
            o1_calls=probe1.calls, o2_calls=probe2.calls, interior=True,
        )
    x1 = probe2(state.ell)
    # ||x1|| > r >= ||x2||: place the combination exactly on the sphere.
    diff = x2 - x1
    a = float(diff @ diff)
    b = 2.0 * float(x1 @ diff)
    c = float(x1 @ x1) - r * r
    if a <= 0 or c <= 0:
        raise BinarySearchOverrun(
            "stage-two probes violate the bracket invariant "
            f"(||x1|| = {np.linalg.norm(x1)}, ||x2|| = {np.linalg.norm(x2)}, r = {r})"
        )
    # f(t) = a t^2 + b t + c has f(0) > 0 and f(1) <= 0: the segment first
    # meets the sphere at the smaller root, which lies in (0, 1].
    t = (-b - math.sqrt(max(b * b - 4.0 * a * c, 0.0))) / (2.0 * a)
    t = min(max(t, 0.0), 1.0)
    x_out = x1 + t * diff
    nrm = float(np.linalg.norm(x_out))
    if nrm > 0:
        x_out = x_out * (r / nrm)
    return BinarySearchResult(
        point=x_out, alpha_prime=alpha_prime, ell=state.ell, u=state.u,
        o1_calls=probe1.calls, o2_calls=probe2.calls, interior=False,
    )


# ---------------------------------------------------------------------------
# approximate Newton loop and the full oracle


def constrained_newton(inner_solver, x0, T: int, phi: float, on_step=None) -> np.ndarray:
    """Iterate x_{t+1} = inner_solver(x_t, t) for T steps.

    The contract on inner_solver is a phi/20-accurate minimization of the
    local model <grad f(x_t), x> + ||x - x_t||^2_A over the ball; under the
    half/double Hessian stability guarantee each step contracts the gap by
    15/16 up to phi/20.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    if phi <= 0:
        raise ValueError("phi must be positive")
    x = np.asarray(x0, dtype=np.float64).copy()
    for t in range(T):
        x = np.asarray(inner_solver(x, t), dtype=np.float64)
        if on_step is not None:
            on_step(t, x)
    return x


def newton_iters(L: float, lam: float, r: float, phi: float, budget: SolverBudget | None = None) -> int:
    """ceil(16 log(20 (L r + lam r^2)/phi)) iterations bring the initial
    gap, at most L r + lam r^2, below phi/20 at contraction 15/16."""
    budget = budget or SolverBudget.desk()
    if min(L, lam, r, phi) <= 0:
        raise ValueError("L, lam, r, phi must be positive")
    return budget.newton_iters(L, lam, r, phi)


def oracle_query_bound(L: float, lam: float, phi: float) -> float:
    """Query-count scale of one ball-oracle call:
    (L^2/(lam phi)) log^5(max(L^2/(lam phi), e))."""
    ratio = L * L / (lam * phi)
    return ratio * max(math.log(ratio), 1.0) ** 5


class _ShiftedOracle:
    """Queries the wrapped oracle at x + shift; shares its ledger, so the
    recentered run is charged identically."""

    def __init__(self, inner: OracleHandle, shift: np.ndarray):
        self.inner = inner
        self.shift = np.asarray(shift, dtype=np.float64)

    @property
    def ledger(self) -> CostLedger:
        return self.inner.ledger

    def submit_batch(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return self.inner.submit_batch(pts + self.shift[None, :])


def ball_optimization_oracle(
    params: BallOracleParams,
    oracle: OracleHandle,
    stream: RngStream,
    budget: SolverBudget | None = None,
    backend=None,
    on_step=None,
) -> np.ndarray:
    """Minimize f_rho + (lam/2)||. - center||^2 over B(center, r) to
    expected gap phi; returns the final iterate in original coordinates.

    The run recenters to the origin, takes newton_iters approximate Newton
    steps, and solves each quadratic model by binary_search at gap budget
    phi/40 (its stage-two probes target phi/80).  The per-probe failure
    budget is the oracle failure probability phi/(2 L r + lam r^2) divided
    by the probe ceiling, floored by the budget policy.
    """
    budget = budget or SolverBudget.desk()
    shift = params.center
    inner_oracle: OracleHandle | _ShiftedOracle = oracle
    if np.any(shift != 0.0):
        inner_oracle = _ShiftedOracle(oracle, shift)

    L_F = 2.0 * params.L + params.lam * params.r
    T_newton = budget.newton_iters(params.L, params.lam, params.r, params.phi)
    # Delta small enough that the search's value loss stays under phi/4;
    # phase two is run at Delta/2 so its own loss has matching headroom.
    Delta_bs = budget.bs_Delta_mult * params.phi / 40.0
    Delta_bs = min(Delta_bs, params.lam * params.r * params.r / 100.0)
    caps = binary_search_call_caps(L_F, params.lam, params.r, Delta_bs)
    Z = T_newton * (caps[0] + caps[1])
    delta_ball = params.phi / (2.0 * params.L * params.r + params.lam * params.r * params.r)
    delta_call = min(max(delta_ball / Z, budget.delta_floor), 0.45)
    spec1 = PhaseOracleSpec(kind="one", beta=2.0 * params.lam, delta=delta_call)
    spec2 = PhaseOracleSpec(kind="two", beta=2.0 * params.lam, delta=delta_call, Delta=Delta_bs / 2.0)

    x = np.zeros(params.center.size, dtype=np.float64)

    def newton_step(z: np.ndarray, t: int) -> np.ndarray:
        sub = NewtonSubproblem(
            z=z, lam=params.lam, rho=params.rho, L=params.L, oracle=inner_oracle
        )
        counters = {"one": 0, "two": 0}

        def O1(alpha: float) -> np.ndarray:
            counters["one"] += 1
            s = stream.child("newton", t, "o1", counters["one"])
            return phase_one(sub, alpha, params.r, spec1, s, budget, backend)

        def O2(alpha: float) -> np.ndarray:
            counters["two"] += 1
            s = stream.child("newton", t, "o2", counters["two"])
            return phase_two(sub, alpha, Delta_bs / 2.0, params.r, spec2, s, budget, backend)

        res = binary_search(
            params.lam, params.r, Delta_bs, L_F, O1, O2,
            o1_cap=caps[0], o2_cap=caps[1],
        )
        return res.point

    hook = None
    if on_step is not None:
        hook = lambda t, xt: on_step(t, xt + shift)
    out = constrained_newton(newton_step, x, T_newton, params.phi, on_step=hook)
    return out + shift
