"""Outer-loop drivers built on the ball optimization oracle.

Two drivers share one oracle protocol. ``prox_point_run`` is a plain
inexact proximal-point loop: each step asks the oracle for an
approximate minimizer of ``f_rho(x) + (lam/2)||x - x_k||^2`` over the
radius-``r`` ball at the current iterate, so each step moves at most
``r``. ``ball_accel_run`` is an accelerated variant: a Monteiro-Svaiter
style estimate-sequence loop whose per-step regularization is matched
to the oracle's movement radius by doubling, with the proximal loop as
fallback when the call budget runs out.

The acceleration recursion is a reconstruction: the schedule arithmetic
(``K``, ``lam_star``, the accuracy ladder) is exact, while the momentum
loop follows the standard inexact accelerated proximal template rather
than any single published pseudocode, and is validated statistically by
the benchmark harness.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .smoothing import reg_stability_radius

__all__ = [
    "MainParams",
    "ScheduleRow",
    "AccelSchedule",
    "BoundBallOracle",
    "main_params",
    "build_schedule",
    "prox_point_run",
    "ball_accel_run",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MainParams:
    """Derived problem-scale constants.

    Iterating yields ``(K, lam_star, r, rho)``; the generating inputs
    ride along as extra fields so downstream schedule construction does
    not need them re-supplied.
    """

    K: float
    lam_star: float
    r: float
    rho: float
    d: int
    L: float
    R: float
    eps: float
    kappa: float
    C_ba: float

    def __iter__(self):
        return iter((self.K, self.lam_star, self.r, self.rho))


def _scale_pair(R: float, eps: float, r: float) -> tuple[float, float]:
    K = (R / r) ** (2.0 / 3.0)
    lam_star = (eps * K**2 / R**2) * max(math.log(K), 1.0) ** 2
    return K, lam_star


def main_params(d, L, R, eps, C_ba: float = 100.0) -> MainParams:
    """Select (K, lam_star, r, rho) for a d-dimensional instance.

    rho = eps / (2 L sqrt(d)); r starts at rho / sqrt(log(d kappa)) and
    is halved until it clears the regularized-stability radius at the
    ladder regularization lam_star / C_ba (lam_star is recomputed after
    every halving since it depends on r through K).
    """
    d = int(d)
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    for name, val in (("L", L), ("R", R), ("eps", eps), ("C_ba", C_ba)):
        if not (val > 0 and math.isfinite(val)):
            raise ValueError(f"{name} must be positive and finite, got {val}")
    kappa = L * R / eps
    if kappa < 2.0:
        raise ValueError(f"kappa = L R / eps must be >= 2, got {kappa}")
    rho = eps / (2.0 * L * math.sqrt(d))
    r = rho / math.sqrt(max(math.log(d * kappa), 1.0))
    for _ in range(200):
        K, lam_star = _scale_pair(R, eps, r)
        lam = lam_star / C_ba
        if lam * rho >= 2.0 * L:
            # Halving r only raises lam_star, so once the ladder
            # regularization leaves the smoothing stability range no
            # radius can work for these inputs.
            raise ValueError(
                "no admissible movement radius: ladder regularization "
                f"{lam:.3g} reached the stability limit 2L/rho = "
                f"{2.0 * L / rho:.3g}; a larger C_ba widens the range")
        if r <= reg_stability_radius(rho, L, lam) * (1 + 1e-12):
            break
        r /= 2.0
    else:
        raise RuntimeError("radius halving did not stabilize")
    return MainParams(K=K, lam_star=lam_star, r=r, rho=rho, d=d, L=L, R=R,
                      eps=eps, kappa=kappa, C_ba=C_ba)


@dataclass(frozen=True)
class ScheduleRow:
    """One accuracy level: how many oracle calls at which (phi, lam)."""

    count: int
    phi: float
    lam: float

    def __post_init__(self):
        if self.count < 1:
            raise ValueError(f"row count must be >= 1, got {self.count}")
        if not (self.phi > 0 and self.lam > 0):
            raise ValueError("row phi and lam must be positive")


@dataclass(frozen=True)
class AccelSchedule:
    K: float
    lam_star: float
    r: float
    C_ba: float
    rows: tuple[ScheduleRow, ...]

    def __post_init__(self):
        if not (self.K >= 1.0 - 1e-12):
            raise ValueError(f"K must be >= 1, got {self.K}")
        if not (self.lam_star > 0 and self.r > 0 and self.C_ba > 0):
            raise ValueError("lam_star, r, C_ba must be positive")
        if not self.rows:
            raise ValueError("schedule needs at least the main row")

    @property
    def main_row(self) -> ScheduleRow:
        return self.rows[0]

    @property
    def j_rows(self) -> tuple[ScheduleRow, ...]:
        return self.rows[1:]

    def total_calls(self) -> int:
        return sum(row.count for row in self.rows)


def build_schedule(params: MainParams) -> AccelSchedule:
    """Expand params into the oracle-call accuracy ladder.

    Main row: ceil(C_ba K log^3(R kappa / r)) calls at
    phi = lam_star r^2 / C_ba. Row j (j = 1..ceil(log2 K + C_ba)):
    ceil(C_ba 2^-j K log(R kappa / r)) calls at phi scaled down by
    2^j log^2(R kappa / r). Every row runs at lam = lam_star / C_ba.
    """
    K, lam_star, r = params.K, params.lam_star, params.r
    C_ba = params.C_ba
    log_term = max(math.log(params.R * params.kappa / r), 1.0)
    lam_row = lam_star / C_ba
    phi_main = lam_star * r * r / C_ba
    rows = [ScheduleRow(count=math.ceil(C_ba * K * log_term**3),
                        phi=phi_main, lam=lam_row)]
    j_max = max(math.ceil(math.log2(max(K, 1.0)) + C_ba), 1)
    for j in range(1, j_max + 1):
        rows.append(ScheduleRow(
            count=math.ceil(C_ba * 2.0**-j * K * log_term),
            phi=phi_main / (2.0**j * log_term**2),
            lam=lam_row,
        ))
    schedule = AccelSchedule(K=K, lam_star=lam_star, r=r, C_ba=C_ba,
                             rows=tuple(rows))
    logger.info("accel schedule: %d rows, %d total oracle calls",
                len(rows), schedule.total_calls())
    return schedule


@dataclass
class BoundBallOracle:
    """A ball oracle pinned to one (phi, lam, r) contract.

    ``fn`` maps a center to a point in the radius-``r`` ball around it;
    ``calls`` counts invocations for budget accounting.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    phi: float
    lam: float
    r: float
    calls: int = 0

    def __call__(self, center: np.ndarray) -> np.ndarray:
        self.calls += 1
        return self.fn(np.asarray(center, dtype=np.float64))


def _start_point(problem) -> np.ndarray:
    x0 = getattr(problem, "x0", None)
    if x0 is not None:
        return np.array(x0, dtype=np.float64)
    return np.zeros(int(problem.d), dtype=np.float64)


def prox_point_run(problem, lam, ball_oracle: BoundBallOracle, iters,
                   on_step: Optional[Callable[[int, np.ndarray], None]] = None,
                   ) -> np.ndarray:
    """Inexact proximal-point loop: x_{k+1} = ball_oracle(x_k).

    Stops after ``iters`` steps or once the step norm drops below r/2
    twice in a row (the iterate then sits inside the oracle ball and
    further prox steps cannot make progress beyond the oracle error).
    """
    iters = int(iters)
    if iters < 1:
        raise ValueError(f"iters must be >= 1, got {iters}")
    if not (lam > 0):
        raise ValueError(f"lam must be positive, got {lam}")
    x = _start_point(problem)
    half_r = 0.5 * float(ball_oracle.r)
    small_steps = 0
    for k in range(iters):
        x_next = ball_oracle(x)
        step = float(np.linalg.norm(x_next - x))
        x = x_next
        if on_step is not None:
            on_step(k, x)
        if step < half_r:
            small_steps += 1
            if small_steps >= 2:
                break
        else:
            small_steps = 0
    return x


# movement-matching: accept a step once it lands strictly inside the ball
_INTERIOR_FRACTION = 0.97
# re-try a smaller regularization this often (momentum recovery)
_HALVING_PERIOD = 8
_MAX_DOUBLINGS = 40


def ball_accel_run(problem, schedule: AccelSchedule, ball_oracle,
                   max_iters: Optional[int] = None,
                   on_step: Optional[Callable[[int, np.ndarray], None]] = None,
                   ) -> np.ndarray:
    """Accelerated outer loop over a (phi, lam)-parametrized ball oracle.

    ``ball_oracle(center, phi, lam) -> point`` must honor the movement
    radius ``schedule.r``; an optional ``lam_max`` attribute declares the
    largest regularization it accepts. Estimate-sequence recursion:

        a_{k+1} = (1 + sqrt(1 + 4 lam A_k)) / (2 lam)
        y_k     = (A_k x_k + a_{k+1} v_k) / (A_k + a_{k+1})
        x_{k+1} = ball_oracle(y_k, phi, lam_k)
        v_{k+1} = v_k - a_{k+1} lam_k (y_k - x_{k+1})

    with lam_k doubled from the ladder value until the returned point is
    interior (the oracle movement then witnesses an approximate prox
    step at lam_k). Oracle calls beyond 10x the schedule total abort to
    the plain proximal loop.
    """
    main = schedule.main_row
    r = schedule.r
    lam_max = float(getattr(ball_oracle, "lam_max", math.inf))
    lam0 = min(main.lam, lam_max)
    if schedule.K <= 1.0 + 1e-9:
        # degenerate single-ball regime: a handful of prox steps
        bound = BoundBallOracle(
            fn=lambda c: ball_oracle(c, main.phi, lam0),
            phi=main.phi, lam=lam0, r=r,
        )
        return prox_point_run(problem, lam0, bound,
                              iters=min(main.count, 8), on_step=on_step)
    call_budget = 10 * schedule.total_calls()
    calls = 0
    x = _start_point(problem)
    v = x.copy()
    A = 0.0
    # estimate-sequence certificate: gap <= R^2 / (2 A) once every step is
    # a prox step, and lam_star = eps K^2 log^2 K / R^2 makes A_stop = R^2/eps
    A_stop = schedule.K**2 * max(math.log(schedule.K), 1.0) ** 2 / schedule.lam_star
    lam_prev = lam0
    if max_iters is None:
        max_iters = math.ceil(schedule.K**1.5 * 1.25) + 8
    small_steps = 0
    fell_back = False
    for k in range(int(max_iters)):
        lam_try = max(lam0, lam_prev / 2.0) if k % _HALVING_PERIOD == 0 else lam_prev
        lam_try = min(lam_try, lam_max)
        accepted = None
        for _ in range(_MAX_DOUBLINGS):
            if calls >= call_budget:
                fell_back = True
                break
            a = (1.0 + math.sqrt(1.0 + 4.0 * lam_try * A)) / (2.0 * lam_try)
            y = v if A == 0.0 else (A * x + a * v) / (A + a)
            point = ball_oracle(y, main.phi, lam_try)
            calls += 1
            movement = float(np.linalg.norm(point - y))
            at_cap = lam_try >= lam_max * (1 - 1e-12)
            if movement <= _INTERIOR_FRACTION * r or at_cap:
                accepted = (a, y, point)
                break
            lam_try = min(lam_try * 2.0, lam_max)
        if fell_back or accepted is None:
            fell_back = True
            break
        a, y, point = accepted
        step = float(np.linalg.norm(point - x))
        A += a
        v = v - a * lam_try * (y - point)
        x = point
        lam_prev = lam_try
        if on_step is not None:
            on_step(k, x)
        if A >= A_stop:
            break
        if step < 0.5 * r and lam_try <= lam0 * (1 + 1e-12):
            small_steps += 1
            if small_steps >= 2:
                break
        else:
            small_steps = 0
    if fell_back:
        logger.warning(
            "accelerated loop exhausted its oracle-call budget "
            "(%d calls vs %d allowed); falling back to proximal point",
            calls, call_budget,
        )
        bound = BoundBallOracle(
            fn=lambda c: ball_oracle(c, main.phi, lam0),
            phi=main.phi, lam=lam0, r=r,
        )
        return prox_point_run(problem, lam0, bound,
                              iters=max(main.count, 8), on_step=on_step)
    # accuracy ladder tail: a few increasingly tight polish steps
    for row in schedule.j_rows[:6]:
        if calls + 1 > call_budget:
            break
        x = ball_oracle(x, row.phi, min(row.lam, lam_max))
        calls += 1
    return x
