"""Expectation-to-high-probability reductions.

Two tools: a single-elimination tournament that selects a near-optimal point
from candidates using a noisy gap comparator (median-of-means over segment
gradient samples), and geometric aggregation, which turns a 2/3-confidence
point-recovery routine into a 1-delta one by majority clustering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from parsco.core import RngStream

__all__ = [
    "TournamentConfig",
    "AggregateOutcome",
    "estimate_gap",
    "gap_comparator",
    "tournament",
    "tournament_budget_formula",
    "geometric_aggregate",
    "majority_cluster_point",
    "mean_group_count",
    "samples_per_mean",
]


def mean_group_count(delta_prime: float) -> int:
    """Median group count ceil(8 ln(1/delta')): each group is correct w.p. 3/4
    by Chebyshev, so the median fails w.p. <= delta' by a Chernoff bound."""
    if not (0.0 < delta_prime < 1.0):
        raise ValueError("delta_prime must lie in (0, 1)")
    return max(1, math.ceil(8.0 * math.log(1.0 / delta_prime)))


def samples_per_mean(L: float, R: float, Delta: float) -> int:
    """ceil(4 L^2 R^2 / Delta^2) samples make one mean Delta-accurate w.p. 3/4."""
    if Delta <= 0:
        raise ValueError("Delta must be positive")
    if L < 0 or R < 0:
        raise ValueError("L and R must be nonnegative")
    return max(1, math.ceil(4.0 * L * L * R * R / (Delta * Delta)))


@dataclass
class TournamentConfig:
    """Selection parameters: target gap eps, failure probability delta, and
    the comparator moment/diameter parameters L (second-moment bound of the
    gradient estimator on candidate segments) and R (candidate diameter)."""

    eps: float
    delta: float
    L: float
    R: float

    def __post_init__(self) -> None:
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if not (0.0 < self.delta < 1.0):
            raise ValueError("delta must lie in (0, 1)")
        if self.L < 0 or self.R < 0:
            raise ValueError("L and R must be nonnegative")

    def levels(self, k: int) -> int:
        return max(1, math.ceil(math.log2(k))) if k > 1 else 0

    def level_accuracy(self, ell: int) -> float:
        return (self.eps / 3.0) * (4.0 / 3.0) ** (-ell)

    def delta_prime(self, k: int) -> float:
        return self.delta / max(1, math.ceil(math.log2(max(k, 2))))


def _segment_points(pairs, n_total, stream: RngStream) -> np.ndarray:
    """Uniform interpolates x_i + t (x_j - x_i), n_total per pair, stacked."""
    out = []
    for idx, (xi, xj) in enumerate(pairs):
        t = stream.child("t", idx).uniform(shape=n_total)
        out.append(xi[None, :] + t[:, None] * (xj - xi)[None, :])
    return np.concatenate(out, axis=0)


def gap_comparator(g1_sampler, h2_evaluator, L: float, R: float, *,
                   samples_cap: int | None = None, groups_cap: int | None = None):
    """Build a level comparator estimating h(x_j) - h(x_i) for many pairs.

    g1_sampler(points, stream) must return one unbiased grad h1 sample per
    row, drawing all its oracle queries in one round; every pair at a tree
    level then shares that single round, which is what keeps tournament query
    depth at one round per level.

    samples_cap and groups_cap bound the per-mean sample count and the median
    group count; capped runs trade the failure guarantee for bounded cost.
    """

    def compare(pairs, Delta: float, delta_prime: float, stream: RngStream) -> np.ndarray:
        m = mean_group_count(delta_prime)
        n = samples_per_mean(L, R, Delta)
        if groups_cap is not None:
            m = min(m, int(groups_cap))
        if samples_cap is not None:
            n = min(n, int(samples_cap))
        pts = _segment_points(pairs, m * n, stream.child("pts"))
        g = np.asarray(g1_sampler(pts, stream.child("g1")), dtype=np.float64)
        ests = np.empty(len(pairs))
        for idx, (xi, xj) in enumerate(pairs):
            block = g[idx * m * n : (idx + 1) * m * n]
            z = block @ (xj - xi)
            h1_gap = float(np.median(z.reshape(m, n).mean(axis=1)))
            ests[idx] = h1_gap + float(h2_evaluator(xj)) - float(h2_evaluator(xi))
        return ests

    return compare


def estimate_gap(
    g1_sampler,
    x_i,
    x_j,
    h2_evaluator,
    Delta: float,
    delta_prime: float,
    stream: RngStream,
    *,
    L: float,
    R: float | None = None,
) -> float:
    """Estimate h(x_j) - h(x_i) to additive error Delta w.p. >= 1 - delta_prime.

    Median of ceil(8 ln(1/delta')) means, each over ceil(4 L^2 R^2 / Delta^2)
    samples of <g1(x_i + t (x_j - x_i)), x_j - x_i> with t uniform, plus the
    exact h2 difference.  R defaults to the segment length.
    """
    x_i = np.asarray(x_i, dtype=np.float64)
    x_j = np.asarray(x_j, dtype=np.float64)
    if R is None:
        R = float(np.linalg.norm(x_j - x_i))
    cmp = gap_comparator(g1_sampler, h2_evaluator, L, R)
    return float(cmp([(x_i, x_j)], Delta, delta_prime, stream)[0])


def tournament(candidates, comparator, config: TournamentConfig, stream: RngStream) -> int:
    """Single-elimination selection; returns the winning candidate's index.

    Candidates are padded to a power of two by duplicating the first; level
    ell runs at accuracy (eps/3)(4/3)^{-ell} and per-comparison failure
    delta / ceil(log2 k).  A comparison estimate >= 0 means the right point
    is no better, so the left child is promoted (ties go left).  If the best
    candidate's path estimates all succeed, the winner is 2 eps-optimal, so
    the failure probability is at most delta.
    """
    pts = [np.asarray(c, dtype=np.float64) for c in candidates]
    k = len(pts)
    if k == 0:
        raise ValueError("candidate set must be nonempty")
    if k == 1:
        return 0
    size = 1 << (k - 1).bit_length()
    alive = list(range(k)) + [0] * (size - k)
    dp = config.delta_prime(k)
    for ell in range(1, config.levels(size) + 1):
        Delta = config.level_accuracy(ell)
        pairs = [(pts[alive[2 * j]], pts[alive[2 * j + 1]]) for j in range(len(alive) // 2)]
        ests = comparator(pairs, Delta, dp, stream.child("level", ell))
        alive = [
            alive[2 * j] if ests[j] >= 0.0 else alive[2 * j + 1]
            for j in range(len(alive) // 2)
        ]
    return alive[0]


def tournament_budget_formula(k: int, config: TournamentConfig, *,
                              samples_cap: int | None = None,
                              groups_cap: int | None = None) -> int:
    """Exact comparator sample count the tournament will consume for k
    candidates (per-level pairs x means x samples-per-mean)."""
    if k <= 1:
        return 0
    size = 1 << (k - 1).bit_length()
    m = mean_group_count(config.delta_prime(k))
    if groups_cap is not None:
        m = min(m, int(groups_cap))
    total = 0
    remaining = size
    for ell in range(1, config.levels(size) + 1):
        remaining //= 2
        n = samples_per_mean(config.L, config.R, config.level_accuracy(ell))
        if samples_cap is not None:
            n = min(n, int(samples_cap))
        total += remaining * m * n
    return total


@dataclass
class AggregateOutcome:
    """Result of majority clustering: the chosen point, its neighbor count,
    and whether selection had to fall back to a plurality (no majority)."""

    point: np.ndarray
    votes: int
    degenerate: bool


def majority_cluster_point(points, Delta: float) -> AggregateOutcome:
    """Pick a point within 2 Delta/3 of more than half the points.

    If at least 2/3 of the points land within Delta/3 of an unknown target,
    any majority point is within Delta of it.  With no majority the plurality
    point is returned and flagged degenerate.
    """
    P = np.asarray(points, dtype=np.float64)
    if P.ndim != 2 or P.shape[0] == 0:
        raise ValueError("points must be a nonempty (k, d) array")
    k = P.shape[0]
    d2 = np.sum((P[:, None, :] - P[None, :, :]) ** 2, axis=2)
    votes = np.sum(d2 <= (2.0 * Delta / 3.0) ** 2 + 1e-30, axis=1)
    best = int(np.argmax(votes))
    return AggregateOutcome(point=P[best].copy(), votes=int(votes[best]), degenerate=bool(votes[best] * 2 <= k))


def geometric_aggregate(runner, Delta: float, delta: float, stream: RngStream) -> AggregateOutcome:
    """Boost a 2/3-confidence Delta/3-recovery routine to confidence 1-delta.

    Runs runner ceil(36 ln(1/delta)) times (at least 1) on independent child
    streams and majority-clusters the outputs at radius 2 Delta/3.
    """
    if not (0.0 < delta < 1.0):
        raise ValueError("delta must lie in (0, 1)")
    if Delta < 0:
        raise ValueError("Delta must be nonnegative")
    k = max(1, math.ceil(36.0 * math.log(1.0 / delta)))
    points = [np.asarray(runner(stream.child("run", i)), dtype=np.float64) for i in range(k)]
    return majority_cluster_point(np.stack(points), Delta)
