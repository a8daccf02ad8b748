"""Depth-scaling fits: slope of log(query_depth) against log(1/eps).

The headline comparison is a trend, not a constant: the baseline's
depth grows like eps^-2 while the ball-oracle pipeline's grows strictly
slower.  Fits require at least 3 eps values spanning an 8x range at
fixed d so the slope is identified.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

__all__ = ["ScalingFit", "depth_scaling_report", "format_report"]

MIN_EPS_VALUES = 3
MIN_EPS_SPAN = 8.0


@dataclass(frozen=True)
class ScalingFit:
    """Least-squares slope with a 2-standard-error confidence band."""

    method: str
    d: int
    slope: float
    band: float
    n_eps: int
    n_rows: int

    def __str__(self):
        return (f"{self.method:<12s} d={self.d:<4d} "
                f"slope={self.slope:+.4f} ± {self.band:.4f} "
                f"({self.n_eps} eps values, {self.n_rows} rows)")


def _fit(xs: Sequence[float], ys: Sequence[float]) -> tuple[float, float]:
    n = len(xs)
    xbar = sum(xs) / n
    ybar = sum(ys) / n
    sxx = sum((x - xbar) ** 2 for x in xs)
    sxy = sum((x - xbar) * (y - ybar) for x, y in zip(xs, ys))
    slope = sxy / sxx
    intercept = ybar - slope * xbar
    rss = sum((y - (intercept + slope * x)) ** 2 for x, y in zip(xs, ys))
    dof = n - 2
    se = math.sqrt(rss / dof / sxx) if dof > 0 else 0.0
    return slope, 2.0 * se


def depth_scaling_report(rows: Iterable[Mapping], *,
                         column: str = "query_depth") -> list[ScalingFit]:
    """Fit one slope per (method, d) group.

    ``rows`` are dicts with at least method, d, eps, and the chosen
    counter column (the shape :func:`harness.read_csv` returns).  Each
    eps value's rows are averaged first so uneven seed counts do not
    weight the fit.
    """
    groups: dict = defaultdict(lambda: defaultdict(list))
    for row in rows:
        groups[(row["method"], int(row["d"]))][float(row["eps"])].append(
            float(row[column]))
    if not groups:
        raise ValueError("no rows to fit")

    fits = []
    for (method, d), per_eps in sorted(groups.items()):
        eps_values = sorted(per_eps)
        if len(eps_values) < MIN_EPS_VALUES:
            raise ValueError(
                f"method {method!r} at d={d} has {len(eps_values)} eps "
                f"values; need at least {MIN_EPS_VALUES} for a slope")
        span = eps_values[-1] / eps_values[0]
        if span < MIN_EPS_SPAN:
            raise ValueError(
                f"method {method!r} at d={d} spans only {span:.2f}x in eps; "
                f"need at least {MIN_EPS_SPAN}x")
        xs = [math.log(1.0 / e) for e in eps_values]
        ys = []
        for e in eps_values:
            vals = per_eps[e]
            ys.append(math.log(sum(vals) / len(vals)))
        slope, band = _fit(xs, ys)
        fits.append(ScalingFit(method=method, d=d, slope=slope, band=band,
                               n_eps=len(eps_values),
                               n_rows=sum(len(v) for v in per_eps.values())))
    return fits


def format_report(fits: Sequence[ScalingFit]) -> str:
    header = (f"{'method':<12s} {'':<6s} {'slope of log depth vs log(1/eps)'}")
    return "\n".join([header] + [str(f) for f in fits])
