"""Problem instances, batched stochastic oracles, cost accounting, and RNG streams.

The oracle model: an algorithm interacts with a stochastic subgradient oracle
``g`` (``E g(x)`` a subgradient of ``f`` at ``x``, ``E‖g(x)‖² ≤ L²``) in rounds.
In one round it submits a batch of query points and receives one sample per
point.  Two costs are tracked exactly: ``query_depth`` (number of rounds) and
``query_count`` (total points).  Computational work/depth are recorded as
formula-based estimates only, since wall-clock depth is scheduler noise.

Randomness is counter-based and keyed: every consumer derives its own stream
from ``(master_seed, label path)``, so results are independent of execution
order and thread count.
"""

from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CostLedger",
    "RngStream",
    "OracleHandle",
    "ProblemInstance",
    "derive_stream",
    "gaussian_vector",
    "submit_batch",
]


class CostLedger:
    """Monotone counters for oracle and (estimated) computational cost.

    ``query_depth`` increments by exactly 1 per submitted batch regardless of
    batch size; ``query_count`` by the batch size.  Updates are atomic so
    worker tasks may share a ledger.
    """

    __slots__ = ("query_count", "query_depth", "est_comp_work", "est_comp_depth", "_lock")

    def __init__(self) -> None:
        self.query_count = 0
        self.query_depth = 0
        self.est_comp_work = 0.0
        self.est_comp_depth = 0.0
        self._lock = threading.Lock()

    def add_batch(self, n: int) -> None:
        if n < 1:
            raise ValueError("batch size must be >= 1")
        with self._lock:
            self.query_count += int(n)
            self.query_depth += 1

    def add_comp(self, work: float = 0.0, depth: float = 0.0) -> None:
        if work < 0 or depth < 0:
            raise ValueError("work/depth estimates must be nonnegative")
        with self._lock:
            self.est_comp_work += float(work)
            self.est_comp_depth += float(depth)

    def merge(self, other: "CostLedger") -> None:
        """Fold another ledger's totals into this one (depth adds too)."""
        with self._lock:
            self.query_count += other.query_count
            self.query_depth += other.query_depth
            self.est_comp_work += other.est_comp_work
            self.est_comp_depth += other.est_comp_depth

    def snapshot(self) -> dict:
        with self._lock:
            return {
                "query_count": self.query_count,
                "query_depth": self.query_depth,
                "est_comp_work": self.est_comp_work,
                "est_comp_depth": self.est_comp_depth,
            }

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        s = self.snapshot()
        return (
            f"CostLedger(count={s['query_count']}, depth={s['query_depth']}, "
            f"work~{s['est_comp_work']:.3g}, cdepth~{s['est_comp_depth']:.3g})"
        )


def _label_to_ints(label) -> tuple[int, ...]:
    """Map a structured label path to spawn-key integers.

    Strings hash through blake2s so labels stay stable across runs and
    platforms; integers pass through (offset to dodge collisions with hashes).
    """
    if not isinstance(label, (tuple, list)):
        label = (label,)
    out: list[int] = []
    for part in label:
        if isinstance(part, (int, np.integer)):
            if part < 0:
                raise ValueError("label integers must be nonnegative")
            out.append(int(part) * 2)
        elif isinstance(part, str):
            digest = hashlib.blake2s(part.encode("utf-8"), digest_size=6).digest()
            out.append(int.from_bytes(digest, "big") * 2 + 1)
        else:
            raise TypeError(f"label parts must be int or str, got {type(part)!r}")
    return tuple(out)


class RngStream:
    """A keyed, counter-based random stream (Philox under the hood).

    The draw sequence is a pure function of ``(master_seed, label path)``;
    ``counter`` records how many scalar draws were consumed.  Streams are
    value-like: derive children freely and move them between workers.
    """

    __slots__ = ("master_seed", "stream_label", "counter", "_gen")

    def __init__(self, master_seed: int, stream_label: tuple = ()) -> None:
        self.master_seed = int(master_seed)
        self.stream_label = tuple(stream_label)
        self.counter = 0
        key = _label_to_ints(self.stream_label)
        seq = np.random.SeedSequence(entropy=self.master_seed, spawn_key=key)
        self._gen = np.random.Generator(np.random.Philox(seq))

    def child(self, *label) -> "RngStream":
        """Derive an independent stream by extending the label path."""
        return RngStream(self.master_seed, self.stream_label + tuple(label))

    def standard_normal(self, shape=None) -> np.ndarray:
        x = self._gen.standard_normal(size=shape)
        self.counter += int(np.size(x))
        return x

    def uniform(self, low=0.0, high=1.0, shape=None) -> np.ndarray:
        x = self._gen.uniform(low, high, size=shape)
        self.counter += int(np.size(x))
        return x

    def integers(self, low, high=None, shape=None) -> np.ndarray:
        x = self._gen.integers(low, high, size=shape)
        self.counter += int(np.size(x))
        return x

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"RngStream(seed={self.master_seed}, label={self.stream_label}, n={self.counter})"


def derive_stream(master_seed: int, label) -> RngStream:
    """Build the stream keyed by ``(master_seed, label)``; deterministic."""
    if not isinstance(label, (tuple, list)):
        label = (label,)
    return RngStream(master_seed, tuple(label))


def gaussian_vector(stream: RngStream, d: int, rho: float) -> np.ndarray:
    """One sample from N(0, rho² I_d); ``rho=0`` degenerates to the zero vector."""
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    if d < 1:
        raise ValueError("d must be >= 1")
    if rho == 0.0:
        return np.zeros(d)
    return rho * stream.standard_normal(d)


class OracleHandle:
    """A stochastic subgradient oracle with mandatory batch accounting.

    Parameters
    ----------
    query_fn : callable
        ``query_fn(points, stream) -> samples`` mapping an ``(n, d)`` array to
        an ``(n, d)`` array of subgradient samples.  Deterministic oracles may
        ignore ``stream``.
    ledger : CostLedger
        Every batch is charged here; no query path bypasses it.
    stream : RngStream, optional
        Source of oracle-internal noise (advanced one child per batch).
    """

    __slots__ = ("query_fn", "ledger", "_stream", "_batch_index")

    def __init__(self, query_fn, ledger: CostLedger, stream: RngStream | None = None) -> None:
        self.query_fn = query_fn
        self.ledger = ledger
        self._stream = stream
        self._batch_index = 0

    def submit_batch(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if pts.shape[0] == 0:
            raise ValueError("empty batch rejected: a round must contain >= 1 query")
        if not np.all(np.isfinite(pts)):
            raise ValueError("query points must be finite")
        # Stream advances per batch so accounting stays split-invariant under
        # a fixed batching plan.
        sub = None
        if self._stream is not None:
            sub = self._stream.child("batch", self._batch_index)
        self._batch_index += 1
        samples = np.asarray(self.query_fn(pts, sub), dtype=np.float64)
        if samples.shape != pts.shape:
            raise ValueError(f"oracle returned shape {samples.shape}, expected {pts.shape}")
        self.ledger.add_batch(pts.shape[0])
        return samples


def submit_batch(oracle: OracleHandle, points) -> np.ndarray:
    """Submit one parallel round of queries; depth +1, count +len(points)."""
    return oracle.submit_batch(points)


@dataclass
class ProblemInstance:
    """A stochastic convex optimization instance.

    ``f`` is L-Lipschitz with a minimizer of norm at most ``R``; ``oracle``
    samples subgradients; the goal is expected suboptimality ``eps``.  The
    condition parameter is ``kappa = L·R/eps``.
    """

    d: int
    L: float
    R: float
    eps: float
    oracle: OracleHandle
    value_fn: object = None  # callable x -> f(x), diagnostics only (not ledgered)
    f_star: float | None = None
    x_star: np.ndarray | None = None
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if min(self.L, self.R, self.eps) <= 0:
            raise ValueError("L, R, eps must be positive")
        if self.eps > self.L * self.R:
            raise ValueError("eps must satisfy eps <= L*R (kappa >= 1)")

    @property
    def kappa(self) -> float:
        return self.L * self.R / self.eps
