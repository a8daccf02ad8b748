"""Parallel prefix engine for the recurrence x_t = c_t (I - u_t v_tᵀ) x_{t-1} + w_t.

The trick: products of rank-1 perturbations of the identity stay low-rank,

    (I - A₀B₀ᵀ)(I - A₁B₁ᵀ) = I - A Bᵀ,   A = [A₀ | A₁ - A₀(B₀ᵀA₁)],  B = [B₀ | B₁],

so a dyadic tree over the T steps yields the last iterate in O(log T · log d)
estimated depth and all iterates in one extra downsweep.  Nonunit scalars c_t
are absorbed by the substitution x_t = C_t y_t with C_t = Π c_s (prefix
products, overflow-guarded); c_t = 0 erases history, so zero steps split the
problem into independent contiguous blocks.

Factors are stacked per tree level and composed with batched products; once a
factor's rank reaches the ambient dimension it is stored densely.  Dense
products route through a pluggable :class:`MatmulBackend` (naive BLAS-backed
by default, Strassen optional).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from parsco._kernels import recurrence_seq

__all__ = [
    "Rank1Recurrence",
    "LowRankFactor",
    "DyadicTree",
    "MatmulBackend",
    "NaiveBackend",
    "StrassenBackend",
    "get_backend",
    "compose",
    "apply_factor",
    "solve_last",
    "solve_all",
    "solve_all_batch",
    "sequential_reference",
    "build_tree",
    "residual_diagnostic",
    "work_estimate",
    "depth_estimate",
]

# |log C| beyond this within one chunk triggers a split; keeps prefix products
# inside [1e-300, 1e300] with headroom.
_LOG_GUARD = 600.0


@dataclass
class Rank1Recurrence:
    """Inputs {x₀, c_t, u_t, v_t, w_t} of the recurrence, t = 1..T."""

    x0: np.ndarray
    c: np.ndarray
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray

    def __post_init__(self) -> None:
        self.x0 = np.asarray(self.x0, dtype=np.float64)
        self.c = np.asarray(self.c, dtype=np.float64)
        self.u = np.asarray(self.u, dtype=np.float64)
        self.v = np.asarray(self.v, dtype=np.float64)
        self.w = np.asarray(self.w, dtype=np.float64)
        d = self.x0.shape[0]
        T = self.c.shape[0]
        if T < 1:
            raise ValueError("T must be >= 1")
        for name, arr in (("u", self.u), ("v", self.v), ("w", self.w)):
            if arr.shape != (T, d):
                raise ValueError(f"{name} must have shape {(T, d)}, got {arr.shape}")
        for name, arr in (("x0", self.x0), ("c", self.c), ("u", self.u), ("v", self.v), ("w", self.w)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")

    @property
    def T(self) -> int:
        return self.c.shape[0]

    @property
    def d(self) -> int:
        return self.x0.shape[0]


@dataclass
class LowRankFactor:
    """A matrix I - A Bᵀ held in factored form (A, B are d×r)."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self) -> None:
        self.A = np.atleast_2d(np.asarray(self.A, dtype=np.float64))
        self.B = np.atleast_2d(np.asarray(self.B, dtype=np.float64))
        if self.A.shape != self.B.shape:
            raise ValueError("A and B must have identical shapes")

    @property
    def d(self) -> int:
        return self.A.shape[0]

    @property
    def rank(self) -> int:
        return self.A.shape[1]

    def dense(self) -> np.ndarray:
        return np.eye(self.d) - self.A @ self.B.T

    @staticmethod
    def identity(d: int) -> "LowRankFactor":
        z = np.zeros((d, 1))
        return LowRankFactor(z, z)

    @staticmethod
    def from_rank1(u: np.ndarray, v: np.ndarray) -> "LowRankFactor":
        return LowRankFactor(u.reshape(-1, 1), v.reshape(-1, 1))


class MatmulBackend:
    """Pluggable product strategy; `omega` documents the work exponent."""

    name = "abstract"
    omega = 3.0

    def matmul(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class NaiveBackend(MatmulBackend):
    """Blocked classical products (delegated to BLAS); omega = 3."""

    name = "naive"
    omega = 3.0

    def matmul(self, a, b):
        return np.matmul(a, b)


class StrassenBackend(MatmulBackend):
    """Strassen recursion on square blocks above a cutoff; omega = log₂7."""

    name = "strassen"
    omega = math.log2(7.0)

    def __init__(self, threshold: int = 64) -> None:
        if threshold < 2:
            raise ValueError("threshold must be >= 2")
        self.threshold = int(threshold)

    def matmul(self, a, b):
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        n, m = a.shape[-2], a.shape[-1]
        p = b.shape[-1]
        if not (n == m == p) or n < self.threshold:
            return np.matmul(a, b)
        return self._strassen(a, b)

    def _strassen(self, a, b):
        n = a.shape[-1]
        if n < self.threshold:
            return np.matmul(a, b)
        if n % 2:
            # odd sizes: pad by one zero row/col, recurse, crop
            pad = [(0, 0)] * (a.ndim - 2) + [(0, 1), (0, 1)]
            ap = np.pad(a, pad)
            bp = np.pad(b, pad)
            return self._strassen(ap, bp)[..., :n, :n]
        h = n // 2
        a11, a12 = a[..., :h, :h], a[..., :h, h:]
        a21, a22 = a[..., h:, :h], a[..., h:, h:]
        b11, b12 = b[..., :h, :h], b[..., :h, h:]
        b21, b22 = b[..., h:, :h], b[..., h:, h:]
        m1 = self._strassen(a11 + a22, b11 + b22)
        m2 = self._strassen(a21 + a22, b11)
        m3 = self._strassen(a11, b12 - b22)
        m4 = self._strassen(a22, b21 - b11)
        m5 = self._strassen(a11 + a12, b22)
        m6 = self._strassen(a21 - a11, b11 + b12)
        m7 = self._strassen(a12 - a22, b21 + b22)
        out = np.empty_like(m1, shape=a.shape)
        out[..., :h, :h] = m1 + m4 - m5 + m7
        out[..., :h, h:] = m3 + m5
        out[..., h:, :h] = m2 + m4
        out[..., h:, h:] = m1 - m2 + m3 + m6
        return out


_BACKENDS = {"naive": NaiveBackend, "strassen": StrassenBackend}


def get_backend(name: str | MatmulBackend | None) -> MatmulBackend:
    if name is None:
        return NaiveBackend()
    if isinstance(name, MatmulBackend):
        return name
    try:
        return _BACKENDS[name]()
    except KeyError:
        raise ValueError(f"unknown backend {name!r}; choose from {sorted(_BACKENDS)}") from None


def compose(F0: LowRankFactor, F1: LowRankFactor, backend: MatmulBackend | None = None) -> LowRankFactor:
    """Factor of the product F0.dense() @ F1.dense() (F1 acts first in time).

    Rank adds: the result has rank r₀ + r₁.
    """
    if F0.d != F1.d:
        raise ValueError(f"dimension mismatch: {F0.d} vs {F1.d}")
    be = get_backend(backend)
    cross = be.matmul(F0.B.T, F1.A)  # (r0, r1)
    A = np.concatenate([F0.A, F1.A - be.matmul(F0.A, cross)], axis=1)
    B = np.concatenate([F0.B, F1.B], axis=1)
    return LowRankFactor(A, B)


def apply_factor(F: LowRankFactor, x: np.ndarray) -> np.ndarray:
    """(I - A Bᵀ) x without densifying."""
    return x - F.A @ (F.B.T @ x)


def sequential_reference(rec: Rank1Recurrence) -> np.ndarray:
    """Ground-truth O(dT) loop; returns the (T, d) array x_1..x_T."""
    return recurrence_seq(
        np.ascontiguousarray(rec.x0),
        np.ascontiguousarray(rec.c),
        np.ascontiguousarray(rec.u),
        np.ascontiguousarray(rec.v),
        np.ascontiguousarray(rec.w),
    )


def work_estimate(d: int, T: int, backend: MatmulBackend | str | None = None) -> float:
    """Formula-grade work estimate d·T^(omega-1) for one engine solve."""
    be = get_backend(backend)
    return float(d) * float(T) ** (be.omega - 1.0)


def depth_estimate(d: int, T: int, all_iterates: bool = True) -> float:
    """Formula-grade computational depth: log²T·log d (all) or logT·log d (last)."""
    lt = max(1.0, math.log2(max(T, 2)))
    ld = max(1.0, math.log2(max(d, 2)) + 1.0)
    return (lt * lt if all_iterates else lt) * ld


# ---------------------------------------------------------------------------
# batched tree internals
#
# All arrays carry a leading batch axis over independent instances and a
# block axis over same-level tree nodes:  factors (B, n, d, r) or dense
# (B, n, d, d); block partial values P (B, n, d).  Blocks are chronological
# along axis 1; a parent combines children (2j, 2j+1) with 2j earlier.
# ---------------------------------------------------------------------------


def _apply_lr(A, Bm, x):
    t = np.einsum("bnir,bni->bnr", Bm, x)
    return x - np.einsum("bnir,bnr->bni", A, t)


def _level_apply(level, x):
    if level["dense"]:
        return np.einsum("bnij,bnj->bni", level["M"], x)
    return _apply_lr(level["A"], level["B"], x)


def _densify(level):
    d = level["A"].shape[2]
    M = -np.einsum("bnir,bnjr->bnij", level["A"], level["B"])
    M[..., np.arange(d), np.arange(d)] += 1.0
    return M


def _combine_level(level, backend):
    """One upsweep step: pair children into parents, halving the block axis."""
    P_even, P_odd = level["P"][:, 0::2], level["P"][:, 1::2]
    if level["dense"]:
        M_even, M_odd = level["M"][:, 0::2], level["M"][:, 1::2]
        M_par = backend.matmul(M_odd, M_even)
        P_par = np.einsum("bnij,bnj->bni", M_odd, P_even) + P_odd
        return {"dense": True, "M": M_par, "P": P_par}
    A_even, A_odd = level["A"][:, 0::2], level["A"][:, 1::2]
    B_even, B_odd = level["B"][:, 0::2], level["B"][:, 1::2]
    d = A_even.shape[2]
    r = A_even.shape[3]
    if 2 * r > d:
        # rank would exceed the ambient dimension: go dense
        lev_e = {"dense": False, "A": A_even, "B": B_even}
        lev_o = {"dense": False, "A": A_odd, "B": B_odd}
        M_even, M_odd = _densify(lev_e), _densify(lev_o)
        M_par = backend.matmul(M_odd, M_even)
        P_par = np.einsum("bnij,bnj->bni", M_odd, P_even) + P_odd
        return {"dense": True, "M": M_par, "P": P_par}
    cross = np.einsum("bnir,bnis->bnrs", B_odd, A_even)  # (B, n/2, r, r)
    A_new = A_even - np.einsum("bnir,bnrs->bnis", A_odd, cross)
    A_par = np.concatenate([A_odd, A_new], axis=3)
    B_par = np.concatenate([B_odd, B_even], axis=3)
    tmp = np.einsum("bnir,bni->bnr", B_odd, P_even)
    P_par = P_odd + P_even - np.einsum("bnir,bnr->bni", A_odd, tmp)
    return {"dense": False, "A": A_par, "B": B_par, "P": P_par}


def _upsweep(u, v, w, backend, keep_levels):
    """Build the factor tree bottom-up; S (axis 1) must be a power of two.

    Returns (levels, root) where levels[i] holds the level-i factors and
    partials (only if keep_levels) and root is the level-⌈log₂S⌉ entry.
    """
    level = {"dense": False, "A": u[..., None], "B": v[..., None], "P": w}
    levels = [level] if keep_levels else None
    while level["P"].shape[1] > 1:
        level = _combine_level(level, backend)
        if keep_levels:
            levels.append(level)
    return levels, level


def _downsweep(levels, x_init):
    """Carry block-entry values down the tree; returns all iterates (B, S, d)."""
    carries = x_init[:, None, :]
    for lvl in range(len(levels) - 2, -1, -1):
        child = levels[lvl]
        n_child = child["P"].shape[1]
        ev = {
            "dense": child["dense"],
            **({"M": child["M"][:, 0::2]} if child["dense"] else {"A": child["A"][:, 0::2], "B": child["B"][:, 0::2]}),
        }
        nxt = np.empty((carries.shape[0], n_child, carries.shape[2]))
        nxt[:, 0::2] = carries
        nxt[:, 1::2] = _level_apply(ev, carries) + child["P"][:, 0::2]
        carries = nxt
    return _level_apply(levels[0], carries) + levels[0]["P"]


def _pad_pow2(u, v, w):
    S = u.shape[1]
    S2 = 1 << max(0, (S - 1).bit_length())
    if S2 == S:
        return u, v, w, S
    pad = [(0, 0), (0, S2 - S), (0, 0)]
    return np.pad(u, pad), np.pad(v, pad), np.pad(w, pad), S


def _solve_unit(x_init, u, v, w, backend, want_all):
    """Solve x_i = (I - u_i v_iᵀ) x_{i-1} + w_i for one chunk (c ≡ 1)."""
    up, vp, wp, S = _pad_pow2(u, v, w)
    levels, root = _upsweep(up, vp, wp, backend, keep_levels=want_all)
    if want_all:
        return _downsweep(levels, x_init)[:, :S]
    return _level_apply(root, x_init[:, None, :])[:, 0] + root["P"][:, 0]


def _guarded_chunks(abslog_c, start, end, S):
    """Chunk [start, end) into runs of <= S steps, splitting early whenever the
    within-chunk prefix log |C| would leave the overflow guard band."""
    cs = start
    while cs < end:
        ce = min(cs + S, end)
        cl = np.cumsum(abslog_c[cs:ce])
        bad = np.flatnonzero(np.abs(cl) > _LOG_GUARD)
        if bad.size:
            ce = cs + max(1, int(bad[0]))
        yield cs, ce
        cs = ce


def _solve_run_batch(x_init, c, u, v, w, backend, chunk, want_all):
    """Batched solver for a zero-free run of steps.

    x_init (B, d); c (B, S); u, v, w (B, S, d).  Returns (B, S, d) iterates
    when want_all else the final (B, d).
    """
    Bn, S, d = u.shape
    out = np.empty((Bn, S, d)) if want_all else None
    x = x_init
    # guard splits must be common across the batch for one stacked solve
    maxlog = np.max(np.abs(np.log(np.abs(c))), axis=0)
    for cs, ce in _guarded_chunks(maxlog, 0, S, chunk):
        if ce - cs == 1:
            # single step: evaluate directly, no prefix substitution
            dot = np.einsum("bi,bi->b", v[:, cs], x)
            x = c[:, cs, None] * (x - u[:, cs] * dot[:, None]) + w[:, cs]
            if want_all:
                out[:, cs] = x
            continue
        C = np.cumprod(c[:, cs:ce], axis=1)  # (B, n)
        wtil = w[:, cs:ce] / C[..., None]
        if want_all:
            y = _solve_unit(x, u[:, cs:ce], v[:, cs:ce], wtil, backend, True)
            xs = C[..., None] * y
            out[:, cs:ce] = xs
            x = xs[:, -1]
        else:
            y_end = _solve_unit(x, u[:, cs:ce], v[:, cs:ce], wtil, backend, False)
            x = C[:, -1, None] * y_end
    return out if want_all else x


def _segments(c):
    """Split steps at exact zeros: yields ('run', s, e) or ('zero', t, t+1)."""
    zeros = np.flatnonzero(c == 0.0)
    prev = 0
    for z in zeros:
        if z > prev:
            yield ("run", prev, int(z))
        yield ("zero", int(z), int(z) + 1)
        prev = int(z) + 1
    if prev < c.shape[0]:
        yield ("run", prev, c.shape[0])


def _log_solve(ledger, d, T, backend, all_iterates):
    if ledger is not None:
        ledger.add_comp(
            work=work_estimate(d, T, backend),
            depth=depth_estimate(d, T, all_iterates=all_iterates),
        )


def solve_all(rec: Rank1Recurrence, backend=None, chunk: int | None = None, ledger=None) -> np.ndarray:
    """All iterates x_1..x_T, matching sequential evaluation to ~1e-9 relative."""
    be = get_backend(backend)
    T, d = rec.T, rec.d
    S = T if chunk is None else int(chunk)
    if S < 1:
        raise ValueError("chunk must be >= 1")
    out = np.empty((T, d))
    x = rec.x0[None]
    for kind, s, e in _segments(rec.c):
        if kind == "zero":
            out[s] = rec.w[s]
            x = rec.w[s][None]
        else:
            res = _solve_run_batch(x, rec.c[None, s:e], rec.u[None, s:e], rec.v[None, s:e], rec.w[None, s:e], be, S, True)
            out[s:e] = res[0]
            x = res[0, -1][None]
    _log_solve(ledger, d, T, be, True)
    return out


def solve_last(rec: Rank1Recurrence, backend=None, chunk: int | None = None, ledger=None) -> np.ndarray:
    """Final iterate x_T only (upsweep, no downsweep)."""
    be = get_backend(backend)
    T, d = rec.T, rec.d
    S = T if chunk is None else int(chunk)
    if S < 1:
        raise ValueError("chunk must be >= 1")
    x = rec.x0[None]
    for kind, s, e in _segments(rec.c):
        if kind == "zero":
            x = rec.w[s][None]
        else:
            x = _solve_run_batch(x, rec.c[None, s:e], rec.u[None, s:e], rec.v[None, s:e], rec.w[None, s:e], be, S, False)
    _log_solve(ledger, d, T, be, False)
    return x[0]


def solve_all_batch(recs, backend=None, chunk: int | None = None, ledger=None) -> list[np.ndarray]:
    """solve_all for many same-shaped recurrences in one stacked pass.

    Instances must share (T, d).  Zero-free instances are solved together;
    any instance containing a zero step falls back to its own solve_all call
    (identical results, test-covered).
    """
    if not recs:
        return []
    be = get_backend(backend)
    T, d = recs[0].T, recs[0].d
    for r in recs:
        if (r.T, r.d) != (T, d):
            raise ValueError("batched instances must share (T, d)")
    S = T if chunk is None else int(chunk)
    if any(np.any(r.c == 0.0) for r in recs):
        return [solve_all(r, be, S, ledger) for r in recs]
    x0 = np.stack([r.x0 for r in recs])
    c = np.stack([r.c for r in recs])
    u = np.stack([r.u for r in recs])
    v = np.stack([r.v for r in recs])
    w = np.stack([r.w for r in recs])
    out = _solve_run_batch(x0, c, u, v, w, be, S, True)
    _log_solve(ledger, d, T, be, True)
    return [out[i] for i in range(len(recs))]


@dataclass
class DyadicTree:
    """Explicit factor tree for inspection and small-instance validation.

    levels[i][j] is the factor of block j at level i (block length 2^i);
    partials[i][j] is the block's contribution assuming zero input state;
    C holds the prefix scalars of the represented (zero-free) run.
    """

    ell: int
    levels: list = field(default_factory=list)
    partials: list = field(default_factory=list)
    C: np.ndarray | None = None


def build_tree(rec: Rank1Recurrence, backend=None) -> DyadicTree:
    """Materialize the tree for a zero-free recurrence (test/debug scale)."""
    if np.any(rec.c == 0.0):
        raise ValueError("build_tree expects a zero-free c sequence")
    be = get_backend(backend)
    T, d = rec.T, rec.d
    S2 = 1 << max(0, (T - 1).bit_length())
    C = np.cumprod(rec.c)
    u = np.vstack([rec.u, np.zeros((S2 - T, d))])
    v = np.vstack([rec.v, np.zeros((S2 - T, d))])
    wtil = np.vstack([rec.w / C[:, None], np.zeros((S2 - T, d))])
    level = [LowRankFactor.from_rank1(u[t], v[t]) for t in range(S2)]
    partial = [wtil[t].copy() for t in range(S2)]
    tree = DyadicTree(ell=int(math.log2(S2)) if S2 > 1 else 0)
    tree.levels.append(level)
    tree.partials.append(partial)
    tree.C = C
    while len(level) > 1:
        nxt, nxtp = [], []
        for j in range(0, len(level), 2):
            nxt.append(compose(level[j + 1], level[j], be))
            nxtp.append(apply_factor(level[j + 1], partial[j]) + partial[j + 1])
        level, partial = nxt, nxtp
        tree.levels.append(level)
        tree.partials.append(partial)
    return tree


def residual_diagnostic(rec: Rank1Recurrence, xs: np.ndarray) -> float:
    """Max relative defect of xs against the recurrence (conditioning report).

    The engine's arithmetic is exact in exact arithmetic; for ill-conditioned
    c/u/v sequences this is the honest error measure to inspect.
    """
    prev = np.vstack([rec.x0[None], xs[:-1]])
    dots = np.einsum("td,td->t", rec.v, prev)
    pred = rec.c[:, None] * (prev - rec.u * dots[:, None]) + rec.w
    num = np.linalg.norm(xs - pred, axis=1)
    den = 1.0 + np.linalg.norm(xs, axis=1)
    return float(np.max(num / den))
