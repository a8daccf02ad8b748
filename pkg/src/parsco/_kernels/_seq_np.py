"""NumPy fallback for the sequential rank-1 recurrence kernel."""

import numpy as np


def recurrence_seq(x0, c, u, v, w):
    """Evaluate x_t = c_t (x_{t-1} - u_t <v_t, x_{t-1}>) + w_t for t = 1..T.

    Returns the (T, d) array of iterates x_1..x_T.  O(dT) work, strictly
    sequential; this is the ground truth the parallel engine is tested
    against.
    """
    T = c.shape[0]
    out = np.empty((T, x0.shape[0]), dtype=np.float64)
    x = x0.astype(np.float64, copy=True)
    for t in range(T):
        x = c[t] * (x - u[t] * (v[t] @ x)) + w[t]
        out[t] = x
    return out
