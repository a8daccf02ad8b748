"""Kernel selection: compiled extension if available, NumPy otherwise.

Set ``PARSCO_PURE_PY=1`` to force the fallback (used by the kernel benchmark
and to reproduce results on machines without a compiler).
"""

import os

from parsco._kernels import _seq_np

if os.environ.get("PARSCO_PURE_PY"):
    _impl = _seq_np
    KERNEL_BACKEND = "numpy"
else:
    try:
        from parsco._kernels import _seq_cy as _impl

        KERNEL_BACKEND = "cython"
    except ImportError:
        _impl = _seq_np
        KERNEL_BACKEND = "numpy"

recurrence_seq = _impl.recurrence_seq
recurrence_seq_numpy = _seq_np.recurrence_seq

__all__ = ["recurrence_seq", "recurrence_seq_numpy", "KERNEL_BACKEND"]
