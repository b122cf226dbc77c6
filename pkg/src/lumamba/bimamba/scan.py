"""Selective scan as a single differentiable primitive.

The compiled kernel is used when it was built and ``LUMAMBA_PURE_PYTHON`` is
unset; otherwise the numpy kernel runs. Both share one backward contract.
"""
import os

import numpy as np

from ..numcore import as_array, make_node
from . import _scan_py

try:
    if os.environ.get("LUMAMBA_PURE_PYTHON"):
        raise ImportError("pure-python kernel requested")
    from . import _scan_ext
except ImportError:
    _scan_ext = None

BACKEND = "cython" if _scan_ext is not None else "numpy"


def _kernels(backend):
    backend = backend or BACKEND
    if backend == "cython":
        if _scan_ext is None:
            raise RuntimeError("compiled scan kernel is not available")
        return _scan_ext.forward, _scan_ext.backward
    if backend == "numpy":
        return _scan_py.forward, _scan_py.backward
    raise ValueError(f"unknown scan backend {backend!r}")


def _contig(x, dtype):
    return np.ascontiguousarray(x, dtype=dtype)


def selective_scan(u, delta, A, Bm, Cm, Dskip, method="sequential", backend=None):
    """y_t = C_t . h_t + Dskip * u_t, with h_t = exp(delta_t A) h_{t-1} + delta_t B_t u_t.

    ``A`` holds the (negative) transition values, shape (D, N). ``method`` is
    "sequential" (kernel recurrence) or "associative" (log-depth prefix scan);
    both share the analytic backward.
    """
    u, delta, A, Bm, Cm, Dskip = (as_array(x) for x in (u, delta, A, Bm, Cm, Dskip))
    if u.ndim != 3 or u.shape[1] < 1:
        raise ValueError(f"selective_scan expects (B, S, D) input with S >= 1, got {u.shape}")
    b, s, d = u.shape
    n = A.shape[-1]
    if delta.shape != u.shape or A.shape != (d, n) or Bm.shape != (b, s, n) \
            or Cm.shape != (b, s, n) or Dskip.shape != (d,):
        raise ValueError(
            f"selective_scan shape mismatch: u {u.shape}, delta {delta.shape}, A {A.shape}, "
            f"B {Bm.shape}, C {Cm.shape}, D {Dskip.shape}")
    dtype = np.result_type(*(x.data.dtype for x in (u, delta, A, Bm, Cm, Dskip)))
    raw = [_contig(x.data, dtype) for x in (u, delta, A, Bm, Cm, Dskip)]
    fwd, bwd = _kernels(backend)
    if method == "sequential":
        y, h = fwd(*raw)
    elif method == "associative":
        y, h = _scan_py.forward_associative(*raw)
    else:
        raise ValueError(f"unknown scan method {method!r}")
    bad = ~np.isfinite(y)
    if bad.any():
        step = int(np.nonzero(bad.any(axis=(0, 2)))[0][0])
        raise FloatingPointError(f"selective_scan produced a non-finite value at step {step}")

    def backward(g):
        return bwd(_contig(g, dtype), *raw, h)

    return make_node(np.asarray(y), (u, delta, A, Bm, Cm, Dskip), backward)
