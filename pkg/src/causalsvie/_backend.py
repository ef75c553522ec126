"""Select the compiled path kernels when available, numpy otherwise.

Set ``CAUSALSVIE_PURE_PYTHON=1`` to force the numpy implementation.
"""
import os

import numpy as np

from . import _fallback

BACKEND = "python"
_impl = _fallback

if os.environ.get("CAUSALSVIE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _fallback


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def closed_loop_paths(A, B, C, D, b, sig, Xi, Gamma, v, x, dW, m0, h, impl=None):
    mod = impl or _impl
    return mod.closed_loop_paths(_c(A), _c(B), _c(C), _c(D), _c(b), _c(sig), _c(Xi),
                                 _c(Gamma), _c(v), _c(x), _c(dW), int(m0), float(h))


def svie_paths(phi, A, C, dW, m0, h, impl=None):
    mod = impl or _impl
    return mod.svie_paths(_c(phi), _c(A), _c(C), _c(dW), int(m0), float(h))
