import os
import subprocess
import sys

import numpy as np
import pytest

import causalsvie
from causalsvie import _backend, _fallback, brownian_batch
from causalsvie.forward import closed_loop_batch

from families import FRACTIONAL, MIXED, SMOOTH, Family

try:
    from causalsvie import _ckernels
except ImportError:  # extension not built
    _ckernels = None

needs_ext = pytest.mark.skipif(_ckernels is None, reason="compiled extension not built")


@needs_ext
@pytest.mark.parametrize("kind, d, l, start, inhom", [(SMOOTH, 1, 1, 0.0, False), (FRACTIONAL, 2, 1, 0.25, True),
                                                      (MIXED, 2, 3, 0.5, True)])
def test_closed_loop_matches_fallback(kind, d, l, start, inhom):
    fam = Family(0, d=d, l=l, kind=kind, start_frac=start, inhomogeneous=inhom)
    kernels, strat, inp = fam.build(16)
    dW = brownian_batch(1, kernels.grid, np.arange(20))
    a = closed_loop_batch(kernels, strat, inp.x, dW, inp.start, impl=_ckernels)
    b = closed_loop_batch(kernels, strat, inp.x, dW, inp.start, impl=_fallback)
    for p, q in zip(a, b):
        assert np.allclose(p, q, rtol=1e-13, atol=1e-13)


@needs_ext
def test_svie_matches_fallback():
    rng = np.random.default_rng(2)
    n, m, P = 12, 3, 5
    phi = rng.normal(size=(P, n, m))
    A = np.tril(np.ones((n, n)), -1)[..., None, None] * rng.normal(size=(n, n, m, m))
    C = np.tril(np.ones((n, n)), -1)[..., None, None] * rng.normal(size=(n, n, m, m))
    dW = rng.normal(size=(P, n - 1)) * 0.3
    for m0 in (0, 4):
        a = _backend.svie_paths(phi, A, C, dW, m0, 0.1, impl=_ckernels)
        b = _backend.svie_paths(phi, A, C, dW, m0, 0.1, impl=_fallback)
        assert np.allclose(a, b, rtol=1e-13, atol=1e-13)


def test_backend_name():
    assert causalsvie.BACKEND in ("cython", "python")
    if _ckernels is not None and os.environ.get("CAUSALSVIE_PURE_PYTHON") is None:
        assert causalsvie.BACKEND == "cython"


def test_environment_forces_fallback():
    env = dict(os.environ, CAUSALSVIE_PURE_PYTHON="1")
    proc = subprocess.run([sys.executable, "-c", "import causalsvie; print(causalsvie.BACKEND)"],
                          capture_output=True, text=True, env=env)
    assert proc.returncode == 0 and proc.stdout.strip() == "python"
