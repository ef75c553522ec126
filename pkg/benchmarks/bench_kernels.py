"""Compare the compiled and numpy path kernels.

Usage: ``python3 benchmarks/bench_kernels.py [--paths P] [--N N ...] [--repeat R]``
"""
import argparse
import time

import numpy as np

from causalsvie import _backend, _fallback

try:
    from causalsvie import _ckernels
except ImportError:
    _ckernels = None


def instance(P, N, d, l, seed=0):
    r = np.random.default_rng(seed)
    n = N + 1
    h = 1.0 / N
    tri = np.tri(n, n, -1)[..., None, None]
    A, C = (r.normal(size=(n, n, d, d)) * tri for _ in range(2))
    B, D = (r.normal(size=(n, n, d, l)) * tri for _ in range(2))
    b, sig = (r.normal(size=(n, n, d)) * tri[..., 0] for _ in range(2))
    Xi = r.normal(size=(n, l, d)) * 0.5
    Gamma = r.normal(size=(n, n, l, d)) * tri * 0.5
    v = r.normal(size=(n, l))
    x = np.broadcast_to(r.normal(size=(n, d)), (P, n, d)).copy()
    dW = r.normal(size=(P, N)) * np.sqrt(h)
    return (A, B, C, D, b, sig, Xi, Gamma, v, x, dW, 0, h)


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=256)
    ap.add_argument("--N", type=int, nargs="+", default=[32, 64, 128])
    ap.add_argument("--d", type=int, default=1)
    ap.add_argument("--l", type=int, default=1)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if _ckernels is None:
        print("compiled kernels not built; only the numpy timings are shown")
    print(f"{'kernel':<18}{'N':>6}{'paths':>7}{'numpy [s]':>12}{'cython [s]':>12}{'speedup':>9}")
    for N in args.N:
        inst = instance(args.paths, N, args.d, args.l)
        A, C, dW, h = inst[0], inst[2], inst[10], inst[12]
        phi = inst[9]
        cases = {
            "closed_loop_paths": lambda impl: _backend.closed_loop_paths(*inst, impl=impl),
            "svie_paths": lambda impl: _backend.svie_paths(phi, A, C, dW, 0, h, impl=impl),
        }
        for name, run in cases.items():
            t_py = best_of(lambda: run(_fallback), args.repeat)
            if _ckernels is None:
                print(f"{name:<18}{N:>6}{args.paths:>7}{t_py:>12.4f}{'-':>12}{'-':>9}")
                continue
            t_c = best_of(lambda: run(_ckernels), args.repeat)
            a, c = run(_fallback), run(_ckernels)
            a, c = (a, c) if isinstance(a, tuple) else ((a,), (c,))
            dev = max(float(np.max(np.abs(p - q) / (1 + np.abs(p)))) for p, q in zip(a, c))
            print(f"{name:<18}{N:>6}{args.paths:>7}{t_py:>12.4f}{t_c:>12.4f}{t_py / t_c:>8.1f}x"
                  f"   rel. dev {dev:.1e}")


if __name__ == "__main__":
    main()
