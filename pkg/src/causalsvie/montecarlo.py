"""Seeded Monte Carlo estimates of linear and quadratic functionals.

Paths are generated per ``path_id`` from the counter-based Brownian family,
so a batch can run on any thread.  Paths are simulated and evaluated in
fixed blocks of :data:`BLOCK` paths aligned to the global path index, and the
values are gathered in ``path_id`` order before reduction.  Every estimate is
therefore bitwise independent of the batch size and of the number of workers.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .brownian import brownian_batch
from .ebsvie import DualityData, linear_functional
from .forward import InputCondition, Strategy, closed_loop_batch
from .kernels import GridKernels
from .lyapunov import QuadraticWeights


BLOCK = 64


@dataclass(frozen=True)
class McConfig:
    """Monte Carlo settings.

    With ``antithetic`` set, paths ``2q`` and ``2q+1`` share the increments
    of stream ``q`` with opposite signs and count as one sample.
    ``batch_size`` is the number of paths per work item, rounded up to a
    multiple of :data:`BLOCK`.
    """

    n_paths: int
    seed: int = 0
    batch_size: int = 1024
    antithetic: bool = False

    def __post_init__(self):
        if int(self.n_paths) < 2:
            raise ValueError(f"n_paths must be at least 2, got {self.n_paths}")
        if int(self.batch_size) < 1:
            raise ValueError(f"batch_size must be positive, got {self.batch_size}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError(f"seed must fit in 64 bits, got {self.seed}")
        if self.antithetic and self.n_paths % 2:
            raise ValueError("antithetic sampling needs an even number of paths")

    @property
    def n_samples(self) -> int:
        return self.n_paths // 2 if self.antithetic else self.n_paths


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    n: int


def _stream_block(cfg: McConfig) -> int:
    return BLOCK // 2 if cfg.antithetic else BLOCK


def _stream_batches(cfg: McConfig):
    """Consecutive ranges of stream ids covering all samples, aligned to whole blocks."""
    n = cfg.n_samples
    block = _stream_block(cfg)
    step = block * max(1, -(-cfg.batch_size // BLOCK))
    return [(lo, min(lo + step, n)) for lo in range(0, n, step)]


def sample_values(kernels: GridKernels, strat: Strategy, inp: InputCondition, cfg: McConfig,
                  value: Callable[[np.ndarray, np.ndarray], np.ndarray],
                  workers: Optional[int] = None) -> np.ndarray:
    """Per-sample values of ``value(Theta, u)`` in stream order.

    ``value`` maps a batch ``Theta (P, N+1, N+1, d)``, ``u (P, N+1, l)`` to
    ``(P,)``.  Antithetic pairs are averaged before they are returned.
    """
    grid = kernels.grid
    block = _stream_block(cfg)

    def run(bounds):
        lo, hi = bounds
        return np.concatenate([run_block(b, min(b + block, hi)) for b in range(lo, hi, block)])

    def run_block(lo, hi):
        streams = np.arange(lo, hi)
        dW = brownian_batch(cfg.seed, grid, streams)
        if cfg.antithetic:
            dW = np.stack([dW, -dW], axis=1).reshape(-1, grid.N)
            ids = np.stack([2 * streams, 2 * streams + 1], axis=1).ravel()
        else:
            ids = streams
        theta, u = closed_loop_batch(kernels, strat, inp.x, dW, inp.start, path_ids=ids)
        vals = np.asarray(value(theta, u), dtype=float)
        return vals.reshape(-1, 2).mean(axis=1) if cfg.antithetic else vals

    batches = _stream_batches(cfg)
    if workers is None or workers <= 1 or len(batches) == 1:
        parts = [run(b) for b in batches]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, batches))
    return np.concatenate(parts)


def summarize(values: np.ndarray) -> McEstimate:
    """Sample mean and its standard error ``std / sqrt(n)``.

    The mean is accumulated relative to the first sample, so a constant
    sample returns that constant exactly.
    """
    values = np.asarray(values, dtype=float)
    n = len(values)
    dev = values - values[0]
    mean = float(values[0] + np.mean(dev))
    se = float(np.std(dev, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return McEstimate(mean, se, n)


def _diagonal(theta: np.ndarray) -> np.ndarray:
    n = theta.shape[1]
    return theta[:, np.arange(n), np.arange(n)]


def linear_values(data: DualityData, h: float, start: int):
    """Per-path linear functional as a ``value`` callback."""
    def value(theta, u):
        return linear_functional(data.psi, data.chi, _diagonal(theta), theta, h, start)
    return value


def quadratic_values(Q: QuadraticWeights, h: float, start: int):
    """Per-path running cost ``sum_{start<=j<N} h Z_j^T W_j Z_j`` as a ``value`` callback.

    ``Z_j`` is column ``j`` of ``Theta``; the sum expands into the pointwise,
    cross and double-integral parts without forming ``W_j``.
    """
    N = Q.N
    n = N + 1
    cols = np.zeros(n)
    cols[start:N] = 1.0
    strict = np.tri(n, n, -1) * cols[None, :]
    Q1 = Q.Q1 * cols[:, None, None]
    Q2 = Q.Q2.values * strict[..., None, None]
    later = np.arange(n)[:, None] > np.arange(n)[None, :]
    mask3 = (later[:, None, :] & later[None, :, :]) * cols[None, None, :]
    Q3 = Q.Q3.values * mask3[..., None, None]
    d = Q.d
    # W3[k] is the (i, a) x (l, b) block matrix of Q3[:, :, k]
    W3 = Q3.transpose(2, 0, 3, 1, 4).reshape(n, n * d, n * d)

    def value(theta, u):
        X = _diagonal(theta)
        out = h * np.einsum("pja,jab,pjb->p", X, Q1, X)
        out += 2.0 * h * h * np.einsum("pija,ijab,pjb->p", theta, Q2, X)
        Z = theta.transpose(2, 0, 1, 3).reshape(n, theta.shape[0], n * d)
        out += h**3 * np.sum(np.matmul(Z, W3) * Z, axis=(0, 2))
        return out
    return value


def estimate_linear_functional(kernels: GridKernels, strat: Strategy, data: DualityData,
                               inp: InputCondition, v=None, cfg: McConfig = None,
                               workers: Optional[int] = None) -> McEstimate:
    """Monte Carlo mean of ``sum psi.X h + sum chi.Theta h^2`` over the closed loop."""
    if cfg is None:
        raise ValueError("a McConfig is required")
    s = strat if v is None else strat.with_v(v)
    vals = sample_values(kernels, s, inp, cfg, linear_values(data, kernels.grid.h, inp.start),
                         workers)
    return summarize(vals)


def estimate_quadratic_functional(kernels: GridKernels, strat: Strategy, Q: QuadraticWeights,
                                  inp: InputCondition, cfg: McConfig,
                                  workers: Optional[int] = None) -> McEstimate:
    """Monte Carlo mean of the quadratic running cost of the homogeneous closed loop."""
    if not kernels.homogeneous or np.any(strat.v):
        raise ValueError("the quadratic functional needs a homogeneous instance")
    vals = sample_values(kernels, strat, inp, cfg, quadratic_values(Q, kernels.grid.h, inp.start),
                         workers)
    return summarize(vals)
