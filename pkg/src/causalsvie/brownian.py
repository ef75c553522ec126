"""Counter-based Brownian increments.

Increment ``j`` of path ``p`` under seed ``s`` is a deterministic function of
``(s, p, j)``: the Philox key is ``(s, p)`` and raw word ``j`` is mapped to a
standard normal by the inverse normal CDF.  Any increment can therefore be
regenerated on its own, and batches of paths can be produced in any order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .grid import TimeGrid

_MASK64 = (1 << 64) - 1
_WORDS_PER_BLOCK = 4


def _key(seed: int, path_id: int) -> int:
    return (int(seed) & _MASK64) | ((int(path_id) & _MASK64) << 64)


def _to_normal(raw: np.ndarray) -> np.ndarray:
    u = ((raw >> np.uint64(11)).astype(float) + 0.5) * 2.0**-53
    return ndtri(u)


def standard_normals(seed: int, path_id: int, n: int) -> np.ndarray:
    """The first ``n`` standard normals of stream ``(seed, path_id)``."""
    raw = np.random.Philox(key=_key(seed, path_id)).random_raw(n)
    return _to_normal(np.asarray(raw, dtype=np.uint64))


def standard_normal_at(seed: int, path_id: int, j: int) -> float:
    """Normal number ``j`` of stream ``(seed, path_id)``, computed independently."""
    block, offset = divmod(int(j), _WORDS_PER_BLOCK)
    raw = np.random.Philox(key=_key(seed, path_id), counter=block).random_raw(_WORDS_PER_BLOCK)
    return float(_to_normal(np.asarray(raw, dtype=np.uint64))[offset])


@dataclass(frozen=True, eq=False)
class BrownianPath:
    """Increments ``dW[j] = W(t_{j+1}) - W(t_j)``, ``j = 0..N-1``."""

    increments: np.ndarray
    h: float
    seed: int = 0
    path_id: int = 0

    @property
    def N(self) -> int:
        return len(self.increments)

    def coarsen(self) -> "BrownianPath":
        """The same Brownian motion on the grid with half as many steps."""
        if self.N % 2:
            raise ValueError("cannot coarsen an odd number of increments")
        dw = self.increments.reshape(-1, 2).sum(axis=1)
        return BrownianPath(dw, 2 * self.h, self.seed, self.path_id)

    def negated(self) -> "BrownianPath":
        return BrownianPath(-self.increments, self.h, self.seed, self.path_id)

    @classmethod
    def zero(cls, grid: TimeGrid) -> "BrownianPath":
        return cls(np.zeros(grid.N), grid.h)

    @classmethod
    def from_increments(cls, increments, grid: TimeGrid) -> "BrownianPath":
        inc = np.asarray(increments, dtype=float)
        if inc.shape != (grid.N,):
            raise ValueError(f"expected {grid.N} increments, got shape {inc.shape}")
        return cls(inc, grid.h)


def simulate_brownian(seed: int, grid: TimeGrid, path_id: int = 0) -> BrownianPath:
    """Path ``path_id`` of the Brownian family keyed by ``seed``."""
    z = standard_normals(seed, path_id, grid.N)
    return BrownianPath(z * np.sqrt(grid.h), grid.h, seed, path_id)


def brownian_batch(seed: int, grid: TimeGrid, path_ids) -> np.ndarray:
    """Increments for several paths, shape ``(len(path_ids), N)``."""
    path_ids = np.asarray(path_ids, dtype=np.int64)
    out = np.empty((len(path_ids), grid.N))
    sq = np.sqrt(grid.h)
    for row, pid in enumerate(path_ids):
        out[row] = standard_normals(seed, int(pid), grid.N) * sq
    return out
