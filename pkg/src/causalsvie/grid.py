"""Uniform time grids and storage for functions on the triangle and the pyramid.

Conventions
-----------
Nodes are ``t_i = t0 + i*h`` for ``i = 0..N``.  A triangle field stores
``f(t_i, t_j)`` for ``0 <= j < i <= N`` (plus the diagonal ``j == i`` when
flagged) in a dense ``(N+1, N+1, *shape)`` array that is zero outside its
domain, so strict sums such as ``sum_{i>j}`` can be taken over full columns.
A pyramid tensor stores ``f(t_i, t_j, t_k)`` for ``k <= min(i, j)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class GridError(ValueError):
    """Raised on invalid grids or out-of-domain field access."""


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    T: float
    N: int

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise GridError(f"N must be a positive integer, got {self.N!r}")
        if not (np.isfinite(self.t0) and np.isfinite(self.T)) or self.T <= self.t0:
            raise GridError(f"need finite t0 < T, got t0={self.t0}, T={self.T}")
        object.__setattr__(self, "N", int(self.N))

    @property
    def h(self) -> float:
        return (self.T - self.t0) / self.N

    @property
    def nodes(self) -> np.ndarray:
        t = self.t0 + self.h * np.arange(self.N + 1)
        t[-1] = self.T
        return t

    def refine(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.t0, self.T, self.N * factor)

    @classmethod
    def from_nodes(cls, nodes) -> "TimeGrid":
        """Build a grid from explicit nodes; rejects non-uniform spacing."""
        nodes = np.asarray(nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise GridError("need at least two nodes")
        steps = np.diff(nodes)
        if not np.allclose(steps, steps[0], rtol=1e-10, atol=0.0):
            raise GridError("only uniform grids are supported")
        return cls(float(nodes[0]), float(nodes[-1]), nodes.size - 1)


def _as_shape(shape) -> tuple:
    if shape is None:
        return ()
    if isinstance(shape, int):
        return (shape,)
    return tuple(int(s) for s in shape)


@dataclass
class TriField:
    """A (matrix- or vector-valued) function on the discrete triangle.

    ``values[i, j]`` holds ``f(t_i, t_j)`` for ``j < i``; with
    ``diagonal=True`` the slots ``j == i`` are part of the domain as well.
    Entries outside the domain are kept at zero.
    """

    values: np.ndarray
    diagonal: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim < 2 or v.shape[0] != v.shape[1]:
            raise GridError(f"triangle storage must be (N+1, N+1, ...), got {v.shape}")
        self.values = v * _domain_mask(v.shape[0], self.diagonal).reshape(
            v.shape[:2] + (1,) * (v.ndim - 2)
        )

    @classmethod
    def zeros(cls, N: int, shape=None, diagonal: bool = False) -> "TriField":
        return cls(np.zeros((N + 1, N + 1) + _as_shape(shape)), diagonal)

    @property
    def N(self) -> int:
        return self.values.shape[0] - 1

    @property
    def shape(self) -> tuple:
        return self.values.shape[2:]

    def _check(self, i, j):
        if not (0 <= j <= i <= self.N) or (j == i and not self.diagonal):
            raise GridError(f"({i}, {j}) is outside the discrete triangle (N={self.N})")

    def __getitem__(self, ij):
        i, j = ij
        self._check(i, j)
        return self.values[i, j]

    def __setitem__(self, ij, value):
        i, j = ij
        self._check(i, j)
        self.values[i, j] = value

    def column(self, j: int) -> np.ndarray:
        """Full column ``j`` (rows 0..N), zero outside the domain."""
        return self.values[:, j]

    def copy(self) -> "TriField":
        return TriField(self.values.copy(), self.diagonal)

    def __add__(self, other: "TriField") -> "TriField":
        return TriField(self.values + other.values, self.diagonal and other.diagonal)

    def __mul__(self, scalar: float) -> "TriField":
        return TriField(self.values * scalar, self.diagonal)

    __rmul__ = __mul__

    def transpose(self) -> "TriField":
        """Element-wise matrix transpose (not a swap of the time arguments)."""
        return TriField(np.swapaxes(self.values, -1, -2), self.diagonal)


def _domain_mask(n: int, diagonal: bool) -> np.ndarray:
    return np.tri(n, n, k=0 if diagonal else -1, dtype=bool)


def pyramid_mask(N: int) -> np.ndarray:
    """Boolean mask of slots ``(i, j, k)`` with ``k <= min(i, j)``."""
    idx = np.arange(N + 1)
    return idx[None, None, :] <= np.minimum.outer(idx, idx)[:, :, None]


@dataclass
class PyrTensor:
    """Matrix-valued function on the discrete pyramid, ``values[i, j, k]``."""

    values: np.ndarray
    symmetric: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 5 or not (v.shape[0] == v.shape[1] == v.shape[2]):
            raise GridError(f"pyramid storage must be (N+1,)*3 + (d, d), got {v.shape}")
        self.values = v * pyramid_mask(v.shape[0] - 1)[..., None, None]

    @classmethod
    def zeros(cls, N: int, d: int, symmetric: bool = False) -> "PyrTensor":
        return cls(np.zeros((N + 1,) * 3 + (d, d)), symmetric)

    @property
    def N(self) -> int:
        return self.values.shape[0] - 1

    def __getitem__(self, ijk):
        i, j, k = ijk
        if not (0 <= k <= min(i, j) and max(i, j) <= self.N):
            raise GridError(f"({i}, {j}, {k}) is outside the discrete pyramid (N={self.N})")
        return self.values[i, j, k]

    def level(self, k: int) -> np.ndarray:
        return self.values[:, :, k]

    def symmetry_residual(self) -> float:
        v = self.values
        return float(np.max(np.abs(v - np.swapaxes(np.swapaxes(v, 0, 1), -1, -2)), initial=0.0))

    def symmetrize(self) -> None:
        v = self.values
        self.values = 0.5 * (v + np.swapaxes(np.swapaxes(v, 0, 1), -1, -2))


@dataclass
class PiPair:
    """Discrete member of the space of pairs ``(P1, P2)``.

    ``P1`` has shape ``(N+1, d, d)`` and is kept symmetric; ``P2`` is a
    symmetric pyramid tensor.  The t-derivative of ``P2`` is represented
    implicitly by backward differences in ``k``.
    """

    P1: np.ndarray
    P2: PyrTensor = field(default=None)

    def __post_init__(self):
        P1 = np.asarray(self.P1, dtype=float)
        if P1.ndim != 3 or P1.shape[1] != P1.shape[2]:
            raise GridError(f"P1 must be (N+1, d, d), got {P1.shape}")
        self.P1 = 0.5 * (P1 + np.swapaxes(P1, -1, -2))
        if self.P2 is None:
            self.P2 = PyrTensor.zeros(P1.shape[0] - 1, P1.shape[1], symmetric=True)
        elif not isinstance(self.P2, PyrTensor):
            self.P2 = PyrTensor(self.P2, symmetric=True)
        if self.P2.N != P1.shape[0] - 1:
            raise GridError("P1 and P2 live on different grids")
        self.P2.symmetric = True

    @classmethod
    def zeros(cls, N: int, d: int) -> "PiPair":
        return cls(np.zeros((N + 1, d, d)))

    @property
    def N(self) -> int:
        return self.P1.shape[0] - 1

    @property
    def d(self) -> int:
        return self.P1.shape[1]

    def P2dot(self, h: float) -> np.ndarray:
        """Backward differences ``(P2[..,k+1] - P2[..,k]) / h`` on interior slots.

        Slot ``[i, j, k]`` is filled for ``k < min(i, j)`` and zero elsewhere;
        the step from ``k = min(i, j) - 1`` to the boundary level is included.
        """
        v = self.P2.values
        out = np.zeros_like(v)
        out[:, :, :-1] = (v[:, :, 1:] - v[:, :, :-1]) / h
        N = self.N
        idx = np.arange(N + 1)
        interior = idx[None, None, :] < np.minimum.outer(idx, idx)[:, :, None]
        return out * interior[..., None, None]

    def symmetry_residual(self) -> float:
        r1 = float(np.max(np.abs(self.P1 - np.swapaxes(self.P1, -1, -2)), initial=0.0))
        return max(r1, self.P2.symmetry_residual())

    def pi_norm(self, grid: TimeGrid) -> float:
        """Discrete Pi-norm: sup|P1| + L2 of the diagonal slice + L^{2,2,1} of dP2/dt."""
        h = grid.h
        N = self.N
        sup1 = float(np.max(np.linalg.norm(self.P1, axis=(1, 2)), initial=0.0))
        idx = np.arange(N + 1)
        kmin = np.minimum.outer(idx, idx)
        diag_slice = self.P2.values[idx[:, None], idx[None, :], kmin]
        l2_diag = float(np.sqrt(np.sum(diag_slice[1:, 1:] ** 2) * h * h))
        dot = self.P2dot(h)
        inner = np.sum(np.linalg.norm(dot, axis=(3, 4)), axis=2) * h
        l221 = float(np.sqrt(np.sum(inner**2) * h * h))
        return sup1 + l2_diag + l221
