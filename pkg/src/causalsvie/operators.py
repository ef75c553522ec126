"""Discrete norms, the small-norm partition, and kernel-operator algebra.

All triangle integrals use the left-rectangle rule with strict index sums,
so ``int_t^T f(r) dr`` at node ``k`` becomes ``sum_{r>k} f_r h``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np

from .grid import GridError, PiPair, TimeGrid, TriField


def _entry_norm2(values: np.ndarray) -> np.ndarray:
    """Squared Frobenius norm of each (i, j) entry."""
    return np.sum(values.reshape(values.shape[:2] + (-1,)) ** 2, axis=-1)


@dataclass(frozen=True)
class Norms:
    l2_triangle: float
    sl2: float
    l21: float


def discrete_norms(field: TriField, grid: TimeGrid) -> Norms:
    """L2 triangle norm, sL2 norm (max over columns) and L^{2,1} norm."""
    if field.values.size == 0:
        raise GridError("empty field")
    if field.N != grid.N:
        raise GridError("field and grid disagree on N")
    h = grid.h
    sq = _entry_norm2(field.values)
    np.fill_diagonal(sq, 0.0)
    l2 = float(np.sqrt(np.sum(sq) * h * h))
    sl2 = float(np.sqrt(np.max(np.sum(sq, axis=0)) * h))
    row = np.sum(np.sqrt(sq), axis=1) * h
    l21 = float(np.sqrt(np.sum(row**2) * h))
    return Norms(l2, sl2, l21)


def subinterval_norm(A: TriField, C: TriField, a: int, b: int, h: float) -> float:
    """``l2(A on a<=j<i<=b) + max_{a<=j<b} sqrt(sum_{j<i<=b} |C|^2 h)``."""
    sa = _entry_norm2(A.values)[a : b + 1, a : b + 1]
    sc = _entry_norm2(C.values)[a : b + 1, a : b + 1]
    np.fill_diagonal(sa, 0.0)
    np.fill_diagonal(sc, 0.0)
    l2 = np.sqrt(np.sum(np.tril(sa, -1)) * h * h)
    sl2 = np.sqrt(np.max(np.sum(np.tril(sc, -1), axis=0)[:-1]) * h)
    return float(l2 + sl2)


PARTITION_BOUND = 0.5


def find_partition(A: TriField, C: TriField, grid: TimeGrid) -> List[int]:
    """Greedy left-to-right partition with every subinterval norm at most 1/2.

    Returns node indices ``U_0 = 0 < ... < U_m = N``.
    """
    N, h = grid.N, grid.h
    tol = PARTITION_BOUND + 1e-12
    nodes = [0]
    a = 0
    while a < N:
        if subinterval_norm(A, C, a, a + 1, h) > tol:
            raise GridError(
                f"step [{a}, {a + 1}] alone violates the partition bound; refine the grid"
            )
        b = a + 1
        while b < N and subinterval_norm(A, C, a, b + 1, h) <= tol:
            b += 1
        nodes.append(b)
        a = b
    return nodes


def wellposedness_constant(m: int, L: float) -> float:
    """``2 m^2 (1 + 2L)^(m-1)``."""
    if m < 1 or L < 0:
        raise ValueError(f"need m >= 1 and L >= 0, got m={m}, L={L}")
    return 2.0 * m * m * (1.0 + 2.0 * L) ** (m - 1)


def compose_feedback(K: TriField, Xi: np.ndarray) -> TriField:
    """``out[i, j] = K[i, j] @ Xi[j]``."""
    Xi = np.asarray(Xi, dtype=float)
    if K.shape[-1] != Xi.shape[1] or Xi.shape[0] != K.N + 1:
        raise GridError(f"cannot compose kernel {K.shape} with feedback {Xi.shape}")
    return TriField(np.einsum("ijab,jbc->ijac", K.values, Xi), K.diagonal)


def xi_gamma_transform(f, Xi: np.ndarray, Gamma: TriField, grid: TimeGrid):
    """Apply ``f -> Xi(t) f(t, .) + int_t^T Gamma(r, t) f(r, .) dr``.

    ``f`` is either a :class:`TriField` (matrix- or vector-valued) or a
    per-node array ``(N+1, d[, c])``.
    """
    h = grid.h
    Xi = np.asarray(Xi, dtype=float)
    G = Gamma.values
    if isinstance(f, TriField):
        v = f.values
        vec = v.ndim == 3
        if vec:
            v = v[..., None]
        if v.shape[2] != Xi.shape[2]:
            raise GridError("dimension mismatch in xi_gamma_transform")
        out = np.einsum("iab,ijbc->ijac", Xi, v)
        # G[r, i] is nonzero only for r > i
        out += h * np.einsum("riab,rjbc->ijac", G, v)
        out = out[..., 0] if vec else out
        return TriField(out, f.diagonal)
    x = np.asarray(f, dtype=float)
    vec = x.ndim == 2
    if vec:
        x = x[..., None]
    if x.shape[1] != Xi.shape[2]:
        raise GridError("dimension mismatch in xi_gamma_transform")
    out = np.einsum("iab,ibc->iac", Xi, x) + h * np.einsum("riab,rbc->iac", G, x)
    return out[..., 0] if vec else out


def _level(P: PiPair, level: int) -> np.ndarray:
    if not 0 <= level <= P.N:
        raise GridError(f"level {level} out of range 0..{P.N}")
    return P.P2.values[:, :, level]


def _column(M, k: int) -> np.ndarray:
    col = M.column(k) if isinstance(M, TriField) else np.asarray(M, dtype=float)
    if col.ndim == 2:
        col = col[..., None]
    mask = (np.arange(col.shape[0]) > k)[:, None, None]
    return col * mask


def rint_column(P1, P2lev, Mcol, k: int, h: float) -> np.ndarray:
    """Array form of :func:`rint`; rows ``i <= k`` of the result are zero."""
    mask = (np.arange(P1.shape[0]) > k)[:, None, None]
    Mcol = Mcol * mask
    out = np.einsum("iab,ibc->iac", P1, Mcol)
    out += h * np.einsum("irab,rbc->iac", P2lev * mask[None], Mcol)
    return out * mask


def lint_rint_column(M1col, P1, P2lev, M2col, k: int, h: float) -> np.ndarray:
    """Array form of :func:`lint_rint`."""
    mask = (np.arange(P1.shape[0]) > k)[:, None, None]
    right = rint_column(P1, P2lev, M2col, k, h)
    return h * np.einsum("iab,iac->bc", M1col * mask, right)


def rint(P: PiPair, M, k: int, grid: TimeGrid, level: int = None) -> np.ndarray:
    """Column ``k`` of ``P |> M``: ``P1[i] M[i,k] + sum_{r>k} P2[i,r,level] M[r,k] h``.

    ``level`` selects the slab of ``P2`` and defaults to ``k``.
    """
    lev = _level(P, k if level is None else level)
    return rint_column(P.P1, lev, _column(M, k), k, grid.h)


def lint(M, P: PiPair, k: int, grid: TimeGrid, level: int = None) -> np.ndarray:
    """Column ``k`` of ``M^T <| P``: ``M[i,k]^T P1[i] + sum_{r>k} M[r,k]^T P2[r,i,level] h``."""
    lev = _level(P, k if level is None else level)
    col = _column(M, k)
    mask = (np.arange(P.N + 1) > k)[:, None, None]
    out = np.einsum("iba,ibc->iac", col, P.P1)
    out += grid.h * np.einsum("rba,ribc->iac", col, lev * mask[:, None])
    return out * mask


def lint_rint(M1, P: PiPair, M2, k: int, grid: TimeGrid, level: int = None) -> np.ndarray:
    """``sum_{i>k} M1^T P1 M2 h + sum_{i,j>k} M1[i,k]^T P2[i,j,level] M2[j,k] h^2``."""
    lev = _level(P, k if level is None else level)
    return lint_rint_column(_column(M1, k), P.P1, lev, _column(M2, k), k, grid.h)
