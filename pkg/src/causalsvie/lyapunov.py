"""Backward solver for the Lyapunov-Volterra system and the quadratic representation check.

A solution is a :class:`PiPair` ``(P1, P2)``.  ``P2[i, j, k]`` with
``min(i, j) > k`` solves a backward transport equation in ``k``; the slots
``P2[i, k, k]`` satisfy a boundary equation and ``P1[k]`` a pointwise one.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ebsvie import GapReport, gap_report
from .forward import BlowUpError, InputCondition, Strategy, propagate_second_moment
from .grid import GridError, PiPair, PyrTensor, TimeGrid, TriField
from .kernels import GridKernels


def _sym(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + np.swapaxes(m, -1, -2))


def _sym_level(L: np.ndarray) -> np.ndarray:
    """Symmetrize a slab ``L[i, j] = L[j, i]^T``."""
    return 0.5 * (L + np.swapaxes(np.swapaxes(L, 0, 1), -1, -2))


@dataclass
class QuadraticWeights:
    """``Q1 (N+1, d, d)``, triangle field ``Q2`` and pyramid tensor ``Q3``."""

    Q1: np.ndarray
    Q2: TriField
    Q3: PyrTensor

    ASYMMETRY_LIMIT = 1e-8

    def __post_init__(self):
        Q1 = np.asarray(self.Q1, dtype=float)
        asym = float(np.max(np.abs(Q1 - np.swapaxes(Q1, -1, -2)), initial=0.0))
        if asym > self.ASYMMETRY_LIMIT:
            raise ValueError(f"Q1 is not symmetric (residual {asym:.3g})")
        self.Q1 = _sym(Q1)
        self.Q3 = PyrTensor(self.Q3.values, symmetric=True)
        self.Q3.symmetrize()
        if not (self.Q2.N == self.Q3.N == Q1.shape[0] - 1):
            raise GridError("Q1, Q2, Q3 live on different grids")

    @classmethod
    def zero(cls, N: int, d: int) -> "QuadraticWeights":
        return cls(np.zeros((N + 1, d, d)), TriField.zeros(N, (d, d)), PyrTensor.zeros(N, d))

    @property
    def N(self) -> int:
        return self.Q1.shape[0] - 1

    @property
    def d(self) -> int:
        return self.Q1.shape[1]


@dataclass
class FTerms:
    """Coefficients of the Lyapunov-Volterra system at one level.

    ``H1, H2, H3`` are the second-order drift terms of one explicit Euler
    step: ``Abar^T <|P|> Abar``, ``Gamma^T (B^T <|P|> Abar)`` and
    ``Gamma^T (B^T <|P|> B) Gamma`` with ``Abar = A + B Xi``.
    """

    F1: np.ndarray
    F2: np.ndarray
    F3: np.ndarray
    H1: np.ndarray
    H2: np.ndarray
    H3: np.ndarray


def assemble_F(P1: np.ndarray, L: np.ndarray, kernels: GridKernels, strat: Strategy, k: int) -> FTerms:
    """``F1, F2, F3`` at level ``k`` from coefficient column ``k`` and slab ``L``.

    ``L[i, j]`` is the ``P2`` slab used for the inner integrals; only entries
    with ``i, j > k`` are read.  ``F2`` is ``(N+1, d, d)`` (rows ``> k``) and
    ``F3`` is ``(N+1, N+1, d, d)`` (entries with both indices ``> k``).
    """
    h = kernels.grid.h
    n = kernels.grid.N + 1
    m = (np.arange(n) > k)[:, None, None]
    A, B, C, D = (getattr(kernels, name).values[:, k] * m for name in "ABCD")
    G = strat.Gamma.values[:, k] * m
    Xi = strat.Xi[k]
    Lm = L * m[:, None] * m[None]

    def rint(M):
        return (np.einsum("iab,ibc->iac", P1, M) + h * np.einsum("irab,rbc->iac", Lm, M)) * m

    def pair(M1, PM2):
        return h * np.einsum("iab,iac->bc", M1, PM2)

    PA, PB, PC, PD = rint(A), rint(B), rint(C), rint(D)
    CPC, DPC, DPD = pair(C, PC), pair(D, PC), pair(D, PD)
    GT = np.swapaxes(G, -1, -2)
    F1 = CPC + Xi.T @ DPC + DPC.T @ Xi + Xi.T @ DPD @ Xi
    F2 = (PA + PB @ Xi + GT @ (DPC + DPD @ Xi)) * m
    PBG = np.einsum("iab,jbc->ijac", PB, G)
    F3 = PBG + np.swapaxes(np.swapaxes(PBG, 0, 1), -1, -2)
    F3 += np.einsum("iab,bc,jcd->ijad", GT, DPD, G)

    Abar = A + B @ Xi
    PAbar = PA + PB @ Xi
    BPA, BPB = pair(B, PAbar), pair(B, PB)
    H1 = pair(Abar, PAbar)
    H2 = (GT @ BPA) * m
    H3 = np.einsum("iab,bc,jcd->ijad", GT, BPB, G)
    return FTerms(_sym(F1), F2, F3, _sym(H1), H2, H3)


SCHEMES = ("exact", "explicit")


def solve_lyapunov(kernels: GridKernels, strat: Strategy, Q: QuadraticWeights, grid: TimeGrid,
                   start: int = 0, scheme: str = "exact") -> PiPair:
    """Backward sweep ``k = N-1 .. start``.

    ``scheme='exact'`` (default) advances level ``k`` from level ``k+1``
    with the coefficient column ``k`` and adds the second-order drift terms
    ``H`` of one Euler step; the interior update is
    ``P2[i,j,k] = P2[i,j,k+1] + h (F3 + h H3 + Q3[i,j,k])``, the boundary is
    ``F2 + h H2 + Q2``, the corner ``P2[k,k,k]`` is ``H1`` and
    ``P1[k] = F1 + Q1[k]``.  ``P1[N]`` is zero because the left-rectangle
    running cost gives node ``N`` no weight.  The resulting pair represents
    the discrete quadratic functional exactly.

    ``scheme='explicit'`` is the plain first-order sweep: interior slots step
    with ``F3`` from column and level ``k+1`` and ``Q3[i,j,k+1]``, the
    boundary and pointwise equations use the fresh level ``k``, no ``H``
    terms, ``P1[N] = Q1[N]``.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}")
    N, h, d = grid.N, grid.h, kernels.d
    if kernels.grid.N != N or Q.N != N:
        raise GridError("kernels, weights and grid disagree on N")
    if not 0 <= start <= N:
        raise GridError(f"start index {start} outside 0..{N}")
    n = N + 1
    idx = np.arange(n)
    P1 = np.zeros((n, d, d))
    P2 = np.zeros((n, n, n, d, d))
    Q2, Q3 = Q.Q2.values, Q.Q3.values
    exact = scheme == "exact"
    P1[N] = 0.0 if exact else Q.Q1[N]
    for k in range(N - 1, start - 1, -1):
        later = idx > k
        inner = (later[:, None] & later[None, :])[..., None, None]
        prev = P2[:, :, k + 1]
        if exact:
            F = assemble_F(P1, prev, kernels, strat, k)
            P2[:, :, k] = (prev + h * (F.F3 + h * F.H3 + Q3[:, :, k])) * inner
            bnd = F.F2 + h * F.H2 + Q2[:, k]
            P2[k, k, k] = F.H1
        else:
            F3 = assemble_F(P1, prev, kernels, strat, k + 1).F3
            P2[:, :, k] = (prev + h * (F3 + Q3[:, :, k + 1])) * inner
            F = assemble_F(P1, P2[:, :, k], kernels, strat, k)
            bnd = F.F2 + Q2[:, k]
        bnd = bnd * later[:, None, None]
        P2[:, k, k] += bnd
        P2[k, :, k] += np.swapaxes(bnd, -1, -2)
        P2[:, :, k] = _sym_level(P2[:, :, k])
        P1[k] = _sym(F.F1 + Q.Q1[k])
        if not (np.all(np.isfinite(P1[k])) and np.all(np.isfinite(P2[:, :, k]))):
            raise BlowUpError(k, k, what="P")
    return PiPair(P1, PyrTensor(P2, symmetric=True))


def representation_rhs(P: PiPair, inp: InputCondition, grid: TimeGrid) -> float:
    """``sum_{start<=i<N} x P1 x h + sum_{i,j>=start} x[i] P2[i,j,start] x[j] h^2``."""
    h, m0 = grid.h, inp.start
    x = inp.x
    total = h * np.einsum("ia,iab,ib->", x[m0:-1], P.P1[m0:-1], x[m0:-1])
    total += h * h * np.einsum("ia,ijab,jb->", x[m0:], P.P2.values[m0:, m0:, m0], x[m0:])
    return float(total)


def operator_matrix(P: PiPair, m0: int, grid: TimeGrid) -> np.ndarray:
    """Dense matrix of ``x -> P1 x + int P2(., r, t0) x(r) dr`` on nodes ``m0..N``."""
    h = grid.h
    N, d = P.N, P.d
    n = N + 1 - m0
    M = h * P.P2.values[m0:, m0:, m0]
    M[np.arange(n), np.arange(n)] += P.P1[m0:]
    return M.transpose(0, 2, 1, 3).reshape(n * d, n * d)


def cost_weight(Q: QuadraticWeights, j: int, h: float) -> np.ndarray:
    """Matrix ``W_j`` with ``Z_j^T W_j Z_j`` equal to the running cost at column ``j``."""
    N, d = Q.N, Q.d
    n = N + 1
    W = np.zeros((n, n, d, d))
    W[j, j] = Q.Q1[j]
    q2 = Q.Q2.values[:, j] * h
    W[j + 1 :, j] = q2[j + 1 :]
    W[j, j + 1 :] = np.swapaxes(q2[j + 1 :], -1, -2)
    inner = (np.arange(n) > j)
    W += h * h * Q.Q3.values[:, :, j] * (inner[:, None] & inner[None, :])[..., None, None]
    return W.transpose(0, 2, 1, 3).reshape(n * d, n * d)


def quadratic_cost_exact(Q: QuadraticWeights, moments, h: float, start: int) -> float:
    """``sum_{start<=j<N} h trace(W_j S_j)``."""
    N = Q.N
    total = 0.0
    for j in range(start, N):
        total += h * float(np.sum(cost_weight(Q, j, h) * moments.S[j]))
    return total


def representation_lhs_exact(kernels: GridKernels, strat: Strategy, Q: QuadraticWeights,
                             inp: InputCondition, grid: TimeGrid) -> float:
    """Expected quadratic functional of the homogeneous system via exact second moments."""
    moments = propagate_second_moment(kernels, strat, inp)
    return quadratic_cost_exact(Q, moments, grid.h, inp.start)


def representation_gap(build, N: int, scheme: str = "exact") -> GapReport:
    """Representation gaps on ``N`` and ``2N`` steps; ``build(N) -> (kernels, strat, Q, inp)``."""
    vals = []
    for n in (N, 2 * N):
        kernels, strat, Q, inp = build(n)
        grid = kernels.grid
        P = solve_lyapunov(kernels, strat, Q, grid, start=inp.start, scheme=scheme)
        vals += [representation_lhs_exact(kernels, strat, Q, inp, grid),
                 representation_rhs(P, inp, grid)]
    return gap_report(*vals)


def ito_weights(P: PiPair, kernels: GridKernels, strat: Strategy, grid: TimeGrid) -> QuadraticWeights:
    """Effective weights ``(P1 - F1, P2(., t, t) - F2, -(dP2/dt + F3))`` of an arbitrary pair.

    ``F`` at level ``k`` pairs coefficient column ``k`` with the ``P2`` slab
    at level ``k+1``, the state the Euler step from ``k`` lands on.
    ``dP2/dt`` uses backward differences in ``k``.  The corner slot
    ``P2[k, k, k]`` enters the quadratic form with weight ``h^2`` and is
    moved into the pointwise weight as ``h P2[k, k, k]``.
    """
    N, h, d = grid.N, grid.h, P.d
    n = N + 1
    idx = np.arange(n)
    Q1 = np.zeros((n, d, d))
    Q2 = np.zeros((n, n, d, d))
    Q3 = -P.P2dot(h)
    P2 = P.P2.values
    for k in range(N):
        F = assemble_F(P.P1, P2[:, :, k + 1], kernels, strat, k)
        later = idx > k
        Q1[k] = P.P1[k] + h * P2[k, k, k] - F.F1
        Q2[:, k] = (P2[:, k, k] - F.F2) * later[:, None, None]
        Q3[:, :, k] -= F.F3 * (later[:, None] & later[None, :])[..., None, None]
    return QuadraticWeights(_sym(Q1), TriField(Q2), PyrTensor(Q3, symmetric=True))


def ito_identity(P: PiPair, kernels: GridKernels, strat: Strategy, inp: InputCondition,
                 grid: TimeGrid):
    """Both sides of the Ito identity for the homogeneous closed loop.

    Returns ``(value, expected_cost)``: the quadratic form of ``P`` at the
    start node and the expected running cost with :func:`ito_weights`.
    """
    value = representation_rhs(P, inp, grid)
    Q = ito_weights(P, kernels, strat, grid)
    return value, representation_lhs_exact(kernels, strat, Q, inp, grid)
