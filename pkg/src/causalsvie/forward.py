"""Forward solvers for the closed-loop system and its moment oracles.

The closed-loop state is the triple ``(X, Theta, u)``: ``Theta[i, j]`` is the
time-``t_j`` forward state of ``X(t_i)``, ``X[i] = Theta[i, i]``, and the
control is given by the causal feedback
``u[j] = Xi[j] X[j] + sum_{i>j} Gamma[i, j] Theta[i, j] h + v[j]``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _backend
from .brownian import BrownianPath
from .grid import GridError, TimeGrid, TriField
from .kernels import GridKernels
from .operators import xi_gamma_transform


class BlowUpError(ArithmeticError):
    """A non-finite value appeared during time stepping."""

    def __init__(self, i: int, j: int, path_id: Optional[int] = None, what: str = "Theta"):
        self.i, self.j, self.path_id = i, j, path_id
        where = f" on path {path_id}" if path_id is not None else ""
        super().__init__(f"non-finite {what} at (i={i}, j={j}){where}; refine the grid")


@dataclass
class Strategy:
    """Causal feedback strategy ``(Xi, Gamma, v)``.

    ``Xi`` is ``(N+1, l, d)``, ``Gamma`` a triangle field of ``l x d``
    matrices indexed ``Gamma[s, t]`` with ``s > t``, and ``v`` is ``(N+1, l)``.
    """

    Xi: np.ndarray
    Gamma: TriField
    v: np.ndarray

    def __post_init__(self):
        self.Xi = np.asarray(self.Xi, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        n = self.Xi.shape[0]
        if self.Gamma.N + 1 != n or self.v.shape != (n, self.Xi.shape[1]):
            raise GridError("strategy components live on different grids")
        if self.Gamma.shape != self.Xi.shape[1:]:
            raise GridError(f"Gamma entries {self.Gamma.shape} do not match Xi {self.Xi.shape[1:]}")
        if not (np.all(np.isfinite(self.Xi)) and np.all(np.isfinite(self.v))):
            raise ValueError("strategy contains non-finite values")

    @classmethod
    def zero(cls, N: int, d: int, l: int) -> "Strategy":
        return cls(np.zeros((N + 1, l, d)), TriField.zeros(N, (l, d)), np.zeros((N + 1, l)))

    @property
    def N(self) -> int:
        return self.Xi.shape[0] - 1

    @property
    def l(self) -> int:
        return self.Xi.shape[1]

    @property
    def d(self) -> int:
        return self.Xi.shape[2]

    def with_v(self, v) -> "Strategy":
        return Strategy(self.Xi, self.Gamma, np.asarray(v, dtype=float))


@dataclass
class InputCondition:
    """Start node ``start`` and free term ``x`` of shape ``(N+1, d)``.

    Rows below ``start`` are ignored and stored as zero.
    """

    start: int
    x: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if not 0 <= self.start < x.shape[0]:
            raise GridError(f"start index {self.start} outside 0..{x.shape[0] - 1}")
        x[: self.start] = 0.0
        if not np.all(np.isfinite(x)):
            raise ValueError("free term contains non-finite values")
        self.x = x

    @property
    def N(self) -> int:
        return self.x.shape[0] - 1


@dataclass
class FeedbackSolution:
    Theta: TriField
    X: np.ndarray
    u: np.ndarray
    start: int

    @property
    def N(self) -> int:
        return self.X.shape[0] - 1


def _check_finite(theta: np.ndarray, path_ids=None) -> None:
    bad = ~np.isfinite(theta)
    if not bad.any():
        return
    p, i, j = np.nonzero(bad.any(axis=-1))
    first = np.lexsort((i, j, p))[0]
    pid = None if path_ids is None else int(path_ids[p[first]])
    raise BlowUpError(int(i[first]), int(j[first]), pid)


def _check(kernels: GridKernels, strat: Strategy, N: int) -> None:
    if kernels.grid.N != N or strat.N != N:
        raise GridError("kernels, strategy and input live on different grids")
    if strat.d != kernels.d or strat.l != kernels.l:
        raise GridError("strategy dimensions do not match the kernels")


def closed_loop_batch(kernels: GridKernels, strat: Strategy, x: np.ndarray, dW: np.ndarray,
                      start: int, path_ids=None, impl=None):
    """Run the direct recursion for a batch of paths.

    ``x`` is ``(N+1, d)`` or ``(P, N+1, d)``, ``dW`` is ``(P, N)``.  Returns
    dense arrays ``Theta (P, N+1, N+1, d)`` and ``u (P, N+1, l)``.
    """
    _check(kernels, strat, kernels.grid.N)
    dW = np.atleast_2d(dW)
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        x = np.broadcast_to(x, (dW.shape[0],) + x.shape)
    theta, u = _backend.closed_loop_paths(
        kernels.A.values, kernels.B.values, kernels.C.values, kernels.D.values,
        kernels.b.values, kernels.sigma.values, strat.Xi, strat.Gamma.values, strat.v,
        x, dW, start, kernels.grid.h, impl=impl,
    )
    _check_finite(theta, path_ids)
    return theta, u


def _solution(theta: np.ndarray, u: np.ndarray, start: int) -> FeedbackSolution:
    n = theta.shape[0]
    X = theta[np.arange(n), np.arange(n)].copy()
    return FeedbackSolution(TriField(theta, diagonal=True), X, u, start)


def solve_closed_loop_direct(kernels: GridKernels, strat: Strategy, inp: InputCondition,
                             path: BrownianPath) -> FeedbackSolution:
    """Step the coupled system column by column.

    Column ``j`` of ``Theta`` gives ``u[j]``; then every row ``i > j`` is
    advanced to column ``j+1`` by one Euler step of its own Volterra integral.
    """
    if inp.N != kernels.grid.N or path.N != kernels.grid.N:
        raise GridError("input or path lives on a different grid")
    theta, u = closed_loop_batch(kernels, strat, inp.x, path.increments[None], inp.start)
    return _solution(theta[0], u[0], inp.start)


def solve_svie(freeterm: np.ndarray, A: TriField, C: TriField, path: BrownianPath,
               start: int = 0) -> np.ndarray:
    """Explicit recursion ``X[i] = phi[i] + sum_{j<i} (A X h + C X dW)[i, j]``."""
    phi = np.asarray(freeterm, dtype=float)
    vec = phi.ndim == 1
    if vec:
        phi = phi[:, None]
    if A.N + 1 != phi.shape[0] or path.N != A.N:
        raise GridError("free term, kernels and path disagree on N")
    X = _backend.svie_paths(phi[None], A.values, C.values, path.increments[None],
                            start, path.h)[0]
    if not np.all(np.isfinite(X)):
        i = int(np.nonzero(~np.isfinite(X).all(axis=-1))[0][0])
        raise BlowUpError(i, i, what="X")
    return X[:, 0] if vec else X


@dataclass
class AugmentedSystem:
    """Uncontrolled SVIE for ``(X; u)``.

    ``Phi(path) = phi0 + sum_{start<=j<i} noise[i, j] dW_j`` where ``phi0``
    already contains the drift integrals of ``b`` and its transform.
    """

    bA: TriField
    bC: TriField
    phi0: np.ndarray
    noise: TriField
    start: int

    def Phi(self, path: BrownianPath) -> np.ndarray:
        dW = np.zeros(self.phi0.shape[0])
        dW[self.start : len(path.increments)] = path.increments[self.start :]
        return self.phi0 + np.einsum("ija,j->ia", self.noise.values, dW)


def _past_sum(f: TriField, start: int) -> np.ndarray:
    """``sum_{start<=j<i} f[i, j]`` per row ``i``."""
    return f.values[:, start:].sum(axis=1)


def build_augmented(kernels: GridKernels, strat: Strategy, inp: InputCondition) -> AugmentedSystem:
    _check(kernels, strat, inp.N)
    grid = kernels.grid
    h, d, l = grid.h, kernels.d, kernels.l
    Xi, G = strat.Xi, strat.Gamma
    blocks = {}
    for name in ("A", "B", "C", "D", "b", "sigma"):
        blocks[name] = xi_gamma_transform(getattr(kernels, name), Xi, G, grid)
    n = grid.N + 1
    bA = np.zeros((n, n, d + l, d + l))
    bC = np.zeros_like(bA)
    bA[..., :d, :d], bA[..., :d, d:] = kernels.A.values, kernels.B.values
    bA[..., d:, :d], bA[..., d:, d:] = blocks["A"].values, blocks["B"].values
    bC[..., :d, :d], bC[..., :d, d:] = kernels.C.values, kernels.D.values
    bC[..., d:, :d], bC[..., d:, d:] = blocks["C"].values, blocks["D"].values
    x = inp.x
    m0 = inp.start
    phi0 = np.zeros((n, d + l))
    phi0[:, :d] = x + h * _past_sum(kernels.b, m0)
    phi0[:, d:] = xi_gamma_transform(x, Xi, G, grid) + h * _past_sum(blocks["b"], m0) + strat.v
    phi0[:m0] = 0.0
    noise = np.zeros((n, n, d + l))
    noise[:, m0:, :d] = kernels.sigma.values[:, m0:]
    noise[:, m0:, d:] = blocks["sigma"].values[:, m0:]
    noise[:m0] = 0.0
    return AugmentedSystem(TriField(bA), TriField(bC), phi0, TriField(noise), m0)


def reconstruct_theta(kernels: GridKernels, X: np.ndarray, u: np.ndarray, inp: InputCondition,
                      path: BrownianPath) -> np.ndarray:
    """Forward accumulation of ``Theta[i, j]`` from the diagonal trajectory ``(X, u)``."""
    h = kernels.grid.h
    m0 = inp.start
    n = X.shape[0]
    dW = np.zeros(n)
    dW[: n - 1] = path.increments
    drift = (np.einsum("ijab,jb->ija", kernels.A.values, X)
             + np.einsum("ijab,jb->ija", kernels.B.values, u) + kernels.b.values)
    noise = (np.einsum("ijab,jb->ija", kernels.C.values, X)
             + np.einsum("ijab,jb->ija", kernels.D.values, u) + kernels.sigma.values)
    inc = drift * h + noise * dW[None, :, None]
    inc[:, :m0] = 0.0
    theta = np.zeros((n, n, X.shape[1]))
    theta[:, m0 + 1 :] = np.cumsum(inc[:, m0:-1], axis=1)
    theta += inp.x[:, None, :]
    theta[:, :m0] = 0.0
    theta[:m0] = 0.0
    return theta


def solve_closed_loop_augmented(kernels: GridKernels, strat: Strategy, inp: InputCondition,
                                path: BrownianPath) -> FeedbackSolution:
    """Solve the uncontrolled SVIE for ``(X; u)`` and rebuild ``Theta`` from it."""
    aug = build_augmented(kernels, strat, inp)
    Z = solve_svie(aug.Phi(path), aug.bA, aug.bC, path, start=inp.start)
    d = kernels.d
    X, u = Z[:, :d].copy(), Z[:, d:].copy()
    theta = reconstruct_theta(kernels, X, u, inp, path)
    idx = np.arange(inp.start, X.shape[0])
    theta[idx, idx] = X[idx]
    _check_finite(theta[None])
    return FeedbackSolution(TriField(theta, diagonal=True), X, u, inp.start)


def flow_restart(sol: FeedbackSolution, kernels: GridKernels, strat: Strategy, m1: int,
                 path: BrownianPath) -> FeedbackSolution:
    """Restart at node ``m1`` with free term ``Theta(., t_{m1})``."""
    if not sol.start <= m1 <= sol.N:
        raise GridError(f"restart index {m1} outside {sol.start}..{sol.N}")
    x1 = sol.Theta.values[:, m1].copy()
    return solve_closed_loop_direct(kernels, strat, InputCondition(m1, x1), path)


def propagate_mean(kernels: GridKernels, strat: Strategy, inp: InputCondition) -> FeedbackSolution:
    """Exact expectation of the discrete solution (all ``dW`` terms dropped)."""
    return solve_closed_loop_direct(kernels, strat, inp, BrownianPath.zero(kernels.grid))


@dataclass
class SecondMoments:
    """``S[j] = E[Z_j Z_j^T]`` for the stacked state ``Z_j[i] = Theta[i, min(i, j)]``.

    The state has one ``d``-block per node ``i = 0..N``; rows below the start
    node stay zero.
    """

    S: np.ndarray
    d: int
    start: int

    def block(self, j: int, i1: int, i2: int) -> np.ndarray:
        d = self.d
        return self.S[j, i1 * d : (i1 + 1) * d, i2 * d : (i2 + 1) * d]

    def X2(self, j: int) -> np.ndarray:
        """``E[X_j X_j^T]``."""
        return self.block(j, j, j)


def step_matrices(kernels: GridKernels, strat: Strategy, j: int):
    """Drift ``M_j``, noise ``G_j`` and feedback row ``K_j`` of the stacked one-step map."""
    N, d, l, h = kernels.grid.N, kernels.d, kernels.l, kernels.grid.h
    n = N + 1
    K = np.zeros((l, n, d))
    K[:, j] = strat.Xi[j]
    K[:, j + 1 :] += h * np.moveaxis(strat.Gamma.values[j + 1 :, j], 0, 1)
    K = K.reshape(l, n * d)
    E = np.zeros((d, n * d))
    E[:, j * d : (j + 1) * d] = np.eye(d)
    M = np.zeros((n, d, n * d))
    G = np.zeros_like(M)
    rows = slice(j + 1, n)
    M[rows] = kernels.A.values[rows, j] @ E + kernels.B.values[rows, j] @ K
    G[rows] = kernels.C.values[rows, j] @ E + kernels.D.values[rows, j] @ K
    return M.reshape(n * d, n * d), G.reshape(n * d, n * d), K


def propagate_second_moment(kernels: GridKernels, strat: Strategy, inp: InputCondition) -> SecondMoments:
    """Exact second moments of the homogeneous discrete system.

    ``S_{j+1} = (I + h M_j) S_j (I + h M_j)^T + h G_j S_j G_j^T``.
    """
    if not kernels.homogeneous or np.any(strat.v):
        raise ValueError("second-moment propagation needs b = sigma = 0 and v = 0")
    _check(kernels, strat, inp.N)
    N, d, h = kernels.grid.N, kernels.d, kernels.grid.h
    n = N + 1
    z = inp.x.reshape(-1)
    S = np.zeros((n, n * d, n * d))
    S[inp.start] = np.outer(z, z)
    eye = np.eye(n * d)
    for j in range(inp.start, N):
        M, G, _ = step_matrices(kernels, strat, j)
        F = eye + h * M
        S[j + 1] = F @ S[j] @ F.T + h * (G @ S[j] @ G.T)
    if not np.all(np.isfinite(S)):
        j = int(np.nonzero(~np.isfinite(S).all(axis=(1, 2)))[0][0])
        raise BlowUpError(j, j, what="second moment")
    return SecondMoments(S, d, inp.start)

