"""Independent reference implementations written as plain index loops.

None of these call into the package's numerical code; they take dense
numpy arrays and follow the defining sums term by term.
"""
from __future__ import annotations

import itertools

import numpy as np


def closed_loop(A, B, C, D, b, sig, Xi, Gamma, v, x, dW, m0, h):
    """Direct recursion for one path.  Returns ``(Theta, u)``."""
    n, d = x.shape
    l = Xi.shape[1]
    Th = np.zeros((n, n, d))
    u = np.zeros((n, l))
    for i in range(m0, n):
        Th[i, m0] = x[i]
    for j in range(m0, n):
        for c in range(l):
            s = v[j, c]
            for a in range(d):
                s += Xi[j, c, a] * Th[j, j, a]
            for i in range(j + 1, n):
                for a in range(d):
                    s += Gamma[i, j, c, a] * Th[i, j, a] * h
            u[j, c] = s
        if j == n - 1:
            break
        for i in range(j + 1, n):
            for a in range(d):
                dr, nz = b[i, j, a], sig[i, j, a]
                for e in range(d):
                    dr += A[i, j, a, e] * Th[j, j, e]
                    nz += C[i, j, a, e] * Th[j, j, e]
                for c in range(l):
                    dr += B[i, j, a, c] * u[j, c]
                    nz += D[i, j, a, c] * u[j, c]
                Th[i, j + 1, a] = Th[i, j, a] + dr * h + nz * dW[j]
    return Th, u


def svie(phi, A, C, dW, m0, h):
    n, m = phi.shape
    X = np.zeros((n, m))
    for i in range(m0, n):
        for a in range(m):
            s = phi[i, a]
            for j in range(m0, i):
                for e in range(m):
                    s += A[i, j, a, e] * X[j, e] * h + C[i, j, a, e] * X[j, e] * dW[j]
            X[i, a] = s
    return X


def euler_maruyama(A, B, C, D, b, sig, Xi, v, x0, dW, h):
    """Explicit Euler-Maruyama for ``dX = (AX + Bu + b)dt + (CX + Du + s)dW``, ``u = Xi X + v``."""
    N = len(dW)
    X = np.zeros((N + 1, len(x0)))
    X[0] = x0
    for j in range(N):
        u = Xi[j] @ X[j] + v[j]
        X[j + 1] = X[j] + (A @ X[j] + B @ u + b) * h + (C @ X[j] + D @ u + sig) * dW[j]
    return X


def ebsvie_sweep(AB, B, Gamma, chi, psi, h, m0):
    """Backward sweep for ``eta`` written entry by entry."""
    n, d = psi.shape
    eta = np.zeros((n, n, d))
    eta[n - 1, n - 1] = psi[n - 1]
    for j in range(n - 2, m0 - 1, -1):
        c = j + 1
        l = B.shape[-1]
        beta = np.zeros(l)
        for r in range(c + 1, n):
            for q in range(l):
                for a in range(d):
                    beta[q] += B[r, c, a, q] * eta[r, c, a] * h
        for i in range(c + 1, n):
            for a in range(d):
                g = sum(Gamma[i, c, q, a] * beta[q] for q in range(l))
                eta[i, j, a] = eta[i, c, a] + h * (chi[i, c, a] + g)
        eta[c, j] = eta[c, c]
        for a in range(d):
            s = psi[j, a]
            for r in range(j + 1, n):
                for e in range(d):
                    s += AB[r, j, e, a] * eta[r, j, e] * h
            eta[j, j, a] = s
    return eta


def duality_rhs_literal(eta, B, b, v, x, h, m0):
    """``sum eta[i,m0].x[i] h + sum eta.b h^2 + sum (sum B^T eta h).v h``."""
    n, d = x.shape
    total = 0.0
    for i in range(m0, n):
        total += float(eta[i, m0] @ x[i]) * h
    for j in range(m0, n):
        for i in range(j + 1, n):
            total += float(eta[i, j] @ b[i, j]) * h * h
        beta = sum((B[i, j].T @ eta[i, j] * h for i in range(j + 1, n)), np.zeros(B.shape[-1]))
        total += float(beta @ v[j]) * h
    return total


def lint_rint(M1, P1, L, M2, k, h):
    """``sum_{i>k} M1^T P1 M2 h + sum_{i,j>k} M1[i]^T L[i,j] M2[j] h^2`` for columns ``M1, M2``."""
    n = P1.shape[0]
    out = np.zeros((M1.shape[-1], M2.shape[-1]))
    for i in range(k + 1, n):
        out += M1[i].T @ P1[i] @ M2[i] * h
        for j in range(k + 1, n):
            out += M1[i].T @ L[i, j] @ M2[j] * h * h
    return out


def rint(P1, L, M, k, h):
    n = P1.shape[0]
    out = np.zeros((n,) + M.shape[1:])
    for i in range(k + 1, n):
        out[i] = P1[i] @ M[i]
        for r in range(k + 1, n):
            out[i] += L[i, r] @ M[r] * h
    return out


def lint(M, P1, L, k, h):
    """Row ``i`` of ``M^T <| P``: ``M[i]^T P1[i] + sum_{r>k} M[r]^T L[r, i] h``."""
    n = P1.shape[0]
    out = np.zeros((n, M.shape[-1], P1.shape[-1]))
    for i in range(k + 1, n):
        out[i] = M[i].T @ P1[i]
        for r in range(k + 1, n):
            out[i] += M[r].T @ L[r, i] * h
    return out


def F_terms(P1, L, A, B, C, D, Xi, G, k, h):
    """``F1, F2, F3`` at column ``k`` with slab ``L``, following the defining formulas."""
    col = {name: M[:, k] for name, M in zip("ABCDG", (A, B, C, D, G))}
    n = P1.shape[0]
    Xk = Xi[k]
    CPC = lint_rint(col["C"], P1, L, col["C"], k, h)
    DPC = lint_rint(col["D"], P1, L, col["C"], k, h)
    CPD = lint_rint(col["C"], P1, L, col["D"], k, h)
    DPD = lint_rint(col["D"], P1, L, col["D"], k, h)
    F1 = CPC + Xk.T @ DPC + CPD @ Xk + Xk.T @ DPD @ Xk
    PA = rint(P1, L, col["A"], k, h)
    PB = rint(P1, L, col["B"], k, h)
    BP = lint(col["B"], P1, L, k, h)
    F2 = np.zeros((n,) + PA.shape[1:])
    F3 = np.zeros((n, n) + PA.shape[1:])
    for i in range(k + 1, n):
        Gi = col["G"][i]
        F2[i] = PA[i] + PB[i] @ Xk + Gi.T @ DPC + Gi.T @ DPD @ Xk
        for j in range(k + 1, n):
            Gj = col["G"][j]
            F3[i, j] = Gi.T @ BP[j] + PB[i] @ Gj + Gi.T @ DPD @ Gj
    return F1, F2, F3


def lyapunov_explicit(A, B, C, D, Xi, G, Q1, Q2, Q3, h, m0):
    """Plain explicit backward sweep for ``(P1, P2)``; ``Q3`` and ``F3`` from level ``k+1``."""
    n, d, _ = Q1.shape
    P1 = np.zeros((n, d, d))
    P2 = np.zeros((n, n, n, d, d))
    P1[n - 1] = Q1[n - 1]
    for k in range(n - 2, m0 - 1, -1):
        _, _, F3 = F_terms(P1, P2[:, :, k + 1], A, B, C, D, Xi, G, k + 1, h)
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                P2[i, j, k] = P2[i, j, k + 1] + h * (F3[i, j] + Q3[i, j, k + 1])
        _, F2, _ = F_terms(P1, P2[:, :, k], A, B, C, D, Xi, G, k, h)
        for i in range(k + 1, n):
            P2[i, k, k] = F2[i] + Q2[i, k]
            P2[k, i, k] = P2[i, k, k].T
        lev = P2[:, :, k]
        P2[:, :, k] = 0.5 * (lev + lev.transpose(1, 0, 3, 2))
        F1, _, _ = F_terms(P1, P2[:, :, k], A, B, C, D, Xi, G, k, h)
        P1[k] = 0.5 * ((F1 + Q1[k]) + (F1 + Q1[k]).T)
    return P1, P2


def quadratic_cost(Q1, Q2, Q3, Theta, h, m0):
    """Left-rule running cost of one path, summed term by term."""
    n = Theta.shape[0]
    total = 0.0
    for j in range(m0, n - 1):
        X = Theta[j, j]
        total += X @ Q1[j] @ X * h
        for i in range(j + 1, n):
            total += 2 * Theta[i, j] @ Q2[i, j] @ X * h * h
            for i2 in range(j + 1, n):
                total += Theta[i, j] @ Q3[i, i2, j] @ Theta[i2, j] * h**3
    return total


def rademacher_paths(N, h):
    """All ``2^N`` sign paths ``+-sqrt(h)``, each with probability ``2^-N``.

    For a linear recursion whose coefficients do not depend on the noise,
    first and second moments only involve ``E dW = 0``, ``E dW^2 = h`` and
    independence, so exact enumeration over sign paths reproduces the
    Gaussian first and second moments.
    """
    return np.array(list(itertools.product((-1.0, 1.0), repeat=N))) * np.sqrt(h)
