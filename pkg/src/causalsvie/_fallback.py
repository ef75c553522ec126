"""Pure numpy versions of the path-batch kernels.

Shapes follow the compiled module: ``n = N + 1`` nodes, ``P`` paths, fields
stored densely as ``(n, n, rows, cols)``.
"""
import numpy as np


def closed_loop_paths(A, B, C, D, b, sig, Xi, Gamma, v, x, dW, m0, h):
    """Direct closed-loop recursion for a batch of paths.

    Overflow is not trapped here; callers check the result for finiteness.

    Parameters
    ----------
    A, C : (n, n, d, d)
    B, D : (n, n, d, l)
    b, sig : (n, n, d)
    Xi : (n, l, d)
    Gamma : (n, n, l, d)
    v : (n, l)
    x : (P, n, d)
        Free term per path; rows below ``m0`` are ignored.
    dW : (P, n - 1)
    m0 : int
    h : float

    Returns
    -------
    Theta : (P, n, n, d)
    u : (P, n, l)
    """
    P, n, d = x.shape
    l = Xi.shape[1]
    theta = np.zeros((P, n, n, d))
    u = np.zeros((P, n, l))
    theta[:, m0:, m0] = x[:, m0:]
    with np.errstate(over="ignore", invalid="ignore"):
        _closed_loop_sweep(A, B, C, D, b, sig, Xi, Gamma, v, dW, m0, h, theta, u)
    return theta, u


def _closed_loop_sweep(A, B, C, D, b, sig, Xi, Gamma, v, dW, m0, h, theta, u):
    n = theta.shape[1]
    for j in range(m0, n):
        col = theta[:, :, j]
        xj = col[:, j]
        uj = xj @ Xi[j].T + v[j]
        if j + 1 < n:
            uj = uj + h * np.einsum("iab,pib->pa", Gamma[j + 1 :, j], col[:, j + 1 :])
        u[:, j] = uj
        if j + 1 == n:
            break
        rows = slice(j + 1, n)
        drift = (np.einsum("iab,pb->pia", A[rows, j], xj)
                 + np.einsum("iab,pb->pia", B[rows, j], uj) + b[rows, j])
        noise = (np.einsum("iab,pb->pia", C[rows, j], xj)
                 + np.einsum("iab,pb->pia", D[rows, j], uj) + sig[rows, j])
        theta[:, rows, j + 1] = col[:, rows] + drift * h + noise * dW[:, j, None, None]


def svie_paths(phi, A, C, dW, m0, h):
    """``X[i] = phi[i] + sum_{m0<=j<i} (A[i,j] X[j] h + C[i,j] X[j] dW[j])``.

    ``phi`` has shape ``(P, n, m)``; returns ``X`` of the same shape with
    rows below ``m0`` set to zero.
    """
    P, n, m = phi.shape
    X = np.zeros_like(phi)
    for i in range(m0, n):
        acc = phi[:, i].copy()
        if i > m0:
            Xs = X[:, m0:i]
            acc += h * np.einsum("jab,pjb->pa", A[i, m0:i], Xs)
            acc += np.einsum("jab,pjb->pa", C[i, m0:i], Xs * dW[:, m0:i, None])
        X[:, i] = acc
    return X
