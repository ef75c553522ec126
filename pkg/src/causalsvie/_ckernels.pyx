# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled path-batch kernels; same contract as ``_fallback``."""
import numpy as np


def closed_loop_paths(const double[:, :, :, ::1] A, const double[:, :, :, ::1] B,
                      const double[:, :, :, ::1] C, const double[:, :, :, ::1] D,
                      const double[:, :, ::1] b, const double[:, :, ::1] sig,
                      const double[:, :, ::1] Xi, const double[:, :, :, ::1] Gamma,
                      const double[:, ::1] v, const double[:, :, ::1] x,
                      const double[:, ::1] dW, Py_ssize_t m0, double h):
    cdef Py_ssize_t P = x.shape[0], n = x.shape[1], d = x.shape[2], l = Xi.shape[1]
    theta_arr = np.zeros((P, n, n, d))
    u_arr = np.zeros((P, n, l))
    cdef double[:, :, :, ::1] th = theta_arr
    cdef double[:, :, ::1] u = u_arr
    cdef double[::1] xj = np.zeros(d)
    cdef double[::1] uj = np.zeros(l)
    cdef Py_ssize_t p, i, j, a, c, e
    cdef double s, acc, dr, nz, dw
    with nogil:
        for p in range(P):
            for i in range(m0, n):
                for a in range(d):
                    th[p, i, m0, a] = x[p, i, a]
            for j in range(m0, n):
                for a in range(d):
                    xj[a] = th[p, j, j, a]
                for c in range(l):
                    s = v[j, c]
                    for a in range(d):
                        s = s + Xi[j, c, a] * xj[a]
                    acc = 0.0
                    for i in range(j + 1, n):
                        for a in range(d):
                            acc = acc + Gamma[i, j, c, a] * th[p, i, j, a]
                    s = s + h * acc
                    uj[c] = s
                    u[p, j, c] = s
                if j + 1 == n:
                    break
                dw = dW[p, j]
                for i in range(j + 1, n):
                    for a in range(d):
                        dr = b[i, j, a]
                        nz = sig[i, j, a]
                        for e in range(d):
                            dr = dr + A[i, j, a, e] * xj[e]
                            nz = nz + C[i, j, a, e] * xj[e]
                        for c in range(l):
                            dr = dr + B[i, j, a, c] * uj[c]
                            nz = nz + D[i, j, a, c] * uj[c]
                        th[p, i, j + 1, a] = th[p, i, j, a] + dr * h + nz * dw
    return theta_arr, u_arr


def svie_paths(const double[:, :, ::1] phi, const double[:, :, :, ::1] A,
               const double[:, :, :, ::1] C, const double[:, ::1] dW, Py_ssize_t m0, double h):
    cdef Py_ssize_t P = phi.shape[0], n = phi.shape[1], m = phi.shape[2]
    X_arr = np.zeros((P, n, m))
    cdef double[:, :, ::1] X = X_arr
    cdef Py_ssize_t p, i, j, a, e
    cdef double acc, w
    with nogil:
        for p in range(P):
            for i in range(m0, n):
                for a in range(m):
                    acc = phi[p, i, a]
                    for j in range(m0, i):
                        w = dW[p, j]
                        for e in range(m):
                            acc = acc + (A[i, j, a, e] * h + C[i, j, a, e] * w) * X[p, j, e]
                    X[p, i, a] = acc
    return X_arr
