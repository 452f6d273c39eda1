# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled nodewise kernels; same contracts as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp

from ._kernels_py import sym_index, pair_table

cnp.import_array()

cdef enum:
    NMAX = 4


def christoffel(ginv_in, dg_in):
    # node loop innermost: every access is unit-stride
    cdef double[:, :, ::1] ginv = np.ascontiguousarray(ginv_in, dtype=np.float64)
    cdef double[:, :, :, ::1] dg = np.ascontiguousarray(dg_in, dtype=np.float64)
    cdef Py_ssize_t n = ginv.shape[0], m = ginv.shape[2]
    out = np.zeros((n, n, n, m))
    cdef double[:, :, :, ::1] G = out
    cdef Py_ssize_t q, i, j, k, l
    cdef double f
    for k in range(n):
        for i in range(n):
            for j in range(i, n):
                for l in range(n):
                    for q in range(m):
                        f = 0.5 * (dg[i, j, l, q] + dg[j, i, l, q] - dg[l, i, j, q])
                        G[k, i, j, q] += ginv[k, l, q] * f
                if j != i:
                    G[k, j, i, :] = G[k, i, j, :]
    return out


def riemann_pairs(double[:, :, :] g, double[:, :, :, :] gamma, double[:, :, :] ddg):
    cdef Py_ssize_t n = g.shape[0], m = g.shape[2]
    cdef Py_ssize_t npair = n * (n - 1) // 2
    cdef Py_ssize_t[:, :] s = sym_index(n)
    out = np.empty((npair, npair, m))
    cdef double[:, :, :] R = out
    cdef Py_ssize_t pi[6]
    cdef Py_ssize_t pj[6]
    cdef double low[NMAX][NMAX][NMAX]
    cdef Py_ssize_t a, b, c, q, i, j, k, l, p, r
    cdef double acc, quad
    c = 0
    for i in range(n):
        for j in range(i + 1, n):
            pi[c] = i
            pj[c] = j
            c += 1
    for q in range(m):
        for p in range(n):
            for i in range(n):
                for l in range(n):
                    acc = 0.0
                    for r in range(n):
                        acc += g[p, r, q] * gamma[r, i, l, q]
                    low[p][i][l] = acc
        for a in range(npair):
            i = pi[a]
            j = pj[a]
            for b in range(a, npair):
                k = pi[b]
                l = pj[b]
                acc = 0.5 * (ddg[s[j, k], s[i, l], q] + ddg[s[i, l], s[j, k], q]
                             - ddg[s[i, k], s[j, l], q] - ddg[s[j, l], s[i, k], q])
                quad = 0.0
                for p in range(n):
                    quad += gamma[p, j, k, q] * low[p][i][l] - gamma[p, j, l, q] * low[p][i][k]
                R[a, b, q] = -(acc + quad)
                R[b, a, q] = R[a, b, q]
    return out


def rm_contract(pairs_in, h_in):
    cdef double[:, :, ::1] pairs = np.ascontiguousarray(pairs_in, dtype=np.float64)
    cdef double[:, :, ::1] h = np.ascontiguousarray(h_in, dtype=np.float64)
    cdef Py_ssize_t n = h.shape[0], m = h.shape[2]
    p_np, e_np = pair_table(n)
    cdef Py_ssize_t[:, :] P = p_np
    cdef double[:, :] E = e_np
    out = np.zeros((n, n, m))
    cdef double[:, :, ::1] O = out
    cdef Py_ssize_t a, b
    cdef Py_ssize_t q, i, j, k, l
    cdef double sgn
    for j in range(n):
        for k in range(j, n):
            for i in range(n):
                if i == j:
                    continue
                for l in range(n):
                    if l == k:
                        continue
                    sgn = E[i, j] * E[k, l]
                    a = P[i, j]
                    b = P[k, l]
                    for q in range(m):
                        O[j, k, q] += sgn * pairs[a, b, q] * h[i, l, q]
            if k != j:
                O[k, j, :] = O[j, k, :]
    return out


def pair_norm2(double[:, :, :] pairs, double[:, :, :] ginv):
    cdef Py_ssize_t n = ginv.shape[0], m = ginv.shape[2]
    cdef Py_ssize_t npair = n * (n - 1) // 2
    out = np.empty(m)
    cdef double[:] O = out
    cdef double G[6][6]
    cdef double T[6][6]
    cdef double U[6][6]
    cdef Py_ssize_t pi[6]
    cdef Py_ssize_t pj[6]
    cdef Py_ssize_t q, a, b, c, i, j, k, l
    cdef double acc, tot
    c = 0
    for i in range(n):
        for j in range(i + 1, n):
            pi[c] = i
            pj[c] = j
            c += 1
    for q in range(m):
        for a in range(npair):
            i = pi[a]
            j = pj[a]
            for b in range(npair):
                k = pi[b]
                l = pj[b]
                G[a][b] = ginv[i, k, q] * ginv[j, l, q] - ginv[i, l, q] * ginv[j, k, q]
                T[a][b] = pairs[a, b, q]
        for a in range(npair):
            for b in range(npair):
                acc = 0.0
                for c in range(npair):
                    acc += T[a][c] * G[c][b]
                U[a][b] = acc
        tot = 0.0
        for a in range(npair):
            for b in range(npair):
                acc = 0.0
                for c in range(npair):
                    acc += G[a][c] * U[c][b]
                tot += T[a][b] * acc
        O[q] = 4.0 * tot
    return out
