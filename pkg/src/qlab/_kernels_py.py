"""Pure-numpy nodewise kernels.

Every array is component-major with a single flattened node axis last,
e.g. a metric is ``(n, n, M)``.  Second metric derivatives are packed by
symmetric index pairs: ``ddg[s(a, b), s(i, j)] = d_a d_b g_ij``.
The Cython module ``_kernels`` implements the same functions.
"""

import numpy as np

CHUNK = 16384


def sym_index(n):
    """Table ``s[i, j]`` of packed symmetric-pair positions."""
    s = np.empty((n, n), dtype=np.intp)
    c = 0
    for i in range(n):
        for j in range(i, n):
            s[i, j] = s[j, i] = c
            c += 1
    return s


def pair_table(n):
    """Antisymmetric pair position ``p[i, j]`` and sign ``e[i, j]``."""
    p = np.zeros((n, n), dtype=np.intp)
    e = np.zeros((n, n))
    c = 0
    for i in range(n):
        for j in range(i + 1, n):
            p[i, j] = p[j, i] = c
            e[i, j], e[j, i] = 1.0, -1.0
            c += 1
    return p, e


def christoffel(ginv, dg):
    # first kind: G[l, i, j] = 1/2 (d_i g_jl + d_j g_il - d_l g_ij)
    first = 0.5 * (np.transpose(dg, (2, 0, 1, 3)) + np.transpose(dg, (1, 2, 0, 3))
                   - dg)
    return np.einsum("kl...,lij...->kij...", ginv, first)


def _full_riemann_chunk(g, gamma, ddg, s):
    d = ddg[s[:, :, None, None], s[None, None, :, :]]  # d[a, b, i, j] = d_a d_b g_ij
    # second-derivative part of R_ijkl (Landau-Lifshitz ordering)
    t = 0.5 * (np.einsum("jkil...->ijkl...", d) + np.einsum("iljk...->ijkl...", d)
               - np.einsum("ikjl...->ijkl...", d) - np.einsum("jlik...->ijkl...", d))
    low = np.einsum("pq...,qil...->pil...", g, gamma)
    quad = np.einsum("pjk...,pil...->ijkl...", gamma, low)
    t += quad - np.swapaxes(quad, 2, 3)
    del quad
    return t


def riemann_pairs(g, gamma, ddg):
    """Bivector components of R_ijkl with g^il R_ijkl = Ric_jk."""
    n, _, m = g.shape
    s = sym_index(n)
    idx = [(i, j) for i in range(n) for j in range(i + 1, n)]
    p = len(idx)
    out = np.empty((p, p, m))
    ii = np.array([i for i, _ in idx])
    jj = np.array([j for _, j in idx])
    for lo in range(0, m, CHUNK):
        hi = min(m, lo + CHUNK)
        full = _full_riemann_chunk(g[..., lo:hi], gamma[..., lo:hi], ddg[..., lo:hi], s)
        # sign flip: the stored convention contracts the first and last index
        out[..., lo:hi] = -full[ii[:, None], jj[:, None], ii[None, :], jj[None, :]]
    return out


def rm_contract(pairs, h):
    """``out[j, k] = sum_il R_ijkl h[i, l]`` for symmetric ``h``."""
    n = h.shape[0]
    p, e = pair_table(n)
    out = np.zeros(h.shape)
    for j in range(n):
        for k in range(j, n):
            acc = np.zeros(h.shape[-1])
            for i in range(n):
                if i == j:
                    continue
                for l in range(n):
                    if l == k:
                        continue
                    acc += (e[i, j] * e[k, l]) * pairs[p[i, j], p[k, l]] * h[i, l]
            out[j, k] = acc
            out[k, j] = acc
    return out


def pair_norm2(pairs, ginv):
    """Full contraction ``T_ijkl T^ijkl`` of a curvature-type tensor."""
    n = ginv.shape[0]
    idx = [(i, j) for i in range(n) for j in range(i + 1, n)]
    G = np.empty((len(idx), len(idx)) + ginv.shape[2:])
    for a, (i, j) in enumerate(idx):
        for b, (k, l) in enumerate(idx):
            G[a, b] = ginv[i, k] * ginv[j, l] - ginv[i, l] * ginv[j, k]
    up = np.einsum("ab...,bc...,cd...->ad...", G, pairs, G)
    return 4.0 * np.einsum("ab...,ab...->...", pairs, up)
