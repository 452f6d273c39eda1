"""Matrix-free GMRES with Fourier-symbol preconditioners."""

from __future__ import annotations

import numpy as np
import scipy.sparse.linalg as spla

from .grid import fsum_grid


def weighted_mean(u: np.ndarray, weight: np.ndarray) -> float:
    return fsum_grid(u * weight) / fsum_grid(weight)


def nyquist_mask(grid) -> np.ndarray:
    """Boolean mask of FFT modes on any Nyquist plane."""
    n = grid.points_per_axis
    nyq = np.zeros(grid.shape, dtype=bool)
    for ax in range(grid.dim):
        sl = [slice(None)] * grid.dim
        sl[ax] = n // 2
        nyq[tuple(sl)] = True
    return nyq


def drop_nyquist(grid, v: np.ndarray) -> np.ndarray:
    """Project a scalar field onto the resolved band (no Nyquist content)."""
    spec = np.fft.fftn(v.reshape(grid.shape))
    spec[nyquist_mask(grid)] = 0.0
    return np.real(np.fft.ifftn(spec))


def symbol_preconditioner(grid, symbol: np.ndarray, coefficient=None,
                          zero_mode: float | None = None):
    """Return ``v -> F^-1[F[v / coefficient] / symbol]``.

    ``symbol`` is the flat multiplier on the full FFT grid; ``coefficient``
    is an optional nodewise frozen-coefficient scale of the leading term.
    With ``zero_mode=None`` the constant mode is dropped.
    """
    sym = np.array(symbol, dtype=float)
    sym.flat[0] = 1.0 if zero_mode is None else zero_mode
    sym[nyquist_mask(grid)] = np.inf
    inv_coef = None if coefficient is None else 1.0 / coefficient

    def apply(v):
        v = v.reshape(grid.shape)
        if inv_coef is not None:
            v = v * inv_coef
        spec = np.fft.fftn(v) / sym
        if zero_mode is None:
            spec.flat[0] = 0.0
        return np.real(np.fft.ifftn(spec)).ravel()

    return apply


def gmres_solve(matvec, rhs: np.ndarray, precond, rtol: float, maxiter: int = 200,
                restart: int = 40, x0=None, resolved_grid=None):
    """Solve ``A x = rhs``; returns ``(x, info, history)``.

    ``history`` holds the preconditioned residual norms reported by GMRES.
    With ``resolved_grid`` the system is solved on the resolved band only:
    Nyquist-plane content is dropped from ``rhs`` and from every operator
    output, since variable coefficients alias into those modes and the
    preconditioner never excites them.
    """
    m = rhs.size
    if resolved_grid is not None:
        grid = resolved_grid
        rhs = drop_nyquist(grid, rhs).reshape(rhs.shape)
        A = spla.LinearOperator((m, m), matvec=lambda v: drop_nyquist(grid, matvec(v)).ravel())
    else:
        A = spla.LinearOperator((m, m), matvec=lambda v: matvec(v).ravel())
    M = spla.LinearOperator((m, m), matvec=precond)
    hist: list[float] = []
    x, info = spla.gmres(A, rhs.ravel(), x0=None if x0 is None else x0.ravel(),
                         M=M, rtol=rtol, atol=0.0, restart=restart,
                         maxiter=max(1, maxiter // restart + 1),
                         callback=lambda r: hist.append(float(r)),
                         callback_type="pr_norm")
    return x.reshape(rhs.shape), info, hist
