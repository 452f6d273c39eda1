"""Linearized Q-curvature, its L2 formal adjoint and Q-singularity probes.

Contraction conventions (all indices raised with ``g``):

* ``Ric . h = R^ij h_ij`` and ``nabla^2 R . h`` likewise;
* ``dR . w = g^ab d_a R w_b``;
* ``Ric . nabla(delta h) = R^ij nabla_i (delta h)_j``;
* ``(Ric x Ric)_ij = R_i^l R_lj``;
* ``(Rm . h)_jk = R_ijkl h^il`` with the curvature convention of
  :mod:`qlab.tensor`.

Non-symmetric intermediates of the adjoint (``nabla(f dR)`` and
``nabla delta(f Ric)``) are symmetrized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import ScalarField, SymTensor2Field, fsum_grid
from .krylov import gmres_solve, symbol_preconditioner
from .qcurv import DimensionError, _paneitz_array, _q_array, dimension_constants
from .tensor import (
    MetricField,
    _compose,
    _delta2,
    _div1,
    _div2,
    _dot1,
    _dot2,
    _grad,
    _hess,
    _lap,
    _lichnerowicz,
    _nabla1,
    _raise2,
    _rm_dot,
    _rough_lap2,
    _sym,
    _trace,
)

__all__ = [
    "SymbolMatrix",
    "KernelProbeReport",
    "linearize_q",
    "adjoint_q",
    "principal_symbol_adjoint",
    "trace_identity_residual",
    "kernel_probe",
    "pair_scalar",
    "pair_tensor",
]


def _lin_array(g: MetricField, h: np.ndarray) -> np.ndarray:
    k = dimension_constants(g.dim)
    trh = _trace(h, g)
    dh = -_div2(h, g)  # delta h
    d2h = _delta2(h, g)
    lap_tr = _lap(trh, g)
    if g.is_flat:
        return k.a * (-_lap(lap_tr, g) + _lap(d2h, g))
    b = g.bundle
    R, ric = b.scalar.values, b.ricci.values
    dR = _grad(R, g)
    ric_h = _dot2(ric, h, g)
    a_block = (-_lap(lap_tr, g) + _lap(d2h, g)
               + 0.5 * _dot1(dR, _grad(trh, g) + 2.0 * dh, g)
               - _lap(ric_h, g) - _dot2(_hess(R, g), h, g))
    rr = _compose(ric, ric, g)
    b_block = (_dot2(ric, _lichnerowicz(h, g), g) + _dot2(ric, _hess(trh, g), g)
               + 2.0 * _dot2(ric, _nabla1(dh, g), g) + 2.0 * _dot2(rr, h, g))
    c_block = R * (-lap_tr + d2h - ric_h)
    return k.a * a_block - k.b * b_block + 2.0 * k.c * c_block


def _adj_array(g: MetricField, f: np.ndarray) -> np.ndarray:
    k = dimension_constants(g.dim)
    gv = g.values
    lapf = _lap(f, g)
    out = k.a * (-gv * _lap(lapf, g) + _hess(lapf, g))
    if g.is_flat:
        return out
    b = g.bundle
    R, ric = b.scalar.values, b.ricci.values
    dR = _grad(R, g)
    fdR = f * dR
    a_rest = (-ric * lapf + 0.5 * gv * (-_div1(fdR, g)) + _sym(_nabla1(fdR, g))
              - f * _hess(R, g))
    fric = f * ric
    delta_fric = -_div2(fric, g)
    b_block = (_rough_lap2(fric, g) + 2.0 * f * _rm_dot(_raise2(ric, g), g)
               + gv * _delta2(fric, g) + 2.0 * _sym(_nabla1(delta_fric, g)))
    fR = f * R
    c_block = gv * _lap(fR, g) - _hess(fR, g) + fR * ric
    return out + k.a * a_rest - k.b * b_block - 2.0 * k.c * c_block


def linearize_q(g: MetricField, h: SymTensor2Field) -> ScalarField:
    """Directional derivative of ``g -> Q_g`` in the direction ``h``."""
    if h.grid != g.grid:
        raise ValueError("grid mismatch")
    return ScalarField(g.grid, _lin_array(g, h.values))


def adjoint_q(g: MetricField, f: ScalarField) -> SymTensor2Field:
    """L2 formal adjoint of :func:`linearize_q`, mapping scalars to 2-tensors."""
    if f.grid != g.grid:
        raise ValueError("grid mismatch")
    return SymTensor2Field(g.grid, _adj_array(g, f.values))


def pair_scalar(g: MetricField, u: np.ndarray, v: np.ndarray) -> float:
    return fsum_grid(u * v * g.sqrt_det) * g.grid.cell_volume


def pair_tensor(g: MetricField, h: np.ndarray, k: np.ndarray) -> float:
    return fsum_grid(_dot2(h, k, g) * g.sqrt_det) * g.grid.cell_volume


# ---------------------------------------------------------------------------
# principal symbol


@dataclass(frozen=True)
class SymbolMatrix:
    n: int
    xi: np.ndarray
    matrix: np.ndarray

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix))


def principal_symbol_adjoint(n: int, xi) -> SymbolMatrix:
    """``-a_n (|xi|^2 delta - xi xi) |xi|^2`` on the flat background."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (n,):
        raise ValueError(f"xi must have shape ({n},)")
    a = dimension_constants(n).a
    s = float(xi @ xi)
    mat = -a * (s * np.eye(n) - np.outer(xi, xi)) * s
    return SymbolMatrix(n, xi.copy(), mat)


# ---------------------------------------------------------------------------
# trace identity and kernel probes


def trace_identity_residual(g: MetricField, f: ScalarField) -> float:
    """Relative L2 size of ``tr L*f - (P f - (n+4)/2 Q f) / 2``."""
    if g.dim != 4:
        raise DimensionError("the trace identity is checked in dimension 4 only")
    lhs = _trace(_adj_array(g, f.values), g)
    rhs = 0.5 * (_paneitz_array(g, f.values) - 4.0 * _q_array(g) * f.values)
    num = math.sqrt(max(pair_scalar(g, lhs - rhs, lhs - rhs), 0.0))
    den = math.sqrt(max(pair_scalar(g, rhs, rhs), pair_scalar(g, lhs, lhs)))
    if den == 0.0:
        return num
    return num / den


@dataclass(frozen=True)
class KernelProbeReport:
    smallest_ray: float
    constant_residual: float
    verdict: str
    kernel_threshold: float
    mean_zero_ray: float
    operator_scale: float
    iterations: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _tensor_norm(g, h):
    return math.sqrt(max(pair_tensor(g, h, h), 0.0))


def _scalar_norm(g, u):
    return math.sqrt(max(pair_scalar(g, u, u), 0.0))


def _mean_zero(g: MetricField, u: np.ndarray) -> np.ndarray:
    w = g.sqrt_det
    return u - fsum_grid(u * w) / fsum_grid(w)


def leading_scale(g: MetricField, power: int):
    """Nodewise frozen coefficient ``(tr g^-1 / n)^power`` of a leading symbol."""
    if g.is_flat:
        return None
    return (np.einsum("ii...->...", g.inverse) / g.dim) ** power


def lls_symbol(grid, n: int) -> np.ndarray:
    """Fourier multiplier of ``L L*`` on the flat torus: ``a^2 (n-1) |k|^8``."""
    a = dimension_constants(n).a
    k = grid.wavenumbers()
    k2 = sum(np.meshgrid(*([k**2] * grid.dim), indexing="ij"))
    return a * a * (n - 1) * k2**4


def kernel_probe(g: MetricField, probes: int = 5, iterations: int = 12,
                 seed: int = 0, linear_tol: float = 1e-6,
                 ray_tol: float = 1e-3) -> KernelProbeReport:
    """Probe ``ker L*`` by the constant test function and inverse iteration.

    The mean-zero estimate runs inverse iteration on ``f -> L(L* f)``
    restricted to mean-zero functions; each inner solve is GMRES
    preconditioned by the flat symbol ``a^2 (n-1) |k|^8``.
    """
    grid = g.grid
    rng = np.random.default_rng(seed)
    ones = np.ones(grid.shape)
    const_res = _tensor_norm(g, _adj_array(g, ones))
    const_ray = const_res / _scalar_norm(g, ones)

    rays = []
    for _ in range(probes):
        f0 = _mean_zero(g, grid.random_bandlimited(rng, 2))
        rays.append(_tensor_norm(g, _adj_array(g, f0)) / _scalar_norm(g, f0))
    scale = float(np.mean(rays))
    threshold = 1e-6 * scale

    shape = grid.shape
    precond = symbol_preconditioner(grid, lls_symbol(grid, g.dim), leading_scale(g, 4))

    def matvec(v):
        v = _mean_zero(g, v.reshape(shape))
        return _mean_zero(g, _lin_array(g, _adj_array(g, v)))

    x = _mean_zero(g, grid.random_bandlimited(rng, 2))
    x /= _scalar_norm(g, x)
    ray = math.inf
    done = 0
    converged = False
    for it in range(iterations):
        y, _, _ = gmres_solve(matvec, x, precond, rtol=linear_tol, maxiter=60,
                              resolved_grid=grid)
        y = _mean_zero(g, y)
        ny = _scalar_norm(g, y)
        if ny == 0.0:
            break
        x = y / ny
        new = _tensor_norm(g, _adj_array(g, x))
        done = it + 1
        if abs(new - ray) <= ray_tol * new:
            ray = new
            converged = True
            break
        ray = new
    smallest = min(const_ray, ray)
    if smallest < threshold:
        verdict = "q_singular_suspected"
    elif converged:
        verdict = "non_singular"
    else:
        verdict = "inconclusive"
    return KernelProbeReport(smallest, const_res, verdict, threshold, ray, scale, done)
