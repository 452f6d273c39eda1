"""Metrics, the curvature pipeline and covariant differential operators.

Curvature convention: ``R_ijkl`` is stored so that ``g^il R_ijkl = Ric_jk``
and the round sphere has ``Ric = (n-1) g``.  In this convention the
sphere has ``Riem = -(1/2) k g (.) g`` for the Kulkarni-Nomizu product
``(.)``, so the Weyl tensor is extracted as::

    W = Riem + R/(2n(n-1)) g(.)g + 1/(n-2) (Ric - R/n g)(.)g

Divergences follow ``(delta h)_i = -nabla^j h_ij``; ``delta^2 h`` is
``nabla^j nabla^i h_ij``.

Array-level helpers (leading underscore) take component-first arrays with
the grid axes trailing and a :class:`MetricField` that caches inverse,
volume element and curvature.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import kernels
from .grid import (
    GridMismatchError,
    OneFormField,
    PeriodicGrid,
    ScalarField,
    SymTensor2Field,
    Tensor4Field,
    diff,
    diff2,
    gradient,
    pair_index,
)

SPD_FLOOR = 1e-10

__all__ = [
    "SPD_FLOOR",
    "NonSPDMetricError",
    "MetricField",
    "CurvatureBundle",
    "christoffel",
    "curvature_bundle",
    "kulkarni_nomizu",
    "covariant_hessian",
    "laplace_beltrami",
    "divergence_tensor",
    "second_divergence",
    "lichnerowicz",
    "tensor_norm2",
    "einstein_divergence",
]


class NonSPDMetricError(ValueError):
    """The metric fails the nodewise positive-definiteness check."""


@dataclass(frozen=True, eq=False)
class MetricField:
    """Riemannian metric on a periodic grid.

    ``preset`` is ``"flat"``, ``"conformal"`` (then ``phi`` is set and the
    components are exactly ``exp(2 phi) delta``) or ``"general"``.
    """

    components: SymTensor2Field
    preset: str = "general"
    phi: ScalarField | None = None

    def __post_init__(self):
        if self.preset not in ("flat", "conformal", "general"):
            raise ValueError(f"unknown metric preset {self.preset!r}")
        if self.preset == "conformal" and self.phi is None:
            raise ValueError("conformal preset requires phi")
        lam = np.linalg.eigvalsh(self._nodes_last())
        lo = float(lam.min())
        if not lo >= SPD_FLOOR:
            raise NonSPDMetricError(f"metric not positive definite (min eigenvalue {lo:.3e})")
        object.__setattr__(self, "min_eigenvalue", lo)

    # -- constructors ---------------------------------------------------------

    @classmethod
    def flat(cls, grid: PeriodicGrid) -> "MetricField":
        return cls(SymTensor2Field.identity(grid), "flat")

    @classmethod
    def conformal(cls, phi: ScalarField) -> "MetricField":
        """``exp(2 phi) delta``."""
        comps = SymTensor2Field.identity(phi.grid, np.exp(2.0 * phi.values))
        return cls(comps, "conformal", phi)

    @classmethod
    def general(cls, grid: PeriodicGrid, values: np.ndarray) -> "MetricField":
        return cls(SymTensor2Field(grid, values), "general")

    def rescaled(self, phi: ScalarField) -> "MetricField":
        """The conformal metric ``exp(2 phi) g``."""
        if phi.grid != self.grid:
            raise GridMismatchError(f"{phi.grid} != {self.grid}")
        if self.preset == "flat":
            return MetricField.conformal(phi)
        if self.preset == "conformal":
            return MetricField.conformal(self.phi + phi)
        return MetricField(self.components * ScalarField(self.grid, np.exp(2 * phi.values)))

    def perturbed(self, h: np.ndarray | SymTensor2Field) -> "MetricField":
        h = h.values if isinstance(h, SymTensor2Field) else h
        return MetricField.general(self.grid, self.values + h)

    # -- cached nodewise data -------------------------------------------------

    @property
    def grid(self) -> PeriodicGrid:
        return self.components.grid

    @property
    def dim(self) -> int:
        return self.grid.dim

    @property
    def values(self) -> np.ndarray:
        return self.components.values

    @property
    def is_flat(self) -> bool:
        return self.preset == "flat"

    def _nodes_last(self) -> np.ndarray:
        n = self.dim
        return np.moveaxis(self.values.reshape(n, n, -1), -1, 0)

    @cached_property
    def inverse(self) -> np.ndarray:
        if self.is_flat:
            return self.values.copy()
        inv = np.linalg.inv(self._nodes_last())
        return np.ascontiguousarray(np.moveaxis(inv, 0, -1)).reshape(self.values.shape)

    @cached_property
    def det(self) -> np.ndarray:
        if self.is_flat:
            return np.ones(self.grid.shape)
        if self.preset == "conformal":
            return np.exp(2 * self.dim * self.phi.values)
        return np.linalg.det(self._nodes_last()).reshape(self.grid.shape)

    @cached_property
    def sqrt_det(self) -> np.ndarray:
        if self.preset == "conformal":
            return np.exp(self.dim * self.phi.values)
        return np.sqrt(self.det)

    @cached_property
    def bundle(self) -> "CurvatureBundle":
        return _compute_bundle(self)

    def volume(self) -> float:
        from .grid import fsum_grid

        return fsum_grid(self.sqrt_det) * self.grid.cell_volume


@dataclass(frozen=True, eq=False)
class CurvatureBundle:
    """Christoffel symbols through Weyl for one metric.

    ``christoffel[k, i, j]`` is ``Gamma^k_ij`` with the grid axes trailing.
    """

    christoffel: np.ndarray
    riemann: Tensor4Field
    ricci: SymTensor2Field
    scalar: ScalarField
    weyl: Tensor4Field


# ---------------------------------------------------------------------------
# curvature pipeline


def _flat_nodes(a: np.ndarray, ncomp: int) -> np.ndarray:
    return a.reshape(a.shape[:ncomp] + (-1,))


def _metric_jets(g: MetricField):
    """First derivatives ``(n, n, n, M)`` and packed second derivatives."""
    n = g.dim
    s = kernels.sym_index(n)
    nsym = n * (n + 1) // 2
    m = g.grid.size
    dg = np.empty((n, n, n, m))
    ddg = np.empty((nsym, nsym, m))
    for i in range(n):
        for j in range(i, n):
            d1 = gradient(g.values[i, j], n)
            for a in range(n):
                dg[a, i, j] = dg[a, j, i] = d1[a].ravel()
                for b in range(a, n):
                    ddg[s[a, b], s[i, j]] = diff(d1[a], b, n).ravel() if a != b \
                        else diff2(g.values[i, j], a, a, n).ravel()
    return dg, ddg


def kn_pairs(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Kulkarni-Nomizu product of component arrays, in bivector form."""
    n = A.shape[0]
    idx = pair_index(n)
    out = np.empty((len(idx), len(idx)) + A.shape[2:])
    for a, (i, j) in enumerate(idx):
        for b, (k, l) in enumerate(idx):
            out[a, b] = (A[i, k] * B[j, l] + A[j, l] * B[i, k]
                         - A[i, l] * B[j, k] - A[j, k] * B[i, l])
    return out


def _compute_bundle(g: MetricField) -> CurvatureBundle:
    grid, n = g.grid, g.dim
    if g.is_flat:
        p = n * (n - 1) // 2
        zero4 = Tensor4Field(grid, np.zeros((p, p) + grid.shape))
        return CurvatureBundle(np.zeros((n, n, n) + grid.shape), zero4,
                               SymTensor2Field(grid, np.zeros((n, n) + grid.shape)),
                               ScalarField(grid, np.zeros(grid.shape)), zero4)
    gf = np.ascontiguousarray(_flat_nodes(g.values, 2))
    ginv = np.ascontiguousarray(_flat_nodes(g.inverse, 2))
    dg, ddg = _metric_jets(g)
    gamma = kernels.christoffel(ginv, dg)
    del dg
    riem = kernels.riemann_pairs(gf, gamma, ddg)
    del ddg
    ric = kernels.rm_contract(riem, ginv)
    scal = np.einsum("ij...,ij...->...", ginv, ric)
    if n >= 4:
        trless = ric - scal / n * gf
        weyl = (riem + scal / (2 * n * (n - 1)) * kn_pairs(gf, gf)
                + kn_pairs(trless, gf) / (n - 2))
    else:
        weyl = np.zeros_like(riem)
    shape = grid.shape
    return CurvatureBundle(
        gamma.reshape((n, n, n) + shape),
        Tensor4Field(grid, riem.reshape(riem.shape[:2] + shape)),
        SymTensor2Field(grid, ric.reshape((n, n) + shape)),
        ScalarField(grid, scal.reshape(shape)),
        Tensor4Field(grid, weyl.reshape(weyl.shape[:2] + shape)),
    )


def christoffel(g: MetricField) -> np.ndarray:
    """``Gamma^k_ij`` as an array ``(n, n, n, *grid)``."""
    return g.bundle.christoffel


def curvature_bundle(g: MetricField) -> CurvatureBundle:
    return g.bundle


def kulkarni_nomizu(A: SymTensor2Field, B: SymTensor2Field) -> Tensor4Field:
    if A.grid != B.grid:
        raise GridMismatchError(f"{A.grid} != {B.grid}")
    return Tensor4Field(A.grid, kn_pairs(A.values, B.values))


# ---------------------------------------------------------------------------
# array-level covariant calculus


def _raise2(h, g: MetricField):
    if g.is_flat:
        return h
    gi = g.inverse
    return np.einsum("ia...,jb...,ab...->ij...", gi, gi, h)


def _dot2(a, b, g: MetricField):
    """``a_ij b^ij`` as a scalar array."""
    return np.einsum("ij...,ij...->...", _raise2(a, g), b)


def _dot1(v, w, g: MetricField):
    if g.is_flat:
        return np.einsum("i...,i...->...", v, w)
    return np.einsum("ij...,i...,j...->...", g.inverse, v, w)


def _trace(h, g: MetricField):
    if g.is_flat:
        return np.einsum("ii...->...", h)
    return np.einsum("ij...,ij...->...", g.inverse, h)


def _compose(a, b, g: MetricField):
    """``a_ik g^kl b_lj``."""
    if g.is_flat:
        return np.einsum("ik...,kj...->ij...", a, b)
    return np.einsum("ik...,kl...,lj...->ij...", a, g.inverse, b)


def _sym(t):
    return 0.5 * (t + np.swapaxes(t, 0, 1))


def _grad(u, g: MetricField):
    return gradient(u, g.dim)


def _hess(u, g: MetricField):
    n = g.dim
    du = gradient(u, n)
    out = np.empty((n, n) + u.shape)
    for i in range(n):
        out[i, i] = diff2(u, i, i, n)
        for j in range(i + 1, n):
            out[i, j] = out[j, i] = diff(du[i], j, n)
    if not g.is_flat:
        out -= np.einsum("kij...,k...->ij...", g.bundle.christoffel, du)
    return out


def _lap(u, g: MetricField):
    n = g.dim
    if g.is_flat:
        return sum(diff2(u, a, a, n) for a in range(n))
    return _trace(_hess(u, g), g)


def _nabla1(w, g: MetricField):
    """``(nabla w)[a, b] = nabla_a w_b``."""
    out = np.stack([diff(w, a, g.dim) for a in range(g.dim)])
    if not g.is_flat:
        out -= np.einsum("pab...,p...->ab...", g.bundle.christoffel, w)
    return out


def _div1(w, g: MetricField):
    return _trace(_nabla1(w, g), g)


def _nabla2(h, g: MetricField):
    """``(nabla h)[a, i, j] = nabla_a h_ij``."""
    out = np.stack([diff(h, a, g.dim) for a in range(g.dim)])
    if not g.is_flat:
        t = np.einsum("pai...,pj...->aij...", g.bundle.christoffel, h)
        out -= t + np.swapaxes(t, 1, 2)
    return out


def _div2(h, g: MetricField):
    """``(div h)_j = nabla^i h_ij``."""
    t = _nabla2(h, g)
    if g.is_flat:
        return np.einsum("iij...->j...", t)
    return np.einsum("ai...,aij...->j...", g.inverse, t)


def _delta2(h, g: MetricField):
    """``delta(delta h) = nabla^j nabla^i h_ij``."""
    return _div1(_div2(h, g), g)


def _rough_lap2(h, g: MetricField):
    """``g^ab nabla_a nabla_b h_ij`` via two covariant derivatives."""
    n = g.dim
    t = _nabla2(h, g)  # t[b, i, j]
    if g.is_flat:
        return sum(diff(t[a], a, n) for a in range(n))
    gi = g.inverse
    gam = g.bundle.christoffel
    out = np.zeros(h.shape)
    for a in range(n):
        out += np.einsum("b...,bij...->ij...", gi[a], diff(t, a, n))
    contracted = np.einsum("ab...,pab...->p...", gi, gam)
    out -= np.einsum("p...,pij...->ij...", contracted, t)
    up = np.einsum("ab...,pai...->bpi...", gi, gam)  # g^ab Gamma^p_ai
    s = np.einsum("bpi...,bpj...->ij...", up, t)
    out -= s + np.swapaxes(s, 0, 1)
    return out


def _rm_dot(h_up, g: MetricField):
    """``(Rm . h)_jk = R_ijkl h^il`` for an already raised ``h``."""
    if g.is_flat:
        return np.zeros_like(h_up)
    pairs = g.bundle.riemann.pairs
    out = kernels.rm_contract(np.ascontiguousarray(_flat_nodes(pairs, 2)),
                              np.ascontiguousarray(_flat_nodes(h_up, 2)))
    return out.reshape(h_up.shape)


def _lichnerowicz(h, g: MetricField):
    out = _rough_lap2(h, g)
    if g.is_flat:
        return out
    ric = g.bundle.ricci.values
    out += 2.0 * _rm_dot(_raise2(h, g), g)
    rh = _compose(ric, h, g)
    out -= rh + np.swapaxes(rh, 0, 1)
    return out


def _norm2_array(values, rank: int, g: MetricField):
    if rank == 0:
        return values**2
    if rank == 1:
        return _dot1(values, values, g)
    if rank == 2:
        return _dot2(values, values, g)
    raise ValueError(f"unsupported rank {rank}")


# ---------------------------------------------------------------------------
# field-level operations


def _check(g: MetricField, *fields):
    for f in fields:
        if f.grid != g.grid:
            raise GridMismatchError(f"{f.grid} != {g.grid}")


def covariant_hessian(u: ScalarField, g: MetricField) -> SymTensor2Field:
    _check(g, u)
    return SymTensor2Field(g.grid, _hess(u.values, g))


def laplace_beltrami(u: ScalarField, g: MetricField) -> ScalarField:
    _check(g, u)
    return ScalarField(g.grid, _lap(u.values, g))


def divergence_tensor(h: SymTensor2Field, g: MetricField) -> OneFormField:
    """``delta h = -div h``."""
    _check(g, h)
    return OneFormField(g.grid, -_div2(h.values, g))


def second_divergence(h: SymTensor2Field, g: MetricField) -> ScalarField:
    _check(g, h)
    return ScalarField(g.grid, _delta2(h.values, g))


def lichnerowicz(h: SymTensor2Field, g: MetricField,
                 bundle: CurvatureBundle | None = None) -> SymTensor2Field:
    """Lichnerowicz Laplacian ``Delta h + 2 Rm.h - Ric o h - h o Ric``."""
    _check(g, h)
    if bundle is not None and bundle is not g.bundle:
        raise ValueError("curvature bundle was not computed from this metric")
    return SymTensor2Field(g.grid, _lichnerowicz(h.values, g))


def tensor_norm2(T, g: MetricField) -> ScalarField:
    """Full contraction of ``T`` with itself using ``g^-1`` on every index."""
    _check(g, T)
    if isinstance(T, Tensor4Field):
        vals = kernels.pair_norm2(np.ascontiguousarray(_flat_nodes(T.pairs, 2)),
                                  np.ascontiguousarray(_flat_nodes(g.inverse, 2)))
        return ScalarField(g.grid, vals.reshape(g.grid.shape))
    rank = {ScalarField: 0, OneFormField: 1, SymTensor2Field: 2}[type(T)]
    return ScalarField(g.grid, _norm2_array(T.values, rank, g))


def einstein_divergence(g: MetricField) -> OneFormField:
    """``delta(Ric - R/2 g)``; vanishes by the contracted Bianchi identity."""
    b = g.bundle
    ein = b.ricci.values - 0.5 * b.scalar.values * g.values
    return OneFormField(g.grid, -_div2(ein, g))
