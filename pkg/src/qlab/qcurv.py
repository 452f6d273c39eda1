"""Q-curvature, the Paneitz operator and Gauss-Bonnet-Chern accounting.

The Paneitz operator in dimension four is applied as::

    P u = Delta^2 u + delta((2/3) R g - 2 Ric) du

with ``delta = -div`` the codifferential; this is the sign for which
``P_{exp(2 psi) g} = exp(-4 psi) P_g`` holds and for which the conformal
law ``P phi + Q = Q~ exp(4 phi)`` is satisfied.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .grid import ScalarField, fsum_grid, integrate
from .tensor import (
    MetricField,
    _div1,
    _dot2,
    _grad,
    _lap,
    tensor_norm2,
)

__all__ = [
    "DimensionError",
    "DimensionConstants",
    "Form4Density",
    "GaussBonnetReport",
    "dimension_constants",
    "q_curvature",
    "q_spaceform",
    "paneitz_apply",
    "conformal_q",
    "curvature_form",
    "pfaffian_form",
    "gauss_bonnet_report",
    "total_q",
]


class DimensionError(ValueError):
    """Operation only defined in another dimension."""


@dataclass(frozen=True)
class DimensionConstants:
    n: int
    a: float
    b: float
    c: float

    @property
    def exact(self) -> tuple[Fraction, Fraction, Fraction]:
        n = self.n
        return (Fraction(-1, 2 * (n - 1)), Fraction(-2, (n - 2) ** 2),
                Fraction(n * n * (n - 4) + 16 * (n - 1), 8 * (n - 1) ** 2 * (n - 2) ** 2))


def dimension_constants(n: int) -> DimensionConstants:
    """Coefficients of ``Q = a Delta R + b |Ric|^2 + c R^2``."""
    if int(n) != n or n < 3:
        raise DimensionError(f"Q-curvature constants need n >= 3, got {n}")
    n = int(n)
    a = -1.0 / (2 * (n - 1))
    b = -2.0 / (n - 2) ** 2
    c = (n * n * (n - 4) + 16 * (n - 1)) / (8 * (n - 1) ** 2 * (n - 2) ** 2)
    return DimensionConstants(n, a, b, c)


def _require4(g: MetricField, what: str):
    if g.dim != 4:
        raise DimensionError(f"{what} is defined in dimension 4 only (dim={g.dim})")


def _q_array(g: MetricField) -> np.ndarray:
    if g.is_flat:
        return np.zeros(g.grid.shape)
    k = dimension_constants(g.dim)
    b = g.bundle
    R = b.scalar.values
    ric2 = _dot2(b.ricci.values, b.ricci.values, g)
    return k.a * _lap(R, g) + k.b * ric2 + k.c * R * R


def q_curvature(g: MetricField) -> ScalarField:
    return ScalarField(g.grid, _q_array(g))


def q_spaceform(n: int, k: float) -> float:
    """Q of the space form of sectional curvature ``k`` (closed form)."""
    c = dimension_constants(n)
    return c.b * n * (n - 1) ** 2 * k * k + c.c * n * n * (n - 1) ** 2 * k * k


def _paneitz_array(g: MetricField, u: np.ndarray) -> np.ndarray:
    out = _lap(_lap(u, g), g)
    if g.is_flat:
        return out
    b = g.bundle
    T = (2.0 / 3.0) * b.scalar.values * g.values - 2.0 * b.ricci.values
    w = np.einsum("ij...,jk...,k...->i...", T, g.inverse, _grad(u, g))
    return out - _div1(w, g)


def paneitz_apply(g: MetricField, u: ScalarField) -> ScalarField:
    _require4(g, "the Paneitz operator")
    return ScalarField(g.grid, _paneitz_array(g, u.values))


def conformal_q(g: MetricField, phi: ScalarField) -> ScalarField:
    """Q of ``exp(2 phi) g`` from the conformal law, without new curvature."""
    _require4(g, "conformal_q")
    vals = np.exp(-4.0 * phi.values) * (_paneitz_array(g, phi.values) + _q_array(g))
    return ScalarField(g.grid, vals)


@dataclass(frozen=True, eq=False)
class Form4Density:
    """A 4-form stored as a density against ``dvol`` of ``reference``."""

    density: ScalarField
    reference: MetricField

    def integral(self) -> float:
        return integrate(self.density, self.reference)

    def against(self, other: MetricField) -> "Form4Density":
        """Re-express the same form against another metric's volume element."""
        ratio = self.reference.sqrt_det / other.sqrt_det
        return Form4Density(ScalarField(other.grid, self.density.values * ratio), other)


def _weyl2(g: MetricField) -> np.ndarray:
    if g.is_flat:
        return np.zeros(g.grid.shape)
    return tensor_norm2(g.bundle.weyl, g).values


def curvature_form(g: MetricField) -> Form4Density:
    """``(Q + |W|^2 / 4) dvol_g``."""
    _require4(g, "the curvature 4-form")
    return Form4Density(ScalarField(g.grid, _q_array(g) + 0.25 * _weyl2(g)), g)


def pfaffian_form(g: MetricField) -> Form4Density:
    """``(16 Q + 4 |W|^2 - (8/3) Delta R) dvol_g``."""
    _require4(g, "the Pfaffian")
    if g.is_flat:
        return Form4Density(ScalarField(g.grid, np.zeros(g.grid.shape)), g)
    lapR = _lap(g.bundle.scalar.values, g)
    dens = 16.0 * _q_array(g) + 4.0 * _weyl2(g) - (8.0 / 3.0) * lapR
    return Form4Density(ScalarField(g.grid, dens), g)


def total_q(g: MetricField) -> float:
    """``kappa_P``, the integral of Q against ``dvol_g``."""
    return integrate(q_curvature(g), g)


@dataclass(frozen=True)
class GaussBonnetReport:
    total_q: float
    weyl_term: float
    euler_estimate: float

    def to_dict(self) -> dict:
        return {"total_q": self.total_q, "weyl_term": self.weyl_term,
                "euler_estimate": self.euler_estimate}


def gauss_bonnet_report(g: MetricField) -> GaussBonnetReport:
    """Integrals of Q and ``|W|^2 / 4`` and the implied Euler characteristic.

    ``total_q + weyl_term`` equals ``8 pi^2 chi``.
    """
    _require4(g, "Gauss-Bonnet-Chern accounting")
    vol = g.sqrt_det * g.grid.cell_volume
    kq = fsum_grid(_q_array(g) * vol)
    kw = fsum_grid(0.25 * _weyl2(g) * vol)
    return GaussBonnetReport(kq, kw, 4.0 * (kq + kw) / (32.0 * math.pi**2))
