"""Periodic grids, grid-sampled fields and Fourier differentiation.

All fields store their components first and the grid axes last, so a
symmetric 2-tensor on a 4D grid with ``N`` points per axis has values of
shape ``(4, 4, N, N, N, N)``.  The torus is ``[0, 2*pi)^dim``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft

__all__ = [
    "PeriodicGrid",
    "ScalarField",
    "OneFormField",
    "SymTensor2Field",
    "Tensor4Field",
    "GridMismatchError",
    "diff",
    "diff2",
    "gradient",
    "spectral_derivative",
    "flat_laplacian",
    "integrate",
    "fsum_grid",
    "pair_index",
]

PERIOD = 2.0 * math.pi


class GridMismatchError(ValueError):
    """Raised when fields living on different grids are combined."""


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform grid on the flat torus ``[0, 2*pi)^dim``."""

    dim: int
    points_per_axis: int

    def __post_init__(self):
        if self.dim not in (2, 3, 4):
            raise ValueError(f"dim must be 2, 3 or 4, got {self.dim}")
        n = self.points_per_axis
        if n < 8 or n % 2:
            raise ValueError(f"points_per_axis must be even and >= 8, got {n}")

    @property
    def period(self) -> float:
        return PERIOD

    @property
    def spacing(self) -> float:
        return PERIOD / self.points_per_axis

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_axis,) * self.dim

    @property
    def size(self) -> int:
        return self.points_per_axis**self.dim

    @property
    def volume(self) -> float:
        return PERIOD**self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    def axis_nodes(self) -> np.ndarray:
        return self.spacing * np.arange(self.points_per_axis)

    def coords(self) -> list[np.ndarray]:
        """Open (broadcastable) coordinate arrays, one per axis."""
        x = self.axis_nodes()
        out = []
        for a in range(self.dim):
            shape = [1] * self.dim
            shape[a] = self.points_per_axis
            out.append(np.broadcast_to(x.reshape(shape), self.shape))
        return out

    def wavenumbers(self) -> np.ndarray:
        """Integer wavenumbers in FFT order, ``-N/2+1 .. N/2``."""
        n = self.points_per_axis
        k = np.fft.fftfreq(n, d=1.0 / n)
        k[n // 2] = n // 2
        return k

    def trig(self, terms) -> np.ndarray:
        """Evaluate ``sum c * cos(k.x)`` / ``sin`` terms on the nodes.

        ``terms`` is an iterable of ``(coefficient, mode, kind)`` where
        ``kind`` is ``"cos"`` or ``"sin"`` and ``mode`` an integer vector.
        """
        xs = self.coords()
        out = np.zeros(self.shape)
        for coef, mode, kind in terms:
            mode = tuple(int(m) for m in mode)
            if len(mode) != self.dim:
                raise ValueError(f"mode {mode} does not match dim {self.dim}")
            if any(abs(m) > self.points_per_axis // 2 - 1 for m in mode):
                raise ValueError(f"mode {mode} is at or beyond Nyquist")
            phase = sum(m * x for m, x in zip(mode, xs))
            fn = np.cos if kind == "cos" else np.sin
            out += coef * fn(phase)
        return out

    def random_bandlimited(self, rng: np.random.Generator, kmax: int = 3,
                           shape: tuple[int, ...] = (), mean_zero: bool = False):
        """Random smooth field with modes ``|k_a| <= kmax`` on every axis."""
        kmax = min(kmax, self.points_per_axis // 2 - 1)
        n = self.points_per_axis
        spec = np.zeros(shape + self.shape, dtype=complex)
        sl = [slice(None)] * len(shape)
        idx = np.r_[0:kmax + 1, n - kmax:n]
        sub = np.ix_(*([idx] * self.dim))
        block = rng.standard_normal(shape + (len(idx),) * self.dim) \
            + 1j * rng.standard_normal(shape + (len(idx),) * self.dim)
        spec[tuple(sl) + sub] = block
        axes = tuple(range(len(shape), len(shape) + self.dim))
        out = np.real(np.fft.ifftn(spec, axes=axes)) * self.size
        out /= max(np.sqrt(np.mean(out**2)), 1e-300)
        if mean_zero:
            out -= out.mean(axis=axes, keepdims=True)
        return out


def _check_finite(values: np.ndarray, what: str):
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{what} has non-finite values")


@dataclass(frozen=True, eq=False)
class _Field:
    grid: PeriodicGrid
    values: np.ndarray
    ncomp_axes = 0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        expected = self._component_shape() + self.grid.shape
        if values.shape != expected:
            raise ValueError(
                f"{type(self).__name__} expects shape {expected}, got {values.shape}")
        _check_finite(values, type(self).__name__)
        object.__setattr__(self, "values", values)

    def _component_shape(self) -> tuple[int, ...]:
        return (self.grid.dim,) * self.ncomp_axes

    def _same_grid(self, other):
        if other.grid != self.grid:
            raise GridMismatchError(f"{self.grid} != {other.grid}")


class ScalarField(_Field):
    """One real value per node."""

    ncomp_axes = 0

    @classmethod
    def constant(cls, grid: PeriodicGrid, c: float) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(c)))

    @classmethod
    def from_function(cls, grid: PeriodicGrid, fn) -> "ScalarField":
        return cls(grid, np.broadcast_to(fn(*grid.coords()), grid.shape).copy())

    def __add__(self, other):
        if isinstance(other, ScalarField):
            self._same_grid(other)
            return ScalarField(self.grid, self.values + other.values)
        return ScalarField(self.grid, self.values + other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, ScalarField):
            self._same_grid(other)
            return ScalarField(self.grid, self.values - other.values)
        return ScalarField(self.grid, self.values - other)

    def __mul__(self, other):
        if isinstance(other, ScalarField):
            self._same_grid(other)
            return ScalarField(self.grid, self.values * other.values)
        return ScalarField(self.grid, self.values * other)

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(self.grid, -self.values)


class OneFormField(_Field):
    """Covariant vector per node, values ``(dim, *grid)``."""

    ncomp_axes = 1


class SymTensor2Field(_Field):
    """Symmetric covariant 2-tensor per node, values ``(dim, dim, *grid)``.

    The constructor symmetrizes its input, so ``values[i, j]`` and
    ``values[j, i]`` are always bitwise equal.
    """

    ncomp_axes = 2

    def __post_init__(self):
        super().__post_init__()
        v = self.values
        object.__setattr__(self, "values", 0.5 * (v + np.swapaxes(v, 0, 1)))

    @classmethod
    def identity(cls, grid: PeriodicGrid, scale=1.0) -> "SymTensor2Field":
        n = grid.dim
        vals = np.zeros((n, n) + grid.shape)
        for i in range(n):
            vals[i, i] = scale
        return cls(grid, vals)

    def __add__(self, other):
        self._same_grid(other)
        return SymTensor2Field(self.grid, self.values + other.values)

    def __sub__(self, other):
        self._same_grid(other)
        return SymTensor2Field(self.grid, self.values - other.values)

    def __mul__(self, other):
        if isinstance(other, ScalarField):
            self._same_grid(other)
            return SymTensor2Field(self.grid, self.values * other.values)
        return SymTensor2Field(self.grid, self.values * other)

    __rmul__ = __mul__


def pair_index(dim: int) -> list[tuple[int, int]]:
    """Ordered index pairs ``(i, j)`` with ``i < j`` (bivector basis)."""
    return [(i, j) for i in range(dim) for j in range(i + 1, dim)]


@dataclass(frozen=True, eq=False)
class Tensor4Field:
    """Curvature-type covariant 4-tensor stored in bivector form.

    ``pairs[I, J]`` holds ``T_{ijkl}`` for the pairs ``I = (i, j)`` and
    ``J = (k, l)`` with ``i < j`` and ``k < l``.  Antisymmetry within each
    pair and pair exchange symmetry hold by storage; :meth:`full` expands to
    the ``dim**4`` component array when it is needed.
    """

    grid: PeriodicGrid
    pairs: np.ndarray

    def __post_init__(self):
        p = self.grid.dim * (self.grid.dim - 1) // 2
        pairs = np.asarray(self.pairs, dtype=float)
        if pairs.shape != (p, p) + self.grid.shape:
            raise ValueError(f"Tensor4Field expects {(p, p) + self.grid.shape}, "
                             f"got {pairs.shape}")
        _check_finite(pairs, "Tensor4Field")
        object.__setattr__(self, "pairs", 0.5 * (pairs + np.swapaxes(pairs, 0, 1)))

    @classmethod
    def zeros(cls, grid: PeriodicGrid) -> "Tensor4Field":
        p = grid.dim * (grid.dim - 1) // 2
        return cls(grid, np.zeros((p, p) + grid.shape))

    @classmethod
    def from_full(cls, grid: PeriodicGrid, full: np.ndarray) -> "Tensor4Field":
        idx = pair_index(grid.dim)
        p = len(idx)
        out = np.empty((p, p) + grid.shape)
        for a, (i, j) in enumerate(idx):
            for b, (k, l) in enumerate(idx):
                out[a, b] = full[i, j, k, l]
        return cls(grid, out)

    @property
    def values(self) -> np.ndarray:
        return self.full()

    def full(self) -> np.ndarray:
        n = self.grid.dim
        out = np.zeros((n, n, n, n) + self.grid.shape)
        idx = pair_index(n)
        for a, (i, j) in enumerate(idx):
            for b, (k, l) in enumerate(idx):
                v = self.pairs[a, b]
                out[i, j, k, l] = v
                out[j, i, k, l] = -v
                out[i, j, l, k] = -v
                out[j, i, l, k] = v
        return out

    def __add__(self, other):
        if other.grid != self.grid:
            raise GridMismatchError(f"{self.grid} != {other.grid}")
        return Tensor4Field(self.grid, self.pairs + other.pairs)

    def __sub__(self, other):
        if other.grid != self.grid:
            raise GridMismatchError(f"{self.grid} != {other.grid}")
        return Tensor4Field(self.grid, self.pairs - other.pairs)

    def __mul__(self, c):
        return Tensor4Field(self.grid, self.pairs * c)

    __rmul__ = __mul__


# ---------------------------------------------------------------------------
# array-level spectral calculus; grid axes are the trailing `ndim` axes


@dataclass(frozen=True)
class _Multipliers:
    n: int

    @cached_property
    def ik(self) -> np.ndarray:
        k = np.arange(self.n // 2 + 1, dtype=float)
        k[-1] = 0.0  # Nyquist derivative is zero for real signals
        return 1j * k

    @cached_property
    def minus_k2(self) -> np.ndarray:
        return self.ik * self.ik


_MULT: dict[int, _Multipliers] = {}


def _mult(n: int) -> _Multipliers:
    if n not in _MULT:
        _MULT[n] = _Multipliers(n)
    return _MULT[n]


def _apply(a: np.ndarray, axis: int, ndim: int, which: str) -> np.ndarray:
    ax = a.ndim - ndim + axis
    n = a.shape[ax]
    m = getattr(_mult(n), which)
    shape = [1] * a.ndim
    shape[ax] = m.size
    spec = scipy.fft.rfft(a, axis=ax)
    spec *= m.reshape(shape)
    return scipy.fft.irfft(spec, n=n, axis=ax)


def diff(a: np.ndarray, axis: int, ndim: int) -> np.ndarray:
    """Spectral first derivative along grid axis ``axis``."""
    if not 0 <= axis < ndim:
        raise ValueError(f"axis {axis} out of range for dim {ndim}")
    return _apply(a, axis, ndim, "ik")


def diff2(a: np.ndarray, ax1: int, ax2: int, ndim: int) -> np.ndarray:
    """Spectral mixed second derivative, equal to two first derivatives."""
    if ax1 == ax2:
        if not 0 <= ax1 < ndim:
            raise ValueError(f"axis {ax1} out of range for dim {ndim}")
        return _apply(a, ax1, ndim, "minus_k2")
    return diff(diff(a, ax1, ndim), ax2, ndim)


def gradient(a: np.ndarray, ndim: int) -> np.ndarray:
    """Stack of all first partials; the new derivative axis comes first."""
    return np.stack([diff(a, ax, ndim) for ax in range(ndim)])


def fsum_grid(a: np.ndarray) -> float:
    """Correctly rounded sum of all entries."""
    return math.fsum(np.ravel(a).tolist())


# ---------------------------------------------------------------------------
# field-level operations


def spectral_derivative(u: ScalarField, axis: int) -> ScalarField:
    """Exact derivative of the trigonometric interpolant of ``u``."""
    return ScalarField(u.grid, diff(u.values, axis, u.grid.dim))


def flat_laplacian(u: ScalarField) -> ScalarField:
    d = u.grid.dim
    out = sum(diff2(u.values, a, a, d) for a in range(d))
    return ScalarField(u.grid, out)


def integrate(u: ScalarField, g=None) -> float:
    """Quadrature of ``u`` against the volume element of the metric ``g``.

    With ``g=None`` the flat volume element is used.  The trapezoidal rule
    is exact for trigonometric polynomials below the Nyquist limit.
    """
    if g is None:
        return fsum_grid(u.values) * u.grid.cell_volume
    if g.grid != u.grid:
        raise GridMismatchError(f"{u.grid} != {g.grid}")
    return fsum_grid(u.values * g.sqrt_det) * u.grid.cell_volume
