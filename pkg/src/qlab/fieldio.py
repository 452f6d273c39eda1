"""Field dumps for report artifacts.

A dump starts with one ASCII header line::

    qlab-field 1 <binary|text> <dim> <points_per_axis> <components>

followed by the values in C order (components first, then grid axes).
Binary bodies are little-endian float64; text bodies hold one value per
line with 17 significant digits.  Rank-4 tensors are written in full
``n**4`` component form.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .grid import OneFormField, PeriodicGrid, ScalarField, SymTensor2Field, Tensor4Field

__all__ = ["save_field", "load_field", "FieldFormatError"]

MAGIC = "qlab-field"
VERSION = 1


class FieldFormatError(ValueError):
    """Malformed or unsupported field dump."""


def _components(field) -> np.ndarray:
    if isinstance(field, Tensor4Field):
        return field.full()
    return field.values


def save_field(path, field, binary: bool = True) -> None:
    grid = field.grid
    data = np.ascontiguousarray(_components(field), dtype="<f8")
    ncomp = data.size // grid.size
    kind = "binary" if binary else "text"
    header = f"{MAGIC} {VERSION} {kind} {grid.dim} {grid.points_per_axis} {ncomp}\n"
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        if binary:
            fh.write(data.tobytes(order="C"))
        else:
            fh.write("".join(f"{v:.17g}\n" for v in data.ravel()).encode("ascii"))


def load_field(path):
    """Read a dump; the field type follows from the component count."""
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii", errors="replace").split()
        body = fh.read()
    if len(header) != 6 or header[0] != MAGIC:
        raise FieldFormatError(f"{path}: not a field dump")
    try:
        version, dim, n, ncomp = (int(v) for v in (header[1], *header[3:]))
    except ValueError:
        raise FieldFormatError(f"{path}: malformed header") from None
    if version != VERSION:
        raise FieldFormatError(f"{path}: unsupported version {version}")
    kind = header[2]
    try:
        grid = PeriodicGrid(dim, n)
    except ValueError as exc:
        raise FieldFormatError(f"{path}: {exc}") from None
    if kind == "binary":
        if len(body) % 8:
            raise FieldFormatError(f"{path}: truncated binary body")
        data = np.frombuffer(body, dtype="<f8").astype(float)
    elif kind == "text":
        try:
            data = np.array([float(v) for v in body.split()])
        except ValueError:
            raise FieldFormatError(f"{path}: non-numeric value in text body") from None
    else:
        raise FieldFormatError(f"{path}: unknown body kind {kind!r}")
    if data.size != ncomp * grid.size:
        raise FieldFormatError(f"{path}: expected {ncomp * grid.size} values, found {data.size}")
    if ncomp == 1:
        return ScalarField(grid, data.reshape(grid.shape))
    if ncomp == dim:
        return OneFormField(grid, data.reshape((dim,) + grid.shape))
    if ncomp == dim * dim:
        return SymTensor2Field(grid, data.reshape((dim, dim) + grid.shape))
    if ncomp == dim**4:
        return Tensor4Field.from_full(grid, data.reshape((dim,) * 4 + grid.shape))
    raise FieldFormatError(f"{path}: {ncomp} components do not match a known field type")
