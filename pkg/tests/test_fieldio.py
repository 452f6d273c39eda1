import numpy as np
import pytest

from qlab.fieldio import FieldFormatError, load_field, save_field
from qlab.grid import OneFormField, PeriodicGrid, ScalarField, SymTensor2Field, Tensor4Field


@pytest.mark.parametrize("binary", [True, False])
def test_round_trip_all_field_types(tmp_path, rng, binary):
    grid = PeriodicGrid(3, 8)
    fields = [
        ScalarField(grid, rng.standard_normal(grid.shape)),
        OneFormField(grid, rng.standard_normal((3,) + grid.shape)),
        SymTensor2Field(grid, rng.standard_normal((3, 3) + grid.shape)),
        Tensor4Field(grid, rng.standard_normal((3, 3) + grid.shape)),
    ]
    for k, fld in enumerate(fields):
        path = tmp_path / f"f{k}.qf"
        save_field(path, fld, binary=binary)
        back = load_field(path)
        assert type(back) is type(fld)
        assert back.grid == grid
        a = fld.pairs if isinstance(fld, Tensor4Field) else fld.values
        b = back.pairs if isinstance(back, Tensor4Field) else back.values
        np.testing.assert_array_equal(a, b)


def test_header_is_readable(tmp_path):
    grid = PeriodicGrid(2, 8)
    save_field(tmp_path / "s.qf", ScalarField.constant(grid, 1.5), binary=False)
    lines = (tmp_path / "s.qf").read_text().splitlines()
    assert lines[0] == "qlab-field 1 text 2 8 1"
    assert lines[1] == "1.5"


@pytest.mark.parametrize("content", [b"garbage\n", b"qlab-field 9 binary 2 8 1\n",
                                     b"qlab-field 1 binary 2 8 1\n\x00\x00",
                                     b"qlab-field 1 morse 2 8 1\n"])
def test_malformed_dumps(tmp_path, content):
    path = tmp_path / "bad.qf"
    path.write_bytes(content)
    with pytest.raises(FieldFormatError):
        load_field(path)


@pytest.mark.parametrize("content", [b"qlab-field x binary 2 8 1\n", b"qlab-field 1 binary 2 7 1\n",
                                     b"qlab-field 1 text 2 8 1\nabc\n"])
def test_bad_header_values(tmp_path, content):
    path = tmp_path / "bad.qf"
    path.write_bytes(content)
    with pytest.raises(FieldFormatError):
        load_field(path)
