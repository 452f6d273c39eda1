"""Backend selection for the nodewise kernels.

The compiled extension is used when it imports; set ``QLAB_PURE_PYTHON=1``
to force the numpy implementation.
"""

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("QLAB_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py

christoffel = _impl.christoffel
riemann_pairs = _impl.riemann_pairs
rm_contract = _impl.rm_contract
pair_norm2 = _impl.pair_norm2
sym_index = _kernels_py.sym_index
pair_table = _kernels_py.pair_table

__all__ = ["BACKEND", "christoffel", "riemann_pairs", "rm_contract", "pair_norm2",
           "sym_index", "pair_table"]
