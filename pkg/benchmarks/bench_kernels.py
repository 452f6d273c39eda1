"""Compare the compiled and numpy nodewise kernels.

Usage::

    python3 benchmarks/bench_kernels.py [--dim 4] [--points 16] [--repeat 3]

Each kernel is timed on the same inputs (a conformal metric's jets), the
outputs are compared, and the end-to-end curvature bundle is timed with
each backend swapped into :mod:`qlab.kernels`.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from qlab import _kernels_py, kernels, tensor
from qlab.grid import PeriodicGrid, ScalarField
from qlab.tensor import MetricField, _flat_nodes, _metric_jets

try:
    from qlab import _kernels as _kernels_c
except ImportError:  # extension not built
    _kernels_c = None

NAMES = ("christoffel", "riemann_pairs", "rm_contract", "pair_norm2")


def _inputs(g: MetricField):
    gf = np.ascontiguousarray(_flat_nodes(g.values, 2))
    ginv = np.ascontiguousarray(_flat_nodes(g.inverse, 2))
    dg, ddg = _metric_jets(g)
    gamma = _kernels_py.christoffel(ginv, dg)
    pairs = _kernels_py.riemann_pairs(gf, gamma, ddg)
    return {
        "christoffel": (ginv, dg),
        "riemann_pairs": (gf, gamma, ddg),
        "rm_contract": (pairs, ginv),
        "pair_norm2": (pairs, ginv),
    }


def _best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def _bundle_time(g_factory, impl, repeat):
    saved = {k: getattr(kernels, k) for k in NAMES}
    try:
        for k in NAMES:
            setattr(kernels, k, getattr(impl, k))
        return _best(lambda: tensor._compute_bundle(g_factory()), repeat)
    finally:
        for k, v in saved.items():
            setattr(kernels, k, v)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dim", type=int, default=4)
    ap.add_argument("--points", type=int, default=16)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    grid = PeriodicGrid(args.dim, args.points)
    x = grid.coords()
    phi = ScalarField(grid, 0.1 * np.sin(x[0]) + 0.05 * np.cos(x[1]))
    factory = lambda: MetricField.conformal(phi)  # noqa: E731
    data = _inputs(factory())

    print(f"grid {args.dim}D N={args.points} ({grid.size} nodes), best of {args.repeat}")
    if _kernels_c is None:
        print("compiled extension unavailable; timing the numpy kernels only")
    print(f"{'kernel':<16}{'numpy [s]':>12}{'cython [s]':>12}{'speedup':>10}{'max diff':>12}")
    for name in NAMES:
        args_ = data[name]
        ref = getattr(_kernels_py, name)(*args_)
        tp = _best(lambda: getattr(_kernels_py, name)(*args_), args.repeat)
        if _kernels_c is None:
            print(f"{name:<16}{tp:>12.4f}")
            continue
        out = getattr(_kernels_c, name)(*args_)
        tc = _best(lambda: getattr(_kernels_c, name)(*args_), args.repeat)
        diff = float(np.max(np.abs(np.asarray(out) - ref)))
        print(f"{name:<16}{tp:>12.4f}{tc:>12.4f}{tp / tc:>10.1f}{diff:>12.2e}")

    tp = _bundle_time(factory, _kernels_py, args.repeat)
    line = f"{'bundle (total)':<16}{tp:>12.4f}"
    if _kernels_c is not None:
        tc = _bundle_time(factory, _kernels_c, args.repeat)
        line += f"{tc:>12.4f}{tp / tc:>10.1f}"
    print(line)
    print(f"active backend: {kernels.BACKEND}")


if __name__ == "__main__":
    main()
