"""The identity battery behind ``qlab verify`` and verify scenarios."""

from __future__ import annotations

import math

import numpy as np

from .grid import PeriodicGrid, ScalarField
from .linearization import (
    _adj_array,
    _lin_array,
    kernel_probe,
    pair_scalar,
    pair_tensor,
    principal_symbol_adjoint,
    trace_identity_residual,
)
from .qcurv import (
    _paneitz_array,
    _q_array,
    dimension_constants,
    gauss_bonnet_report,
    pfaffian_form,
    q_curvature,
)
from .report import Check
from .tensor import MetricField

__all__ = ["verify_suite", "BudgetError", "NODE_BUDGET", "SPECTRAL_CHECKS"]

NODE_BUDGET = 2_000_000
SPECTRAL_CHECKS = ("conformal_q_law", "paneitz_covariance", "trace_identity")
ROUNDOFF_FLOOR = 1e-12
PROBE_CAP = {2: 16, 3: 16, 4: 8}


class BudgetError(ValueError):
    """Requested sizes exceed the memory budget or are empty."""


def _rel_l2(g: MetricField, a: np.ndarray, b: np.ndarray) -> float:
    num = pair_scalar(g, a - b, a - b)
    den = max(pair_scalar(g, b, b), pair_scalar(g, a, a))
    return math.sqrt(max(num, 0.0) / den) if den > 0 else math.sqrt(max(num, 0.0))


def _test_phi(grid: PeriodicGrid) -> np.ndarray:
    x = grid.coords()
    return 0.1 * np.sin(x[0]) + 0.05 * np.cos(x[1] + x[2])


def _four_d_checks(g: MetricField, tol: dict, rng) -> tuple[list[Check], dict]:
    grid = g.grid
    n = grid.points_per_axis
    checks, errors = [], {}
    vol = grid.volume

    gb = gauss_bonnet_report(g)
    checks.append(Check.at_most("gauss_bonnet", abs(gb.total_q + gb.weyl_term) / vol,
                                tol.get("gauss_bonnet", 1e-6), n,
                                "|int (Q + |W|^2/4) dvol| / (2 pi)^4, chi(T^4) = 0"))

    pf = pfaffian_form(g)
    pf_int = pf.integral()
    four = 4.0 * (4.0 * gb.total_q + 4.0 * gb.weyl_term)
    scale = max(float(np.abs(pf.density.values * g.sqrt_det).sum() * grid.cell_volume), vol * 1e-300)
    checks.append(Check.at_most("pfaffian_consistency", abs(pf_int - four) / scale,
                                tol.get("identity", 1e-6), n,
                                "|int Pf - 4 int (4Q + |W|^2)| / int |Pf|"))
    checks.append(Check.at_most("pfaffian_vanishes", abs(pf_int) / vol,
                                tol.get("gauss_bonnet", 1e-6), n))

    phi = _test_phi(grid)
    gt = g.rescaled(ScalarField(grid, phi))
    lhs = q_curvature(gt).values
    rhs = np.exp(-4.0 * phi) * (_paneitz_array(g, phi) + _q_array(g))
    errors["conformal_q_law"] = _rel_l2(g, lhs, rhs)

    psi = 0.05 * np.cos(grid.coords()[1])
    gp = g.rescaled(ScalarField(grid, psi))
    worst = 0.0
    for _ in range(3):
        u = grid.random_bandlimited(rng, 2)
        worst = max(worst, _rel_l2(g, _paneitz_array(gp, u),
                                   np.exp(-4.0 * psi) * _paneitz_array(g, u)))
    errors["paneitz_covariance"] = worst

    f = grid.random_bandlimited(rng, 2)
    errors["trace_identity"] = trace_identity_residual(g, ScalarField(grid, f))

    return checks, errors


def _spectral_checks(errors: dict, n: int, flat: bool, tol: dict) -> list[Check]:
    id_tol = tol.get("identity", 1e-6)
    return [Check.at_most("conformal_q_law", errors["conformal_q_law"], id_tol, n),
            Check.at_most("paneitz_covariance", errors["paneitz_covariance"], id_tol, n),
            Check.at_most("trace_identity", errors["trace_identity"],
                          1e-10 if flat else id_tol, n)]


def _adjointness(g: MetricField, rng, pairs: int = 2) -> float:
    grid = g.grid
    n = grid.dim
    worst = 0.0
    for _ in range(pairs):
        h = grid.random_bandlimited(rng, 2, shape=(n, n))
        h = 0.5 * (h + np.swapaxes(h, 0, 1))
        f = grid.random_bandlimited(rng, 2)
        a = pair_scalar(g, _lin_array(g, h), f)
        b = pair_tensor(g, h, _adj_array(g, f))
        nh = math.sqrt(pair_tensor(g, h, h))
        nf = math.sqrt(pair_scalar(g, f, f))
        worst = max(worst, abs(a - b) / (nh * nf))
    return worst


def _symbol_trace(n: int, rng, count: int = 20) -> float:
    a = dimension_constants(n).a
    worst = 0.0
    for _ in range(count):
        xi = rng.standard_normal(n)
        s = principal_symbol_adjoint(n, xi)
        exact = -a * (n - 1) * float(xi @ xi) ** 2
        worst = max(worst, abs(s.trace - exact) / abs(exact))
    return worst


def verify_suite(dim: int, sizes, metric_factory, tolerances: dict | None = None,
                 probe_points: int | None = None, seed: int = 0):
    """Run the identity battery at each size.

    ``metric_factory(grid)`` builds the background at a given resolution.
    Returns ``(checks, skipped, convergence)``; ``convergence`` lists error
    ratios between consecutive sizes for the spectral-accuracy checks.

    Spectral-accuracy errors are held to the identity tolerance only at the
    finest size; coarser sizes carry truncation error by design and are
    judged through the convergence ratios instead.
    """
    tol = dict(tolerances or {})
    sizes = list(sizes)
    if not sizes:
        raise BudgetError("no grid sizes requested")
    for n in sizes:
        if n**dim > NODE_BUDGET:
            raise BudgetError(f"N={n} in {dim}D has {n**dim} nodes, over the budget of "
                              f"{NODE_BUDGET}")
        PeriodicGrid(dim, n)
    checks: list[Check] = []
    skipped: list[dict] = []
    history: dict[str, list[tuple[int, float]]] = {}
    rng = np.random.default_rng(seed)
    if dim < 3:
        skipped.append({"name": "all", "reason": "dim<3: Q-curvature constants undefined"})
        return checks, skipped, []

    checks.append(Check.at_most("symbol_trace", _symbol_trace(dim, rng), 1e-14, None,
                                "relative error of tr sigma(L*) against -a_n (n-1) |xi|^4"))
    for n in sizes:
        grid = PeriodicGrid(dim, n)
        g = metric_factory(grid)
        adj_tol = 1e-8 if g.is_flat else 1e-6
        checks.append(Check.at_most("adjointness", _adjointness(g, rng), adj_tol, n))
        if dim == 4:
            c4, errors = _four_d_checks(g, tol, rng)
            checks.extend(c4)
            if n == max(sizes):
                checks.extend(_spectral_checks(errors, n, g.is_flat, tol))
            for k, v in errors.items():
                history.setdefault(k, []).append((n, v))
        else:
            for name in ("gauss_bonnet", "pfaffian_consistency", "pfaffian_vanishes",
                         *SPECTRAL_CHECKS):
                skipped.append({"name": name, "size": n, "reason": "dim≠4"})

    # the probe costs many L L* products; run it once on a small grid
    pn = probe_points or min(min(sizes), PROBE_CAP[dim])
    pg = metric_factory(PeriodicGrid(dim, pn))
    probe = kernel_probe(pg)
    if pg.is_flat:
        checks.append(Check.at_most("kernel_probe_constant_residual", probe.constant_residual,
                                    1e-10, pn, f"verdict {probe.verdict}"))
        expected = "q_singular_suspected"
    else:
        expected = "non_singular"
    checks.append(Check("kernel_probe_verdict", probe.smallest_ray, probe.kernel_threshold,
                        probe.verdict == expected, pn,
                        f"verdict {probe.verdict}, expected {expected}"))

    convergence = []
    ratio_bound = tol.get("convergence_ratio", 1e-3)
    for name, pts in history.items():
        for (n0, e0), (n1, e1) in zip(pts, pts[1:]):
            ratio = e1 / e0 if e0 > 0 else 0.0
            convergence.append({"check": name, "from": n0, "to": n1, "error_from": e0,
                                "error_to": e1, "ratio": ratio})
            if n1 >= 2 * n0:
                saturated = e1 <= ROUNDOFF_FLOOR
                checks.append(Check(f"convergence:{name}", ratio, ratio_bound,
                                    bool(ratio <= ratio_bound or saturated), n1,
                                    "at roundoff" if saturated else None))
    return checks, skipped, convergence
