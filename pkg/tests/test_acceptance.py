"""Acceptance criteria 1-14, one PASS/FAIL line each at the stated tolerances."""

import math

import numpy as np
import pytest

from conftest import conformal_metric, conformal_phi, general_metric, record, rel_l2
from qlab.grid import PeriodicGrid, ScalarField
from qlab.linearization import (
    _adj_array,
    _lin_array,
    kernel_probe,
    pair_scalar,
    pair_tensor,
    principal_symbol_adjoint,
    trace_identity_residual,
)
from qlab.qcurv import (
    Form4Density,
    _paneitz_array,
    _q_array,
    curvature_form,
    dimension_constants,
    gauss_bonnet_report,
    pfaffian_form,
    q_curvature,
    q_spaceform,
)
from qlab.report import dumps_json
from qlab.runner import execute
from qlab.scenario import ScenarioError, bundled_scenarios, load_scenario
from qlab.solvers import SolverObstruction, SolverOptions, newton_conformal, newton_ift, prescribe_form
from qlab.tensor import MetricField


def _sym(grid, rng):
    h = grid.random_bandlimited(rng, 2, shape=(grid.dim, grid.dim))
    return 0.5 * (h + np.swapaxes(h, 0, 1))


def test_c01_spaceform_constants():
    e4 = abs(q_spaceform(4, 1.0) - 6.0)
    e3 = abs(q_spaceform(3, 1.0) - 15.0 / 8.0)
    ok = e4 <= 1e-14 and e3 <= 1e-14
    assert record(1, ok, f"q_spaceform(4,1) err {e4:.1e}, q_spaceform(3,1) err {e3:.1e} (<= 1e-14)")


def test_c02_gauss_bonnet_t4():
    grid = PeriodicGrid(4, 24)
    gb = gauss_bonnet_report(conformal_metric(grid))
    val = abs(gb.total_q + gb.weyl_term)
    bound = 1e-6 * grid.volume
    assert record(2, val <= bound,
                  f"|int(Q + |W|^2/4)dvol| = {val:.2e} <= {bound:.2e} at N=24")


def test_c03_conformal_q_law():
    errs = {}
    for n in (12, 24):
        grid = PeriodicGrid(4, n)
        phi = conformal_phi(grid)
        direct = q_curvature(conformal_metric(grid)).values
        law = np.exp(-4 * phi) * _paneitz_array(MetricField.flat(grid), phi)
        errs[n] = rel_l2(direct, law)
    gain = errs[12] / errs[24]
    ok = errs[24] <= 1e-7 and gain >= 1e3
    assert record(3, ok, f"rel L2 {errs[24]:.2e} at N=24 (<= 1e-7), "
                         f"{errs[12]:.2e} at N=12, gain {gain:.1e} (>= 1e3)")


def test_c04_paneitz_covariance():
    grid = PeriodicGrid(4, 24)
    g = conformal_metric(grid)
    psi = 0.05 * np.cos(grid.coords()[1])
    gp = g.rescaled(ScalarField(grid, psi))
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(3):
        u = grid.random_bandlimited(rng, 2)
        worst = max(worst, rel_l2(_paneitz_array(gp, u), np.exp(-4 * psi) * _paneitz_array(g, u)))
    assert record(4, worst <= 1e-6, f"max rel L2 {worst:.2e} over 3 u at N=24 (<= 1e-6)")


def test_c05_adjointness():
    rng = np.random.default_rng(5)
    worst = {}
    for label, g in (("flat", MetricField.flat(PeriodicGrid(4, 12))),
                     ("conformal", conformal_metric(PeriodicGrid(4, 12)))):
        w = 0.0
        for _ in range(10):
            h = _sym(g.grid, rng)
            f = g.grid.random_bandlimited(rng, 2)
            gap = abs(pair_scalar(g, _lin_array(g, h), f) - pair_tensor(g, h, _adj_array(g, f)))
            w = max(w, gap / math.sqrt(pair_tensor(g, h, h) * pair_scalar(g, f, f)))
        worst[label] = w
    ok = worst["flat"] <= 1e-8 and worst["conformal"] <= 1e-6
    assert record(5, ok, f"flat {worst['flat']:.1e} (<= 1e-8), conformal "
                         f"{worst['conformal']:.1e} (<= 1e-6), 10 pairs each")


def test_c06_linearization_oracle():
    rng = np.random.default_rng(6)
    steps = (1e-3, 5e-4, 2.5e-4)
    orders = {}
    for label, g in (("flat", MetricField.flat(PeriodicGrid(4, 8))),
                     ("conformal", conformal_metric(PeriodicGrid(4, 16)))):
        h = _sym(g.grid, rng)
        lin = _lin_array(g, h)
        errs = []
        for t in steps:
            fd = (_q_array(g.perturbed(t * h)) - _q_array(g.perturbed(-t * h))) / (2 * t)
            errs.append(rel_l2(fd, lin))
        orders[label] = min(math.log2(errs[k] / errs[k + 1]) for k in range(2))
    ok = min(orders.values()) >= 1.9
    assert record(6, ok, f"observed order flat {orders['flat']:.3f}, conformal "
                         f"{orders['conformal']:.3f} (>= 1.9)")


def test_c07_trace_identity():
    rng = np.random.default_rng(7)
    res = {}
    for label, g in (("flat", MetricField.flat(PeriodicGrid(4, 24))),
                     ("conformal", conformal_metric(PeriodicGrid(4, 24)))):
        f = ScalarField(g.grid, g.grid.random_bandlimited(rng, 2))
        res[label] = trace_identity_residual(g, f)
    ok = res["flat"] <= 1e-10 and res["conformal"] <= 1e-6
    assert record(7, ok, f"flat {res['flat']:.1e} (<= 1e-10), conformal "
                         f"{res['conformal']:.1e} (<= 1e-6) at N=24")


def test_c08_symbol_identities():
    rng = np.random.default_rng(8)
    worst, smallest = 0.0, math.inf
    for n in (3, 4):
        a = dimension_constants(n).a
        for _ in range(100):
            xi = rng.standard_normal(n)
            s = principal_symbol_adjoint(n, xi)
            exact = -a * (n - 1) * float(xi @ xi) ** 2
            worst = max(worst, abs(s.trace - exact) / abs(exact))
            smallest = min(smallest, float(np.abs(s.matrix).max()))
    ok = worst <= 1e-14 and smallest > 0
    assert record(8, ok, f"trace rel err {worst:.1e} over 100 xi in 3D and 4D (<= 1e-14); "
                         f"min max|sigma| {smallest:.1e} > 0")


def test_c09_kernel_probe():
    flat = kernel_probe(MetricField.flat(PeriodicGrid(4, 8)))
    g = conformal_metric(PeriodicGrid(4, 8))
    q = q_curvature(g).values
    conf = kernel_probe(g)
    ok = (flat.constant_residual <= 1e-10 and np.ptp(q) > 1e-3
          and conf.verdict == "non_singular")
    assert record(9, ok, f"flat constant_residual {flat.constant_residual:.1e} (<= 1e-10); "
                         f"conformal N=8 verdict {conf.verdict}, smallest ray "
                         f"{conf.smallest_ray:.2e} vs threshold {conf.kernel_threshold:.2e}")


def test_c10_prescribe_form():
    grid = PeriodicGrid(4, 24)
    g = MetricField.flat(grid)
    x = grid.coords()
    star = ScalarField(grid, 0.1 * np.sin(x[0]) + 0.05 * np.cos(x[1] + x[2]))
    omega = curvature_form(g.rescaled(star)).against(g)
    gt, rep = prescribe_form(g, omega)
    phi_err = rel_l2(np.log(gt.values[0, 0]) / 2, star.values - star.values.mean())
    try:
        prescribe_form(g, Form4Density(ScalarField.constant(grid, 0.01), g))
        rejected = False
    except SolverObstruction as exc:
        rejected = exc.report.obstruction["kind"] == "mean_incompatibility"
    ok = rep.verification_residual <= 1e-5 and rejected
    assert record(10, ok, f"verification_residual {rep.verification_residual:.2e} at N=24 "
                          f"(<= 1e-5), phi rel err {phi_err:.1e}; constant density "
                          f"{'rejected' if rejected else 'NOT rejected'} (Gauss-Bonnet)")


def test_c11_newton_conformal():
    grid = PeriodicGrid(4, 16)
    g = MetricField.flat(grid)
    star = 0.1 * np.sin(grid.coords()[0])
    f = np.exp(-4 * star) * _paneitz_array(g, star)
    phi, rep = newton_conformal(g, ScalarField(grid, f))
    err = rel_l2(phi.values, star)
    try:
        newton_conformal(g, ScalarField.constant(grid, 1.0))
        kind = None
    except SolverObstruction as exc:
        kind = exc.report.obstruction["kind"]
    ok = err <= 1e-6 and kind == "sign"
    assert record(11, ok, f"phi rel err {err:.1e} in {rep.iterations} iterations (<= 1e-6); "
                          f"f = +1 rejected with {kind} obstruction")


@pytest.fixture(scope="module")
def ift_flat_t3():
    grid = PeriodicGrid(3, 16)
    g0 = MetricField.flat(grid)
    f = ScalarField(grid, 1e-3 * np.sin(grid.coords()[0]))
    u, g, rep = newton_ift(g0, f, SolverOptions(residual_tolerance=1e-8))
    try:
        newton_ift(g0, ScalarField.constant(grid, 1e-3))
        kind = None
    except SolverObstruction as exc:
        kind = exc.report.obstruction["kind"]
    res = rep.residual_history[-1]
    d = rep.diagnostics
    ok = res <= 1e-8 and g.min_eigenvalue > 0 and kind == "kernel_component"
    record(12, ok, f"residual {res:.2e} (<= 1e-8 required); mean-free residual "
                   f"{d['reachable_residual']:.1e}, constant drift {d['kernel_drift']:.2e} "
                   f"in ker L*; SPD min eigenvalue {g.min_eigenvalue:.3f}; constant f "
                   f"rejected: {kind}")
    return g, rep, kind


def test_c12_newton_ift_attainable_parts(ift_flat_t3):
    g, rep, kind = ift_flat_t3
    d = rep.diagnostics
    assert kind == "kernel_component"
    assert g.min_eigenvalue > 0.99
    assert d["reachable_residual"] <= 1e-8
    # the unreachable constant mode drifts at second order: 1.25 A^2 for A sin x1
    assert abs(d["kernel_drift"]) == pytest.approx(1.25e-6, rel=1e-2)


@pytest.mark.xfail(strict=True, reason="constants span ker L* on flat T^3; the mean of "
                   "Q(g0 + L*u) drifts by 1.25 A^2 = 1.25e-6 and no L* step can remove it")
def test_c12_newton_ift_full_residual(ift_flat_t3):
    _, rep, _ = ift_flat_t3
    assert rep.residual_history[-1] <= 1e-8


def test_c13_pfaffian_consistency():
    worst_rel, worst_int = 0.0, 0.0
    for make in (MetricField.flat, conformal_metric, general_metric):
        g = make(PeriodicGrid(4, 16))
        pf = pfaffian_form(g)
        ipf = pf.integral()
        gb = gauss_bonnet_report(g)
        four = 4.0 * (4.0 * gb.total_q + 4.0 * gb.weyl_term)
        scale = float(np.sum(np.abs(pf.density.values) * g.sqrt_det) * g.grid.cell_volume)
        worst_rel = max(worst_rel, abs(ipf - four) / scale if scale > 0 else abs(ipf - four))
        worst_int = max(worst_int, abs(ipf) / g.grid.volume, abs(four) / g.grid.volume)
    ok = worst_rel <= 1e-6 and worst_int <= 1e-6
    assert record(13, ok, f"|int Pf - 4 int(4Q+|W|^2)| / int|Pf| {worst_rel:.1e} (<= 1e-6); "
                          f"both vanish to {worst_int:.1e} per unit volume "
                          f"(flat, conformal, general metrics)")


def _report_text(path):
    try:
        sc = load_scenario(path)
    except ScenarioError as exc:
        return f"config error: {exc}"
    return dumps_json(execute(sc).to_dict())


def test_c14_determinism():
    names = sorted(bundled_scenarios())
    differ = []
    for name in names:
        path = bundled_scenarios()[name]
        if _report_text(path) != _report_text(path):
            differ.append(name)
    ok = not differ
    assert record(14, ok, f"{len(names) - len(differ)}/{len(names)} bundled scenarios "
                          f"byte-identical over two runs" + (f"; differ: {differ}" if differ else ""))
