"""Execute scenarios and map outcomes to reports and exit codes."""

from __future__ import annotations

import time
from pathlib import Path

import numpy as np

from .fieldio import save_field
from .grid import ScalarField
from .qcurv import (
    DimensionError,
    Form4Density,
    _paneitz_array,
    _q_array,
    conformal_q,
    gauss_bonnet_report,
    q_curvature,
)
from .report import (
    EXIT_CHECK_FAILED,
    EXIT_CONFIG,
    EXIT_NONCONVERGED,
    EXIT_OBSTRUCTION,
    Check,
    RunReport,
    checks_csv,
    dumps_json,
    history_csv,
)
from .scenario import Scenario, ScenarioError, TrigTerm, build_metric, trig_values
from .solvers import SolverObstruction, newton_conformal, newton_ift, prescribe_form
from .suite import BudgetError, verify_suite

__all__ = ["execute", "write_report"]


def _terms(params, key):
    return [TrigTerm(t["coefficient"], tuple(t["mode"]), t["kind"]) for t in params.get(key, [])]


def _rms(g, u):
    w = g.sqrt_det
    return float(np.sqrt(np.sum(u * u * w) / np.sum(w)))


def _need4(sc: Scenario):
    if sc.dim != 4:
        raise ScenarioError(f"task {sc.task} needs grid.dim = 4 (got {sc.dim})")


def _task_verify(sc: Scenario, rep: RunReport):
    p = sc.task_parameters
    checks, skipped, conv = verify_suite(
        sc.dim, p["sizes"], lambda grid: build_metric(grid, sc.preset, sc.metric_terms),
        sc.tolerances, p.get("probe_points"))
    rep.checks.extend(checks)
    rep.skipped.extend(skipped)
    rep.results["convergence"] = conv


def _task_qcurv(sc: Scenario, rep: RunReport):
    g = sc.metric()
    q = q_curvature(g)
    tot = float(np.sum(q.values * g.sqrt_det) * g.grid.cell_volume)
    rep.results.update({"q_min": float(q.values.min()), "q_max": float(q.values.max()),
                        "q_rms": _rms(g, q.values), "total_q": tot})
    tol = sc.tolerances.get("identity", 1e-6)
    if g.is_flat:
        rep.checks.append(Check.at_most("flat_q_vanishes", float(np.abs(q.values).max()), 1e-12))
    elif sc.dim == 4 and g.preset == "conformal":
        flat = build_metric(g.grid, "flat", ())
        law = conformal_q(flat, g.phi).values
        num = _rms(flat, q.values - law)
        rep.checks.append(Check.at_most("conformal_q_law", num / max(_rms(flat, law), 1e-300), tol))
    if sc.dim == 4:
        gb = gauss_bonnet_report(g)
        rep.checks.append(Check.at_most("gauss_bonnet", abs(gb.total_q + gb.weyl_term)
                                        / g.grid.volume, sc.tolerances.get("gauss_bonnet", 1e-6)))
    out = sc.task_parameters.get("field_output")
    if out:
        save_field(out, q, binary=sc.task_parameters["field_format"] == "binary")
        rep.results["field_output"] = out


def _task_gauss_bonnet(sc: Scenario, rep: RunReport):
    _need4(sc)
    g = sc.metric()
    gb = gauss_bonnet_report(g)
    chi = sc.task_parameters["euler_characteristic"]
    rep.results.update(gb.to_dict())
    rep.results["declared_euler_characteristic"] = chi
    rep.checks.append(Check.at_most("euler_characteristic", abs(gb.euler_estimate - chi),
                                    sc.tolerances.get("gauss_bonnet", 1e-6),
                                    note="|(kappa_Q + kappa_W) / (8 pi^2) - chi_declared|"))


def _task_prescribe_form(sc: Scenario, rep: RunReport):
    _need4(sc)
    g = sc.metric()
    dens = trig_values(g.grid, _terms(sc.task_parameters, "target"))
    omega = Form4Density(ScalarField(g.grid, dens), g)
    gt, srep = prescribe_form(g, omega, sc.solver)
    rep.solver = srep.to_dict()
    rep.checks.append(Check.at_most("linear_residual", srep.residual_history[-1],
                                    sc.solver.residual_tolerance))
    rep.checks.append(Check.at_most("verification_residual", srep.verification_residual,
                                    sc.tolerances.get("verification", 1e-5)))
    return srep


def _task_prescribe_conformal(sc: Scenario, rep: RunReport):
    _need4(sc)
    g = sc.metric()
    grid = g.grid
    p = sc.task_parameters
    exact = None
    if "manufactured_phi" in p:
        exact = trig_values(grid, _terms(p, "manufactured_phi"))
        f = np.exp(-4.0 * exact) * (_paneitz_array(g, exact) + _q_array(g))
    else:
        f = trig_values(grid, _terms(p, "target"))
    phi, srep = newton_conformal(g, ScalarField(grid, f), sc.solver)
    rep.solver = srep.to_dict()
    rep.checks.append(Check.at_most("residual", srep.residual_history[-1],
                                    sc.solver.residual_tolerance))
    rep.checks.append(Check.at_most("verification_residual", srep.verification_residual,
                                    sc.tolerances.get("verification", 1e-6)))
    if exact is not None:
        err = _rms(g, phi.values - exact) / max(_rms(g, exact), 1e-300)
        rep.checks.append(Check.at_most("solution_error", err, sc.tolerances.get("solution", 1e-6)))
    return srep


def _task_prescribe_full(sc: Scenario, rep: RunReport):
    g0 = sc.metric()
    p = sc.task_parameters
    f = trig_values(g0.grid, _terms(p, "target"))
    if p["relative_to_background"]:
        f = f + _q_array(g0)
    u, g, srep = newton_ift(g0, ScalarField(g0.grid, f), sc.solver)
    rep.solver = srep.to_dict()
    rep.checks.append(Check.at_most("residual", srep.residual_history[-1],
                                    sc.solver.residual_tolerance))
    rep.checks.append(Check.at_most("verification_residual", srep.verification_residual,
                                    sc.solver.residual_tolerance))
    lo = g.min_eigenvalue
    bound = sc.tolerances.get("min_eigenvalue", 1e-10)
    rep.checks.append(Check("min_eigenvalue", lo, bound, bool(lo >= bound),
                            note="lower bound on the nodewise metric eigenvalues"))
    return srep


TASKS = {
    "verify": _task_verify,
    "qcurv": _task_qcurv,
    "gauss_bonnet": _task_gauss_bonnet,
    "prescribe_form": _task_prescribe_form,
    "prescribe_conformal": _task_prescribe_conformal,
    "prescribe_full": _task_prescribe_full,
}


def execute(sc: Scenario, timing: bool = False) -> RunReport:
    """Run one scenario; the report's ``exit_code`` carries the outcome."""
    rep = RunReport(scenario=sc.echo())
    t0 = time.perf_counter()
    try:
        srep = TASKS[sc.task](sc, rep)
    except SolverObstruction as exc:
        rep.solver = exc.report.to_dict()
        rep.exit_code = EXIT_OBSTRUCTION
        rep.diagnostic = f"obstruction: {exc}"
    except (ScenarioError, BudgetError, DimensionError) as exc:
        rep.exit_code = EXIT_CONFIG
        rep.diagnostic = f"config error: {exc}"
    else:
        if srep is not None and not srep.converged:
            rep.exit_code = EXIT_NONCONVERGED
            rep.diagnostic = _nonconvergence_note(srep, sc.solver.residual_tolerance)
        elif not rep.passed:
            rep.exit_code = EXIT_CHECK_FAILED
            failed = [c.name for c in rep.checks if not c.passed]
            rep.diagnostic = "failed checks: " + ", ".join(failed)
    if timing:
        rep.wall_clock_seconds = time.perf_counter() - t0
    return rep


def _nonconvergence_note(srep, tol: float) -> str:
    d = srep.diagnostics
    parts = [f"no convergence after {srep.iterations} iterations"]
    if abs(d.get("kernel_drift", 0.0)) > tol:
        parts.append(f"constant residual {d['kernel_drift']:.3e} lies in ker L* "
                     "and is unreachable by L* steps")
    if d.get("nyquist_residual", 0.0) > tol:
        parts.append(f"Nyquist-plane residual {d['nyquist_residual']:.3e}")
    for key in ("singular_step", "line_search_failed", "stalled"):
        if key in d:
            parts.append(f"{key.replace('_', ' ')}: {d[key]}")
    return "; ".join(parts)


def write_report(rep: RunReport, path: str | None, fmt: str) -> str:
    """Serialize and write; returns the text.  ``path=None`` writes nothing."""
    text = dumps_json(rep.to_dict()) if fmt == "json" else checks_csv(rep)
    if path:
        Path(path).write_text(text)
        if fmt == "csv" and rep.solver and rep.solver.get("residual_history"):
            hist = Path(path).with_name(Path(path).stem + "_history.csv")
            hist.write_text(history_csv(rep.solver["residual_history"]))
    return text
