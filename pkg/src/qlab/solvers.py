"""Constructive solvers: Paneitz inversion, curvature-form prescription,
Newton for the conformal prescribed-Q equation and the frozen-Jacobian
scheme ``Q(g0 + L*u) = f``.

Analytic obstructions (mean incompatibility, sign conditions, kernel
components) raise :class:`SolverObstruction` before any iteration; the
attached :class:`SolverReport` carries the diagnostic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .grid import ScalarField, fsum_grid
from .krylov import drop_nyquist, gmres_solve, symbol_preconditioner, weighted_mean
from .linearization import (
    _adj_array,
    _lin_array,
    kernel_probe,
    leading_scale,
    lls_symbol,
)
from .qcurv import (
    DimensionError,
    Form4Density,
    _paneitz_array,
    _q_array,
    curvature_form,
    q_curvature,
)
from .tensor import MetricField, NonSPDMetricError

__all__ = [
    "SolverOptions",
    "SolverReport",
    "SolverObstruction",
    "solve_paneitz",
    "prescribe_form",
    "newton_conformal",
    "newton_ift",
]


@dataclass(frozen=True)
class SolverOptions:
    max_iterations: int = 50
    residual_tolerance: float = 1e-10
    damping: str = "backtracking"
    linear_solver_tolerance: float = 1e-12
    spd_guard: bool = True
    ift_radius: float = 1e-2
    jacobian: str = "frozen"
    max_halvings: int = 20
    linear_max_iterations: int = 400

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.residual_tolerance <= 0 or self.linear_solver_tolerance <= 0:
            raise ValueError("tolerances must be positive")
        if self.damping not in ("none", "backtracking"):
            raise ValueError(f"unknown damping {self.damping!r}")
        if self.jacobian not in ("frozen", "fd"):
            raise ValueError(f"unknown jacobian mode {self.jacobian!r}")

    def updated(self, **kw) -> "SolverOptions":
        return replace(self, **kw)


@dataclass
class SolverReport:
    converged: bool = False
    iterations: int = 0
    residual_history: list[float] = field(default_factory=list)
    obstruction: dict | None = None
    verification_residual: float = math.nan
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "residual_history": list(self.residual_history),
            "obstruction": self.obstruction,
            "verification_residual": self.verification_residual,
            "diagnostics": self.diagnostics,
        }


class SolverObstruction(Exception):
    """An analytically necessary solvability condition fails."""

    def __init__(self, message: str, report: SolverReport):
        super().__init__(message)
        self.report = report


def _rms(g: MetricField, u: np.ndarray) -> float:
    """Volume-normalized L2 norm against ``dvol_g``."""
    w = g.sqrt_det
    return math.sqrt(max(fsum_grid(u * u * w) / fsum_grid(w), 0.0))


def _k_squared(grid) -> np.ndarray:
    k = grid.wavenumbers()
    return sum(np.meshgrid(*([k**2] * grid.dim), indexing="ij"))


def _require4(g, what):
    if g.dim != 4:
        raise DimensionError(f"{what} needs dimension 4 (dim={g.dim})")


# ---------------------------------------------------------------------------
# linear Paneitz solve


def solve_paneitz(g: MetricField, rho: ScalarField, opts: SolverOptions = SolverOptions()):
    """Mean-zero solution of ``P_g phi = rho``; returns ``(phi, report)``."""
    _require4(g, "solve_paneitz")
    grid = g.grid
    report = SolverReport()
    r = rho.values
    vol = g.volume()
    total = fsum_grid(r * g.sqrt_det) * grid.cell_volume
    norm = _rms(g, r)
    if abs(total) > 1e-8 * max(norm, 1e-300) * vol and abs(total) > 1e-300:
        report.obstruction = {"kind": "mean_incompatibility", "mean_incompatibility": total}
        raise SolverObstruction(
            f"integral of the right-hand side is {total:.6e}, not zero", report)
    if norm == 0.0:
        report.converged = True
        report.residual_history = [0.0]
        report.verification_residual = 0.0
        return ScalarField(grid, np.zeros(grid.shape)), report

    k4 = _k_squared(grid) ** 2
    if g.is_flat:
        spec = np.fft.fftn(r)
        k4.flat[0] = 1.0
        spec /= k4
        spec.flat[0] = 0.0
        phi = np.real(np.fft.ifftn(spec))
        report.iterations = 1
        phi = phi - weighted_mean(phi, g.sqrt_det)
        res = _rms(g, _paneitz_array(g, phi) - r) / norm
        report.residual_history = [1.0, res]
    else:
        w = g.sqrt_det
        precond = symbol_preconditioner(grid, k4, leading_scale(g, 2))

        def matvec(v):
            v = v.reshape(grid.shape)
            return _paneitz_array(g, v - weighted_mean(v, w))

        phi = np.zeros(grid.shape)
        resid = r
        res = 1.0
        report.residual_history = [res]
        # a few refinement sweeps absorb GMRES stagnation near roundoff
        for _ in range(3):
            step, info, hist = gmres_solve(matvec, resid, precond,
                                           rtol=opts.linear_solver_tolerance,
                                           maxiter=opts.linear_max_iterations,
                                           resolved_grid=grid)
            report.iterations += len(hist)
            report.diagnostics["gmres_info"] = int(info)
            trial = phi + step - weighted_mean(step, w)
            rt = _rms(g, r - _paneitz_array(g, trial)) / norm
            if rt >= res:
                break
            phi, res = trial, rt
            resid = r - _paneitz_array(g, phi)
            report.residual_history.append(res)
            if res <= opts.residual_tolerance:
                break
    report.verification_residual = res
    report.converged = res <= max(opts.residual_tolerance, 1e-13)
    return ScalarField(grid, phi), report


# ---------------------------------------------------------------------------
# curvature 4-forms


def prescribe_form(g: MetricField, omega: Form4Density, opts: SolverOptions = SolverOptions()):
    """Conformal metric ``exp(2 phi) g`` whose curvature 4-form is ``omega``.

    Solves ``P_g phi = *(omega - Omega_g)``; returns ``(metric, report)``.
    The verification residual recomputes the curvature form of the new
    metric through the full tensor pipeline.
    """
    _require4(g, "prescribe_form")
    target = omega.against(g).density.values
    base = curvature_form(g).density.values
    phi, report = solve_paneitz(g, ScalarField(g.grid, target - base), opts)
    gt = g.rescaled(phi)
    recomputed = curvature_form(gt).against(g).density.values
    scale = max(_rms(g, target), _rms(g, base), 1e-300)
    report.verification_residual = _rms(g, recomputed - target) / scale
    report.diagnostics["phi_rms"] = _rms(g, phi.values)
    return gt, report


# ---------------------------------------------------------------------------
# conformal Newton


def _sign_obstruction(g: MetricField, f: np.ndarray, kappa: float, vol_scale: float):
    """The integral of ``f exp(4 phi)`` must equal ``kappa_P``."""
    fmin, fmax = float(f.min()), float(f.max())
    zero = abs(kappa) <= 1e-8 * vol_scale
    if zero:
        ok = (fmin < 0.0 < fmax) or (fmin == 0.0 and fmax == 0.0)
        need = "f must change sign or vanish identically (kappa_P = 0)"
    elif kappa > 0:
        ok = fmax > 0.0
        need = "f must be positive somewhere (kappa_P > 0)"
    else:
        ok = fmin < 0.0
        need = "f must be negative somewhere (kappa_P < 0)"
    if ok:
        return None
    return {"kind": "sign", "kappa_P": kappa, "min_f": fmin, "max_f": fmax,
            "condition": need}


def _seed(g: MetricField, fv, Q, kappa, opts):
    """Initial guess from the linearized equation ``P phi0 = f - Q`` (mean-free part).

    Newton started from a constant never leaves the constants when
    ``Q = 0`` (the step ``-1/4`` solves the linear system exactly), so the
    seed carries the oscillating part; its constant is then set from
    ``int f exp(4 phi) = kappa_P`` when that has a real solution.
    """
    grid = g.grid
    w = g.sqrt_det
    rhs = fv - Q
    rhs = rhs - weighted_mean(rhs, w)
    if _rms(g, rhs) == 0.0:
        return np.zeros(grid.shape)
    phi0, _ = solve_paneitz(g, ScalarField(grid, rhs),
                            opts.updated(residual_tolerance=1.0, linear_solver_tolerance=1e-8))
    phi = phi0.values
    m = fsum_grid(fv * np.exp(4.0 * phi) * w) * grid.cell_volume
    if kappa != 0.0 and m != 0.0 and kappa / m > 0.0:
        phi = phi + 0.25 * math.log(kappa / m)
    return phi


def newton_conformal(g: MetricField, f: ScalarField, opts: SolverOptions = SolverOptions(),
                     initial: ScalarField | None = None):
    """Newton iteration for ``P_g phi + Q_g = f exp(4 phi)``.

    Returns ``(phi, report)``; ``exp(2 phi) g`` then has Q-curvature ``f``.
    """
    _require4(g, "newton_conformal")
    grid = g.grid
    report = SolverReport()
    fv = f.values
    Q = _q_array(g)
    w = g.sqrt_det
    kappa = fsum_grid(Q * w) * grid.cell_volume
    scale = (_rms(g, Q) + 1e-300) * g.volume()
    obstruction = _sign_obstruction(g, fv, kappa, max(scale, 1e-12 * g.volume()))
    if obstruction is not None:
        report.obstruction = obstruction
        raise SolverObstruction(obstruction["condition"], report)

    norm = max(_rms(g, fv), _rms(g, Q), 1e-300)
    if initial is None:
        phi = _seed(g, fv, Q, kappa, opts)
    else:
        phi = initial.values.copy()

    def residual(p):
        return _paneitz_array(g, p) + Q - fv * np.exp(4.0 * p)

    F = residual(phi)
    res = _rms(g, F) / norm
    report.residual_history.append(res)
    k4 = _k_squared(grid) ** 2
    coef = leading_scale(g, 2)
    for it in range(opts.max_iterations):
        if res <= opts.residual_tolerance:
            break
        c = -4.0 * fv * np.exp(4.0 * phi)
        cbar = weighted_mean(c, w)
        zero_mode = cbar if abs(cbar) > 1e-12 * max(np.abs(c).max(), 1.0) else 1.0
        precond = symbol_preconditioner(grid, k4, coef, zero_mode=zero_mode)

        def jac(v, c=c):
            v = v.reshape(grid.shape)
            return _paneitz_array(g, v) + c * v

        step, info, hist = gmres_solve(jac, -F, precond, rtol=opts.linear_solver_tolerance,
                                       maxiter=opts.linear_max_iterations,
                                       resolved_grid=None if g.is_flat else grid)
        lin = _rms(g, jac(step) + F) / max(_rms(g, F), 1e-300)
        if not np.all(np.isfinite(step)) or lin > 0.5:
            report.diagnostics["singular_step"] = {"iteration": it, "linear_residual": lin,
                                                   "gmres_info": int(info)}
            break
        lam = 1.0
        for _ in range(opts.max_halvings + 1):
            trial = phi + lam * step
            Ft = residual(trial)
            rt = _rms(g, Ft) / norm
            if opts.damping == "none" or rt < res:
                break
            lam *= 0.5
        else:
            report.diagnostics["line_search_failed"] = it
            break
        phi, F, res = trial, Ft, rt
        report.iterations = it + 1
        report.residual_history.append(res)
    report.converged = res <= opts.residual_tolerance
    # independent check through the full curvature pipeline
    gt = g.rescaled(ScalarField(grid, phi))
    report.verification_residual = _rms(g, q_curvature(gt).values - fv) / norm
    return ScalarField(grid, phi), report


# ---------------------------------------------------------------------------
# frozen-Jacobian scheme Q(g0 + L*u) = f


DESK_LIMITS = {3: 16, 4: 12}
LLS_TOL_FLOOR = 1e-8


def _fd_jacobian(g0: MetricField, h: np.ndarray, project, eps: float = 1e-6):
    """Central-difference JVP of ``u -> Q(g0 + h + L*u)`` at the current ``h``."""
    shape = g0.grid.shape

    def op(v):
        v = project(v.reshape(shape))
        dv = _adj_array(g0, v)
        scale = eps / max(float(np.abs(dv).max()), 1e-300)
        qp = _q_array(g0.perturbed(h + scale * dv))
        qm = _q_array(g0.perturbed(h - scale * dv))
        return project((qp - qm) / (2.0 * scale))

    return op


def newton_ift(g0: MetricField, f: ScalarField, opts: SolverOptions = SolverOptions(),
               probe=None):
    """Solve ``Q(g0 + L*_{g0} u) = f`` for a scalar potential ``u``.

    Linear steps invert ``v -> L_{g0} L*_{g0} v``; with
    ``opts.jacobian == "fd"`` later steps use central-difference products of
    the exact Jacobian instead.
    When constants lie in ``ker L*_{g0}`` both the potential and the
    discrepancy are kept mean-zero.  Returns ``(u, metric, report)``.
    """
    grid = g0.grid
    n = grid.dim
    if n not in DESK_LIMITS:
        raise DimensionError(f"newton_ift supports dimensions 3 and 4 (dim={n})")
    if grid.points_per_axis > DESK_LIMITS[n]:
        raise ValueError(f"newton_ift is limited to N <= {DESK_LIMITS[n]} in {n}D")
    report = SolverReport()
    fv = f.values
    Q0 = _q_array(g0)
    w0 = g0.sqrt_det
    d0 = fv - Q0
    fnorm = max(_rms(g0, fv), 1.0)
    report.diagnostics["initial_discrepancy"] = _rms(g0, d0) / fnorm
    report.diagnostics["outside_neighborhood"] = bool(_rms(g0, d0) / fnorm > opts.ift_radius)

    if probe is None:
        probe = kernel_probe(g0, iterations=0)
    singular = probe.constant_residual / math.sqrt(g0.volume()) < probe.kernel_threshold
    report.diagnostics["constants_in_kernel"] = bool(singular)
    if singular:
        mean = weighted_mean(d0, w0)
        if abs(mean) > opts.residual_tolerance * fnorm:
            report.obstruction = {"kind": "kernel_component", "mean_discrepancy": mean,
                                  "constant_residual": probe.constant_residual}
            raise SolverObstruction(
                "kernel obstruction: f - Q(g0) has a constant component, which lies "
                "in ker L*", report)

    def project(v):
        return v - weighted_mean(v, w0) if singular else v

    sym = lls_symbol(grid, n)
    zero_mode = None
    if not singular:
        zero_mode = max((probe.constant_residual**2) / g0.volume(), 1e-300)
    precond = symbol_preconditioner(grid, sym, leading_scale(g0, 4), zero_mode=zero_mode)

    def frozen(v):
        v = project(v.reshape(grid.shape))
        return project(_lin_array(g0, _adj_array(g0, v)))

    def split(r):
        """Residual norms: full, and resolved mean-free part the steps can act on."""
        return _rms(g0, r) / fnorm, _rms(g0, drop_nyquist(grid, project(r))) / fnorm

    u = np.zeros(grid.shape)
    h = np.zeros(g0.values.shape)
    g = g0
    r = d0
    res, reachable = split(r)
    report.residual_history.append(res)
    for it in range(opts.max_iterations):
        if res <= opts.residual_tolerance or reachable <= opts.residual_tolerance:
            break
        if opts.jacobian == "fd" and it > 0:
            op = _fd_jacobian(g0, h, project)
        else:
            op = frozen
        # roundoff in the eighth-order operator floors near 1e-10
        v, info, hist = gmres_solve(op, project(r), precond,
                                    rtol=max(opts.linear_solver_tolerance, LLS_TOL_FLOOR),
                                    maxiter=opts.linear_max_iterations, resolved_grid=grid)
        v = project(v)
        hv = _adj_array(g0, v)
        lam = 1.0
        accepted = False
        for _ in range(opts.max_halvings + 1):
            cand = h + lam * hv
            try:
                gc = g0.perturbed(cand)
            except NonSPDMetricError:
                if not opts.spd_guard:
                    raise
                lam *= 0.5
                continue
            rc = fv - _q_array(gc)
            resc, reach_c = split(rc)
            if opts.damping == "none" or reach_c < reachable:
                accepted = True
                break
            lam *= 0.5
        if not accepted:
            report.diagnostics["stalled"] = {"iteration": it, "residual": res}
            break
        u = u + lam * v
        h, g, r, res, reachable = cand, gc, rc, resc, reach_c
        report.iterations = it + 1
        report.residual_history.append(res)
    report.converged = res <= opts.residual_tolerance
    nyq = r - drop_nyquist(grid, r)
    # what is left once the reachable part is solved: the constant (kernel) drift
    # of a Q-singular background and the Nyquist-plane aliasing of the grid
    report.diagnostics["reachable_residual"] = reachable
    report.diagnostics["kernel_drift"] = weighted_mean(r, w0) if singular else 0.0
    report.diagnostics["nyquist_residual"] = _rms(g0, nyq) / fnorm
    report.diagnostics["min_eigenvalue"] = g.min_eigenvalue
    report.verification_residual = _rms(g0, q_curvature(g).values - fv) / fnorm
    return ScalarField(grid, u), g, report
