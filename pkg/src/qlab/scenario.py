"""Declarative scenario files.

A scenario is a YAML mapping::

    schema_version: 1
    name: conformal_q_t4
    grid: {dim: 4, points_per_axis: 16}
    metric:
      preset: conformal            # flat | conformal | perturbed
      terms:                       # phi (conformal) or h (perturbed)
        - {amplitude: 0.1, mode: [1, 0, 0, 0], kind: sin}
    task: qcurv                    # verify | qcurv | gauss_bonnet | prescribe_form
                                   # | prescribe_conformal | prescribe_full
    task_parameters: {...}
    tolerances: {...}
    solver: {max_iterations: 30}
    output: {path: report.json, format: json}

Trigonometric polynomials are lists of ``{coefficient, mode, kind}``
(``kind`` is ``cos`` or ``sin``; default ``cos``).  Metric terms use
``amplitude`` in place of ``coefficient``; for the perturbed preset each
term may name a ``component: [i, j]`` (default ``[0, 1]``), giving
``g = delta + sum amplitude * trig * (e_i e_j + e_j e_i) / 2``.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from .grid import PeriodicGrid, ScalarField
from .solvers import SolverOptions
from .tensor import MetricField, NonSPDMetricError

__all__ = ["ScenarioError", "Scenario", "load_scenario", "parse_scenario",
           "bundled_scenarios", "SUPPORTED_SCHEMA", "TASKS", "PRESETS"]

SUPPORTED_SCHEMA = (1,)
PRESETS = ("flat", "conformal", "perturbed")
TASKS = ("verify", "qcurv", "gauss_bonnet", "prescribe_form",
         "prescribe_conformal", "prescribe_full")
AMPLITUDE_BOUND = 0.5
SCENARIO_DIR = Path(__file__).parent / "scenarios"


class ScenarioError(ValueError):
    """Configuration error; the message names the offending field."""


@dataclass(frozen=True)
class TrigTerm:
    coefficient: float
    mode: tuple[int, ...]
    kind: str = "cos"
    component: tuple[int, int] | None = None

    def to_dict(self) -> dict:
        d = {"coefficient": self.coefficient, "mode": list(self.mode), "kind": self.kind}
        if self.component is not None:
            d["component"] = list(self.component)
        return d


@dataclass(frozen=True)
class Scenario:
    schema_version: int
    name: str
    dim: int
    points_per_axis: int
    preset: str
    metric_terms: tuple[TrigTerm, ...]
    task: str
    task_parameters: dict
    tolerances: dict
    solver: SolverOptions
    output_path: str | None
    output_format: str
    raw: dict = field(repr=False, default_factory=dict)

    @property
    def grid(self) -> PeriodicGrid:
        return PeriodicGrid(self.dim, self.points_per_axis)

    def metric(self, grid: PeriodicGrid | None = None) -> MetricField:
        """Build the background metric, optionally on another resolution."""
        return build_metric(grid or self.grid, self.preset, self.metric_terms)

    def echo(self) -> dict:
        """Normalized scenario for the report (independent of file layout)."""
        return {
            "schema_version": self.schema_version,
            "name": self.name,
            "grid": {"dim": self.dim, "points_per_axis": self.points_per_axis},
            "metric": {"preset": self.preset,
                       "terms": [t.to_dict() for t in self.metric_terms]},
            "task": self.task,
            "task_parameters": copy.deepcopy(self.task_parameters),
            "tolerances": dict(self.tolerances),
            "solver": {f.name: getattr(self.solver, f.name) for f in fields(self.solver)},
            "output": {"path": self.output_path, "format": self.output_format},
        }


def trig_values(grid: PeriodicGrid, terms) -> np.ndarray:
    return grid.trig([(t.coefficient, t.mode, t.kind) for t in terms])


def build_metric(grid: PeriodicGrid, preset: str, terms) -> MetricField:
    if preset == "flat":
        return MetricField.flat(grid)
    if preset == "conformal":
        return MetricField.conformal(ScalarField(grid, trig_values(grid, terms)))
    n = grid.dim
    h = np.zeros((n, n) + grid.shape)
    for t in terms:
        i, j = t.component
        v = trig_values(grid, [t])
        if i == j:
            h[i, i] += v
        else:
            h[i, j] += 0.5 * v
            h[j, i] += 0.5 * v
    return MetricField.flat(grid).perturbed(h)


# ---------------------------------------------------------------------------
# parsing


def _require(mapping, key, where, types=None):
    if not isinstance(mapping, dict) or key not in mapping:
        raise ScenarioError(f"{where}.{key}: missing required field")
    v = mapping[key]
    if types is None:
        return v
    if not isinstance(v, types) or (isinstance(v, bool) and types is not bool):
        raise ScenarioError(f"{where}.{key}: expected {_tname(types)}, got {v!r}")
    return v


def _tname(types):
    if isinstance(types, tuple):
        return " or ".join(t.__name__ for t in types)
    return types.__name__


def _number(v, where):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ScenarioError(f"{where}: expected a number, got {v!r}")
    v = float(v)
    if not np.isfinite(v):
        raise ScenarioError(f"{where}: must be finite")
    return v


def parse_terms(raw, where: str, dim: int, n: int, coef_key: str = "coefficient",
                with_component: bool = False) -> tuple[TrigTerm, ...]:
    if raw is None:
        return ()
    if not isinstance(raw, list):
        raise ScenarioError(f"{where}: expected a list of terms")
    out = []
    for k, t in enumerate(raw):
        w = f"{where}[{k}]"
        if not isinstance(t, dict):
            raise ScenarioError(f"{w}: expected a mapping")
        unknown = set(t) - {coef_key, "mode", "kind", "component"}
        if unknown:
            raise ScenarioError(f"{w}: unknown keys {sorted(unknown)}")
        coef = _number(_require(t, coef_key, w), f"{w}.{coef_key}")
        mode = _require(t, "mode", w, list)
        if len(mode) != dim or not all(isinstance(m, int) and not isinstance(m, bool)
                                       for m in mode):
            raise ScenarioError(f"{w}.mode: expected {dim} integers, got {mode!r}")
        if any(abs(m) > n // 2 - 1 for m in mode):
            raise ScenarioError(f"{w}.mode: {mode} is outside the resolved band "
                                f"|k| <= {n // 2 - 1} for points_per_axis={n}")
        kind = t.get("kind", "cos")
        if kind not in ("cos", "sin"):
            raise ScenarioError(f"{w}.kind: expected cos or sin, got {kind!r}")
        comp = None
        if with_component:
            comp = t.get("component", [0, 1])
            if (not isinstance(comp, list) or len(comp) != 2
                    or not all(isinstance(c, int) and 0 <= c < dim for c in comp)):
                raise ScenarioError(f"{w}.component: expected two indices in [0, {dim})")
            comp = (min(comp), max(comp))
        elif "component" in t:
            raise ScenarioError(f"{w}.component: only allowed for the perturbed preset")
        out.append(TrigTerm(coef, tuple(mode), kind, comp))
    return tuple(out)


_TASK_KEYS = {
    "verify": {"sizes", "probe_points"},
    "qcurv": {"field_output", "field_format"},
    "gauss_bonnet": {"euler_characteristic"},
    "prescribe_form": {"target"},
    "prescribe_conformal": {"target", "manufactured_phi"},
    "prescribe_full": {"target", "relative_to_background"},
}
_TOLERANCE_KEYS = {"identity", "gauss_bonnet", "verification", "solution", "min_eigenvalue",
                   "convergence_ratio"}


def parse_scenario(data, source: str = "<scenario>") -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioError(f"{source}: top level must be a mapping")
    unknown = set(data) - {"schema_version", "name", "grid", "metric", "task",
                           "task_parameters", "tolerances", "solver", "output"}
    if unknown:
        raise ScenarioError(f"{source}: unknown top-level keys {sorted(unknown)}")
    ver = _require(data, "schema_version", source, int)
    if ver not in SUPPORTED_SCHEMA:
        raise ScenarioError(f"{source}.schema_version: unsupported version {ver} "
                            f"(supported: {list(SUPPORTED_SCHEMA)})")
    name = str(data.get("name", Path(source).stem))
    grid = _require(data, "grid", source, dict)
    dim = _require(grid, "dim", "grid", int)
    n = _require(grid, "points_per_axis", "grid", int)
    try:
        PeriodicGrid(dim, n)
    except ValueError as exc:
        raise ScenarioError(f"grid: {exc}") from None

    metric = _require(data, "metric", source, dict)
    preset = _require(metric, "preset", "metric", str)
    if preset not in PRESETS:
        raise ScenarioError(f"metric.preset: unknown preset {preset!r} "
                            f"(expected one of {', '.join(PRESETS)})")
    unknown = set(metric) - {"preset", "terms"}
    if unknown:
        raise ScenarioError(f"metric: unknown keys {sorted(unknown)}")
    terms = parse_terms(metric.get("terms"), "metric.terms", dim, n, "amplitude",
                        with_component=preset == "perturbed")
    if preset == "flat" and terms:
        raise ScenarioError("metric.terms: the flat preset takes no terms")
    if preset != "flat" and not terms:
        raise ScenarioError(f"metric.terms: the {preset} preset needs at least one term")
    for k, t in enumerate(terms):
        if abs(t.coefficient) >= AMPLITUDE_BOUND:
            raise ScenarioError(f"metric.terms[{k}].amplitude: |{t.coefficient}| must be "
                                f"below {AMPLITUDE_BOUND}")

    task = _require(data, "task", source, str)
    if task not in TASKS:
        raise ScenarioError(f"task: unknown task {task!r} (expected one of {', '.join(TASKS)})")
    params = data.get("task_parameters") or {}
    if not isinstance(params, dict):
        raise ScenarioError("task_parameters: expected a mapping")
    unknown = set(params) - _TASK_KEYS[task]
    if unknown:
        raise ScenarioError(f"task_parameters: unknown keys {sorted(unknown)} for task {task}")
    params = _normalize_params(task, params, dim, n)

    tol = data.get("tolerances") or {}
    if not isinstance(tol, dict) or set(tol) - _TOLERANCE_KEYS:
        raise ScenarioError(f"tolerances: allowed keys are {sorted(_TOLERANCE_KEYS)}")
    tol = {k: _number(v, f"tolerances.{k}") for k, v in tol.items()}

    solver_raw = data.get("solver") or {}
    if not isinstance(solver_raw, dict):
        raise ScenarioError("solver: expected a mapping")
    allowed = {f.name for f in fields(SolverOptions)}
    if set(solver_raw) - allowed:
        raise ScenarioError(f"solver: unknown options {sorted(set(solver_raw) - allowed)}")
    try:
        solver = SolverOptions(**solver_raw)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"solver: {exc}") from None

    out = data.get("output") or {}
    if not isinstance(out, dict) or set(out) - {"path", "format"}:
        raise ScenarioError("output: expected {path, format}")
    fmt = out.get("format", "json")
    if fmt not in ("json", "csv"):
        raise ScenarioError(f"output.format: expected json or csv, got {fmt!r}")
    path = out.get("path")
    if path is not None and not isinstance(path, str):
        raise ScenarioError("output.path: expected a string")

    sc = Scenario(ver, name, dim, n, preset, terms, task, params, tol, solver, path, fmt, data)
    try:
        sc.metric()
    except NonSPDMetricError as exc:
        raise ScenarioError(f"metric: {exc}") from None
    return sc


def _normalize_params(task, params, dim, n) -> dict:
    out = {}
    for key in ("target", "manufactured_phi"):
        if key in params:
            terms = parse_terms(params[key], f"task_parameters.{key}", dim, n)
            out[key] = [t.to_dict() for t in terms]
    if task in ("prescribe_form", "prescribe_full") and "target" not in out:
        raise ScenarioError(f"task_parameters.target: required for task {task}")
    if task == "prescribe_conformal" and ("target" in out) == ("manufactured_phi" in out):
        raise ScenarioError("task_parameters: give exactly one of target, manufactured_phi")
    if task == "gauss_bonnet":
        chi = _require(params, "euler_characteristic", "task_parameters", int)
        out["euler_characteristic"] = chi
    if task == "verify":
        sizes = params.get("sizes", [n])
        if not isinstance(sizes, list) or not all(isinstance(s, int) for s in sizes):
            raise ScenarioError("task_parameters.sizes: expected a list of integers")
        out["sizes"] = list(sizes)
        if "probe_points" in params:
            out["probe_points"] = _require(params, "probe_points", "task_parameters", int)
    if task == "qcurv":
        if "field_output" in params:
            out["field_output"] = str(params["field_output"])
        fmt = params.get("field_format", "binary")
        if fmt not in ("binary", "text"):
            raise ScenarioError("task_parameters.field_format: expected binary or text")
        out["field_format"] = fmt
    if task == "prescribe_full":
        rel = params.get("relative_to_background", True)
        if not isinstance(rel, bool):
            raise ScenarioError("task_parameters.relative_to_background: expected a boolean")
        out["relative_to_background"] = rel
    return out


def load_scenario(path) -> Scenario:
    """Parse a scenario file; ``ScenarioError`` carries a line or field diagnostic."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"{path}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        raise ScenarioError(f"{path}: parse error at {where}: {exc.problem}") from None
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{path}: parse error: {exc}") from None
    return parse_scenario(data, str(path))


def bundled_scenarios() -> dict[str, Path]:
    return {p.stem: p for p in sorted(SCENARIO_DIR.glob("*.yaml"))}
