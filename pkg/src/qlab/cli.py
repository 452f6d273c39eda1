"""``qlab`` command line: ``run``, ``verify`` and ``version``.

``QLAB_NUM_THREADS`` caps the worker threads of the FFT and BLAS layers;
it must be set before the numerical modules load, so imports are deferred.
"""

from __future__ import annotations

import argparse
import os
import sys

THREAD_ENV = "QLAB_NUM_THREADS"
_BLAS_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _threads() -> int:
    raw = os.environ.get(THREAD_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise SystemExit(f"qlab: {THREAD_ENV} must be an integer, got {raw!r}")
    n = max(1, n)
    for var in _BLAS_VARS:
        os.environ.setdefault(var, str(n))
    return n


class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors (exit 4), not check failures."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(4, f"{self.prog}: error: {message}\n")


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qlab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="verb", required=True)

    run = sub.add_parser("run", help="run a scenario file or a bundled scenario by name")
    run.add_argument("scenario", help="path to a YAML scenario, or a bundled name")
    run.add_argument("--output", help="override output.path")
    run.add_argument("--format", choices=("json", "csv"), help="override output.format")
    run.add_argument("--timing", action="store_true",
                     help="record wall-clock seconds (reports are then not byte-stable)")

    ver = sub.add_parser("verify", help="run the identity battery at several grid sizes")
    ver.add_argument("--sizes", type=int, nargs="*", default=None, required=True)
    ver.add_argument("--dim", type=int, default=4)
    ver.add_argument("--preset", default="conformal", help="flat, conformal or perturbed")
    ver.add_argument("--amplitude", type=float, default=0.1,
                     help="amplitude of the sin(x1) metric term")
    ver.add_argument("--output")
    ver.add_argument("--format", choices=("json", "csv"), default="json")
    ver.add_argument("--timing", action="store_true")

    sub.add_parser("version", help="print the tool version")
    sub.add_parser("list", help="list bundled scenarios")
    return p


def _resolve(name: str):
    from pathlib import Path

    from .scenario import bundled_scenarios

    path = Path(name)
    if path.exists():
        return path
    bundled = bundled_scenarios()
    stem = name[:-5] if name.endswith(".yaml") else name
    if stem in bundled:
        return bundled[stem]
    return path


def _emit(rep, path, fmt) -> None:
    from .runner import write_report

    text = write_report(rep, path, fmt)
    if not path:
        sys.stdout.write(text)
    if rep.diagnostic:
        print(f"qlab: {rep.diagnostic}", file=sys.stderr)


def _cmd_run(args) -> int:
    from .report import EXIT_CONFIG, RunReport
    from .runner import execute
    from .scenario import ScenarioError, load_scenario

    try:
        sc = load_scenario(_resolve(args.scenario))
    except ScenarioError as exc:
        rep = RunReport(scenario={"source": args.scenario}, exit_code=EXIT_CONFIG,
                        diagnostic=f"config error: {exc}")
        _emit(rep, args.output, args.format or "json")
        return EXIT_CONFIG
    rep = execute(sc, timing=args.timing)
    _emit(rep, args.output or sc.output_path, args.format or sc.output_format)
    return rep.exit_code


def _cmd_verify(args) -> int:
    from .report import EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_PASS, RunReport
    from .runner import execute
    from .scenario import ScenarioError, parse_scenario

    sizes = args.sizes or []
    if not sizes:
        rep = RunReport(scenario={"verb": "verify", "sizes": []}, exit_code=EXIT_CONFIG,
                        diagnostic="config error: no grid sizes requested")
        _emit(rep, args.output, args.format)
        return EXIT_CONFIG
    metric = {"preset": args.preset}
    if args.preset != "flat":
        mode = [1] + [0] * (args.dim - 1)
        metric["terms"] = [{"amplitude": args.amplitude, "mode": mode, "kind": "sin"}]
    data = {"schema_version": 1, "name": "verify", "task": "verify",
            "grid": {"dim": args.dim, "points_per_axis": min(sizes)}, "metric": metric,
            "task_parameters": {"sizes": sizes}}
    try:
        sc = parse_scenario(data, "verify")
    except ScenarioError as exc:
        rep = RunReport(scenario=data, exit_code=EXIT_CONFIG, diagnostic=f"config error: {exc}")
        _emit(rep, args.output, args.format)
        return EXIT_CONFIG
    rep = execute(sc, timing=args.timing)
    _emit(rep, args.output, args.format)
    if rep.exit_code not in (EXIT_PASS, EXIT_CONFIG):
        return EXIT_CHECK_FAILED
    return rep.exit_code


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    n = _threads()
    if args.verb == "version":
        from . import __version__

        print(f"qlab {__version__}")
        return 0
    if args.verb == "list":
        from .scenario import bundled_scenarios

        for name, path in bundled_scenarios().items():
            print(f"{name}\t{path}")
        return 0
    import scipy.fft

    with scipy.fft.set_workers(n):
        if args.verb == "run":
            return _cmd_run(args)
        return _cmd_verify(args)


if __name__ == "__main__":
    sys.exit(main())
