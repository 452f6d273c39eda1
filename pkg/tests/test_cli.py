import json
import os
import subprocess
import sys

import pytest

from qlab import __version__
from qlab.cli import main

EXPECTED = {
    "gauss_bonnet_wrong_chi": 2,
    "newton_budget_exhausted": 3,
    "bad_preset_spherical": 4,
    "obstruction_positive_f": 5,
    "prescribe_form_incompatible": 5,
    "prescribe_full_constant": 5,
    "prescribe_full_flat_t3": 3,
    "qcurv_conformal_t4": 0,
}


@pytest.mark.parametrize("name", sorted(EXPECTED))
def test_bundled_exit_codes(name, tmp_path, capsys):
    out = tmp_path / "r.json"
    code = main(["run", name, "--output", str(out)])
    assert code == EXPECTED[name]
    rep = json.loads(out.read_text())
    assert rep["exit_code"] == code
    assert rep["pass"] is (code == 0)
    assert rep["tool"] == "qlab" and rep["version"] == __version__
    if code:
        assert rep["diagnostic"]


def test_obstruction_diagnostic_is_specific(tmp_path, capsys):
    main(["run", "obstruction_positive_f", "--output", str(tmp_path / "r.json")])
    err = capsys.readouterr().err
    assert "change sign" in err
    rep = json.loads((tmp_path / "r.json").read_text())
    assert rep["solver"]["obstruction"]["kind"] == "sign"


def test_config_error_names_preset(capsys):
    assert main(["run", "bad_preset_spherical"]) == 4
    captured = capsys.readouterr()
    assert "spherical" in captured.err
    assert json.loads(captured.out)["exit_code"] == 4


def test_missing_scenario_file(capsys):
    assert main(["run", "/nonexistent/scenario.yaml"]) == 4


def test_usage_errors_are_config_errors(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 4
    with pytest.raises(SystemExit) as exc:
        main(["verify"])
    assert exc.value.code == 4


@pytest.mark.parametrize("sizes", [[], ["40"]])
def test_verify_config_errors(sizes, capsys):
    assert main(["verify", "--sizes", *sizes]) == 4


def test_verify_dimension_gating(tmp_path, capsys):
    out = tmp_path / "v.json"
    assert main(["verify", "--dim", "3", "--preset", "flat", "--sizes", "8",
                 "--output", str(out)]) == 0
    rep = json.loads(out.read_text())
    names = {c["name"] for c in rep["checks"]}
    assert {"symbol_trace", "adjointness", "kernel_probe_verdict"} <= names
    assert "paneitz_covariance" not in names
    assert any(s["reason"] == "dim≠4" and s["name"] == "paneitz_covariance"
               for s in rep["skipped"])


def test_csv_output_and_history(tmp_path, capsys):
    out = tmp_path / "r.csv"
    assert main(["run", "newton_budget_exhausted", "--output", str(out), "--format", "csv"]) == 3
    assert out.read_text().startswith("name,size,measured,bound,pass,note\n")
    hist = (tmp_path / "r_history.csv").read_text().splitlines()
    assert hist[0] == "iteration,residual" and len(hist) >= 3


def test_reports_are_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    main(["run", "qcurv_conformal_t4", "--output", str(a)])
    main(["run", "qcurv_conformal_t4", "--output", str(b)])
    assert a.read_bytes() == b.read_bytes()
    assert "wall_clock_seconds" not in json.loads(a.read_text())


def test_timing_flag_adds_wall_clock(tmp_path, capsys):
    out = tmp_path / "t.json"
    main(["run", "qcurv_conformal_t4", "--output", str(out), "--timing"])
    assert json.loads(out.read_text())["wall_clock_seconds"] > 0


def test_scenario_file_with_field_output(tmp_path, capsys):
    from qlab.fieldio import load_field

    field = tmp_path / "q.qf"
    sc = tmp_path / "s.yaml"
    sc.write_text(
        "schema_version: 1\nname: s\ngrid: {dim: 4, points_per_axis: 8}\n"
        "metric:\n  preset: conformal\n  terms:\n    - {amplitude: 0.05, mode: [0, 1, 0, 0]}\n"
        f"task: qcurv\ntask_parameters: {{field_output: '{field}', field_format: text}}\n"
        f"tolerances: {{identity: 1.0e-3}}\noutput: {{path: '{tmp_path / 'r.json'}'}}\n")
    assert main(["run", str(sc)]) == 0
    q = load_field(field)
    rep = json.loads((tmp_path / "r.json").read_text())
    assert rep["results"]["q_max"] == pytest.approx(float(q.values.max()), rel=1e-15)


def test_version_and_list(capsys):
    assert main(["version"]) == 0
    assert capsys.readouterr().out.strip() == f"qlab {__version__}"
    assert main(["list"]) == 0
    assert "verify_flat_t4" in capsys.readouterr().out


def test_console_script_and_thread_variable():
    env = dict(os.environ, QLAB_NUM_THREADS="1")
    res = subprocess.run([sys.executable, "-m", "qlab.cli", "run", "prescribe_full_constant"],
                         env=env, capture_output=True, text=True)
    assert res.returncode == 5
    assert "kernel" in res.stderr
    env["QLAB_NUM_THREADS"] = "many"
    res = subprocess.run([sys.executable, "-m", "qlab.cli", "version"], env=env,
                         capture_output=True, text=True)
    assert res.returncode != 0 and "QLAB_NUM_THREADS" in res.stderr
