import json
import math

import pytest

from qlab.report import (
    EXIT_CHECK_FAILED,
    EXIT_PASS,
    Check,
    RunReport,
    checks_csv,
    dumps_json,
    history_csv,
)


def test_check_at_most():
    assert Check.at_most("a", 1e-9, 1e-8).passed
    assert not Check.at_most("a", 2e-8, 1e-8).passed
    assert not Check.at_most("a", math.nan, 1e-8).passed


def test_report_pass_requires_all_checks():
    rep = RunReport(scenario={"name": "x"})
    rep.checks = [Check.at_most("a", 0.0, 1.0), Check.at_most("b", 2.0, 1.0)]
    d = rep.to_dict()
    assert d["pass"] is False
    rep.checks.pop()
    assert rep.to_dict()["pass"] is True
    rep.exit_code = EXIT_CHECK_FAILED
    assert rep.to_dict()["pass"] is False


def test_json_seventeen_digits_and_valid():
    x = 0.1 + 0.2
    text = dumps_json({"x": x, "n": 3, "ok": True, "s": "é", "none": None, "l": [1.0, 2.5]})
    assert "0.30000000000000004" in text
    back = json.loads(text)
    assert back["x"] == x and back["n"] == 3 and back["s"] == "é" and back["none"] is None


def test_json_non_finite_as_strings():
    back = json.loads(dumps_json({"a": math.nan, "b": math.inf, "c": -math.inf}))
    assert back == {"a": "nan", "b": "inf", "c": "-inf"}


def test_json_rejects_unknown_types():
    with pytest.raises(TypeError):
        dumps_json({"a": object()})


def test_wall_clock_only_when_set():
    rep = RunReport(scenario={})
    assert "wall_clock_seconds" not in rep.to_dict()
    rep.wall_clock_seconds = 1.5
    assert rep.to_dict()["wall_clock_seconds"] == 1.5
    assert rep.to_dict()["exit_code"] == EXIT_PASS


def test_csv_outputs():
    rep = RunReport(scenario={}, checks=[Check.at_most("gb", 1e-12, 1e-6, 16, "note, with comma")])
    rows = checks_csv(rep).splitlines()
    assert rows[0] == "name,size,measured,bound,pass,note"
    assert rows[1].startswith("gb,16,9.9999999999999998e-13,9.9999999999999995e-07,true,")
    assert history_csv([1.0, 0.25]).splitlines() == ["iteration,residual", "0,1", "1,0.25"]
