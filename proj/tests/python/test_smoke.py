import math
import pathlib

import pytest

import dhsplan

ROOT = pathlib.Path(__file__).resolve().parents[2]
MICRO = ROOT / "data" / "micro_y.json"
PIPE = ROOT / "tests" / "data" / "single_pipe.json"


def test_version():
    assert dhsplan.__version__.count(".") == 2


def test_network_summary():
    s = dhsplan.network_summary(str(MICRO))
    assert s["horizon_hours"] == 24
    assert s["pipes"] == ["p1", "p2", "p3"]


def test_single_pipe_closed_form():
    r = dhsplan.solve(PIPE, "reformulated")
    assert r["status"].lower() == "optimal"
    # all 0.3 MW plus 5e-5*80 MW of losses from the 30 $/MWh boiler
    assert r["objective"] == pytest.approx(30 * 0.304, rel=1e-6)
    assert r["values"]["m_pipe[p1,1]"] == pytest.approx(0.304 / (4.182e-3 * 80), rel=1e-4)


def test_relaxations_bound_the_global_value():
    hours = range(1, 3)
    mc = dhsplan.solve(MICRO, "mccormick", hours)["objective"]
    rb = dhsplan.solve(MICRO, "remove-bilinear", hours)["objective"]
    g = dhsplan.solve(MICRO, "reformulated", hours)["objective"]
    t = dhsplan.solve(MICRO, "tightening", hours)
    assert rb <= mc + 1e-6 and mc <= g + 1e-6
    assert t["max_violation"] <= 0.01
    assert t["repaired"]["objective"] >= g - 1e-6


def test_compare_rows():
    rep = dhsplan.compare(MICRO, hours=[1, 2], name="micro")
    names = [r["variant"] for r in rep["rows"]]
    assert names[0] == "Base(Global)" and len(names) == 6
    assert all(r["status"] == "ok" for r in rep["rows"])
    skipped = dhsplan.compare(MICRO, hours=[1], skip_global=True)
    assert skipped["rows"][0]["status"] == "skipped"


def test_taylor_gap():
    x = 0.05
    assert dhsplan.taylor_gap(x) == pytest.approx(math.exp(-x) - (1 - x), rel=1e-12)


def test_errors_map_to_python():
    with pytest.raises(ValueError):
        dhsplan.solve(MICRO, "nonsense")
    with pytest.raises(ValueError):
        dhsplan.compare(MICRO, hours=[])
    with pytest.raises(ValueError):
        dhsplan.solve(MICRO, "mccormick", [99])
