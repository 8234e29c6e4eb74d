import json
import math
from pathlib import Path

import numpy as np
import pytest

import calsens

DATA = Path(__file__).resolve().parents[1] / "data" / "tiny.csv"
GOLDEN = Path(__file__).resolve().parents[1] / "golden" / "tiny_analysis.json"


def test_sensitivity_level():
    s = calsens.SensitivityLevel(2.0)
    assert s.tau == pytest.approx(2.0 / 3.0)
    assert s.span == pytest.approx(1.5)
    with pytest.raises(calsens.InputError):
        calsens.SensitivityLevel(0.5)


def test_analyze_file_matches_golden():
    golden = json.loads(GOLDEN.read_text())
    report = calsens.analyze(DATA, lambdas=[1.0, 1.5, 2.0], method="rcal", seed=2)
    assert report["schema"] == calsens.ANALYSIS_SCHEMA
    for fresh, stored in zip(report["results"], golden["results"]):
        for a, b in zip(fresh["bounds"], stored["bounds"]):
            for key in ("point_lower", "point_upper", "ci_lower", "ci_upper"):
                if b[key] is None:
                    assert a[key] is None
                else:
                    assert a[key] == pytest.approx(b[key], rel=1e-8, abs=1e-12)


def test_analyze_arrays_at_lambda_one():
    d = calsens.generate("C1", n=300, p=5, seed=3)
    report = calsens.analyze_arrays(d["y"], d["t"], d["x"], lambdas=[1.0, 1.5])
    bounds = report["results"][0]["bounds"]
    two_sided_mu1 = [b for b in bounds if b["side"] == "two-sided" and b["estimand"] == "Mu1"][0]
    assert two_sided_mu1["point_lower"] == pytest.approx(two_sided_mu1["point_upper"], abs=1e-12)
    wider = [b for b in report["results"][1]["bounds"] if b["side"] == "two-sided" and b["estimand"] == "Mu1"][0]
    assert wider["point_lower"] < wider["point_upper"]


def test_bad_input_raises():
    with pytest.raises(calsens.InputError):
        calsens.analyze_arrays([1.0, 2.0, 3.0], [0, 2, 1], [[1.0], [2.0], [3.0]])
    with pytest.raises(calsens.InputError):
        calsens.analyze(DATA, no_such_option=1)


def test_generate_is_deterministic():
    a = calsens.generate("C3", n=100, p=4, seed=9)
    b = calsens.generate("C3", n=100, p=4, seed=9)
    assert np.array_equal(a["y"], b["y"])
    assert a["x"].shape == (100, 4)
    assert set(np.unique(a["t"])) <= {0.0, 1.0}


def test_primal_and_dual_agree():
    rng = np.random.default_rng(4)
    n = 40
    x = rng.normal(size=(n, 2))
    h = np.column_stack([np.ones(n), x])
    t = (rng.uniform(size=n) < 0.6).astype(float)
    y = x[:, 0] + rng.normal(size=n)
    w = np.exp(-(0.2 + 0.5 * x[:, 0]))
    for up in (True, False):
        value, mult = calsens.primal_bound(y, t, h, w, 1.5, maximize=up)
        assert value == pytest.approx(calsens.dual_bound(y, t, h, w, 1.5, maximize=up), abs=1e-8)
        treated = mult[t > 0.5]
        assert np.all(treated >= 1 / 1.5 - 1e-9) and np.all(treated <= 1.5 + 1e-9)
        assert np.all(np.isnan(mult[t < 0.5]))


def test_sharp_bounds_and_population_oracle():
    lower, upper, se = calsens.sharp_bounds("C1", 1.5)
    assert se == 0.0
    assert upper == pytest.approx(-lower)
    value, mc_se = calsens.population_bound("C1", 1.5, p=4, n_mc=200000, seed=5)
    assert abs(value - upper) < 4 * mc_se


def test_simulate_smoke():
    coverage, replicates, failures = calsens.simulate(
        "C2", n=200, p=6, reps=2, lambdas=[1.5], grid_points=4, truth_n_mc=100000)
    assert failures == 0
    assert len(replicates) == 2 * 2
    assert {row["side"] for row in coverage} == {"lower", "upper", "two-sided"}
    for row in coverage:
        assert 0.0 <= float(row["coverage"]) <= 1.0


def test_verify_subset():
    results = calsens.verify(["duality", "relaxation-monotone"], instances=12, samples=2)
    assert [r["name"] for r in results] == ["duality", "relaxation-monotone"]
    assert all(r["passed"] for r in results)
    assert all(math.isfinite(r["worst"]) for r in results)
