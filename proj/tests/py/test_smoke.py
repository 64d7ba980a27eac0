"""Python smoke tests for the bound engine surface."""

import json
import math
import random

import pytest

import gformula


def write_null_dgp(path, n=300, K=2, seed=5):
    rng = random.Random(seed)
    lines = ["id,t0,L,A,Y"]
    for i in range(1, n + 1):
        lag_l = 0
        for k in range(K + 1):
            p_l = 0.4 if k == 0 else 1.0 / (1.0 + math.exp(0.6 - 1.2 * lag_l))
            L = 1 if rng.random() < p_l else 0
            A = 1 if rng.random() < 0.5 else 0
            h = 1.0 / (1.0 + math.exp(2.0 - 0.8 * L))
            event = rng.random() < h
            lines.append(f"{i},{k},{L},{A},{1 if event else 0}")
            if event:
                break
            lag_l = L
    path.write_text("\n".join(lines) + "\n")


def base_config(data_path, K=2):
    return {
        "data": {"path": str(data_path), "id": "id", "time": "t0", "outcome": "Y"},
        "outcome_kind": "survival",
        "time_points": K + 1,
        "covariates": [
            {"name": "L", "covtype": "binary", "formula": "L ~ lag1_L + t0"},
            {"name": "A", "covtype": "binary", "formula": "A ~ lag1_A + L + t0"},
        ],
        "histories": [{"kind": "lagged", "variables": ["L", "A"]}],
        "ymodel": "Y ~ A + L + t0",
        "interventions": [
            {
                "label": "Never treat",
                "rules": [{"variable": "A", "rule": "static", "values": [0] * (K + 1)}],
            },
            {
                "label": "Always treat",
                "rules": [{"variable": "A", "rule": "static", "values": [1] * (K + 1)}],
            },
        ],
        "nsimul": 500,
        "seed": 2718,
        "workers": 1,
    }


def test_formula_normalization():
    assert gformula.normalize_formula("Y ~ A + A") == "Y ~ A"
    assert gformula.normalize_formula("Y~A+ pow(t0,2)") == "Y ~ A + pow(t0, 2)"
    with pytest.raises(gformula.GFormulaError):
        gformula.normalize_formula("Y ~ huh(x)")


def test_rcs_basis_is_zero_below_the_first_knot():
    assert gformula.rcs_basis(-5.0, [-1.0, 0.0, 1.0]) == [0.0]
    inside = gformula.rcs_basis(0.5, [-1.0, 0.0, 1.0])
    assert len(inside) == 1 and inside[0] > 0.0


def test_product_limit_hand_fixture(tmp_path):
    csv = tmp_path / "pl.csv"
    csv.write_text(
        "id,t0,Y\n1,0,1\n2,0,0\n2,1,1\n3,0,0\n3,1,0\n4,0,0\n4,1,0\n"
    )
    data = gformula.PanelData.from_csv(str(csv))
    assert data.n_subjects == 4
    assert data.max_time == 1
    assert abs(gformula.product_limit_risk(data, 1) - 0.5) < 1e-12


def test_fit_binomial_closed_form():
    x, y = [], []
    for events, nonevents, xv in ((30, 70, 1.0), (10, 90, 0.0)):
        for i in range(events + nonevents):
            x.append([1.0, xv])
            y.append(1.0 if i < events else 0.0)
    fit = gformula.fit_binomial(x, y, "logit")
    assert fit["converged"]
    assert abs(fit["coefficients"][0] - math.log(10 / 90)) < 1e-6
    assert abs(fit["coefficients"][1] - math.log((30 / 70) / (10 / 90))) < 1e-6


def test_full_run_and_determinism(tmp_path):
    data = tmp_path / "d.csv"
    write_null_dgp(data)
    cfg = base_config(data)
    res = gformula.run_config(cfg, output_dir=str(tmp_path / "out"))
    assert [i["label"] for i in res["interventions"]] == [
        "Natural course",
        "Never treat",
        "Always treat",
    ]
    est = res["interventions"][0]["estimates"]
    assert est["risk_ratio"][-1] == 1.0
    assert est["risk_difference"][-1] == 0.0
    for itv in res["interventions"]:
        risks = itv["estimates"]["risk"]
        assert all(0.0 <= r <= 1.0 for r in risks)
        assert risks == sorted(risks)  # risk is monotone in t
    assert (tmp_path / "out" / "results.txt").exists()
    assert (tmp_path / "out" / "results.json").exists()
    assert (tmp_path / "out" / "natural_course_plotdata.csv").exists()
    with open(tmp_path / "out" / "results.json") as f:
        on_disk = json.load(f)
    assert on_disk["interventions"][1]["estimates"] == res["interventions"][1]["estimates"]

    again = gformula.run_config(cfg)
    assert again == res


def test_validate_reports_findings():
    cfg = base_config("/nonexistent.csv")
    cfg["ymodel"] = "Y ~ A + lag5_missing"
    findings = gformula.validate(cfg)
    assert any(f["level"] == "error" and "lag5_missing" in f["message"] for f in findings)
    cfg = base_config("/nonexistent.csv")
    cfg["nsimul"] = 100
    findings = gformula.validate(cfg)
    assert any(f["level"] == "warning" and f["path"] == "nsimul" for f in findings)
