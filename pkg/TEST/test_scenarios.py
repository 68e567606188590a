#!/usr/bin/env python3
import json
import sys

import pytest

from errors import PreconditionError
from scenarios import SCENARIOS, ScenarioResult, run_scenario


@pytest.fixture(scope="module")
def rank_one():
    return run_scenario("rank-one", n_grid=64)


def test_registry_names():
    assert set(SCENARIOS) == {"rank-one", "antisym-vs-neumann", "nonlocal-beta", "sandwich", "odd-order", "cesaro"}


def test_unknown_scenario_is_rejected():
    with pytest.raises(PreconditionError):
        run_scenario("heat-death")


def test_rank_one_scenario_passes(rank_one):
    failed = [e.label for e in rank_one.sub_reports if not e.matched]
    assert rank_one.passed, failed
    labels = [e.label for e in rank_one.sub_reports]
    assert "individual domination for f_2" in labels
    assert "uniform domination at t in {0.5, 1, 2}" in labels


def test_rank_one_scenario_document(rank_one):
    doc = rank_one.to_dict()
    assert doc["name"] == "rank-one"
    assert doc["inputs"] == {"n_grid": 64}
    assert doc["pass"] is True
    kinds = {entry["report"]["kind"] for entry in doc["sub_reports"]}
    assert {"scalar", "domination"} <= kinds
    json.dumps(doc)


def test_rank_one_scenario_needs_resolution():
    with pytest.raises(PreconditionError):
        run_scenario("rank_one", n_grid=32)


def test_odd_order_scenario_finds_converse_witness():
    result = run_scenario("odd-order", m=0, l=1, n_grid=32, seed=42)
    failed = [e.label for e in result.sub_reports if not e.matched]
    assert result.passed, failed
    witness = [e for e in result.sub_reports if e.label == "converse witness"]
    assert len(witness) == 1 and witness[0].matched
    with pytest.raises(PreconditionError):
        run_scenario("odd-order", m=1, l=1)


def test_cesaro_scenario_on_a_coarse_grid():
    result = run_scenario("cesaro", n_grid=40)
    failed = [e.label for e in result.sub_reports if not e.matched]
    assert result.passed, failed
    audits = [e.report for e in result.sub_reports if e.label.startswith("equivalence audit")]
    assert len(audits) == 3
    assert all(audit.consistent for audit in audits)


def _entry(result, label):
    matches = [e for e in result.sub_reports if e.label == label]
    assert len(matches) == 1, label
    return matches[0]


def _assert_passed(result):
    failed = [e.label for e in result.sub_reports if not e.matched]
    assert result.passed, failed


def test_antisym_vs_neumann_scenario():
    result = run_scenario("antisym-vs-neumann")
    _assert_passed(result)
    for k in range(2):
        assert abs(_entry(result, f"Delta^AS eigenvalue {k}").report.value + 2.467401) < 1e-3
    assert _entry(result, "min of P 1_(0,1) over the leftmost 5% of nodes").report.value < -1e-4
    uniform = _entry(result, "Delta^N uniformly eventually dominates Delta^AS").report
    assert uniform.eventually_dominates
    assert uniform.lower_bound_c > 0.0


@pytest.mark.parametrize("beta1,beta2", [(-0.4, -0.25), (-0.25, -0.1), (-0.4, -0.1)])
def test_nonlocal_beta_scenario(beta1, beta2):
    result = run_scenario("nonlocal-beta", beta1=beta1, beta2=beta2)
    _assert_passed(result)
    assert _entry(result, "s(Delta_beta1) < s(Delta_beta2) < 0 (matrix)").matched
    uniform = _entry(result, "Delta_beta2 uniformly eventually dominates Delta_beta1").report
    assert uniform.eventually_dominates


def test_sandwich_scenario():
    result = run_scenario("sandwich")
    _assert_passed(result)
    assert _entry(result, "s(Delta^N) = 0").matched
    assert _entry(result, "s(Delta^D) < s(Delta^nl) < 0").matched
    assert _entry(result, "Delta^nl <= Delta^N fails at t=0.01").matched
    dominations = [e.report for e in result.sub_reports if " eventually dominates " in e.label]
    assert len(dominations) == 2
    assert all(r.earliest_pass is not None for r in dominations)


def test_odd_order_scenario_for_first_and_third_orders():
    result = run_scenario("odd-order", m=1, l=2, n_grid=32, seed=42)
    _assert_passed(result)
    assert _entry(result, "converse witness").matched


def test_nonlocal_beta_parameters_are_checked():
    with pytest.raises(PreconditionError):
        run_scenario("nonlocal-beta", beta1=-0.1, beta2=-0.4)


def test_failed_expectation_fails_the_scenario():
    result = ScenarioResult("manual", {})
    result.close_to("close", 1.0, 1.0, 1e-12)
    assert result.passed
    result.close_to("far", 2.0, 1.0, 1e-3)
    assert not result.passed
    assert result.to_dict()["sub_reports"][1]["report"]["pass"] is False


if __name__ == "__main__":
    sys.exit(pytest.main([__file__]))
