#!/usr/bin/env python3
import sys

import numpy as np
import pytest

from errors import DimensionMismatchError, InconclusiveWitnessError, NonPositiveReferenceError, PreconditionError
from lattice_core import GridSpec, LatticeVector, NodeScheme, ones, sample
from operator_gallery import OperatorHandle, build_laplacian, build_odd_order, build_rank_one_example
from operator_gallery import test_function_fn as fn_vector
from criteria_checkers import (DominationMode, GridKind, Side, TimeGrid, Verdict, WindowVerdict, audit_cesaro_equivalence,
                               check_cesaro_eventual_positivity, check_individual_semigroup_domination,
                               check_max_antimax, check_resolvent_domination_window,
                               check_semigroup_eventual_positivity, check_uniform_semigroup_domination,
                               default_reference, default_trial_set, search_converse_witness)
from criteria_checkers import _sweep_verdict


@pytest.fixture(scope="module")
def bundle():
    return build_rank_one_example(64)


@pytest.fixture(scope="module")
def neumann():
    return build_laplacian("neumann", n=40)


def _bump(grid, center=0.3, width=0.2):
    return sample(grid, lambda x: np.maximum(1.0 - np.abs(x - center) / width, 0.0))


# --- Time grids ---

def test_time_grid_parsing():
    grid = TimeGrid.parse("log:0.01:50:200")
    assert grid.kind == GridKind.LOG
    assert len(grid) == 200
    assert grid.values[0] == pytest.approx(0.01)
    assert grid.values[-1] == pytest.approx(50.0)

    listed = TimeGrid.parse("list:0.5, 1, 2")
    assert listed.kind == GridKind.EXPLICIT
    np.testing.assert_allclose(listed.values, [0.5, 1.0, 2.0])
    np.testing.assert_allclose(TimeGrid.parse(listed.describe()).values, listed.values)

    linear = TimeGrid.parse("linear:1:3:5")
    np.testing.assert_allclose(linear.values, [1.0, 1.5, 2.0, 2.5, 3.0])


@pytest.mark.parametrize("text", ["log:1:0.5:10", "cubic:1:2:3", "list:2,1", "log:1:2", "linear:0:1:4",
                                  "list:"])
def test_time_grid_rejects_bad_text(text):
    with pytest.raises(PreconditionError):
        TimeGrid.parse(text)


# --- Semigroup domination ---

def test_individual_domination_is_eventual_for_rank_one_pair(bundle):
    grid = bundle.space_grid
    f2 = fn_vector(2, grid)
    report = check_individual_semigroup_domination(bundle.A, bundle.B, f2, ones(grid),
                                                   TimeGrid.log(0.01, 50.0, 200))
    assert report.mode == DominationMode.INDIVIDUAL
    assert report.verdict == Verdict.EVENTUAL
    assert report.eventually_dominates
    assert report.earliest_pass is not None and report.earliest_pass > 0.01
    assert report.witness is not None and report.witness.param == pytest.approx(0.01)
    # the limit margin is <phi_B, f_2> = 1/12
    assert report.samples[-1].margin == pytest.approx(1.0 / 12.0, abs=2e-3)
    assert report.shift == pytest.approx(0.0, abs=1e-10)


def test_individual_domination_of_an_operator_by_itself_is_not_strict(bundle):
    grid = bundle.space_grid
    report = check_individual_semigroup_domination(bundle.B, bundle.B, fn_vector(1, grid), ones(grid),
                                                   TimeGrid.log(0.1, 10.0, 20))
    assert report.verdict == Verdict.NONE
    assert report.earliest_pass is None
    assert all(abs(s.margin) < 1e-12 for s in report.samples)


def test_individual_domination_checks_reference(bundle):
    grid = bundle.space_grid
    u = LatticeVector(grid, np.where(grid.nodes > 0.5, 1.0, 0.0))
    with pytest.raises(NonPositiveReferenceError):
        check_individual_semigroup_domination(bundle.A, bundle.B, ones(grid), u, TimeGrid.log(0.1, 1.0, 4))


def test_uniform_domination_witness_through_named_direction(bundle):
    grid = bundle.space_grid
    directions = [(f"f_{n}", fn_vector(n, grid)) for n in (1, 2, 3)]
    report = check_uniform_semigroup_domination(bundle.A, bundle.B, TimeGrid.explicit([1.0]), directions=directions)
    assert report.mode == DominationMode.UNIFORM_ENTRYWISE
    assert report.verdict == Verdict.NONE
    witness = report.witness
    assert witness.direction == "f_2"
    assert grid.nodes[witness.node_index] >= 0.5
    assert witness.lhs - witness.rhs == pytest.approx(-0.043174, abs=2e-3)


def test_uniform_domination_rejects_foreign_directions(bundle):
    other = ones(GridSpec(0.0, 1.0, 10))
    with pytest.raises(DimensionMismatchError):
        check_uniform_semigroup_domination(bundle.A, bundle.B, TimeGrid.explicit([1.0]),
                                           directions=[("other", other)])


def test_uniform_domination_lower_bound_for_dominated_pair(neumann):
    faster = OperatorHandle(name="neumann_minus_one", grid=neumann.grid,
                            matrix=neumann.matrix - np.eye(neumann.n))
    report = check_uniform_semigroup_domination(faster, neumann, TimeGrid.log(0.1, 5.0, 12),
                                                lower_bound_u=ones(neumann.grid),
                                                lower_bound_phi=ones(neumann.grid))
    assert report.verdict == Verdict.ALL
    assert report.lower_bound_c is not None and report.lower_bound_c > 0.0
    assert all(s.lower_bound is not None for s in report.samples)


def test_uniform_pass_implies_individual_pass(neumann):
    faster = OperatorHandle(name="neumann_minus_one", grid=neumann.grid,
                            matrix=neumann.matrix - np.eye(neumann.n))
    time_grid = TimeGrid.log(0.1, 5.0, 12)
    uniform = check_uniform_semigroup_domination(faster, neumann, time_grid)
    assert any(s.passed for s in uniform.samples)
    for f in default_trial_set(neumann.grid)[:5]:
        individual = check_individual_semigroup_domination(faster, neumann, f, ones(neumann.grid), time_grid)
        for u_sample, i_sample in zip(uniform.samples, individual.samples):
            assert u_sample.param == i_sample.param
            if u_sample.passed:
                assert i_sample.passed


def test_uniform_domination_with_settled_margin():
    # margins settle to a plateau that jitters at rounding level
    neumann = build_laplacian("neumann", (0.0, 1.0), 202)
    nonlocal_op = build_laplacian("nonlocal_symmetric", n=202)
    time_grid = TimeGrid.log(0.01, 50.0, 200)
    report = check_uniform_semigroup_domination(nonlocal_op, neumann, time_grid)
    assert report.verdict == Verdict.EVENTUAL
    assert report.eventually_dominates
    assert report.earliest_pass is not None and report.earliest_pass > 0.01
    assert report.witness is not None and report.witness.param == pytest.approx(0.01)
    assert report.samples[-1].margin > 0.0


def test_sweep_verdict_tolerates_rounding_jitter():
    params = list(range(12))
    passes = [False, False] + [True] * 10
    plateau = [-1.0, -0.5, 0.1, 0.2] + [0.3 + (1e-15 if i % 2 else -1e-15) for i in range(8)]
    verdict, earliest = _sweep_verdict(params, plateau, passes)
    assert verdict == Verdict.EVENTUAL
    assert earliest == 2.0

    sagging = [-1.0, -0.5, 0.1, 0.2] + [0.3 - 1e-3 * i for i in range(8)]
    verdict, earliest = _sweep_verdict(params, sagging, passes)
    assert verdict == Verdict.NONE
    assert earliest is None


def test_semigroup_positivity_of_heat_flow(neumann):
    report = check_semigroup_eventual_positivity(neumann, _bump(neumann.grid), ones(neumann.grid),
                                                 TimeGrid.log(0.1, 10.0, 20))
    assert report.mode == DominationMode.POSITIVITY
    assert report.verdict == Verdict.ALL
    assert report.earliest_pass == pytest.approx(0.1)


def test_semigroup_positivity_fails_for_rotation():
    grid = GridSpec(0.0, 1.0, 2)
    rotation = OperatorHandle(name="rotation", grid=grid, matrix=np.array([[0.0, 1.0], [-1.0, 0.0]]))
    report = check_semigroup_eventual_positivity(rotation, LatticeVector(grid, [1.0, 0.0]), ones(grid),
                                                 TimeGrid.linear(0.1, 10.0, 30))
    assert report.verdict == Verdict.NONE
    assert report.earliest_pass is None
    assert report.witnesses
    with pytest.raises(PreconditionError):
        check_semigroup_eventual_positivity(rotation, LatticeVector(grid, [1.0, -1.0]), ones(grid),
                                            TimeGrid.linear(0.1, 1.0, 3))


# --- Resolvent windows ---

def test_resolvent_window_for_rank_one_pair(bundle):
    grid = bundle.space_grid
    report = check_resolvent_domination_window(bundle.A, bundle.B, fn_vector(2, grid), ones(grid), 0.0,
                                               side="right")
    assert report.kind == "resolvent_domination"
    assert report.verdict == WindowVerdict.OBSERVED
    assert report.window_holds
    assert 0.0 < report.delta_found < 0.5
    assert report.witness is not None and report.witness.param == pytest.approx(0.5)


def test_resolvent_window_needs_spectral_bound(bundle):
    grid = bundle.space_grid
    with pytest.raises(PreconditionError):
        check_resolvent_domination_window(bundle.A, bundle.B, ones(grid), ones(grid), 0.3)
    with pytest.raises(PreconditionError):
        check_resolvent_domination_window(bundle.A, bundle.B, ones(grid), ones(grid), 0.0, side="up")


@pytest.mark.parametrize("side", ["right", "left"])
def test_neumann_maximum_principles_with_constants(neumann, side):
    one = ones(neumann.grid)
    report = check_max_antimax(neumann, one, one, 0.0, side=side)
    assert report.kind == "max_antimax"
    assert report.side == Side(side)
    assert report.verdict == WindowVerdict.ALL
    for s in report.samples:
        assert s.margin == pytest.approx(1.0, abs=1e-4)


def test_neumann_maximum_principle_limit_is_projection(neumann):
    f = _bump(neumann.grid)
    report = check_max_antimax(neumann, f, ones(neumann.grid), 0.0, side="right")
    mean = np.sum(neumann.grid.weights * f.values) / np.sum(neumann.grid.weights)
    assert report.verdict == WindowVerdict.ALL
    assert report.samples[-1].margin == pytest.approx(mean, abs=1e-4)


@pytest.mark.parametrize("side", ["right", "left"])
def test_odd_order_principles_hold_for_shifted_cosine(side):
    op = build_odd_order(1, 64)
    f = sample(op.grid, lambda x: 1.0 + np.cos(2.0 * np.pi * x))
    report = check_max_antimax(op, f, ones(op.grid), 0.0, side=side)
    assert report.window_holds
    assert report.samples[-1].margin == pytest.approx(1.0, abs=1e-2)


def test_max_antimax_needs_eigenvalue(neumann):
    one = ones(neumann.grid)
    with pytest.raises(PreconditionError):
        check_max_antimax(neumann, one, one, 0.5)


# --- Converse witness ---

def test_converse_witness_between_odd_orders():
    first, third = build_odd_order(0, 32), build_odd_order(1, 32)
    witness = search_converse_witness(first, third, 0.0, trial_count=50)
    assert witness.violation in ("negativity", "domination")
    assert witness.lam > 0.0
    assert witness.value < 0.0
    assert witness.f.is_nonnegative()


def test_converse_witness_preconditions(neumann):
    with pytest.raises(PreconditionError):
        search_converse_witness(neumann, neumann, 0.0)
    with pytest.raises(InconclusiveWitnessError):
        search_converse_witness(build_odd_order(0, 32), build_odd_order(1, 32), 0.0, trial_count=0)
    with pytest.raises(DimensionMismatchError):
        search_converse_witness(build_odd_order(0, 32), build_odd_order(1, 64), 0.0)


# --- Cesaro means ---

def test_cesaro_positivity_for_neumann(neumann):
    f = _bump(neumann.grid, 0.8, 0.1)
    report = check_cesaro_eventual_positivity(neumann, f, ones(neumann.grid), TimeGrid.log(1.0, 400.0, 12))
    assert report.mode == DominationMode.CESARO
    assert report.verdict == Verdict.ALL
    mean = np.sum(neumann.grid.weights * f.values) / np.sum(neumann.grid.weights)
    assert report.samples[-1].margin == pytest.approx(mean, abs=1e-2)


def test_cesaro_equivalence_audit_for_neumann():
    op = build_laplacian("neumann", n=30)
    audit = audit_cesaro_equivalence(op)
    assert audit.consistent
    assert all(audit.verdicts.values())
    assert set(audit.per_trial) == {"cesaro_positivity", "projection_positivity", "maximum_principle",
                                    "anti_maximum_principle"}
    assert all(len(flags) == 20 for flags in audit.per_trial.values())
    assert audit.to_dict()["consistent"] is True


def test_default_trial_set():
    grid = GridSpec(-1.0, 1.0, 50, NodeScheme.CELL_CENTERED)
    trials = default_trial_set(grid)
    assert len(trials) == 20
    assert all(t.is_nonnegative() and np.any(t.values > 0.0) for t in trials)
    again = default_trial_set(grid)
    for a, b in zip(trials, again):
        np.testing.assert_array_equal(a.values, b.values)


def test_default_reference():
    dirichlet = build_laplacian("dirichlet", n=30)
    u = default_reference(dirichlet)
    assert np.all(u.values > 0.0)
    np.testing.assert_array_equal(default_reference(build_laplacian("neumann", n=30)).values, 1.0)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__]))
