#!/usr/bin/env python3
import math
import sys

import numpy as np
import pytest

from errors import EvolutionOverflowError, PreconditionError, SingularResolventError
from lattice_core import GridSpec, LatticeVector, dominates_vec, gauge, ones, sample, transfer, transfer_matrix
from operator_gallery import OperatorHandle, build_laplacian, build_rank_one_example
from evolution_engine import (EvolutionKind, cesaro, expm, integrate_semigroup, laplace_transform_check,
                              projection_cesaro, projection_resolvent, projection_semigroup, rank_one_resolvent_gap,
                              rank_one_semigroup_gap, resolvent, resolvent_limit_errors, resolvent_solve, sample_map)
from spectral_engine import analyze, spectral_bound, spectral_projection


@pytest.fixture(scope="module")
def bundle():
    return build_rank_one_example(64)


@pytest.fixture(scope="module")
def neumann():
    return build_laplacian("neumann", n=40)


def _zero(n=6):
    return OperatorHandle(name="zero", grid=GridSpec(0.0, 1.0, n), matrix=np.zeros((n, n)))


def test_expm_at_zero_is_identity(neumann):
    sample = expm(neumann, 0.0)
    assert sample.kind == EvolutionKind.SEMIGROUP
    np.testing.assert_array_equal(sample.matrix, np.eye(neumann.n))
    with pytest.raises(PreconditionError):
        expm(neumann, -1.0)


@pytest.mark.parametrize("t", [0.1, 1.0, 10.0])
def test_expm_matches_projection_closed_forms(bundle, t):
    np.testing.assert_allclose(expm(bundle.B, t).matrix, projection_semigroup(bundle.PB.matrix, 0.0, -1.0, t),
                               atol=1e-10)
    np.testing.assert_allclose(expm(bundle.A, t).matrix, projection_semigroup(bundle.PA.matrix, -0.5, -1.5, t),
                               atol=1e-10)


def test_semigroup_law(neumann):
    rng = np.random.default_rng(7)
    for s, t in rng.uniform(0.0, 5.0, size=(4, 2)):
        combined = expm(neumann, s + t).matrix
        product = expm(neumann, s).matrix @ expm(neumann, t).matrix
        assert np.max(np.abs(combined - product)) < 1e-9 * np.max(np.abs(combined))


def test_neumann_semigroup_is_positive(neumann):
    for t in (1e-3, 0.1, 1.0, 10.0):
        assert np.min(expm(neumann, t).matrix) >= -1e-12


def test_expm_overflow_reports_norm():
    op = OperatorHandle(name="big", grid=GridSpec(0.0, 1.0, 2), matrix=np.diag([1.0, 1.0]))
    with pytest.raises(EvolutionOverflowError) as info:
        expm(op, 1e4)
    assert info.value.norm == pytest.approx(1e4)


def test_resolvent_of_zero_and_projection(bundle):
    np.testing.assert_allclose(resolvent(_zero(), 2.0).matrix, np.eye(6) / 2.0)
    np.testing.assert_allclose(resolvent(bundle.PB, 2.0).matrix, (bundle.PB.matrix + np.eye(64)) / 2.0, atol=1e-12)
    np.testing.assert_allclose(projection_resolvent(bundle.PB.matrix, 2.0), (bundle.PB.matrix + np.eye(64)) / 2.0)


def test_resolvent_near_eigenvalue_is_rejected(neumann):
    with pytest.raises(SingularResolventError) as info:
        resolvent(neumann, 1e-13)
    assert abs(info.value.nearest_eigenvalue) < 1e-8


def test_resolvent_identity(neumann):
    rng = np.random.default_rng(3)
    for lam, mu in rng.uniform(0.2, 5.0, size=(3, 2)):
        r_lam, r_mu = resolvent(neumann, lam).matrix, resolvent(neumann, mu).matrix
        residual = np.max(np.abs(r_lam - r_mu - (mu - lam) * r_lam @ r_mu))
        assert residual < 1e-9 * np.max(np.abs(r_lam))


def test_resolvent_solve_accepts_vectors_and_blocks(neumann):
    f = ones(neumann.grid)
    solved = resolvent_solve(neumann, 2.0, f)
    np.testing.assert_allclose(solved.values, 0.5, atol=1e-9)
    block = resolvent_solve(neumann, 2.0, np.eye(neumann.n)[:, :3])
    np.testing.assert_allclose(block, resolvent(neumann, 2.0).matrix[:, :3], atol=1e-12)


@pytest.mark.parametrize("lam,n", [(1.0, 1), (1.0, 2), (0.25, 3)])
def test_rank_one_resolvent_gap(bundle, lam, n):
    grid = bundle.space_grid
    f = np.maximum(1.0 - n * grid.nodes, 0.0)
    right = grid.nearest_node(1.0)
    value = resolvent_solve(bundle.B, lam, f)[right] - resolvent_solve(bundle.A, lam, f)[right]
    assert value == pytest.approx(rank_one_resolvent_gap(lam, n), abs=20.0 * grid.spacing ** 2)
    assert rank_one_resolvent_gap(1.0, 1) == pytest.approx(1.0 / 30.0)


def test_rank_one_semigroup_gap_signs():
    assert rank_one_semigroup_gap(1.0, 1) == pytest.approx(0.019006, abs=1e-5)
    assert rank_one_semigroup_gap(1.0, 2) == pytest.approx(-0.043174, abs=1e-5)
    assert rank_one_semigroup_gap(2.0, 3) < 0.0


def test_resolvent_limit_converges_to_projection(neumann):
    projection = spectral_projection(neumann, 0.0).P
    errors = resolvent_limit_errors(neumann, 0.0, projection, depth=16)
    assert errors[-1][0] == 2.0 ** -16
    assert errors[-1][1] < 1e-6


def _simple_dominant_gallery():
    rank_one = build_rank_one_example(32)
    return [
        build_laplacian("neumann", n=12),
        build_laplacian("dirichlet", n=12),
        build_laplacian("periodic", n=12),
        build_laplacian("nonlocal_beta", n=12, beta=-0.25),
        build_laplacian("nonlocal_symmetric", n=12),
        rank_one.A,
        rank_one.B,
    ]


@pytest.mark.parametrize("op", _simple_dominant_gallery(), ids=lambda op: op.name)
def test_resolvent_limit_for_simple_dominant_eigenvalues(op):
    data = analyze(op)
    assert data.dominant and data.peripheral_multiplicity == 1
    bound = spectral_bound(op)
    projection = spectral_projection(op, bound).P
    errors = resolvent_limit_errors(op, bound, projection, depth=20)
    assert errors[-1][0] == 2.0 ** -20
    assert errors[-1][1] < 1e-6


@pytest.mark.parametrize("lambda0", [-1.0, -5.0])
def test_resolvent_limit_vanishes_off_the_spectrum(neumann, lambda0):
    errors = resolvent_limit_errors(neumann, lambda0, np.zeros((neumann.n, neumann.n)), depth=20)
    values = [e for _, e in errors]
    assert all(b < a for a, b in zip(values[:-1], values[1:]))
    assert values[-1] < 1e-5


def test_resolvent_keeps_strong_positivity_of_the_projection(neumann):
    f = sample(neumann.grid, lambda x: np.maximum(1.0 - np.abs(x - 0.3) / 0.2, 0.0))
    u = ones(neumann.grid)
    c = gauge(LatticeVector(neumann.grid, spectral_projection(neumann, 0.0).P @ f.values), u).lower
    assert c > 0.0
    lowers = [gauge(resolvent_solve(neumann, 2.0 ** -j, f) * 2.0 ** -j, u).lower for j in range(1, 21)]
    for eps in (0.25 * c, 0.5 * c, 0.9 * c):
        assert all(lower >= eps for lower in lowers[-5:])
    assert lowers[-1] == pytest.approx(c, rel=1e-4)


@pytest.mark.parametrize("t", [0.01, 0.1, 1.0])
def test_dirichlet_semigroup_is_dominated_after_zero_extension(t):
    dirichlet = build_laplacian("dirichlet", (0.0, 1.0), 30)
    neumann = build_laplacian("neumann", (0.0, 1.0), 32)
    inner = transfer_matrix(expm(dirichlet, t).matrix, dirichlet.grid, neumann.grid)
    outer = expm(neumann, t).matrix
    assert np.all(outer - np.abs(inner) >= -1e-12)

    f = sample(dirichlet.grid, lambda x: np.sin(3.0 * np.pi * x))
    evolved = transfer(LatticeVector(dirichlet.grid, expm(dirichlet, t).apply(f)), neumann.grid)
    bound = LatticeVector(neumann.grid, outer @ transfer(f.abs(), neumann.grid).values)
    assert dominates_vec(bound, evolved, eps=1e-12)


def test_cesaro_of_zero_matrix_is_identity():
    sample = cesaro(_zero(), 3.0)
    assert sample.method == "gauss_legendre"
    np.testing.assert_allclose(sample.matrix, np.eye(6), atol=1e-12)


@pytest.mark.parametrize("r", [0.5, 10.0, 100.0])
def test_cesaro_matches_projection_closed_form(bundle, r):
    sample = cesaro(bundle.B, r)
    expected = projection_cesaro(bundle.PB.matrix, -1.0, r)
    np.testing.assert_allclose(sample.matrix, expected, atol=1e-8)
    if r >= 10.0:
        assert np.max(np.abs(sample.matrix - bundle.PB.matrix)) <= 1.0 / r


def test_cesaro_exact_identity_for_invertible_generator(bundle):
    sample = cesaro(bundle.A, 4.0)
    assert sample.method == "exact_identity"
    expected = (bundle.PA.matrix * (math.exp(-2.0) - 1.0) / -0.5
                + (np.eye(64) - bundle.PA.matrix) * (math.exp(-6.0) - 1.0) / -1.5) / 4.0
    np.testing.assert_allclose(sample.matrix, expected, atol=1e-10)


def test_cesaro_preconditions(neumann):
    with pytest.raises(PreconditionError):
        cesaro(neumann, 0.0)
    with pytest.raises(PreconditionError):
        cesaro(neumann, 1.0, quad_points=4)


def test_quadrature_of_stiff_generator(neumann):
    horizon = 2.5
    integral = integrate_semigroup(neumann.matrix, horizon)
    projection = spectral_projection(neumann, 0.0).P
    # int_0^T e^{sA} ds = T P + A^+ (e^{TA} - I) on the complement of the kernel
    complement = np.eye(neumann.n) - projection
    shifted = neumann.matrix - projection
    expected = horizon * projection + np.linalg.solve(shifted, (expm(neumann, horizon).matrix - np.eye(neumann.n))
                                                      @ complement)
    np.testing.assert_allclose(integral, expected, atol=1e-8)


def test_laplace_transform_cross_check(bundle, neumann):
    assert laplace_transform_check(_zero(), 1.0) < 1e-8
    assert laplace_transform_check(neumann, 1.0) < 1e-6
    assert laplace_transform_check(bundle.B, 0.5) < 1e-6
    with pytest.raises(PreconditionError):
        laplace_transform_check(neumann, spectral_bound(neumann) + 0.05)


def test_sample_map_keeps_order():
    assert sample_map(lambda x: x * x, range(10)) == [x * x for x in range(10)]


if __name__ == "__main__":
    sys.exit(pytest.main([__file__]))
