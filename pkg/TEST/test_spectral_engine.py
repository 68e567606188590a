#!/usr/bin/env python3
import math
import sys

import numpy as np
import pytest

from errors import AmbiguousClusterError, NonErgodicError, PreconditionError
from lattice_core import GridSpec, NodeScheme
from operator_gallery import (OperatorHandle, build_laplacian, build_odd_order, build_rank_one_example,
                              solve_nonlocal_symmetric_mu, solve_transcendental_mu)
from spectral_engine import (analyze, is_eigenvalue, mean_ergodic_projection, nearest_eigenvalue,
                             principal_eigenvector, spectral_bound, spectral_projection)


def _handle(matrix, name="m"):
    matrix = np.asarray(matrix, dtype=float)
    return OperatorHandle(name=name, grid=GridSpec(0.0, 1.0, matrix.shape[0]), matrix=matrix)


def test_analyze_is_cached_per_handle():
    op = build_laplacian("neumann", n=40)
    assert analyze(op) is analyze(op)
    assert analyze(build_laplacian("neumann", n=40)) is not analyze(op)


def test_eigenvalues_sorted_by_real_part():
    op = build_laplacian("dirichlet", n=60)
    values = analyze(op).eigenvalues
    assert np.all(np.diff(values.real) <= 1e-12)
    assert spectral_bound(op) == pytest.approx(-math.pi ** 2, abs=5e-3)


def test_neumann_has_simple_dominant_zero():
    op = build_laplacian("neumann", n=60)
    data = analyze(op)
    assert abs(data.spectral_bound) < 1e-8
    assert data.dominant
    assert data.peripheral_multiplicity == 1
    assert data.gap == pytest.approx(math.pi ** 2, rel=1e-2)


def test_antisymmetric_double_top_eigenvalue():
    op = build_laplacian("antisymmetric", n=400)
    values = analyze(op).eigenvalues.real
    np.testing.assert_allclose(values[:2], -math.pi ** 2 / 4.0, atol=1e-3)
    np.testing.assert_allclose(values[2:4], -9.0 * math.pi ** 2 / 4.0, atol=5e-3)
    data = analyze(op)
    assert data.dominant and data.peripheral_multiplicity == 2


@pytest.mark.parametrize("beta", [-0.1, -0.25, -0.4])
def test_nonlocal_beta_matches_transcendental_root(beta):
    op = build_laplacian("nonlocal_beta", n=400, beta=beta)
    assert abs(spectral_bound(op) + solve_transcendental_mu(beta) ** 2) < 5e-3


def test_nonlocal_symmetric_bound():
    op = build_laplacian("nonlocal_symmetric", n=200)
    assert spectral_bound(op) == pytest.approx(-solve_nonlocal_symmetric_mu() ** 2, abs=5e-3)


def test_odd_order_spectrum_is_imaginary():
    op = build_odd_order(1, 32)
    values = analyze(op).eigenvalues
    assert np.max(np.abs(values.real)) < 1e-6 * op.norm_max
    assert is_eigenvalue(op, 0.0)
    dist, nearest = nearest_eigenvalue(op, 0.0)
    assert dist < 1e-6 and abs(nearest) < 1e-6


def test_projection_of_neumann_is_averaging():
    op = build_laplacian("neumann", n=50)
    result = spectral_projection(op, 0.0)
    assert result.rank == 1
    assert result.pole_order_estimate == 1
    w = op.grid.weights
    np.testing.assert_allclose(result.P, np.outer(np.ones(op.n), w) / np.sum(w), atol=1e-10)


def test_projection_of_rank_one_generator():
    bundle = build_rank_one_example(64)
    result = spectral_projection(bundle.B, 0.0)
    assert result.method == "biorthogonal"
    np.testing.assert_allclose(result.P, bundle.PB.matrix, atol=1e-10)


def test_defective_cluster_uses_schur_projection():
    jordan = _handle([[0.0, 1.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, -1.0]], "jordan")
    result = spectral_projection(jordan, 0.0)
    assert result.pole_order_estimate == 2
    assert result.method == "schur"
    assert result.rank == 2
    np.testing.assert_allclose(result.P, np.diag([1.0, 1.0, 0.0]), atol=1e-10)
    with pytest.raises(NonErgodicError):
        mean_ergodic_projection(jordan)


def test_projection_preconditions():
    op = build_laplacian("neumann", n=30)
    with pytest.raises(PreconditionError):
        spectral_projection(op, 0.5)
    close = _handle(np.diag([0.0, 5e-6, -1.0]), "close")
    with pytest.raises(AmbiguousClusterError):
        spectral_projection(close, 0.0, cluster_tol=1e-6)


def test_mean_ergodic_projection_needs_rescaling():
    op = build_laplacian("nonlocal_symmetric", n=60)
    with pytest.raises(PreconditionError):
        mean_ergodic_projection(op)
    scaled = op.shifted(spectral_bound(op))
    result = mean_ergodic_projection(scaled)
    assert result.rank == 1
    assert np.all(result.P > 0.0)


def test_rotation_is_not_ergodic_at_zero_only():
    rotation = _handle([[0.0, 1.0], [-1.0, 0.0]], "rotation")
    with pytest.raises(NonErgodicError):
        mean_ergodic_projection(rotation)


def test_principal_eigenvector_of_dirichlet():
    op = build_laplacian("dirichlet", n=50)
    vec = principal_eigenvector(op)
    assert np.max(vec) == pytest.approx(1.0)
    assert np.all(vec > 0.0)
    np.testing.assert_allclose(vec, np.sin(np.pi * op.grid.nodes) / np.max(np.sin(np.pi * op.grid.nodes)),
                               atol=1e-3)


def test_cell_centered_antisymmetric_projection_is_negative_near_left_end():
    op = build_laplacian("antisymmetric", (-1.0, 1.0), 200, node_scheme=NodeScheme.CELL_CENTERED)
    result = spectral_projection(op, spectral_bound(op))
    assert result.rank == 2
    indicator = (op.grid.nodes > 0.0).astype(float)
    image = result.P @ indicator
    assert np.min(image[:10]) < -1e-4


if __name__ == "__main__":
    sys.exit(pytest.main([__file__]))
