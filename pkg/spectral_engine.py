"""
Spectral Engine - dense eigen-analysis of gallery operators.

Computes full eigendecompositions (cached per operator handle), the spectral
bound, the dominant-eigenvalue test, spectral projections for isolated
eigenvalue clusters and the mean ergodic projection. The abstract
"pole of the resolvent" hypothesis is replaced by the Jordan structure of the
finite matrix, estimated by rank tests; every matrix trivially satisfies it.
"""
import logging
import threading
import weakref
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.linalg

from errors import (AmbiguousClusterError, EigensolverError, InconclusiveRankTestError, NonErgodicError,
                    PreconditionError)
from operator_gallery import OperatorHandle

logger = logging.getLogger("evdom.spectral_engine")

CONJUGATE_TOL = 1e-8
RANK_TOL = 1e-8
IDEMPOTENCE_TOL = 1e-8
CLUSTER_REL_TOL = 1e-6
AMBIGUITY_FACTOR = 10.0

_cache = weakref.WeakKeyDictionary()
_cache_lock = threading.Lock()


@dataclass(frozen=True, eq=False)
class SpectralData:
    """Eigenvalues sorted by real part descending, then imaginary part ascending."""
    eigenvalues: np.ndarray
    right_eigenvectors: np.ndarray
    left_eigenvectors: np.ndarray
    spectral_bound: float
    dominant: bool
    gap: float
    peripheral_multiplicity: int
    symmetric_path: bool

    def top(self, k: int) -> np.ndarray:
        return self.eigenvalues[:k]


@dataclass(frozen=True, eq=False)
class ProjectionData:
    lambda0: float
    P: np.ndarray
    algebraic_multiplicity: int
    pole_order_estimate: int
    rank: int
    method: str


def eigen_tol(op: OperatorHandle, abs_tol: float) -> float:
    """abs_tol, floored at what a backward-stable eigensolver can resolve for op."""
    return max(abs_tol, 64.0 * np.finfo(float).eps * op.norm_max)


def default_cluster_tol(op: OperatorHandle) -> float:
    return CLUSTER_REL_TOL * max(1.0, op.norm_max)


def _symmetric_decomposition(op: OperatorHandle):
    sqrt_w = np.sqrt(op.grid.weights)
    sym = (sqrt_w[:, None] * op.matrix) / sqrt_w[None, :]
    sym = 0.5 * (sym + sym.T)
    values, q = scipy.linalg.eigh(sym)
    right = q / sqrt_w[:, None]
    left = right * op.grid.weights[:, None]
    return values.astype(complex), right.astype(complex), left.astype(complex)


def _general_decomposition(op: OperatorHandle):
    values, vl, vr = scipy.linalg.eig(op.matrix, left=True, right=True)
    return values, vr, vl


def _check_conjugate_pairs(values: np.ndarray, scale: float):
    tol = CONJUGATE_TOL * scale
    for value in values[np.abs(values.imag) > tol]:
        if np.min(np.abs(values - np.conj(value))) > tol:
            raise EigensolverError(f"Eigenvalue {value} of a real matrix has no conjugate partner")


def analyze(op: OperatorHandle) -> SpectralData:
    """
    Full eigendecomposition of op, cached per handle.

    The weighted-symmetric path (eigh on W^(1/2) M W^(-1/2)) is used when the
    handle carries the symmetry flag; everything else goes through the general
    eigensolver with left and right eigenvectors.
    """
    with _cache_lock:
        cached = _cache.get(op)
    if cached is not None:
        return cached

    try:
        if op.symmetric_in_weighted_inner_product:
            values, right, left = _symmetric_decomposition(op)
        else:
            values, right, left = _general_decomposition(op)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise EigensolverError(f"Eigensolver failed for {op.name}: {e}") from e
    if not (np.all(np.isfinite(values)) and np.all(np.isfinite(right))):
        raise EigensolverError(f"Eigensolver returned non-finite data for {op.name}")

    scale = max(1.0, op.norm_max)
    _check_conjugate_pairs(values, scale)
    order = np.lexsort((values.imag, -values.real))
    values, right, left = values[order], right[:, order], left[:, order]

    bound = float(np.max(values.real))
    tol = default_cluster_tol(op)
    at_bound = np.abs(values - bound) <= tol
    peripheral = values.real >= bound - tol
    dominant = bool(np.all(at_bound[peripheral]))
    rest = values.real[~at_bound]
    gap = float(bound - np.max(rest)) if rest.size else float("inf")

    data = SpectralData(
        eigenvalues=values,
        right_eigenvectors=right,
        left_eigenvectors=left,
        spectral_bound=bound,
        dominant=dominant,
        gap=gap,
        peripheral_multiplicity=int(np.count_nonzero(at_bound)),
        symmetric_path=op.symmetric_in_weighted_inner_product,
    )
    with _cache_lock:
        _cache[op] = data
    logger.debug(f"Analyzed {op.name}: s={bound:.12g}, dominant={dominant}, gap={gap:.6g}")
    return data


def spectral_bound(op: OperatorHandle) -> float:
    return analyze(op).spectral_bound


def nearest_eigenvalue(op: OperatorHandle, lam: complex) -> Tuple[float, complex]:
    """Distance from lam to the spectrum of op, and the closest eigenvalue."""
    values = analyze(op).eigenvalues
    dist = np.abs(values - lam)
    i = int(np.argmin(dist))
    return float(dist[i]), complex(values[i])


def is_eigenvalue(op: OperatorHandle, lam: float, abs_tol: float = 1e-6) -> bool:
    return nearest_eigenvalue(op, lam)[0] <= eigen_tol(op, abs_tol)


def _select_cluster(op: OperatorHandle, data: SpectralData, lambda0: float, tol: float) -> np.ndarray:
    dist = np.abs(data.eigenvalues - lambda0)
    inside = dist <= tol
    if not np.any(inside):
        raise PreconditionError(
            f"lambda0={lambda0} is not within {tol:.3e} of an eigenvalue of {op.name} "
            f"(nearest at distance {np.min(dist):.3e})")
    straddling = (dist > tol) & (dist <= AMBIGUITY_FACTOR * tol)
    if np.any(straddling):
        raise AmbiguousClusterError(
            f"Eigenvalues of {op.name} straddle the cluster boundary around {lambda0}: "
            f"{data.eigenvalues[straddling][:4]}")
    return np.flatnonzero(inside)


def _schur_basis(matrix: np.ndarray, center: complex, tol: float, k: int):
    t, z, sdim = scipy.linalg.schur(matrix, output="complex", sort=lambda x: abs(x - center) <= tol)
    if sdim != k:
        raise AmbiguousClusterError(f"Schur reordering selected {sdim} eigenvalues, expected {k}")
    return t, z


def _pole_order(block: np.ndarray, lambda0: float, spread: float, scale: float) -> Optional[int]:
    """Nilpotency index of (T11 - lambda0) on the cluster's invariant subspace."""
    k = block.shape[0]
    shifted = block - lambda0 * np.eye(k)
    threshold = max(RANK_TOL * scale, AMBIGUITY_FACTOR * spread)
    power = np.eye(k, dtype=complex)
    for j in range(1, k + 1):
        power = power @ shifted
        if np.max(np.abs(power)) <= threshold * scale ** (j - 1):
            return j
    return None


def spectral_projection(op: OperatorHandle, lambda0: float,
                        cluster_tol: Optional[float] = None) -> ProjectionData:
    """
    Spectral projection for the eigenvalue cluster within cluster_tol of lambda0.

    Args:
        op: Operator to analyze.
        lambda0: Real spectral value.
        cluster_tol: Radius of the cluster in the complex plane; defaults to
            1e-6 * max(1, ||A||_max).

    Returns:
        ProjectionData with a real projection matrix P.
    """
    data = analyze(op)
    tol = default_cluster_tol(op) if cluster_tol is None else float(cluster_tol)
    idx = _select_cluster(op, data, lambda0, tol)
    k = idx.size
    scale = max(1.0, op.norm_max)
    spread = float(np.max(np.abs(data.eigenvalues[idx] - lambda0)))

    if data.symmetric_path:
        order, method = 1, "symmetric"
        p = data.right_eigenvectors[:, idx] @ data.left_eigenvectors[:, idx].conj().T
    else:
        t, z = _schur_basis(op.matrix, lambda0, tol, k)
        order = _pole_order(t[:k, :k], lambda0, spread, scale)
        if order is None:
            raise InconclusiveRankTestError(
                f"Rank test on the cluster of {op.name} at {lambda0} did not terminate within {k} powers")
        p = None
        if order == 1:
            right = data.right_eigenvectors[:, idx]
            left = data.left_eigenvectors[:, idx]
            gram = right.conj().T @ left
            if np.linalg.cond(gram) < 1e12:
                left = left @ np.linalg.inv(gram)
                p = right @ left.conj().T
                method = "biorthogonal"
        if p is None:
            _, y = _schur_basis(op.matrix.T, np.conj(lambda0), tol, k)
            z1, y1h = z[:, :k], y[:, :k].conj().T
            p = z1 @ np.linalg.solve(y1h @ z1, y1h)
            method = "schur"
            logger.info(f"Cluster of {op.name} at {lambda0} has pole order {order}; using the Schur projection")

    residue = float(np.max(np.abs(p.imag))) if p.size else 0.0
    p_real = np.real(p)
    p_norm = max(1.0, float(np.max(np.abs(p_real))))
    if residue > 1e-8 * p_norm:
        raise EigensolverError(f"Projection of {op.name} at {lambda0} has imaginary residue {residue:.3e}")
    defect = float(np.max(np.abs(p_real @ p_real - p_real)))
    if defect > IDEMPOTENCE_TOL * p_norm * max(1.0, k):
        logger.warning(f"Projection of {op.name} at {lambda0} is idempotent only to {defect:.3e}")
    rank = int(np.linalg.matrix_rank(p_real, tol=1e-8 * p_norm))
    return ProjectionData(
        lambda0=float(lambda0),
        P=p_real,
        algebraic_multiplicity=int(k),
        pole_order_estimate=int(order),
        rank=rank,
        method=method,
    )


def mean_ergodic_projection(op: OperatorHandle, cluster_tol: Optional[float] = None) -> ProjectionData:
    """
    Limit of the Cesaro means for an operator already rescaled to s(A) = 0.

    Raises:
        PreconditionError: spectral bound is not 0.
        NonErgodicError: the 0-cluster is defective or other eigenvalues sit on
            the imaginary axis.
    """
    data = analyze(op)
    zero_tol = eigen_tol(op, 1e-8)
    if abs(data.spectral_bound) > zero_tol:
        raise PreconditionError(
            f"{op.name} has spectral bound {data.spectral_bound:.6g}; rescale by A - s(A) first")
    tol = default_cluster_tol(op) if cluster_tol is None else float(cluster_tol)
    on_axis = np.abs(data.eigenvalues.real) <= zero_tol
    off_zero = np.abs(data.eigenvalues) > tol
    if np.any(on_axis & off_zero):
        raise NonErgodicError(
            f"{op.name} has imaginary-axis eigenvalues other than 0: {data.eigenvalues[on_axis & off_zero][:4]}")
    projection = spectral_projection(op, 0.0, tol)
    if projection.pole_order_estimate > 1:
        raise NonErgodicError(
            f"0 is a pole of order {projection.pole_order_estimate} for {op.name}; the Cesaro means grow")
    return projection


def principal_eigenvector(op: OperatorHandle) -> np.ndarray:
    """Real right eigenvector for s(A), scaled to max-norm 1 and positive sum."""
    data = analyze(op)
    vec = np.real(data.right_eigenvectors[:, 0])
    vec = vec / np.max(np.abs(vec))
    return vec if np.sum(vec) >= 0 else -vec
