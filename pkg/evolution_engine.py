"""
Evolution Engine - semigroup, resolvent and Cesaro-mean evaluation.

e^{tA} uses scipy's scaling-and-squaring Pade approximant. Res(lambda, A) is a
pivoted LU solve guarded by a LAPACK condition estimate. Cesaro means use the
exact identity A^{-1}(e^{rA} - I)/r when A is well conditioned and a graded
composite Gauss-Legendre rule otherwise. Closed forms for projection-based
operators live here as well, for cross-validation.
"""
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, TypeVar, Union

import numpy as np
import scipy.linalg
from scipy.linalg import LinAlgWarning
from scipy.linalg.lapack import dgecon

from config import thread_cap
from errors import EvolutionOverflowError, PreconditionError, SingularResolventError
from lattice_core import LatticeVector
from operator_gallery import OperatorHandle
from spectral_engine import eigen_tol, nearest_eigenvalue, spectral_bound

logger = logging.getLogger("evdom.evolution_engine")

RCOND_MIN = 1e-12
EIGEN_PROXIMITY = 1e-10
CESARO_EXACT_COND = 1e12
LAPLACE_TAIL = 1e-8
LAPLACE_MARGIN = 0.1
DEFAULT_QUAD_POINTS = 16
# largest |A| * panel length integrated by a single Gauss-Legendre panel
GRADE_TARGET = 10.0

T = TypeVar("T")
R = TypeVar("R")


class EvolutionKind(str, Enum):
    SEMIGROUP = "semigroup"
    RESOLVENT = "resolvent"
    CESARO = "cesaro"


@dataclass(frozen=True, eq=False)
class EvolutionSample:
    parameter: float
    kind: EvolutionKind
    matrix: np.ndarray
    method: str = ""
    op_name: str = ""

    def apply(self, f: Union[LatticeVector, np.ndarray]) -> np.ndarray:
        values = f.values if isinstance(f, LatticeVector) else np.asarray(f, dtype=float)
        return self.matrix @ values


def sample_map(func: Callable[[T], R], params: Iterable[T]) -> List[R]:
    """Evaluate func over independent parameters; results keep input order."""
    params = list(params)
    workers = min(thread_cap(), len(params))
    if workers <= 1:
        return [func(p) for p in params]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(func, params))


# --- Semigroup ---

def _expm_matrix(matrix: np.ndarray, t: float, label: str) -> np.ndarray:
    if t == 0.0:
        return np.eye(matrix.shape[0])
    with np.errstate(over="ignore", invalid="ignore"):
        result = scipy.linalg.expm(t * matrix)
    if not np.all(np.isfinite(result)):
        norm = float(t * np.linalg.norm(matrix, 1))
        raise EvolutionOverflowError(f"exp(tA) overflowed for {label} at t={t} (t*||A||_1 = {norm:.3e})",
                                     norm=norm)
    return result


def expm(op: OperatorHandle, t: float) -> EvolutionSample:
    """e^{tA} for t >= 0; t = 0 returns the identity exactly."""
    t = float(t)
    if not t >= 0.0:
        raise PreconditionError(f"Semigroup needs t >= 0, got {t}")
    matrix = _expm_matrix(op.matrix, t, op.name)
    return EvolutionSample(t, EvolutionKind.SEMIGROUP, matrix, method="pade13", op_name=op.name)


def semigroup_sweep(op: OperatorHandle, times: Sequence[float]) -> List[EvolutionSample]:
    return sample_map(lambda t: expm(op, t), times)


# --- Resolvent ---

def _factor(matrix: np.ndarray):
    """LU factors of matrix and the reciprocal 1-norm condition estimate."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(matrix)
    anorm = float(np.linalg.norm(matrix, 1))
    if anorm == 0.0:
        return (lu, piv), 0.0
    rcond, info = dgecon(lu, anorm, norm="1")
    return (lu, piv), float(rcond) if info == 0 else 0.0


def _shifted_factor(op: OperatorHandle, lam: float):
    dist, nearest = nearest_eigenvalue(op, lam)
    if dist <= eigen_tol(op, EIGEN_PROXIMITY):
        raise SingularResolventError(
            f"lambda={lam} is within {dist:.3e} of the eigenvalue {nearest} of {op.name}",
            nearest_eigenvalue=nearest)
    factors, rcond = _factor(lam * np.eye(op.n) - op.matrix)
    if rcond < RCOND_MIN:
        raise SingularResolventError(
            f"lambda*I - A is ill-conditioned for {op.name} at lambda={lam} "
            f"(rcond {rcond:.3e}, nearest eigenvalue {nearest})",
            nearest_eigenvalue=nearest)
    return factors


def resolvent(op: OperatorHandle, lam: float) -> EvolutionSample:
    """Res(lambda, A) = (lambda I - A)^{-1}."""
    lam = float(lam)
    factors = _shifted_factor(op, lam)
    matrix = scipy.linalg.lu_solve(factors, np.eye(op.n))
    return EvolutionSample(lam, EvolutionKind.RESOLVENT, matrix, method="lu", op_name=op.name)


def resolvent_solve(op: OperatorHandle, lam: float,
                    rhs: Union[LatticeVector, np.ndarray]) -> Union[LatticeVector, np.ndarray]:
    """Res(lambda, A) applied to a vector (or the columns of a matrix)."""
    factors = _shifted_factor(op, float(lam))
    if isinstance(rhs, LatticeVector):
        if rhs.grid != op.grid:
            raise PreconditionError(f"{op.name} acts on {op.grid}, vector lives on {rhs.grid}")
        return LatticeVector(op.grid, scipy.linalg.lu_solve(factors, rhs.values))
    return scipy.linalg.lu_solve(factors, np.asarray(rhs, dtype=float))


def resolvent_limit_errors(op: OperatorHandle, lambda0: float, projection: np.ndarray,
                           depth: int = 20) -> List[Tuple[float, float]]:
    """(lambda_j, ||lambda_j Res(lambda0 + lambda_j, A) - P||_max) for lambda_j = 2^-j, j=1..depth."""
    out = []
    for j in range(1, depth + 1):
        lam = 2.0 ** -j
        sample = resolvent(op, lambda0 + lam)
        out.append((lam, float(np.max(np.abs(lam * sample.matrix - projection)))))
    return out


# --- Quadrature ---

def _graded_integral(matrix: np.ndarray, length: float, quad_points: int) -> np.ndarray:
    """
    Integral of e^{sM} over [0, length] with Gauss-Legendre panels graded
    dyadically toward s = 0.

    The panels [a 2^k, a 2^(k+1)] share rescaled nodes, so node matrices of one
    level are the squares of the level below.
    """
    n = matrix.shape[0]
    total = np.zeros((n, n))
    if length <= 0.0:
        return total
    x, w = np.polynomial.legendre.leggauss(quad_points)
    half = 0.5 * (x + 1.0)
    rate = float(np.linalg.norm(matrix, 1)) * length
    levels = max(0, math.ceil(math.log2(rate / GRADE_TARGET))) if rate > GRADE_TARGET else 0
    base = length * 2.0 ** -levels

    for node, weight in zip(half, w):
        total += 0.5 * base * weight * _expm_matrix(matrix, base * node, "quadrature panel")
    if levels == 0:
        return total
    node_mats = [_expm_matrix(matrix, base * (1.0 + node), "quadrature panel") for node in half]
    for k in range(levels):
        width = base * 2.0 ** k
        for mat, weight in zip(node_mats, w):
            total += 0.5 * width * weight * mat
        if k + 1 < levels:
            node_mats = [mat @ mat for mat in node_mats]
    return total


def _geometric_sum(step: np.ndarray, count: int) -> Tuple[np.ndarray, np.ndarray]:
    """(sum_{j<count} step^j, step^count) by binary doubling."""
    n = step.shape[0]
    total = np.zeros((n, n))
    power = np.eye(n)
    block_sum = np.eye(n)
    block_pow = step.copy()
    while count:
        if count & 1:
            total = total + power @ block_sum
            power = power @ block_pow
        count >>= 1
        if count:
            block_sum = block_sum + block_pow @ block_sum
            block_pow = block_pow @ block_pow
    return total, power


def integrate_semigroup(matrix: np.ndarray, horizon: float, quad_points: int = DEFAULT_QUAD_POINTS) -> np.ndarray:
    """
    Composite Gauss-Legendre approximation of int_0^horizon e^{sM} ds.

    Unit panels are propagated by the semigroup law:
    int_0^T = sum_{j<floor(T)} e^{jM} J_1 + e^{floor(T) M} J_frac.
    """
    if quad_points < 8:
        raise PreconditionError(f"Quadrature needs at least 8 points per panel, got {quad_points}")
    whole = int(math.floor(horizon))
    frac = horizon - whole
    if whole == 0:
        result = _graded_integral(matrix, frac, quad_points)
    else:
        unit = _graded_integral(matrix, 1.0, quad_points)
        step = _expm_matrix(matrix, 1.0, "quadrature panel")
        partial, power = _geometric_sum(step, whole)
        result = partial @ unit
        if frac > 0.0:
            result = result + power @ _graded_integral(matrix, frac, quad_points)
    if not np.all(np.isfinite(result)):
        norm = float(np.linalg.norm(matrix, 1))
        raise EvolutionOverflowError(f"Quadrature overflowed over [0, {horizon}] (||M||_1 = {norm:.3e})", norm=norm)
    return result


# --- Cesaro means ---

def cesaro(op: OperatorHandle, r: float, quad_points: int = DEFAULT_QUAD_POINTS) -> EvolutionSample:
    """
    C(r) = (1/r) int_0^r e^{sA} ds.

    Args:
        op: Generator.
        r: Averaging horizon, r > 0.
        quad_points: Gauss-Legendre nodes per panel for the quadrature path.

    Returns:
        EvolutionSample with method "exact_identity" or "gauss_legendre".
    """
    r = float(r)
    if not r > 0.0:
        raise PreconditionError(f"Cesaro mean needs r > 0, got {r}")
    if quad_points < 8:
        raise PreconditionError(f"Cesaro quadrature needs quad_points >= 8, got {quad_points}")
    factors, rcond = _factor(op.matrix)
    if rcond > 1.0 / CESARO_EXACT_COND:
        semigroup = _expm_matrix(op.matrix, r, op.name)
        matrix = scipy.linalg.lu_solve(factors, semigroup - np.eye(op.n)) / r
        method = "exact_identity"
    else:
        logger.info(f"{op.name} is singular to working precision (rcond {rcond:.3e}); "
                    f"integrating C({r:g}) by quadrature")
        matrix = integrate_semigroup(op.matrix, r, quad_points) / r
        method = "gauss_legendre"
    return EvolutionSample(r, EvolutionKind.CESARO, matrix, method=method, op_name=op.name)


def cesaro_sweep(op: OperatorHandle, horizons: Sequence[float],
                 quad_points: int = DEFAULT_QUAD_POINTS) -> List[EvolutionSample]:
    return sample_map(lambda r: cesaro(op, r, quad_points), horizons)


# --- Cross-validation ---

def laplace_horizon(bound: float, lam: float, tail: float = LAPLACE_TAIL) -> float:
    """Smallest integer T with e^{(s-lambda)T}/(lambda-s) below tail."""
    gap = lam - bound
    return float(max(1, math.ceil(math.log(tail * gap) / -gap)))


def laplace_transform_check(op: OperatorHandle, lam: float, T: Optional[float] = None,
                            quad_points: int = DEFAULT_QUAD_POINTS) -> float:
    """||int_0^T e^{-lambda s} e^{sA} ds - Res(lambda, A)||_max."""
    lam = float(lam)
    bound = spectral_bound(op)
    if lam <= bound + LAPLACE_MARGIN:
        raise PreconditionError(
            f"Laplace check needs lambda > s(A) + {LAPLACE_MARGIN}; got lambda={lam}, s(A)={bound:.6g}")
    horizon = laplace_horizon(bound, lam) if T is None else float(T)
    tail = math.exp((bound - lam) * horizon) / (lam - bound)
    if tail > LAPLACE_TAIL:
        logger.warning(f"Laplace horizon T={horizon} leaves a tail bound of {tail:.3e}")
    shifted = op.matrix - lam * np.eye(op.n)
    integral = integrate_semigroup(shifted, horizon, quad_points)
    residual = float(np.max(np.abs(integral - resolvent(op, lam).matrix)))
    logger.debug(f"Laplace check for {op.name} at lambda={lam}: T={horizon}, residual={residual:.3e}")
    return residual


# --- Closed forms for operators built from a projection ---

def projection_semigroup(projection: np.ndarray, range_rate: float, kernel_rate: float, t: float) -> np.ndarray:
    """e^{tA} for A = range_rate P + kernel_rate (I - P)."""
    eye = np.eye(projection.shape[0])
    return math.exp(range_rate * t) * projection + math.exp(kernel_rate * t) * (eye - projection)


def projection_resolvent(projection: np.ndarray, lam: float) -> np.ndarray:
    """Res(lambda, P) = (P + (lambda - 1) I) / (lambda (lambda - 1)) for lambda not in {0, 1}."""
    if lam in (0.0, 1.0):
        raise SingularResolventError(f"Projection resolvent is singular at lambda={lam}", nearest_eigenvalue=lam)
    eye = np.eye(projection.shape[0])
    return (projection + (lam - 1.0) * eye) / (lam * (lam - 1.0))


def projection_cesaro(projection: np.ndarray, kernel_rate: float, r: float) -> np.ndarray:
    """C(r) for A = kernel_rate (I - P) with kernel_rate < 0."""
    eye = np.eye(projection.shape[0])
    factor = (math.exp(kernel_rate * r) - 1.0) / (kernel_rate * r)
    return projection + factor * (eye - projection)


def rank_one_semigroup_gap(t: float, n: int) -> float:
    """(e^{tB} - e^{tA}) f_n at x = 1 for the rank-one pair."""
    return (1.0 / (3.0 * n ** 2) - math.exp(-t / 2.0) / (2.0 * n)) * (1.0 - math.exp(-t))


def rank_one_resolvent_gap(lam: float, n: int) -> float:
    """(Res(lambda, B) - Res(lambda, A)) f_n at x = 1 for the rank-one pair."""
    return (1.0 / (3.0 * n ** 2)) / (lam * (lam + 1.0)) - (2.0 / n) / ((2.0 * lam + 3.0) * (2.0 * lam + 1.0))
