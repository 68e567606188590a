"""
Lattice Core - finite-dimensional Banach-lattice arithmetic.

Grid functions on a 1D discretization are compared in the componentwise order.
Functionals are identified with grid functions through the quadrature-weighted
pairing <phi, f> = sum_i w_i phi_i f_i. Strict positivity with respect to a
reference vector u is decided with an explicit margin, and every comparison
reports the margin it found so callers can judge borderline cases.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Callable

import numpy as np

from config import DEFAULT_EPS
from errors import DimensionMismatchError, GridMismatchError, NonPositiveReferenceError, PreconditionError

logger = logging.getLogger("evdom.lattice_core")


class NodeScheme(str, Enum):
    """Placement of the n grid nodes inside [a, b]."""
    ENDPOINTS_INCLUDED = "endpoints_included"
    INTERIOR_ONLY = "interior_only"
    PERIODIC_LEFT_CLOSED = "periodic_left_closed"
    CELL_CENTERED = "cell_centered"


@dataclass(frozen=True)
class GridSpec:
    """1D discretization geometry plus quadrature weights for the L2 pairing.

    Weights:
        endpoints_included: trapezoid rule.
        interior_only: uniform (b-a)/n, so constants integrate exactly and
            symmetric stencils stay symmetric in the weighted inner product.
        periodic_left_closed / cell_centered: uniform h.
    """
    a: float
    b: float
    n: int
    node_scheme: NodeScheme = NodeScheme.ENDPOINTS_INCLUDED

    def __post_init__(self):
        object.__setattr__(self, "node_scheme", NodeScheme(self.node_scheme))
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))
        if not self.b > self.a:
            raise PreconditionError(f"Grid needs b > a, got a={self.a}, b={self.b}")
        if int(self.n) != self.n or self.n < 2:
            raise PreconditionError(f"Grid needs an integer node count >= 2, got {self.n}")
        object.__setattr__(self, "n", int(self.n))

    @property
    def length(self) -> float:
        return self.b - self.a

    @cached_property
    def spacing(self) -> float:
        if self.node_scheme == NodeScheme.ENDPOINTS_INCLUDED:
            return self.length / (self.n - 1)
        if self.node_scheme == NodeScheme.INTERIOR_ONLY:
            return self.length / (self.n + 1)
        return self.length / self.n

    @cached_property
    def nodes(self) -> np.ndarray:
        h = self.spacing
        idx = np.arange(self.n, dtype=float)
        if self.node_scheme == NodeScheme.ENDPOINTS_INCLUDED:
            x = self.a + idx * h
            x[-1] = self.b
        elif self.node_scheme == NodeScheme.INTERIOR_ONLY:
            x = self.a + (idx + 1.0) * h
        elif self.node_scheme == NodeScheme.PERIODIC_LEFT_CLOSED:
            x = self.a + idx * h
        else:
            x = self.a + (idx + 0.5) * h
        x.setflags(write=False)
        return x

    @cached_property
    def weights(self) -> np.ndarray:
        h = self.spacing
        if self.node_scheme == NodeScheme.ENDPOINTS_INCLUDED:
            w = np.full(self.n, h)
            w[0] = w[-1] = 0.5 * h
        elif self.node_scheme == NodeScheme.INTERIOR_ONLY:
            w = np.full(self.n, self.length / self.n)
        else:
            w = np.full(self.n, h)
        w.setflags(write=False)
        return w

    def nearest_node(self, x: float) -> int:
        """Index of the grid node closest to x."""
        return int(np.argmin(np.abs(self.nodes - x)))

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "n": self.n, "node_scheme": self.node_scheme.value}

    @classmethod
    def from_dict(cls, data: dict) -> "GridSpec":
        return cls(data["a"], data["b"], data["n"], NodeScheme(data["node_scheme"]))


@dataclass(frozen=True, eq=False)
class LatticeVector:
    """Real grid function; the cone is the componentwise order."""
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).reshape(-1)
        if vals.shape[0] != self.grid.n:
            raise DimensionMismatchError(
                f"Vector has {vals.shape[0]} values but the grid has {self.grid.n} nodes")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return self.grid.n

    def _check_same_grid(self, other: "LatticeVector"):
        if self.grid != other.grid:
            raise DimensionMismatchError(f"Grid mismatch: {self.grid} vs {other.grid}")

    def __add__(self, other: "LatticeVector") -> "LatticeVector":
        self._check_same_grid(other)
        return LatticeVector(self.grid, self.values + other.values)

    def __sub__(self, other: "LatticeVector") -> "LatticeVector":
        self._check_same_grid(other)
        return LatticeVector(self.grid, self.values - other.values)

    def __neg__(self) -> "LatticeVector":
        return LatticeVector(self.grid, -self.values)

    def __mul__(self, alpha: float) -> "LatticeVector":
        return LatticeVector(self.grid, float(alpha) * self.values)

    __rmul__ = __mul__

    def abs(self) -> "LatticeVector":
        return LatticeVector(self.grid, np.abs(self.values))

    def is_nonnegative(self) -> bool:
        return bool(np.all(self.values >= 0.0))

    def to_dict(self) -> dict:
        return {"grid": self.grid.to_dict(), "values": [float(v) for v in self.values]}

    @classmethod
    def from_dict(cls, data: dict) -> "LatticeVector":
        return cls(GridSpec.from_dict(data["grid"]), np.asarray(data["values"], dtype=float))


@dataclass(frozen=True)
class GaugeResult:
    """Lower and upper gauge constants of f with respect to u."""
    lower: float
    upper: float
    argmin_index: int
    argmax_index: int


def ones(grid: GridSpec) -> LatticeVector:
    return LatticeVector(grid, np.ones(grid.n))


def zeros(grid: GridSpec) -> LatticeVector:
    return LatticeVector(grid, np.zeros(grid.n))


def sample(grid: GridSpec, func: Callable[[np.ndarray], np.ndarray]) -> LatticeVector:
    """Evaluate func at the grid nodes."""
    return LatticeVector(grid, np.broadcast_to(func(grid.nodes), (grid.n,)))


def pairing(phi: LatticeVector, f: LatticeVector) -> float:
    """Weighted pairing <phi, f> = sum_i w_i phi_i f_i."""
    phi._check_same_grid(f)
    return float(np.dot(f.grid.weights * phi.values, f.values))


def gauge_values(f: np.ndarray, u: np.ndarray) -> GaugeResult:
    """Gauge computation on raw arrays of equal length."""
    f = np.asarray(f, dtype=float)
    u = np.asarray(u, dtype=float)
    if f.shape != u.shape:
        raise DimensionMismatchError(f"Cannot compare shapes {f.shape} and {u.shape}")
    if np.any(u <= 0.0):
        bad = int(np.argmin(u))
        raise NonPositiveReferenceError(f"Reference vector has u[{bad}] = {u[bad]!r} <= 0")
    ratio = f / u
    i_min = int(np.argmin(ratio))
    abs_ratio = np.abs(ratio)
    i_max = int(np.argmax(abs_ratio))
    return GaugeResult(float(ratio[i_min]), float(abs_ratio[i_max]), i_min, i_max)


def gauge(f: LatticeVector, u: LatticeVector) -> GaugeResult:
    """Gauge constants of f relative to u.

    Args:
        f: Vector to measure.
        u: Strictly positive reference vector on the same grid.

    Returns:
        GaugeResult with lower = min_i f_i/u_i (largest c with f >= c*u) and
        upper = max_i |f_i|/u_i (the gauge norm ||f||_u).
    """
    f._check_same_grid(u)
    return gauge_values(f.values, u.values)


def gauge_norm(f: LatticeVector, u: LatticeVector) -> float:
    return gauge(f, u).upper


def strongly_positive(f: LatticeVector, u: LatticeVector, eps: float = DEFAULT_EPS) -> bool:
    """True iff f >= c*u for some c > eps."""
    if eps < 0:
        raise PreconditionError(f"eps must be >= 0, got {eps}")
    return gauge(f, u).lower > eps


def dominates_values(g: np.ndarray, f: np.ndarray, eps: float = 0.0) -> bool:
    g = np.asarray(g, dtype=float)
    f = np.asarray(f, dtype=float)
    if g.shape != f.shape:
        raise DimensionMismatchError(f"Cannot compare shapes {g.shape} and {f.shape}")
    abs_f = np.abs(f)
    return bool(np.all(g >= abs_f - eps * np.maximum(1.0, abs_f)))


def dominates_vec(g: LatticeVector, f: LatticeVector, eps: float = 0.0) -> bool:
    """True iff g_i >= |f_i| - eps*max(1, |f_i|) for every node i."""
    g._check_same_grid(f)
    return dominates_values(g.values, f.values, eps)


# --- Grid transfer (closed grid <-> interior-only grid) ---

def embedding_indices(inner: GridSpec, outer: GridSpec) -> np.ndarray:
    """Indices of outer-grid nodes that carry the inner grid's nodes.

    Only two relations are supported: identical grids, and an interior_only
    grid sitting inside an endpoints_included grid over the same interval with
    the same spacing.
    """
    if inner == outer:
        return np.arange(inner.n)
    if (inner.node_scheme == NodeScheme.INTERIOR_ONLY
            and outer.node_scheme == NodeScheme.ENDPOINTS_INCLUDED
            and np.isclose(inner.a, outer.a) and np.isclose(inner.b, outer.b)
            and outer.n == inner.n + 2):
        return np.arange(1, outer.n - 1)
    raise GridMismatchError(f"Grid {inner} is not embedded in {outer}")


def _relation(src: GridSpec, dst: GridSpec):
    """Return ('same'|'extend'|'restrict', index array)."""
    if src == dst:
        return "same", np.arange(src.n)
    try:
        return "extend", embedding_indices(src, dst)
    except GridMismatchError:
        return "restrict", embedding_indices(dst, src)


def transfer_values(values: np.ndarray, src: GridSpec, dst: GridSpec) -> np.ndarray:
    """Move a grid function from src to dst by zero-extension or restriction."""
    kind, idx = _relation(src, dst)
    values = np.asarray(values, dtype=float)
    if kind == "same":
        return values.copy()
    if kind == "extend":
        out = np.zeros(dst.n)
        out[idx] = values
        return out
    return values[idx].copy()


def transfer(vec: LatticeVector, grid: GridSpec) -> LatticeVector:
    return LatticeVector(grid, transfer_values(vec.values, vec.grid, grid))


def transfer_matrix(matrix: np.ndarray, src: GridSpec, dst: GridSpec) -> np.ndarray:
    """Move an operator's output matrix (e.g. a semigroup sample) between grids.

    Zero-extension pads boundary rows and columns with zeros; restriction keeps
    the interior block.
    """
    kind, idx = _relation(src, dst)
    if kind == "same":
        return np.array(matrix, dtype=float)
    if kind == "extend":
        out = np.zeros((dst.n, dst.n))
        out[np.ix_(idx, idx)] = matrix
        return out
    return np.array(matrix[np.ix_(idx, idx)], dtype=float)

