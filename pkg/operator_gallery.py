"""
Operator Gallery - every operator the domination experiments need.

Second-order Laplacians with local, anti-symmetric, periodic and non-local
boundary conditions are built by central finite differences with ghost-node
elimination. Odd-order derivatives with periodic-type matching conditions are
built spectrally. The rank-one example is built from its closed form.

Operators can be exported to Matrix Market (array format) with a JSON sidecar
holding the grid metadata, and loaded back.
"""
import json
import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import scipy.fft
import scipy.io
import scipy.linalg
from scipy.optimize import bisect

from errors import DimensionMismatchError, PreconditionError
from lattice_core import GridSpec, LatticeVector, NodeScheme, pairing, sample

logger = logging.getLogger("evdom.operator_gallery")

SYMMETRY_TOL = 1e-10
MU_XTOL = 1e-12


class Provenance(str, Enum):
    FINITE_DIFFERENCE = "finite_difference"
    FOURIER_SPECTRAL = "fourier_spectral"
    EXACT_CLOSED_FORM = "exact_closed_form"


@dataclass(frozen=True, eq=False)
class OperatorHandle:
    """Dense real matrix plus the metadata needed to interpret it.

    Handles hash by identity, which is what the spectral cache keys on.
    """
    name: str
    grid: GridSpec
    matrix: np.ndarray
    symmetric_in_weighted_inner_product: bool = False
    exact_spectrum: Optional[Tuple[Tuple[complex, str], ...]] = None
    provenance: Provenance = Provenance.FINITE_DIFFERENCE
    bc: str = ""
    params: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        mat = np.array(self.matrix)
        if np.iscomplexobj(mat):
            raise PreconditionError(f"Operator {self.name} must be real")
        mat = mat.astype(float)
        if mat.shape != (self.grid.n, self.grid.n):
            raise PreconditionError(
                f"Operator {self.name} has shape {mat.shape}, grid needs {(self.grid.n, self.grid.n)}")
        if not np.all(np.isfinite(mat)):
            raise PreconditionError(f"Operator {self.name} has non-finite entries")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "provenance", Provenance(self.provenance))
        if self.symmetric_in_weighted_inner_product:
            defect = weighted_symmetry_defect(mat, self.grid.weights)
            if defect >= SYMMETRY_TOL * max(self.norm_max, 1e-300):
                raise PreconditionError(
                    f"Operator {self.name} flagged symmetric but ||WM - M^T W||_max = {defect:.3e}")

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def norm_max(self) -> float:
        return float(np.max(np.abs(self.matrix))) if self.matrix.size else 0.0

    def apply(self, f: LatticeVector) -> LatticeVector:
        if f.grid != self.grid:
            raise DimensionMismatchError(f"{self.name} acts on {self.grid}, vector lives on {f.grid}")
        return LatticeVector(self.grid, self.matrix @ f.values)

    def shifted(self, shift: float, name: Optional[str] = None) -> "OperatorHandle":
        """The operator M - shift*I (spectrum moves by -shift)."""
        exact = None
        if self.exact_spectrum is not None:
            exact = tuple((value - shift, desc) for value, desc in self.exact_spectrum)
        params = dict(self.params)
        params["shift"] = params.get("shift", 0.0) + float(shift)
        return replace(
            self,
            name=name or f"{self.name}-shift({shift:.6g})",
            matrix=self.matrix - float(shift) * np.eye(self.n),
            exact_spectrum=exact,
            params=params,
        )

    def metadata(self) -> dict:
        return {
            "name": self.name,
            "bc": self.bc,
            "interval": [self.grid.a, self.grid.b],
            "n": self.n,
            "node_scheme": self.grid.node_scheme.value,
            "weights": [float(w) for w in self.grid.weights],
            "provenance": self.provenance.value,
            "symmetric": bool(self.symmetric_in_weighted_inner_product),
            "params": self.params,
        }


@dataclass(frozen=True)
class RankOneExampleBundle:
    """A = P_A - 3/2 id and B = P_B - id on C[0,1] sampled at grid nodes."""
    space_grid: GridSpec
    A: OperatorHandle
    B: OperatorHandle
    phiA: LatticeVector
    phiB: LatticeVector
    PA: OperatorHandle
    PB: OperatorHandle


def weighted_symmetry_defect(matrix: np.ndarray, weights: np.ndarray) -> float:
    """||W M - M^T W||_max with W = diag(weights)."""
    wm = weights[:, None] * matrix
    return float(np.max(np.abs(wm - wm.T))) if matrix.size else 0.0


# --- Laplacians ---

DEFAULT_INTERVALS = {
    "dirichlet": (0.0, 1.0),
    "neumann": (0.0, 1.0),
    "periodic": (0.0, 1.0),
    "antisymmetric": (-1.0, 1.0),
    "nonlocal_beta": (0.0, math.pi),
    "nonlocal_symmetric": (0.0, 1.0),
}
FIXED_INTERVAL_BCS = ("antisymmetric", "nonlocal_beta", "nonlocal_symmetric")

DEFAULT_SCHEMES = {
    "dirichlet": NodeScheme.INTERIOR_ONLY,
    "neumann": NodeScheme.ENDPOINTS_INCLUDED,
    "periodic": NodeScheme.PERIODIC_LEFT_CLOSED,
    "antisymmetric": NodeScheme.PERIODIC_LEFT_CLOSED,
    "nonlocal_beta": NodeScheme.ENDPOINTS_INCLUDED,
    "nonlocal_symmetric": NodeScheme.ENDPOINTS_INCLUDED,
}
ALLOWED_SCHEMES = {
    "dirichlet": (NodeScheme.INTERIOR_ONLY,),
    "neumann": (NodeScheme.ENDPOINTS_INCLUDED, NodeScheme.CELL_CENTERED),
    "periodic": (NodeScheme.PERIODIC_LEFT_CLOSED, NodeScheme.CELL_CENTERED),
    "antisymmetric": (NodeScheme.PERIODIC_LEFT_CLOSED, NodeScheme.CELL_CENTERED),
    "nonlocal_beta": (NodeScheme.ENDPOINTS_INCLUDED,),
    "nonlocal_symmetric": (NodeScheme.ENDPOINTS_INCLUDED,),
}


def _normalize_bc(bc: str) -> str:
    key = bc.strip().lower().replace("-", "_")
    if key not in DEFAULT_INTERVALS:
        raise PreconditionError(f"Unsupported boundary condition '{bc}'")
    return key


def _second_difference(n: int, h: float) -> np.ndarray:
    main = np.full(n, -2.0)
    off = np.ones(n - 1)
    return (np.diag(main) + np.diag(off, 1) + np.diag(off, -1)) / h ** 2


def build_laplacian(bc: str, interval: Optional[Tuple[float, float]] = None, n: int = 200,
                    beta: Optional[float] = None,
                    node_scheme: Optional[Union[NodeScheme, str]] = None) -> OperatorHandle:
    """
    Second-order central-difference realisation of d^2/dx^2.

    Args:
        bc: dirichlet, neumann, antisymmetric, periodic, nonlocal_beta or
            nonlocal_symmetric.
        interval: (a, b); antisymmetric is fixed to (-1, 1), nonlocal_beta to
            (0, pi) and nonlocal_symmetric to (0, 1).
        n: node count (interior nodes for Dirichlet).
        beta: coupling constant of f'(pi) = beta f(0), nonlocal_beta only.
        node_scheme: optional grid override (cell_centered for neumann,
            antisymmetric and periodic).

    Returns:
        OperatorHandle with provenance finite_difference.
    """
    key = _normalize_bc(bc)
    if n < 8:
        raise PreconditionError(f"Laplacian needs n >= 8, got {n}")
    default = DEFAULT_INTERVALS[key]
    if interval is None:
        interval = default
    interval = (float(interval[0]), float(interval[1]))
    if key in FIXED_INTERVAL_BCS and not np.allclose(interval, default):
        raise PreconditionError(f"{key} Laplacian is only defined on {default}, got {interval}")
    scheme = NodeScheme(node_scheme) if node_scheme is not None else DEFAULT_SCHEMES[key]
    if scheme not in ALLOWED_SCHEMES[key]:
        raise PreconditionError(f"{key} Laplacian does not support node scheme {scheme.value}")
    if key == "nonlocal_beta":
        if beta is None:
            raise PreconditionError("nonlocal_beta Laplacian needs beta")
        beta = float(beta)

    grid = GridSpec(interval[0], interval[1], n, scheme)
    h = grid.spacing
    m = _second_difference(n, h)
    symmetric = True
    params: Dict[str, Any] = {}

    if key == "neumann":
        if scheme == NodeScheme.ENDPOINTS_INCLUDED:
            # ghost nodes f(-h) = f(h), f(b+h) = f(b-h)
            m[0, 1] = m[-1, -2] = 2.0 / h ** 2
        else:
            # reflection across the cell faces
            m[0, 0] = m[-1, -1] = -1.0 / h ** 2
    elif key == "antisymmetric":
        # f(a-h) = -f(b-h) and f(b) = -f(a)
        m[0, -1] = m[-1, 0] = -1.0 / h ** 2
    elif key == "periodic":
        m[0, -1] = m[-1, 0] = 1.0 / h ** 2
    elif key == "nonlocal_beta":
        # f'(0) = 0 and f'(pi) = beta f(0)
        m[0, 1] = 2.0 / h ** 2
        m[-1, -2] = 2.0 / h ** 2
        m[-1, 0] += 2.0 * beta / h
        symmetric = False
        params["beta"] = beta
    elif key == "nonlocal_symmetric":
        # f'(0) = -f'(1) = f(0) + f(1)
        m[0, 1] = m[-1, -2] = 2.0 / h ** 2
        m[0, 0] = m[-1, -1] = -(2.0 + 2.0 * h) / h ** 2
        m[0, -1] += -2.0 / h
        m[-1, 0] += -2.0 / h
        symmetric = False

    exact = _laplacian_exact_spectrum(key, interval, beta)
    name = key if key != "nonlocal_beta" else f"nonlocal_beta({beta:g})"
    logger.debug(f"Built {name} Laplacian on {interval} with n={n} ({scheme.value})")
    return OperatorHandle(
        name=name,
        grid=grid,
        matrix=m,
        symmetric_in_weighted_inner_product=symmetric,
        exact_spectrum=exact,
        provenance=Provenance.FINITE_DIFFERENCE,
        bc=key,
        params=params,
    )


def _laplacian_exact_spectrum(key: str, interval: Tuple[float, float],
                              beta: Optional[float]) -> Optional[Tuple[Tuple[complex, str], ...]]:
    length = interval[1] - interval[0]
    if key == "dirichlet":
        return tuple((-(k * math.pi / length) ** 2, f"-(k pi/L)^2, k={k}") for k in range(1, 5))
    if key == "neumann":
        return tuple((-(k * math.pi / length) ** 2, f"-(k pi/L)^2, k={k}") for k in range(0, 4))
    if key == "antisymmetric":
        out = []
        for k in range(3):
            value = -((k + 0.5) * math.pi) ** 2
            out += [(value, f"-(k+1/2)^2 pi^2, k={k}, cos mode"), (value, f"-(k+1/2)^2 pi^2, k={k}, sin mode")]
        return tuple(out)
    if key == "periodic":
        out = [(0.0, "constants")]
        for k in range(1, 3):
            value = -(2.0 * k * math.pi / length) ** 2
            out += [(value, f"-(2 k pi/L)^2, k={k}, cos mode"), (value, f"-(2 k pi/L)^2, k={k}, sin mode")]
        return tuple(out)
    if key == "nonlocal_beta":
        if beta == 0.0:
            return ((0.0, "Neumann limit, constants"),)
        if -0.5 < beta < 0.0:
            mu = solve_transcendental_mu(beta)
            return ((-mu ** 2, f"-mu^2 with mu sin(mu pi) = -beta, mu={mu:.12g}"),)
        return None
    if key == "nonlocal_symmetric":
        mu = solve_nonlocal_symmetric_mu()
        return ((-mu ** 2, f"-mu^2 with mu tan(mu/2) = 2, mu={mu:.12g}"),
                (-math.pi ** 2, "-pi^2, odd mode sin(pi(x-1/2))"))
    return None


def solve_transcendental_mu(beta: float) -> float:
    """
    Unique mu in (0, 1/2) with mu*sin(mu*pi) = -beta, for beta in (-1/2, 0).

    The leading eigenvalue of the nonlocal_beta Laplacian is -mu^2.
    """
    beta = float(beta)
    if not -0.5 < beta < 0.0:
        raise PreconditionError(f"beta must lie in (-1/2, 0), got {beta}")
    return float(bisect(lambda mu: mu * math.sin(mu * math.pi) + beta, 0.0, 0.5, xtol=MU_XTOL))


def solve_nonlocal_symmetric_mu() -> float:
    """mu in (0, pi) with mu*tan(mu/2) = 2; s(nonlocal_symmetric) = -mu^2."""
    return float(bisect(lambda mu: mu * math.sin(mu / 2.0) - 2.0 * math.cos(mu / 2.0),
                        0.0, math.pi, xtol=MU_XTOL))


# --- Odd-order operators ---

def build_odd_order(k: int, n: int = 64) -> OperatorHandle:
    """
    Fourier-spectral realisation of f -> f^(2k+1) with f^(j)(0) = f^(j)(1).

    The matrix is circulant on a periodic_left_closed grid over (0, 1) with
    symbol (2 pi i m)^(2k+1); the unpaired Nyquist mode gets symbol 0 so the
    matrix is real. Its first column is made exactly anti-symmetric, so rows
    sum to zero up to rounding.
    """
    if int(k) != k or k < 0:
        raise PreconditionError(f"Order index k must be a non-negative integer, got {k}")
    if n % 2:
        raise PreconditionError(f"Odd-order operators need an even node count, got {n}")
    if n < 16:
        raise PreconditionError(f"Odd-order operators need n >= 16, got {n}")
    k = int(k)
    order = 2 * k + 1
    grid = GridSpec(0.0, 1.0, n, NodeScheme.PERIODIC_LEFT_CLOSED)
    modes = scipy.fft.fftfreq(n, d=1.0 / n)
    symbol = (2j * np.pi * modes) ** order
    symbol[n // 2] = 0.0
    column = scipy.fft.ifft(symbol)
    residue = float(np.max(np.abs(column.imag)))
    if residue > 1e-8 * max(1.0, float(np.max(np.abs(column.real)))):
        raise PreconditionError(f"Odd-order symbol did not produce a real column (residue {residue:.3e})")
    column = column.real
    column = 0.5 * (column - np.roll(column[::-1], 1))
    matrix = scipy.linalg.circulant(column)

    exact = tuple(((2j * np.pi * m) ** order, f"(2 pi i m)^{order}, m={m}") for m in range(-2, 3))
    return OperatorHandle(
        name=f"odd_order({k})",
        grid=grid,
        matrix=matrix,
        symmetric_in_weighted_inner_product=False,
        exact_spectrum=exact,
        provenance=Provenance.FOURIER_SPECTRAL,
        bc="odd_order",
        params={"k": k},
    )


# --- Rank-one example ---

def rank_one_matrix(u: LatticeVector, phi: LatticeVector) -> np.ndarray:
    """Matrix of u (x) phi, i.e. f -> <phi, f> u."""
    u._check_same_grid(phi)
    return np.outer(u.values, u.grid.weights * phi.values)


def build_rank_one_example(n: int = 128) -> RankOneExampleBundle:
    """
    P_A f = <phi_A, f> 1 and P_B f = <phi_B, f> 1 with densities 1 and 2x.

    Returns:
        RankOneExampleBundle with A = P_A - 1.5 I and B = P_B - I.
    """
    if n < 16:
        raise PreconditionError(f"Rank-one example needs n >= 16, got {n}")
    grid = GridSpec(0.0, 1.0, n, NodeScheme.ENDPOINTS_INCLUDED)
    one = sample(grid, np.ones_like)
    phi_a = sample(grid, np.ones_like)
    phi_b = sample(grid, lambda x: 2.0 * x)
    pa = rank_one_matrix(one, phi_a)
    pb = rank_one_matrix(one, phi_b)
    for label, phi in (("phi_A", phi_a), ("phi_B", phi_b)):
        mass = pairing(phi, one)
        if abs(mass - 1.0) > 1e-10:
            logger.warning(f"{label} integrates 1 to {mass!r} instead of 1")

    def handle(name, matrix, exact):
        return OperatorHandle(name=name, grid=grid, matrix=matrix, exact_spectrum=exact,
                              provenance=Provenance.EXACT_CLOSED_FORM, bc="rank_one")

    return RankOneExampleBundle(
        space_grid=grid,
        A=handle("rank_one_A", pa - 1.5 * np.eye(n), ((-0.5, "range of P_A"), (-1.5, "kernel of P_A"))),
        B=handle("rank_one_B", pb - np.eye(n), ((0.0, "range of P_B"), (-1.0, "kernel of P_B"))),
        phiA=phi_a,
        phiB=phi_b,
        PA=handle("P_A", pa, ((1.0, "range"), (0.0, "kernel"))),
        PB=handle("P_B", pb, ((1.0, "range"), (0.0, "kernel"))),
    )


def test_function_fn(n_index: int, grid: GridSpec) -> LatticeVector:
    """Samples f_n(x) = max(1 - n x, 0) on a grid over (0, 1)."""
    if n_index < 1:
        raise PreconditionError(f"f_n needs n >= 1, got {n_index}")
    if not (np.isclose(grid.a, 0.0) and np.isclose(grid.b, 1.0)):
        raise PreconditionError(f"f_n lives on (0, 1), got ({grid.a}, {grid.b})")
    return sample(grid, lambda x: np.maximum(1.0 - n_index * x, 0.0))


# keep pytest from collecting the builder above
test_function_fn.__test__ = False


# --- Named construction (CLI) ---

def build_operator(name: str, n: Optional[int] = None, beta: Optional[float] = None,
                   interval: Optional[Tuple[float, float]] = None,
                   node_scheme: Optional[Union[NodeScheme, str]] = None) -> OperatorHandle:
    """
    Build an operator from its CLI name.

    Names: dirichlet, neumann, periodic, antisymmetric, nonlocal-beta,
    nonlocal-symmetric, odd-order-K, rank-one-a, rank-one-b, rank-one-pa,
    rank-one-pb. interval and node_scheme apply to the Laplacians only.
    """
    key = name.strip().lower().replace("_", "-")
    if key.startswith("odd-order-"):
        try:
            k = int(key.rsplit("-", 1)[1])
        except ValueError:
            raise PreconditionError(f"Cannot read the order index from '{name}'")
        return build_odd_order(k, n or 64)
    if key.startswith("rank-one-"):
        bundle = build_rank_one_example(n or 128)
        parts = {"rank-one-a": bundle.A, "rank-one-b": bundle.B,
                 "rank-one-pa": bundle.PA, "rank-one-pb": bundle.PB}
        if key not in parts:
            raise PreconditionError(f"Unknown rank-one operator '{name}'")
        return parts[key]
    if key == "nonlocal-beta" and beta is None:
        raise PreconditionError("nonlocal-beta needs --beta")
    return build_laplacian(key, interval, n=n or 200, beta=beta, node_scheme=node_scheme)


# --- Matrix Market export/import ---

def save_operator(op: OperatorHandle, path: Union[str, Path]) -> Tuple[Path, Path]:
    """Write op to PATH (Matrix Market array, general) and PATH.json metadata."""
    path = Path(path)
    scipy.io.mmwrite(str(path), np.asarray(op.matrix), field="real", precision=17, symmetry="general")
    written = path if path.suffix == ".mtx" else path.with_name(path.name + ".mtx")
    sidecar = written.with_suffix(".json")
    meta = op.metadata()
    if op.exact_spectrum is not None:
        meta["exact_spectrum"] = [[complex(v).real, complex(v).imag, desc] for v, desc in op.exact_spectrum]
    sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True))
    logger.info(f"Exported {op.name} to {written} (+ {sidecar.name})")
    return written, sidecar


def load_operator(path: Union[str, Path]) -> OperatorHandle:
    """Read an operator written by save_operator."""
    path = Path(path)
    matrix = np.asarray(scipy.io.mmread(str(path)), dtype=float)
    meta = json.loads(path.with_suffix(".json").read_text())
    a, b = meta["interval"]
    grid = GridSpec(a, b, int(meta["n"]), NodeScheme(meta["node_scheme"]))
    exact = None
    if meta.get("exact_spectrum"):
        exact = tuple((complex(re, im) if im else re, desc) for re, im, desc in meta["exact_spectrum"])
    return OperatorHandle(
        name=meta["name"],
        grid=grid,
        matrix=matrix,
        symmetric_in_weighted_inner_product=bool(meta.get("symmetric", False)),
        exact_spectrum=exact,
        provenance=Provenance(meta.get("provenance", Provenance.FINITE_DIFFERENCE.value)),
        bc=meta.get("bc", ""),
        params=meta.get("params", {}),
    )
