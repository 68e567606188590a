"""
Criteria Checkers - sampled decisions for eventual domination, eventual
positivity and (anti-)maximum principles.

Every checker evaluates its property on a finite grid of times, horizons or
resolvent parameters and returns a report holding the per-sample margins, the
verdict, the earliest passing parameter and failure witnesses. "Eventual"
verdicts require the last quarter of the grid to pass with a non-decreasing
(or geometrically settling) margin; nothing here certifies a property for all parameters.

Semigroup checks work on the rescaled pair A - s(B), B - s(B) and report raw
margins alongside. Operators on an interior_only grid are compared on the
closed grid by zero-extension (or the closed-grid operator is restricted when
the test vectors live on the interior grid).
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import DEFAULT_EPS, DEFAULT_SEED
from errors import (DimensionMismatchError, GridMismatchError, InconclusiveWitnessError,
                    NonPositiveReferenceError, PreconditionError)
from evolution_engine import cesaro_sweep, expm, resolvent_solve, sample_map, semigroup_sweep
from lattice_core import (GridSpec, LatticeVector, NodeScheme, embedding_indices, gauge_values, ones, sample,
                          transfer_matrix, transfer_values)
from operator_gallery import OperatorHandle
from spectral_engine import (eigen_tol, is_eigenvalue, mean_ergodic_projection, nearest_eigenvalue,
                             principal_eigenvector, spectral_bound)

logger = logging.getLogger("evdom.criteria_checkers")

TAIL_FRACTION = 0.25
PLATEAU_RTOL = 1e-8
DEFAULT_DELTA = 0.5
DEFAULT_DEPTH = 20
EIGEN_SKIP = 1e-10
COND_SKIP = 1e11
SPECTRAL_MATCH = 1e-6
WITNESS_REL_TOL = 1e-9
DISTINCT_TOL = 1e-8


# --- Parameter grids ---

class GridKind(str, Enum):
    LOG = "log"
    LINEAR = "linear"
    EXPLICIT = "list"


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Sorted positive sample points for t (semigroups) or r (Cesaro means)."""
    kind: GridKind
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1)
        object.__setattr__(self, "kind", GridKind(self.kind))
        minimum = 1 if self.kind == GridKind.EXPLICIT else 2
        if values.size < minimum:
            raise PreconditionError(f"{self.kind.value} grid needs at least {minimum} points, got {values.size}")
        if np.any(values <= 0.0) or not np.all(np.isfinite(values)):
            raise PreconditionError("Grid values must be positive and finite")
        if np.any(np.diff(values) <= 0.0):
            raise PreconditionError("Grid values must be strictly increasing")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def log(cls, t_min: float, t_max: float, count: int) -> "TimeGrid":
        if not 0.0 < t_min < t_max:
            raise PreconditionError(f"log grid needs 0 < t_min < t_max, got {t_min}, {t_max}")
        return cls(GridKind.LOG, np.geomspace(t_min, t_max, int(count)))

    @classmethod
    def linear(cls, t_min: float, t_max: float, count: int) -> "TimeGrid":
        if not 0.0 < t_min < t_max:
            raise PreconditionError(f"linear grid needs 0 < t_min < t_max, got {t_min}, {t_max}")
        return cls(GridKind.LINEAR, np.linspace(t_min, t_max, int(count)))

    @classmethod
    def explicit(cls, values: Sequence[float]) -> "TimeGrid":
        return cls(GridKind.EXPLICIT, np.asarray(values, dtype=float))

    @classmethod
    def parse(cls, text: str) -> "TimeGrid":
        """Read log:a:b:n, linear:a:b:n or list:t1,t2,..."""
        kind, _, rest = text.strip().partition(":")
        kind = kind.lower()
        try:
            if kind in ("log", "linear"):
                a, b, n = rest.split(":")
                builder = cls.log if kind == "log" else cls.linear
                return builder(float(a), float(b), int(n))
            if kind == "list":
                return cls.explicit([float(v) for v in rest.split(",") if v.strip()])
        except ValueError as e:
            raise PreconditionError(f"Cannot parse grid '{text}': {e}") from e
        raise PreconditionError(f"Unknown grid kind in '{text}' (use log, linear or list)")

    def describe(self) -> str:
        if self.kind == GridKind.EXPLICIT:
            return "list:" + ",".join(repr(float(v)) for v in self.values)
        return f"{self.kind.value}:{self.values[0]!r}:{self.values[-1]!r}:{self.values.size}"

    def __len__(self) -> int:
        return int(self.values.size)


# --- Reports ---

class DominationMode(str, Enum):
    INDIVIDUAL = "individual"
    UNIFORM_ENTRYWISE = "uniform_entrywise"
    CESARO = "cesaro_individual"
    POSITIVITY = "semigroup_positivity"


class Verdict(str, Enum):
    EVENTUAL = "eventual_domination_observed"
    NONE = "no_domination_in_window"
    ALL = "domination_for_all_sampled_t"


class Side(str, Enum):
    RIGHT = "right"
    LEFT = "left"


class WindowVerdict(str, Enum):
    ALL = "window_for_all_sampled"
    OBSERVED = "window_observed"
    NONE = "no_window_observed"


@dataclass(frozen=True)
class Sample:
    param: float
    margin: float
    passed: bool
    raw_margin: Optional[float] = None
    lower_bound: Optional[float] = None

    def to_dict(self) -> dict:
        return {"param": self.param, "margin": self.margin, "pass": self.passed,
                "raw_margin": self.raw_margin, "lower_bound": self.lower_bound}

    @classmethod
    def from_dict(cls, data: dict) -> "Sample":
        return cls(data["param"], data["margin"], bool(data["pass"]),
                   data.get("raw_margin"), data.get("lower_bound"))


@dataclass(frozen=True)
class Witness:
    """Where a sampled inequality failed: lhs should have been >= rhs."""
    param: float
    node_index: int
    lhs: float
    rhs: float
    column: Optional[int] = None
    direction: Optional[str] = None

    def to_dict(self) -> dict:
        return {"param": self.param, "node_index": self.node_index, "lhs": self.lhs, "rhs": self.rhs,
                "column": self.column, "direction": self.direction}

    @classmethod
    def from_dict(cls, data: dict) -> "Witness":
        return cls(data["param"], int(data["node_index"]), data["lhs"], data["rhs"],
                   data.get("column"), data.get("direction"))


@dataclass(frozen=True)
class DominationReport:
    mode: DominationMode
    pair: Tuple[str, str]
    u: Optional[LatticeVector]
    samples: List[Sample]
    earliest_pass: Optional[float]
    verdict: Verdict
    witness: Optional[Witness] = None
    witnesses: List[Witness] = field(default_factory=list)
    eps: float = DEFAULT_EPS
    shift: float = 0.0
    grid: str = ""
    lower_bound_c: Optional[float] = None
    notes: List[str] = field(default_factory=list)

    @property
    def eventually_dominates(self) -> bool:
        return self.verdict in (Verdict.EVENTUAL, Verdict.ALL)

    def to_dict(self) -> dict:
        return {
            "kind": "domination",
            "mode": self.mode.value,
            "pair": list(self.pair),
            "u": self.u.to_dict() if self.u is not None else None,
            "samples": [s.to_dict() for s in self.samples],
            "earliest_pass": self.earliest_pass,
            "verdict": self.verdict.value,
            "witness": self.witness.to_dict() if self.witness else None,
            "witnesses": [w.to_dict() for w in self.witnesses],
            "eps": self.eps,
            "shift": self.shift,
            "grid": self.grid,
            "lower_bound_c": self.lower_bound_c,
            "notes": list(self.notes),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DominationReport":
        return cls(
            mode=DominationMode(data["mode"]),
            pair=tuple(data["pair"]),
            u=LatticeVector.from_dict(data["u"]) if data.get("u") else None,
            samples=[Sample.from_dict(s) for s in data["samples"]],
            earliest_pass=data.get("earliest_pass"),
            verdict=Verdict(data["verdict"]),
            witness=Witness.from_dict(data["witness"]) if data.get("witness") else None,
            witnesses=[Witness.from_dict(w) for w in data.get("witnesses", [])],
            eps=data.get("eps", DEFAULT_EPS),
            shift=data.get("shift", 0.0),
            grid=data.get("grid", ""),
            lower_bound_c=data.get("lower_bound_c"),
            notes=list(data.get("notes", [])),
        )


@dataclass(frozen=True)
class WindowReport:
    lambda0: float
    side: Side
    samples: List[Sample]
    delta_found: float
    verdict: WindowVerdict
    kind: str = "resolvent_domination"
    pair: Tuple[str, str] = ("", "")
    eps: float = DEFAULT_EPS
    skipped: List[float] = field(default_factory=list)
    witness: Optional[Witness] = None

    @property
    def window_holds(self) -> bool:
        return self.verdict in (WindowVerdict.ALL, WindowVerdict.OBSERVED)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "lambda0": self.lambda0,
            "side": self.side.value,
            "pair": list(self.pair),
            "samples": [s.to_dict() for s in self.samples],
            "delta_found": self.delta_found,
            "verdict": self.verdict.value,
            "eps": self.eps,
            "skipped": list(self.skipped),
            "witness": self.witness.to_dict() if self.witness else None,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "WindowReport":
        return cls(
            lambda0=data["lambda0"],
            side=Side(data["side"]),
            samples=[Sample.from_dict(s) for s in data["samples"]],
            delta_found=data["delta_found"],
            verdict=WindowVerdict(data["verdict"]),
            kind=data.get("kind", "resolvent_domination"),
            pair=tuple(data.get("pair", ("", ""))),
            eps=data.get("eps", DEFAULT_EPS),
            skipped=list(data.get("skipped", [])),
            witness=Witness.from_dict(data["witness"]) if data.get("witness") else None,
        )


@dataclass(frozen=True)
class ConverseWitness:
    """A trial vector f and lambda violating 0 <= Res(lambda,A)f <= Res(lambda,B)f."""
    trial: int
    f: LatticeVector
    lam: float
    node_index: int
    violation: str
    value: float

    def to_dict(self) -> dict:
        return {"trial": self.trial, "f": self.f.to_dict(), "lambda": self.lam, "node_index": self.node_index,
                "violation": self.violation, "value": self.value}


@dataclass(frozen=True)
class EquivalenceAudit:
    op_name: str
    verdicts: Dict[str, bool]
    per_trial: Dict[str, List[bool]]

    @property
    def consistent(self) -> bool:
        return len(set(self.verdicts.values())) == 1

    def to_dict(self) -> dict:
        return {"kind": "cesaro_equivalence_audit", "op": self.op_name, "verdicts": dict(self.verdicts),
                "per_trial": {k: list(v) for k, v in self.per_trial.items()}, "consistent": self.consistent}


# --- Shared helpers ---

def _rightmost_argmin(values: np.ndarray) -> int:
    values = np.asarray(values)
    return int(values.size - 1 - np.argmin(values[::-1]))


def _outer_grid(first: GridSpec, second: GridSpec) -> GridSpec:
    if first == second:
        return first
    try:
        embedding_indices(first, second)
        return second
    except GridMismatchError:
        embedding_indices(second, first)
        return first


def _plateau_tol(margins: Sequence[float]) -> float:
    """Rounding floor of a settled margin sequence."""
    return PLATEAU_RTOL * max(1.0, float(np.max(np.abs(margins))))


def _tail_monotone(margins: Sequence[float]) -> bool:
    """Non-decreasing up to the plateau floor, measured against the running maximum."""
    if len(margins) == 0:
        return True
    tol = _plateau_tol(margins)
    running = margins[0]
    for cur in margins[1:]:
        if cur < running - tol:
            return False
        running = max(running, cur)
    return True


def _tail_settles(margins: Sequence[float], eps: float) -> bool:
    """
    Non-decreasing tail, or a decreasing tail whose steps shrink geometrically
    toward a limit that stays above eps.
    """
    if _tail_monotone(margins):
        return True
    steps = np.diff(np.asarray(margins, dtype=float))
    if steps.size < 2 or np.any(steps >= 0.0):
        return False
    drops = -steps
    ratio = float(np.max(drops[1:] / drops[:-1]))
    if ratio >= 1.0:
        return False
    return margins[-1] - drops[-1] * ratio / (1.0 - ratio) > eps


def _sweep_verdict(params: Sequence[float], margins: Sequence[float], passes: Sequence[bool],
                   eps: float = DEFAULT_EPS) -> Tuple[Verdict, Optional[float]]:
    """Verdict plus the first parameter from which every later sample passes (None unless the verdict holds)."""
    count = len(passes)
    earliest = None
    for i in range(count - 1, -1, -1):
        if not passes[i]:
            break
        earliest = float(params[i])
    if all(passes):
        return Verdict.ALL, earliest
    tail = max(1, math.ceil(TAIL_FRACTION * count))
    if all(passes[-tail:]) and _tail_settles(margins[-tail:], eps):
        return Verdict.EVENTUAL, earliest
    return Verdict.NONE, None


def _check_time_inputs(f: LatticeVector, u: LatticeVector):
    f._check_same_grid(u)
    if np.any(u.values <= 0.0):
        bad = int(np.argmin(u.values))
        raise NonPositiveReferenceError(f"Reference vector has u[{bad}] = {u.values[bad]!r} <= 0")


def _spectral_hypothesis_note(A: OperatorHandle, B: OperatorHandle, shift: float) -> List[str]:
    """Flag the borderline case of the decay hypothesis Re sigma(A) < s(B)."""
    bound_a = spectral_bound(A)
    tol = eigen_tol(A, SPECTRAL_MATCH)
    if bound_a >= shift - tol:
        note = (f"s({A.name}) = {bound_a:.12g} is not below s({B.name}) = {shift:.12g}; "
                f"the rescaled dominated semigroup need not decay")
        logger.warning(note)
        return [note]
    return []


def default_reference(op: OperatorHandle) -> LatticeVector:
    """u = 1 on closed grids, the positive principal eigenvector on interior_only grids."""
    if op.grid.node_scheme == NodeScheme.INTERIOR_ONLY:
        vec = principal_eigenvector(op)
        if np.any(vec <= 0.0):
            raise PreconditionError(f"Principal eigenvector of {op.name} is not strictly positive")
        return LatticeVector(op.grid, vec)
    return ones(op.grid)


# --- Semigroup domination ---

def check_individual_semigroup_domination(A: OperatorHandle, B: OperatorHandle, f: LatticeVector,
                                          u: LatticeVector, grid: TimeGrid,
                                          eps: float = DEFAULT_EPS) -> DominationReport:
    """
    Sampled test of e^{tB}|f| - |e^{tA}f| >= c u with c > eps.

    Margins are gauge lower bounds for the pair rescaled by s(B); raw margins
    are e^{s(B) t} times the rescaled ones.
    """
    _check_time_inputs(f, u)
    cmp_grid = f.grid
    shift = spectral_bound(B)
    a_scaled, b_scaled = A.shifted(shift), B.shifted(shift)
    abs_f = np.abs(f.values)

    def evaluate(t):
        ea = transfer_matrix(expm(a_scaled, t).matrix, A.grid, cmp_grid)
        eb = transfer_matrix(expm(b_scaled, t).matrix, B.grid, cmp_grid)
        return eb @ abs_f, np.abs(ea @ f.values)

    samples, witnesses = [], []
    for t, (lhs, rhs) in zip(grid.values, sample_map(evaluate, grid.values)):
        ratio = (lhs - rhs) / u.values
        margin = float(np.min(ratio))
        passed = margin > eps
        samples.append(Sample(float(t), margin, passed, raw_margin=math.exp(shift * t) * margin))
        if not passed:
            i = _rightmost_argmin(ratio)
            witnesses.append(Witness(float(t), i, float(lhs[i]), float(rhs[i])))

    verdict, earliest = _sweep_verdict(grid.values, [s.margin for s in samples], [s.passed for s in samples], eps)
    logger.info(f"Individual domination {A.name} <= {B.name}: {verdict.value}, earliest_pass={earliest}")
    return DominationReport(
        mode=DominationMode.INDIVIDUAL,
        pair=(A.name, B.name),
        u=u,
        samples=samples,
        earliest_pass=earliest,
        verdict=verdict,
        witness=witnesses[0] if witnesses else None,
        witnesses=witnesses,
        eps=eps,
        shift=shift,
        grid=grid.describe(),
        notes=_spectral_hypothesis_note(A, B, shift),
    )


def check_uniform_semigroup_domination(A: OperatorHandle, B: OperatorHandle, grid: TimeGrid,
                                       eps: float = DEFAULT_EPS,
                                       lower_bound_u: Optional[LatticeVector] = None,
                                       lower_bound_phi: Optional[LatticeVector] = None,
                                       directions: Optional[Sequence[Tuple[str, LatticeVector]]] = None
                                       ) -> DominationReport:
    """
    Sampled test of the entrywise inequality |e^{tA}| <= e^{tB} + eps.

    Args:
        A, B: Operators on the same grid, or an interior_only grid and its
            closed counterpart.
        grid: Time samples.
        eps: Absolute tolerance on entries of the rescaled matrices.
        lower_bound_u, lower_bound_phi: If both are given, each sample also
            records the best c with e^{tB} - |e^{tA}| >= c u (w*phi)^T.
        directions: Named test vectors; an entrywise failure is reported
            through the first direction f with e^{tB}|f| not >= |e^{tA}f|.

    Returns:
        DominationReport in uniform_entrywise mode.
    """
    cmp_grid = _outer_grid(A.grid, B.grid)
    shift = spectral_bound(B)
    a_scaled, b_scaled = A.shifted(shift), B.shifted(shift)
    rank_one = None
    if lower_bound_u is not None and lower_bound_phi is not None:
        if lower_bound_u.grid != cmp_grid or lower_bound_phi.grid != cmp_grid:
            raise DimensionMismatchError("Lower-bound vectors must live on the comparison grid")
        rank_one = np.outer(lower_bound_u.values, cmp_grid.weights * lower_bound_phi.values)
    for name, vec in directions or ():
        if vec.grid != cmp_grid:
            raise DimensionMismatchError(f"Direction {name} does not live on the comparison grid")

    def evaluate(t):
        ea = transfer_matrix(expm(a_scaled, t).matrix, A.grid, cmp_grid)
        eb = transfer_matrix(expm(b_scaled, t).matrix, B.grid, cmp_grid)
        return ea, eb

    samples, witnesses, bounds = [], [], []
    for t, (ea, eb) in zip(grid.values, sample_map(evaluate, grid.values)):
        gap = eb - np.abs(ea)
        margin = float(np.min(gap))
        passed = margin >= -eps
        bound = None
        if rank_one is not None:
            mask = rank_one > 0.0
            bound = float(np.min(gap[mask] / rank_one[mask]))
        bounds.append(bound)
        samples.append(Sample(float(t), margin, passed, raw_margin=math.exp(shift * t) * margin, lower_bound=bound))
        if not passed:
            witnesses.append(_uniform_witness(float(t), ea, eb, gap, eps, directions))

    verdict, earliest = _sweep_verdict(grid.values, [s.margin for s in samples], [s.passed for s in samples], eps)
    best_c = None
    if rank_one is not None and earliest is not None:
        best_c = float(min(b for s, b in zip(samples, bounds) if s.param >= earliest))
    logger.info(f"Uniform domination {A.name} <= {B.name}: {verdict.value}, earliest_pass={earliest}")
    return DominationReport(
        mode=DominationMode.UNIFORM_ENTRYWISE,
        pair=(A.name, B.name),
        u=lower_bound_u,
        samples=samples,
        earliest_pass=earliest,
        verdict=verdict,
        witness=witnesses[0] if witnesses else None,
        witnesses=witnesses,
        eps=eps,
        shift=shift,
        grid=grid.describe(),
        lower_bound_c=best_c,
        notes=_spectral_hypothesis_note(A, B, shift),
    )


def _uniform_witness(t: float, ea: np.ndarray, eb: np.ndarray, gap: np.ndarray, eps: float,
                     directions: Optional[Sequence[Tuple[str, LatticeVector]]]) -> Witness:
    for name, vec in directions or ():
        lhs = eb @ np.abs(vec.values)
        rhs = np.abs(ea @ vec.values)
        diff = lhs - rhs
        if np.min(diff) < -eps:
            i = _rightmost_argmin(diff)
            return Witness(t, i, float(lhs[i]), float(rhs[i]), direction=name)
    i = _rightmost_argmin(np.min(gap, axis=1))
    j = int(np.argmin(gap[i]))
    return Witness(t, i, float(eb[i, j]), float(abs(ea[i, j])), column=j)


def check_semigroup_eventual_positivity(op: OperatorHandle, f: LatticeVector, u: LatticeVector, grid: TimeGrid,
                                        eps: float = DEFAULT_EPS) -> DominationReport:
    """Sampled test of e^{t(A - s(A))} f >= c u with c > eps."""
    _check_time_inputs(f, u)
    if f.grid != op.grid:
        raise DimensionMismatchError(f"{op.name} acts on {op.grid}, f lives on {f.grid}")
    _require_positive_trial(f)
    shift = spectral_bound(op)
    scaled = op.shifted(shift)

    samples, witnesses = [], []
    for evolution in semigroup_sweep(scaled, grid.values):
        values = evolution.apply(f)
        ratio = values / u.values
        margin = float(np.min(ratio))
        passed = margin > eps
        t = evolution.parameter
        samples.append(Sample(t, margin, passed, raw_margin=math.exp(shift * t) * margin))
        if not passed:
            i = _rightmost_argmin(ratio)
            witnesses.append(Witness(t, i, float(values[i]), 0.0))

    verdict, earliest = _sweep_verdict(grid.values, [s.margin for s in samples], [s.passed for s in samples], eps)
    logger.info(f"Semigroup positivity for {op.name}: {verdict.value}, earliest_pass={earliest}")
    return DominationReport(
        mode=DominationMode.POSITIVITY,
        pair=(op.name, op.name),
        u=u,
        samples=samples,
        earliest_pass=earliest,
        verdict=verdict,
        witness=witnesses[0] if witnesses else None,
        witnesses=witnesses,
        eps=eps,
        shift=shift,
        grid=grid.describe(),
    )


# --- Resolvent windows ---

def _window_offsets(delta: float, depth: int) -> np.ndarray:
    if not delta > 0.0 or depth < 0:
        raise PreconditionError(f"Window needs delta > 0 and depth >= 0, got {delta}, {depth}")
    return delta * 2.0 ** -np.arange(depth + 1, dtype=float)


def _sample_usable(ops: Sequence[OperatorHandle], lam: float) -> bool:
    for op in ops:
        dist, _ = nearest_eigenvalue(op, lam)
        if dist <= EIGEN_SKIP:
            return False
        if (np.linalg.norm(op.matrix, 1) + abs(lam)) / dist > COND_SKIP:
            return False
    return True


def _window_lambdas(ops: Sequence[OperatorHandle], lambda0: float, side: Side, delta: float,
                    depth: int) -> Tuple[List[Tuple[float, float]], List[float]]:
    """Usable (offset, lambda) pairs ordered from far to near, plus skipped lambdas."""
    sign = 1.0 if side == Side.RIGHT else -1.0
    usable, skipped = [], []
    for offset in _window_offsets(delta, depth):
        lam = lambda0 + sign * offset
        if _sample_usable(ops, lam):
            usable.append((float(offset), float(lam)))
        else:
            skipped.append(float(lam))
    if skipped:
        logger.info(f"Skipped {len(skipped)} window samples near the spectrum of "
                    f"{', '.join(op.name for op in ops)} (closest kept offset "
                    f"{usable[-1][0] if usable else float('nan'):.3e})")
    if not usable:
        raise PreconditionError(f"Every window sample around {lambda0} is too close to the spectrum")
    return usable, skipped


def _window_verdict(offsets: Sequence[float], passes: Sequence[bool]) -> Tuple[WindowVerdict, float]:
    """Verdict plus the largest offset with every closer sample passing."""
    delta_found = 0.0
    for offset, passed in zip(reversed(offsets), reversed(passes)):
        if not passed:
            break
        delta_found = float(offset)
    if all(passes):
        return WindowVerdict.ALL, delta_found
    tail = max(1, math.ceil(TAIL_FRACTION * len(passes)))
    if all(passes[-tail:]):
        return WindowVerdict.OBSERVED, delta_found
    return WindowVerdict.NONE, delta_found


def _require_side(side) -> Side:
    try:
        return Side(side)
    except ValueError:
        raise PreconditionError(f"side must be 'right' or 'left', got {side!r}")


def _require_positive_trial(f: LatticeVector):
    if np.any(f.values < 0.0) or not np.any(f.values > 0.0):
        raise PreconditionError("Trial vector must satisfy f >= 0 and f != 0")


def _transferred_solve(op: OperatorHandle, lam: float, values: np.ndarray, cmp_grid: GridSpec) -> np.ndarray:
    """Res(lambda, op) applied to a vector given on cmp_grid, result on cmp_grid."""
    rhs = transfer_values(values, cmp_grid, op.grid)
    return transfer_values(resolvent_solve(op, lam, rhs), op.grid, cmp_grid)


def check_resolvent_domination_window(A: OperatorHandle, B: OperatorHandle, f: LatticeVector,
                                      u: LatticeVector, lambda0: float, side="right",
                                      eps: float = DEFAULT_EPS, delta: float = DEFAULT_DELTA,
                                      depth: int = DEFAULT_DEPTH) -> WindowReport:
    """
    Resolvent domination near lambda0 = s(B) on one side.

    Right: Res(lambda,B)|f| - |Res(lambda,A)f| >= c u.
    Left:  -Res(mu,B)|f| - |Res(mu,A)f| >= c u.
    A pass needs c > eps.
    """
    side = _require_side(side)
    _check_time_inputs(f, u)
    lambda0 = float(lambda0)
    bound_b = spectral_bound(B)
    if abs(bound_b - lambda0) > eigen_tol(B, SPECTRAL_MATCH):
        raise PreconditionError(f"lambda0={lambda0} is not the spectral bound {bound_b:.12g} of {B.name}")
    dist_a, nearest_a = nearest_eigenvalue(A, lambda0)
    if dist_a <= SPECTRAL_MATCH:
        raise PreconditionError(f"lambda0={lambda0} is not in the resolvent set of {A.name} (eigenvalue {nearest_a})")

    cmp_grid = f.grid
    abs_f = np.abs(f.values)
    usable, skipped = _window_lambdas((A, B), lambda0, side, delta, depth)

    def evaluate(pair):
        _, lam = pair
        rb = _transferred_solve(B, lam, abs_f, cmp_grid)
        ra = np.abs(_transferred_solve(A, lam, f.values, cmp_grid))
        return (rb if side == Side.RIGHT else -rb), ra

    samples, witness = [], None
    for (offset, lam), (lhs, rhs) in zip(usable, sample_map(evaluate, usable)):
        ratio = (lhs - rhs) / u.values
        margin = float(np.min(ratio))
        passed = margin > eps
        samples.append(Sample(lam, margin, passed))
        if not passed and witness is None:
            i = _rightmost_argmin(ratio)
            witness = Witness(lam, i, float(lhs[i]), float(rhs[i]))

    verdict, delta_found = _window_verdict([o for o, _ in usable], [s.passed for s in samples])
    logger.info(f"Resolvent window {A.name} <= {B.name} at {lambda0:.6g} ({side.value}): {verdict.value}")
    return WindowReport(lambda0, side, samples, delta_found, verdict, kind="resolvent_domination",
                        pair=(A.name, B.name), eps=eps, skipped=skipped, witness=witness)


def _max_antimax_reports(op: OperatorHandle, trials: Sequence[LatticeVector], u: LatticeVector,
                         lambda0: float, side: Side, eps: float, delta: float,
                         depth: int) -> List[WindowReport]:
    """One window report per trial; each lambda is factored once for all trials."""
    usable, skipped = _window_lambdas((op,), lambda0, side, delta, depth)
    block = np.column_stack([trial.values for trial in trials])

    def evaluate(pair):
        _, lam = pair
        return (lam - lambda0) * resolvent_solve(op, lam, block)

    solved = sample_map(evaluate, usable)
    offsets = [o for o, _ in usable]
    reports = []
    for k in range(len(trials)):
        samples, witness = [], None
        for (_, lam), scaled in zip(usable, solved):
            ratio = scaled[:, k] / u.values
            margin = float(np.min(ratio))
            passed = margin > eps
            samples.append(Sample(lam, margin, passed))
            if not passed and witness is None:
                i = _rightmost_argmin(ratio)
                witness = Witness(lam, i, float(scaled[i, k]), 0.0)
        verdict, delta_found = _window_verdict(offsets, [s.passed for s in samples])
        reports.append(WindowReport(lambda0, side, samples, delta_found, verdict, kind="max_antimax",
                                    pair=(op.name, op.name), eps=eps, skipped=skipped, witness=witness))
    return reports


def _check_eigenvalue(op: OperatorHandle, lambda0: float):
    if not is_eigenvalue(op, lambda0, SPECTRAL_MATCH):
        _, nearest = nearest_eigenvalue(op, lambda0)
        raise PreconditionError(f"lambda0={lambda0} is not an eigenvalue of {op.name} (nearest {nearest})")


def check_max_antimax(op: OperatorHandle, f: LatticeVector, u: LatticeVector, lambda0: float,
                      side="right", eps: float = DEFAULT_EPS, delta: float = DEFAULT_DELTA,
                      depth: int = DEFAULT_DEPTH) -> WindowReport:
    """
    Maximum principle (right) or anti-maximum principle (left) at an eigenvalue.

    Each sample records c(lambda) = gauge((lambda - lambda0) Res(lambda, op) f, u).lower.
    """
    side = _require_side(side)
    _check_time_inputs(f, u)
    if f.grid != op.grid:
        raise DimensionMismatchError(f"{op.name} acts on {op.grid}, f lives on {f.grid}")
    _require_positive_trial(f)
    _check_eigenvalue(op, float(lambda0))
    report = _max_antimax_reports(op, [f], u, float(lambda0), side, eps, delta, depth)[0]
    logger.info(f"Max/anti-max window for {op.name} at {lambda0:.6g} ({side.value}): {report.verdict.value}")
    return report


# --- Converse witness search ---

def _hat_bump_trial(grid: GridSpec, rng: np.random.Generator) -> np.ndarray:
    count = int(rng.integers(1, 4))
    centers = rng.uniform(grid.a, grid.b, count)
    widths = rng.uniform(0.05, 0.3, count) * grid.length
    coeffs = rng.dirichlet(np.ones(count))
    x = grid.nodes
    periodic = grid.node_scheme == NodeScheme.PERIODIC_LEFT_CLOSED
    values = np.zeros(grid.n)
    for c, w, alpha in zip(centers, widths, coeffs):
        dist = np.abs(x - c)
        if periodic:
            dist = np.minimum(dist, grid.length - dist)
        values += alpha * np.maximum(1.0 - dist / w, 0.0)
    if not np.any(values > 0.0):
        values[grid.nearest_node(float(centers[0]))] = 1.0
    return values


def search_converse_witness(A: OperatorHandle, B: OperatorHandle, lambda0: float,
                            trial_count: int = 200, seed: int = DEFAULT_SEED,
                            delta: float = DEFAULT_DELTA, depth: int = DEFAULT_DEPTH) -> ConverseWitness:
    """
    Look for f >= 0 and lambda > lambda0 violating 0 <= Res(lambda,A)f <= Res(lambda,B)f.

    When A != B share the eigenvalue lambda0 such a violation must exist; a
    search that finds none raises InconclusiveWitnessError instead of
    reporting domination.
    """
    lambda0 = float(lambda0)
    if A.grid != B.grid:
        raise DimensionMismatchError(f"{A.name} and {B.name} live on different grids")
    if float(np.max(np.abs(A.matrix - B.matrix))) <= DISTINCT_TOL:
        raise PreconditionError(f"{A.name} and {B.name} coincide; no converse witness can exist")
    _check_eigenvalue(A, lambda0)
    _check_eigenvalue(B, lambda0)

    usable, _ = _window_lambdas((A, B), lambda0, Side.RIGHT, delta, depth)
    # closest samples first
    usable = usable[::-1]
    rng = np.random.default_rng(seed)
    for trial in range(trial_count):
        f = _hat_bump_trial(A.grid, rng)
        for _, lam in usable:
            ra = resolvent_solve(A, lam, f)
            rb = resolvent_solve(B, lam, f)
            tol = WITNESS_REL_TOL * max(1.0, float(np.max(np.abs(ra))), float(np.max(np.abs(rb))))
            if np.min(ra) < -tol:
                i = _rightmost_argmin(ra)
                witness = ConverseWitness(trial, LatticeVector(A.grid, f), lam, i, "negativity", float(ra[i]))
            elif np.min(rb - ra) < -tol:
                i = _rightmost_argmin(rb - ra)
                witness = ConverseWitness(trial, LatticeVector(A.grid, f), lam, i, "domination",
                                          float(rb[i] - ra[i]))
            else:
                continue
            logger.info(f"Converse witness for {A.name} vs {B.name}: trial {trial}, lambda={lam:.6g}, "
                        f"{witness.violation} at node {i}")
            return witness
    raise InconclusiveWitnessError(
        f"No violation of 0 <= Res(A)f <= Res(B)f found for {A.name} vs {B.name} in {trial_count} trials")


# --- Cesaro means ---

def _cesaro_reports(op: OperatorHandle, trials: Sequence[LatticeVector], u: LatticeVector, grid: TimeGrid,
                    eps: float, quad_points: int) -> Tuple[List[DominationReport], np.ndarray, OperatorHandle]:
    """Per-trial Cesaro reports sharing one sweep of C(r), plus P and the rescaled generator."""
    shift = spectral_bound(op)
    scaled = op.shifted(shift)
    projection = mean_ergodic_projection(scaled)
    means = cesaro_sweep(scaled, grid.values, quad_points)
    reports = []
    for f in trials:
        samples, witnesses = [], []
        for mean in means:
            values = mean.matrix @ f.values
            ratio = values / u.values
            margin = float(np.min(ratio))
            passed = margin > eps
            samples.append(Sample(mean.parameter, margin, passed))
            if not passed:
                i = _rightmost_argmin(ratio)
                witnesses.append(Witness(mean.parameter, i, float(values[i]), 0.0))
        verdict, earliest = _sweep_verdict(grid.values, [s.margin for s in samples], [s.passed for s in samples], eps)
        reports.append(DominationReport(
            mode=DominationMode.CESARO,
            pair=(op.name, op.name),
            u=u,
            samples=samples,
            earliest_pass=earliest,
            verdict=verdict,
            witness=witnesses[0] if witnesses else None,
            witnesses=witnesses,
            eps=eps,
            shift=shift,
            grid=grid.describe(),
            notes=[f"C(r) evaluated by {means[0].method}"],
        ))
    return reports, projection.P, scaled


def check_cesaro_eventual_positivity(op: OperatorHandle, f: LatticeVector, u: LatticeVector, grid: TimeGrid,
                                     eps: float = DEFAULT_EPS, quad_points: int = 16) -> DominationReport:
    """Sampled test of C(r)f >= c u (c > eps) for the generator rescaled to s = 0."""
    _check_time_inputs(f, u)
    if f.grid != op.grid:
        raise DimensionMismatchError(f"{op.name} acts on {op.grid}, f lives on {f.grid}")
    _require_positive_trial(f)
    report = _cesaro_reports(op, [f], u, grid, eps, quad_points)[0][0]
    logger.info(f"Cesaro positivity for {op.name}: {report.verdict.value}, earliest_pass={report.earliest_pass}")
    return report


def default_trial_set(grid: GridSpec, seed: int = DEFAULT_SEED) -> List[LatticeVector]:
    """Fixed set of 20 nonnegative, nonzero trial vectors on grid."""
    mid = 0.5 * (grid.a + grid.b)
    length = grid.length
    trials = [
        ones(grid),
        sample(grid, lambda x: (x > mid).astype(float)),
        sample(grid, lambda x: (x < mid).astype(float)),
        sample(grid, lambda x: (x - grid.a) / length),
        sample(grid, lambda x: (grid.b - x) / length),
        sample(grid, lambda x: 1.0 + np.cos(2.0 * np.pi * (x - grid.a) / length)),
        sample(grid, lambda x: 1.0 + np.sin(2.0 * np.pi * (x - grid.a) / length)),
        sample(grid, lambda x: np.sin(np.pi * (x - grid.a) / length) ** 2),
    ]
    for frac, width in ((0.1, 0.1), (0.3, 0.15), (0.5, 0.2), (0.7, 0.15), (0.9, 0.1)):
        center = grid.a + frac * length
        trials.append(sample(grid, lambda x, c=center, w=width * length: np.maximum(1.0 - np.abs(x - c) / w, 0.0)))
    rng = np.random.default_rng(seed)
    while len(trials) < 20:
        trials.append(LatticeVector(grid, _hat_bump_trial(grid, rng)))
    for trial in trials:
        _require_positive_trial(trial)
    return trials


def audit_cesaro_equivalence(op: OperatorHandle, trials: Optional[Sequence[LatticeVector]] = None,
                             u: Optional[LatticeVector] = None, grid: Optional[TimeGrid] = None,
                             eps: float = DEFAULT_EPS, delta: float = DEFAULT_DELTA,
                             depth: int = DEFAULT_DEPTH, quad_points: int = 16) -> EquivalenceAudit:
    """
    Four verdicts that should agree for a generator with bounded rescaled semigroup:
    eventual positivity of C(r)f, positivity of Pf, the maximum principle on the
    right and the anti-maximum principle on the left of 0 (after rescaling).
    Each verdict holds when it holds for every trial vector.
    """
    trials = list(trials) if trials is not None else default_trial_set(op.grid)
    u = u if u is not None else ones(op.grid)
    grid = grid if grid is not None else TimeGrid.log(1.0, 400.0, 12)
    for trial in trials:
        _require_positive_trial(trial)

    cesaro_reports, projection, scaled = _cesaro_reports(op, trials, u, grid, eps, quad_points)
    right = _max_antimax_reports(scaled, trials, u, 0.0, Side.RIGHT, eps, delta, depth)
    left = _max_antimax_reports(scaled, trials, u, 0.0, Side.LEFT, eps, delta, depth)
    per_trial = {
        "cesaro_positivity": [r.eventually_dominates for r in cesaro_reports],
        "projection_positivity": [gauge_values(projection @ t.values, u.values).lower > eps for t in trials],
        "maximum_principle": [r.window_holds for r in right],
        "anti_maximum_principle": [r.window_holds for r in left],
    }
    verdicts = {name: all(flags) for name, flags in per_trial.items()}
    audit = EquivalenceAudit(op.name, verdicts, per_trial)
    if not audit.consistent:
        logger.warning(f"Equivalence audit for {op.name} disagrees: {verdicts}")
    return audit


