"""
CLI Reporting - command-line entry point, run configuration and report serialization.

Usage:
    evdom <command> [--op NAME | --a NAME --b NAME] [--n INT] [--beta FLOAT]
                    [--f SPEC] [--u SPEC] [--t-grid SPEC | --lambda0 FLOAT --side right|left]
                    [--eps FLOAT] [--seed INT] [--format json|csv] [--out PATH] [--config PATH]

Commands: op-build, spectrum, semigroup, resolvent, cesaro, check, scenario, export.

Exit codes: 0 when every asserted expectation holds, 1 when a check or
scenario fails (the report is still written), 2 on usage or configuration
errors. Diagnostics go to stderr; machine output goes to stdout or --out.
"""
import argparse
import csv
import io
import json
import logging
import math
import re
import sys
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from config import DEFAULT_EPS, DEFAULT_SEED, EVDOM_LOG_LEVEL, LOG_FORMAT
from criteria_checkers import (DominationReport, TimeGrid, WindowReport, audit_cesaro_equivalence,
                               check_cesaro_eventual_positivity, check_individual_semigroup_domination,
                               check_max_antimax, check_resolvent_domination_window,
                               check_semigroup_eventual_positivity, check_uniform_semigroup_domination,
                               default_reference, search_converse_witness)
from errors import ConfigError, EvdomError, InconclusiveWitnessError
from evolution_engine import cesaro, laplace_transform_check, resolvent
from lattice_core import GridSpec, LatticeVector, NodeScheme, gauge_norm, gauge_values, ones, sample
from operator_gallery import DEFAULT_INTERVALS, OperatorHandle, build_operator, save_operator, test_function_fn
from scenarios import SCENARIOS, run_scenario
from spectral_engine import analyze, mean_ergodic_projection, spectral_bound

logger = logging.getLogger("evdom.cli")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

COMMANDS = ("op-build", "spectrum", "semigroup", "resolvent", "cesaro", "check", "scenario", "export")
CHECK_KINDS = ("dominate", "window", "maxprinciple", "converse", "cesaro")
OUTPUT_FORMATS = ("json", "csv")

PARAMETER_KEYS = (
    "check", "name", "op", "a", "b", "n", "beta", "f", "u", "t_grid", "lambda0", "side", "k", "mode",
    "lam", "quad_points", "delta", "depth", "trials", "lower_bound", "n_grid", "beta1", "beta2", "m", "l",
)
CONFIG_KEYS = ("command", "parameters", "output_format", "output_path", "seed", "eps")

SCENARIO_PARAMETERS = {
    "rank-one": ("n_grid",),
    "antisym-vs-neumann": ("n_grid",),
    "nonlocal-beta": ("beta1", "beta2", "n_grid"),
    "sandwich": ("n_grid",),
    "odd-order": ("m", "l", "n_grid"),
    "cesaro": ("n_grid",),
}

REFERENCES = {
    "op-build": "discretized generator",
    "spectrum": "spectral bound and peripheral spectrum",
    "semigroup": "eventual positivity of semigroup orbits",
    "resolvent": "resolvent evaluation with Laplace-transform cross-check",
    "cesaro": "eventual positivity of Cesaro means",
    "check:dominate:individual": "individual eventual domination of semigroups",
    "check:dominate:uniform": "uniform eventual domination of semigroups",
    "check:window": "resolvent domination near the spectral bound",
    "check:maxprinciple": "maximum and anti-maximum principles",
    "check:converse": "uniqueness of dominating generators sharing a pole",
    "check:cesaro": "four-way equivalence for bounded rescaled semigroups",
    "scenario": "named reproducible experiment",
    "export": "Matrix Market export",
}

CSV_COLUMNS = ("param", "margin", "pass", "raw_margin", "lower_bound")
CELL_CENTERED_OPS = ("neumann", "periodic", "antisymmetric")


@dataclass
class RunConfig:
    """Fully-resolved run configuration; echoed into every output document."""
    command: str
    parameters: Dict[str, Any] = field(default_factory=dict)
    output_format: str = "json"
    output_path: Optional[str] = None
    seed: int = DEFAULT_SEED
    eps: float = DEFAULT_EPS

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"Unknown command '{self.command}' (choose from {', '.join(COMMANDS)})")
        if self.output_format not in OUTPUT_FORMATS:
            raise ConfigError(f"Unknown output format '{self.output_format}'")
        unknown = sorted(set(self.parameters) - set(PARAMETER_KEYS))
        if unknown:
            raise ConfigError(f"Unknown parameters: {', '.join(unknown)}")
        self.seed = int(self.seed)
        self.eps = float(self.eps)

    def get(self, key: str, default: Any = None) -> Any:
        """Parameter value, recording the default so the echo is fully resolved."""
        value = self.parameters.get(key)
        if value is None:
            value = default
            self.parameters[key] = value
        return value

    def require(self, key: str) -> Any:
        value = self.parameters.get(key)
        if value is None:
            raise ConfigError(f"{self.command} needs --{key.replace('_', '-')}")
        return value

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        unknown = sorted(set(data) - set(CONFIG_KEYS))
        if unknown:
            raise ConfigError(f"Unknown configuration keys: {', '.join(unknown)}")
        if "command" not in data:
            raise ConfigError("Configuration needs a command")
        return cls(
            command=data["command"],
            parameters=dict(data.get("parameters") or {}),
            output_format=data.get("output_format", "json"),
            output_path=data.get("output_path"),
            seed=data.get("seed", DEFAULT_SEED),
            eps=data.get("eps", DEFAULT_EPS),
        )

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "parameters": {k: self.parameters[k] for k in sorted(self.parameters)},
            "output_format": self.output_format,
            "output_path": self.output_path,
            "seed": self.seed,
            "eps": self.eps,
        }


# --- Serialization ---

def format_float(value: float) -> str:
    """17 significant digits, lowercase scientific notation."""
    if math.isnan(value):
        return "NaN"
    if math.isinf(value):
        return "Infinity" if value > 0 else "-Infinity"
    return f"{value:.16e}"


def _plain(obj: Any) -> Any:
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def encode_json(obj: Any, indent: int = 2, _level: int = 0) -> str:
    """JSON text with every float written by format_float; key order preserved."""
    obj = _plain(obj)
    if obj is None or isinstance(obj, (bool, str)):
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return format_float(obj)
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {encode_json(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [pad + encode_json(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"Cannot serialize {type(obj).__name__}")


def report_from_dict(data: dict):
    """Rebuild a DominationReport or WindowReport from its dictionary form."""
    if data.get("kind") == "domination":
        return DominationReport.from_dict(data)
    if data.get("kind") in ("resolvent_domination", "max_antimax"):
        return WindowReport.from_dict(data)
    raise ConfigError(f"Unknown report kind '{data.get('kind')}'")


def decode_report_json(text: str):
    """Report held in a JSON output document (or a bare report dictionary)."""
    data = json.loads(text)
    if "report" in data:
        provenance = data.get("provenance", {})
        if not {"paper_anchor", "tolerance"} <= set(provenance):
            raise ConfigError(f"Output document has an incomplete provenance block: {sorted(provenance)}")
    return report_from_dict(data.get("report", data))


def encode_report_csv(document: dict) -> str:
    """
    Plot-ready CSV: a '# {json}' header line with everything but the samples,
    then one row per sample.
    """
    report = document.get("report")
    if not report or "samples" not in report:
        raise ConfigError("CSV output is only available for sampled reports")
    header = {k: v for k, v in document.items() if k not in ("report", "samples")}
    header["report"] = {k: v for k, v in report.items() if k != "samples"}
    buffer = io.StringIO()
    buffer.write("# " + encode_json(header, indent=0).replace("\n", "") + "\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for s in report["samples"]:
        writer.writerow([
            format_float(s["param"]),
            format_float(s["margin"]),
            "true" if s["pass"] else "false",
            "" if s.get("raw_margin") is None else format_float(s["raw_margin"]),
            "" if s.get("lower_bound") is None else format_float(s["lower_bound"]),
        ])
    return buffer.getvalue()


def decode_report_csv(text: str):
    """Inverse of encode_report_csv."""
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# "):
        raise ConfigError("CSV report is missing its '# {json}' header line")
    header = json.loads(lines[0][2:])
    report = dict(header["report"])
    samples = []
    for row in csv.DictReader(lines[1:]):
        samples.append({
            "param": float(row["param"]),
            "margin": float(row["margin"]),
            "pass": row["pass"] == "true",
            "raw_margin": float(row["raw_margin"]) if row.get("raw_margin") else None,
            "lower_bound": float(row["lower_bound"]) if row.get("lower_bound") else None,
        })
    report["samples"] = samples
    return report_from_dict(report)


# --- Vector specs ---

_SPEC_PATTERNS = (
    ("ones", re.compile(r"^ones$")),
    ("bump", re.compile(r"^bump:([^:]+):([^:]+)$")),
    ("fn", re.compile(r"^fn:(\d+)$")),
    ("indicator", re.compile(r"^indicator:([^:]+):([^:]+)$")),
    ("file", re.compile(r"^file:(.+)$")),
)


def parse_vector_spec(spec: str, grid: GridSpec) -> LatticeVector:
    """
    Build a grid function from ones, bump:x0:width, fn:N, indicator:a:b or file:PATH.

    file:PATH reads whitespace-separated values (one per node) or a JSON
    LatticeVector written by this tool.
    """
    text = spec.strip()
    for kind, pattern in _SPEC_PATTERNS:
        match = pattern.match(text)
        if not match:
            continue
        try:
            if kind == "ones":
                return ones(grid)
            if kind == "bump":
                x0, width = float(match.group(1)), float(match.group(2))
                if width <= 0.0:
                    raise ConfigError(f"Bump width must be positive in '{spec}'")
                return sample(grid, lambda x: np.maximum(1.0 - np.abs(x - x0) / width, 0.0))
            if kind == "fn":
                return test_function_fn(int(match.group(1)), grid)
            if kind == "indicator":
                a, b = float(match.group(1)), float(match.group(2))
                return sample(grid, lambda x: ((x >= a) & (x <= b)).astype(float))
            return _load_vector(Path(match.group(1)), grid)
        except ValueError as e:
            raise ConfigError(f"Cannot read vector spec '{spec}': {e}") from e
    raise ConfigError(f"Unknown vector spec '{spec}' (use ones, bump:x0:width, fn:N, indicator:a:b, file:PATH)")


def _load_vector(path: Path, grid: GridSpec) -> LatticeVector:
    if not path.exists():
        raise ConfigError(f"Vector file {path} does not exist")
    if path.suffix == ".json":
        vec = LatticeVector.from_dict(json.loads(path.read_text()))
        if vec.grid != grid:
            raise ConfigError(f"Vector in {path} lives on {vec.grid}, expected {grid}")
        return vec
    values = np.loadtxt(path, dtype=float).reshape(-1)
    if values.size != grid.n:
        raise ConfigError(f"Vector file {path} has {values.size} values, grid has {grid.n} nodes")
    return LatticeVector(grid, values)


# --- Operators ---

def _build(name: str, n: Optional[int], beta: Optional[float]) -> OperatorHandle:
    return build_operator(name, n=n, beta=beta)


def _cell_centered_pair(config: RunConfig, first: OperatorHandle,
                        second: OperatorHandle) -> Optional[Tuple[OperatorHandle, OperatorHandle]]:
    """Neumann, periodic and anti-symmetric pairs rebuilt on one cell-centered grid."""
    keys = [config.parameters[k].strip().lower().replace("_", "-") for k in ("a", "b")]
    if not all(k in CELL_CENTERED_OPS for k in keys):
        return None
    interval = DEFAULT_INTERVALS["antisymmetric"] if "antisymmetric" in keys else (first.grid.a, first.grid.b)
    n = max(first.n, second.n)
    pair = tuple(build_operator(k, n=n, interval=interval, node_scheme=NodeScheme.CELL_CENTERED) for k in keys)
    logger.info(f"Rebuilt {keys[0]} and {keys[1]} on a shared cell-centered grid over {interval} with {n} nodes")
    return pair


def _build_pair(config: RunConfig) -> Tuple[OperatorHandle, OperatorHandle]:
    """
    Build --a and --b. When one lives on an interior_only grid, the other is
    rebuilt with n + 2 closed nodes so both share a spacing. Neumann, periodic
    and anti-symmetric operators on different grids are rebuilt cell-centered.
    """
    n, beta = config.get("n"), config.get("beta")
    first = _build(config.require("a"), n, beta)
    second = _build(config.require("b"), n, beta)
    if first.grid != second.grid:
        interior = NodeScheme.INTERIOR_ONLY
        if first.grid.node_scheme == interior and second.grid.node_scheme != interior:
            second = _build(config.parameters["b"], first.n + 2, beta)
        elif second.grid.node_scheme == interior and first.grid.node_scheme != interior:
            first = _build(config.parameters["a"], second.n + 2, beta)
        else:
            first, second = _cell_centered_pair(config, first, second) or (first, second)
    return first, second


def _vector(config: RunConfig, key: str, grid: GridSpec, op: OperatorHandle) -> LatticeVector:
    spec = config.parameters.get(key)
    if spec is None:
        if key == "u":
            config.parameters[key] = "default"
            return default_reference(op)
        spec = config.get(key, "ones")
    return parse_vector_spec(spec, grid)


def _time_grid(config: RunConfig, default: str) -> TimeGrid:
    return TimeGrid.parse(config.get("t_grid", default))


# --- Documents ---

def _document(config: RunConfig, reference: str, verdicts: Dict[str, Any], passed: bool, message: str,
              report: Optional[dict] = None, **extra) -> Tuple[dict, int]:
    samples = report.get("samples", []) if report else []
    witnesses = []
    if report:
        witnesses = report.get("witnesses") or ([report["witness"]] if report.get("witness") else [])
    document = {
        "config": config.to_dict(),
        "status": {"status": "success" if passed else "failure", "message": message},
        "verdicts": verdicts,
        "samples": [{"param": s["param"], "margin": s["margin"], "pass": s["pass"]} for s in samples],
        "witnesses": witnesses,
        "provenance": {"paper_anchor": reference, "tolerance": config.eps},
    }
    document.update(extra)
    if report is not None:
        document["report"] = report
    return document, EXIT_OK if passed else EXIT_FAILURE


def _cmd_op_build(config: RunConfig):
    op = _build(config.require("op"), config.get("n"), config.get("beta"))
    meta = op.metadata()
    if op.exact_spectrum is not None:
        meta["exact_spectrum"] = [[complex(v).real, complex(v).imag, desc] for v, desc in op.exact_spectrum]
    return _document(config, REFERENCES["op-build"], {}, True, f"Built {op.name} on {op.n} nodes",
                     operator=meta, norm_max=op.norm_max)


def _cmd_spectrum(config: RunConfig):
    op = _build(config.require("op"), config.get("n"), config.get("beta"))
    data = analyze(op)
    k = int(config.get("k", 6))
    top = data.top(k)
    spectrum = {
        "eigenvalues": [[float(v.real), float(v.imag)] for v in top],
        "spectral_bound": data.spectral_bound,
        "dominant": data.dominant,
        "gap": data.gap,
        "peripheral_multiplicity": data.peripheral_multiplicity,
        "symmetric_path": data.symmetric_path,
    }
    if op.exact_spectrum is not None:
        spectrum["exact"] = [[complex(v).real, complex(v).imag, desc] for v, desc in op.exact_spectrum]
    verdicts = {"dominant": data.dominant}
    return _document(config, REFERENCES["spectrum"], verdicts, True,
                     f"{len(top)} eigenvalues of {op.name}, s = {data.spectral_bound:.12g}", spectrum=spectrum)


def _cmd_semigroup(config: RunConfig):
    op = _build(config.require("op"), config.get("n"), config.get("beta"))
    f = _vector(config, "f", op.grid, op)
    u = _vector(config, "u", op.grid, op)
    report = check_semigroup_eventual_positivity(op, f, u, _time_grid(config, "log:0.01:50:100"), config.eps)
    verdicts = {"verdict": report.verdict.value, "earliest_pass": report.earliest_pass}
    return _document(config, REFERENCES["semigroup"], verdicts, report.eventually_dominates,
                     f"Orbit positivity for {op.name}: {report.verdict.value}", report.to_dict())


def _cmd_resolvent(config: RunConfig):
    op = _build(config.require("op"), config.get("n"), config.get("beta"))
    lam = float(config.require("lam"))
    f = _vector(config, "f", op.grid, op)
    u = _vector(config, "u", op.grid, op)
    values = resolvent(op, lam).apply(f)
    margin = gauge_values(values, u.values).lower
    norm = gauge_norm(LatticeVector(op.grid, values), u)
    bound = spectral_bound(op)
    residual = None
    if lam > bound + 0.1:
        residual = laplace_transform_check(op, lam, quad_points=int(config.get("quad_points", 16)))
    verdicts = {"strongly_positive": margin > config.eps}
    return _document(config, REFERENCES["resolvent"], verdicts, True,
                     f"Res({lam:g}, {op.name}) f has gauge margin {margin:.6g}",
                     values=values.tolist(), margin=margin, gauge_norm=norm, spectral_bound=bound,
                     laplace_residual=residual)


def _cmd_cesaro(config: RunConfig):
    op = _build(config.require("op"), config.get("n"), config.get("beta"))
    f = _vector(config, "f", op.grid, op)
    u = _vector(config, "u", op.grid, op)
    grid = _time_grid(config, "log:1:400:12")
    quad_points = int(config.get("quad_points", 16))
    report = check_cesaro_eventual_positivity(op, f, u, grid, config.eps, quad_points)
    scaled = op.shifted(spectral_bound(op))
    projection = mean_ergodic_projection(scaled).P
    distance = [float(np.max(np.abs(cesaro(scaled, r, quad_points).matrix - projection))) for r in grid.values]
    verdicts = {"verdict": report.verdict.value, "earliest_pass": report.earliest_pass}
    return _document(config, REFERENCES["cesaro"], verdicts, report.eventually_dominates,
                     f"Cesaro positivity for {op.name}: {report.verdict.value}", report.to_dict(),
                     projection_distance=distance)


def _cmd_check(config: RunConfig):
    kind = config.require("check")
    if kind == "dominate":
        a, b = _build_pair(config)
        mode = config.get("mode", "individual")
        grid = _time_grid(config, "log:0.01:50:200")
        if mode == "individual":
            f = _vector(config, "f", a.grid, a)
            u = _vector(config, "u", a.grid, a)
            report = check_individual_semigroup_domination(a, b, f, u, grid, config.eps)
        elif mode == "uniform":
            lower = None
            if config.get("lower_bound", False):
                outer = a.grid if a.grid.n >= b.grid.n else b.grid
                lower = ones(outer)
            report = check_uniform_semigroup_domination(a, b, grid, config.eps, lower, lower)
        else:
            raise ConfigError(f"Unknown domination mode '{mode}' (use individual or uniform)")
        verdicts = {"verdict": report.verdict.value, "earliest_pass": report.earliest_pass,
                    "lower_bound_c": report.lower_bound_c}
        return _document(config, REFERENCES[f"check:dominate:{mode}"], verdicts, report.eventually_dominates,
                         f"{b.name} vs {a.name}: {report.verdict.value}", report.to_dict())
    if kind == "window":
        a, b = _build_pair(config)
        f = _vector(config, "f", b.grid, b)
        u = _vector(config, "u", b.grid, b)
        lambda0 = float(config.get("lambda0", spectral_bound(b)))
        report = check_resolvent_domination_window(a, b, f, u, lambda0, config.get("side", "right"), config.eps,
                                                   float(config.get("delta", 0.5)), int(config.get("depth", 20)))
        return _window_document(config, "check:window", report)
    if kind == "maxprinciple":
        op = _build(config.require("op"), config.get("n"), config.get("beta"))
        f = _vector(config, "f", op.grid, op)
        u = _vector(config, "u", op.grid, op)
        lambda0 = float(config.get("lambda0", spectral_bound(op)))
        report = check_max_antimax(op, f, u, lambda0, config.get("side", "right"), config.eps,
                                   float(config.get("delta", 0.5)), int(config.get("depth", 20)))
        return _window_document(config, "check:maxprinciple", report)
    if kind == "converse":
        a, b = _build_pair(config)
        lambda0 = float(config.get("lambda0", spectral_bound(b)))
        trials = int(config.get("trials", 200))
        try:
            witness = search_converse_witness(a, b, lambda0, trials, config.seed)
        except InconclusiveWitnessError as e:
            return _document(config, REFERENCES["check:converse"], {"witness_found": False}, False, str(e))
        return _document(config, REFERENCES["check:converse"], {"witness_found": True}, True,
                         f"{witness.violation} violation at lambda = {witness.lam:.6g}", witness=witness.to_dict())
    if kind == "cesaro":
        op = _build(config.require("op"), config.get("n"), config.get("beta"))
        audit = audit_cesaro_equivalence(op, eps=config.eps)
        verdicts = dict(audit.verdicts)
        verdicts["consistent"] = audit.consistent
        return _document(config, REFERENCES["check:cesaro"], verdicts, audit.consistent,
                         f"Equivalence audit for {op.name}: {'consistent' if audit.consistent else 'inconsistent'}",
                         audit=audit.to_dict())
    raise ConfigError(f"Unknown check '{kind}' (choose from {', '.join(CHECK_KINDS)})")


def _window_document(config: RunConfig, key: str, report: WindowReport):
    verdicts = {"verdict": report.verdict.value, "delta_found": report.delta_found}
    return _document(config, REFERENCES[key], verdicts, report.window_holds,
                     f"{report.kind} window ({report.side.value}) at {report.lambda0:.6g}: {report.verdict.value}",
                     report.to_dict())


def _cmd_scenario(config: RunConfig):
    name = config.require("name")
    key = name.strip().lower().replace("_", "-")
    if key not in SCENARIOS:
        raise ConfigError(f"Unknown scenario '{name}' (choose from {', '.join(SCENARIOS)})")
    kwargs = {p: config.parameters[p] for p in SCENARIO_PARAMETERS[key] if config.parameters.get(p) is not None}
    if key == "odd-order":
        kwargs["seed"] = config.seed
    result = run_scenario(key, **kwargs)
    verdicts = {e.label: e.matched for e in result.sub_reports}
    return _document(config, REFERENCES["scenario"], verdicts, result.passed,
                     f"Scenario {key}: {'pass' if result.passed else 'fail'}", scenario=result.to_dict())


def _cmd_export(config: RunConfig):
    op = _build(config.require("op"), config.get("n"), config.get("beta"))
    if not config.output_path:
        raise ConfigError("export needs --out")
    matrix_path, sidecar = save_operator(op, config.output_path)
    return _document(config, REFERENCES["export"], {}, True, f"Exported {op.name}",
                     files=[str(matrix_path), str(sidecar)])


HANDLERS = {
    "op-build": _cmd_op_build,
    "spectrum": _cmd_spectrum,
    "semigroup": _cmd_semigroup,
    "resolvent": _cmd_resolvent,
    "cesaro": _cmd_cesaro,
    "check": _cmd_check,
    "scenario": _cmd_scenario,
    "export": _cmd_export,
}


# --- Argument parsing ---

def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--eps", type=float, help=f"Strict-positivity tolerance (default {DEFAULT_EPS:g})")
    common.add_argument("--seed", type=int, help=f"Random seed (default {DEFAULT_SEED})")
    common.add_argument("--format", dest="output_format", choices=OUTPUT_FORMATS, help="Output format")
    common.add_argument("--out", dest="output_path", help="Output path (stdout by default)")
    common.add_argument("--config", help="JSON file with a run configuration")
    common.add_argument("--log-level", help="Logging level for stderr diagnostics")
    return common


def _operator_options(parser: argparse.ArgumentParser, pair: bool = False):
    if pair:
        parser.add_argument("--a", help="Dominated operator")
        parser.add_argument("--b", help="Dominating operator")
    else:
        parser.add_argument("--op", help="Operator name, e.g. neumann or odd-order-1")
    parser.add_argument("--n", type=int, help="Grid size")
    parser.add_argument("--beta", type=float, help="Coupling constant for nonlocal-beta")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evdom",
                                     description="Numerical checks for eventual domination and positivity")
    common = _common_options()
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("op-build", "export"):
        _operator_options(sub.add_parser(name, parents=[common], help=REFERENCES[name]))

    spectrum = sub.add_parser("spectrum", parents=[common], help=REFERENCES["spectrum"])
    _operator_options(spectrum)
    spectrum.add_argument("--k", type=int, help="Number of leading eigenvalues (default 6)")

    for name in ("semigroup", "cesaro"):
        p = sub.add_parser(name, parents=[common], help=REFERENCES[name])
        _operator_options(p)
        p.add_argument("--f", help="Vector spec for f")
        p.add_argument("--u", help="Vector spec for the reference u")
        p.add_argument("--t-grid", dest="t_grid", help="log:a:b:n, linear:a:b:n or list:t1,t2,...")
        if name == "cesaro":
            p.add_argument("--quad-points", dest="quad_points", type=int)

    res = sub.add_parser("resolvent", parents=[common], help=REFERENCES["resolvent"])
    _operator_options(res)
    res.add_argument("--lam", type=float, help="Spectral parameter")
    res.add_argument("--f", help="Vector spec for f")
    res.add_argument("--u", help="Vector spec for the reference u")
    res.add_argument("--quad-points", dest="quad_points", type=int)

    check = sub.add_parser("check", parents=[common], help="Run one criterion checker")
    check.add_argument("check", choices=CHECK_KINDS)
    check.add_argument("--op", help="Operator (maxprinciple, cesaro)")
    _operator_options(check, pair=True)
    check.add_argument("--f", help="Vector spec for f")
    check.add_argument("--u", help="Vector spec for the reference u")
    check.add_argument("--mode", choices=("individual", "uniform"))
    check.add_argument("--t-grid", dest="t_grid")
    check.add_argument("--lower-bound", dest="lower_bound", action="store_true", default=None,
                       help="Also fit the rank-one lower bound c u (w*phi)^T with u = phi = 1")
    check.add_argument("--lambda0", type=float)
    check.add_argument("--side", choices=("right", "left"))
    check.add_argument("--delta", type=float)
    check.add_argument("--depth", type=int)
    check.add_argument("--trials", type=int)

    scenario = sub.add_parser("scenario", parents=[common], help=REFERENCES["scenario"])
    scenario.add_argument("name", choices=sorted(SCENARIOS))
    scenario.add_argument("--n-grid", dest="n_grid", type=int)
    scenario.add_argument("--beta1", type=float)
    scenario.add_argument("--beta2", type=float)
    scenario.add_argument("--m", type=int)
    scenario.add_argument("--l", type=int)
    return parser


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    data: Dict[str, Any] = {}
    if args.config:
        path = Path(args.config)
        try:
            data = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"Cannot read configuration {path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"Configuration {path} must hold a JSON object")
        if data.get("command", args.command) != args.command:
            raise ConfigError(f"Configuration is for '{data['command']}', not '{args.command}'")
    merged = RunConfig.from_dict({**data, "command": args.command})
    for key in PARAMETER_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            merged.parameters[key] = value
    for key in ("output_format", "output_path", "seed", "eps"):
        value = getattr(args, key, None)
        if value is not None:
            setattr(merged, key, value)
    return RunConfig(**{k: getattr(merged, k) for k in CONFIG_KEYS})


def _emit(document: dict, config: RunConfig):
    if config.output_format == "csv":
        text = encode_report_csv(document)
    else:
        text = encode_json(document) + "\n"
    # export writes the operator to --out; its document goes to stdout
    if config.output_path and config.command != "export":
        Path(config.output_path).write_text(text)
    else:
        sys.stdout.write(text)


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse argv, run one command, write its document. Returns the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv) if argv is not None else None)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else EXIT_USAGE

    logging.basicConfig(level=(args.log_level or EVDOM_LOG_LEVEL).upper(), format=LOG_FORMAT, stream=sys.stderr)
    try:
        config = _resolve_config(args)
        document, code = HANDLERS[config.command](config)
        _emit(document, config)
        return code
    except (ConfigError, ValueError) as e:
        print(f"evdom: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except EvdomError as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(f"evdom: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_FAILURE
