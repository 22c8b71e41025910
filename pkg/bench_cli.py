"""
Benchmark runner for the Schwarz preconditioners.

A single run assembles one discretization, builds the requested
preconditioner, solves with PCG and writes

    <prefix>.residuals.csv    iter,relres
    <prefix>.summary.json     see summary.schema.json

Sweeps (`--sweep file.json`, `--preset name`) run many configurations and
add a scalability table grouping runs of equal element, H/h and overlap.

    python bench_cli.py --element bfs --h-exp 6 --H-exp 2 --overlap-layers 4
    python bench_cli.py --preset fig-scaling-bfs-d2 --workers 3
"""
import argparse
import dataclasses
import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from typing_extensions import Self

from assembly import assemble_load, assemble_system, energy_error, export_system
from constants import (DEFAULT_ETA, DEFAULT_MAX_ITERS, DEFAULT_TOL, FIGURE_TOL, ElementFamily,
                       PreconditionerLevel)
from errors import ConfigurationError, ErrorCode, SolverError
from geometry import build_decomposition, build_mesh
from krylov import PcgReport, dense_condition_number, pcg
from manufactured import RHS_CHOICES, right_hand_side
from schwarz import build_preconditioner

LOGGER = logging.getLogger(__name__)

LOG_FORMAT = "[%(asctime)s] %(levelname)-8s %(message)s"
SCHEMA_PATH = Path(__file__).resolve().parent / "summary.schema.json"
KAPPA_CHECK_MAX_DOFS = 2000
DEFAULT_OUTPUT = "results/run"
SCALING_EXPONENTS = (5, 6, 7)
FULL_SCALING_EXPONENTS = (8, 9, 10)


def _is_real(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


@dataclass
class ExperimentConfig:
    element: str
    h_exponent: int
    H_exponent: int
    overlap_layers: int
    eta: Optional[float] = None
    precond: str = PreconditionerLevel.TWO_LEVEL.value
    tol: float = DEFAULT_TOL
    max_iters: int = DEFAULT_MAX_ITERS
    output: str = DEFAULT_OUTPUT
    rhs: Optional[str] = None
    check_error: bool = False
    check_kappa: bool = False
    threads: int = 1
    export: Optional[str] = None

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> Self:
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigurationError(f"unknown configuration fields: {', '.join(unknown)}")
        missing = [n for n in ("element", "h_exponent", "H_exponent", "overlap_layers") if data.get(n) is None]
        if missing:
            raise ConfigurationError(f"missing configuration fields: {', '.join(missing)}")
        return cls(**data)

    @classmethod
    def from_json_file(cls, path: Union[str, Path]) -> Self:
        with open(path, encoding="utf-8") as handle:
            data = json.load(handle)
        if not isinstance(data, dict):
            raise ConfigurationError(f"{path}: expected one flat JSON object")
        return cls.from_dict(data)

    def with_overrides(self, **overrides: Any) -> Self:
        return dataclasses.replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    @property
    def family(self) -> ElementFamily:
        return ElementFamily(self.element)

    @property
    def level(self) -> PreconditionerLevel:
        return PreconditionerLevel(self.precond)

    @property
    def h(self) -> float:
        return 2.0 ** -self.h_exponent

    @property
    def H(self) -> float:
        return 2.0 ** -self.H_exponent

    @property
    def ratio(self) -> int:
        return 2 ** (self.h_exponent - self.H_exponent)

    @property
    def delta(self) -> float:
        return self.overlap_layers * self.h

    @property
    def resolved_eta(self) -> Optional[float]:
        if self.family is not ElementFamily.C0IP:
            return None
        return DEFAULT_ETA if self.eta is None else float(self.eta)

    @property
    def resolved_rhs(self) -> str:
        return self.rhs or f"manufactured-m{self.family.m}"

    def validate(self) -> Self:
        try:
            family = self.family
        except ValueError:
            raise ConfigurationError(f"unknown element '{self.element}', expected one of "
                                     f"{[f.value for f in ElementFamily]}") from None
        try:
            PreconditionerLevel(self.precond)
        except ValueError:
            raise ConfigurationError(f"unknown preconditioner '{self.precond}', expected one of "
                                     f"{[p.value for p in PreconditionerLevel]}") from None
        for name in ("h_exponent", "H_exponent", "overlap_layers", "max_iters", "threads"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ConfigurationError(f"{name} must be a positive integer, got {value!r}")
        if self.h_exponent <= self.H_exponent:
            raise ConfigurationError(f"h = 2^-{self.h_exponent} must be finer than H = 2^-{self.H_exponent}",
                                     ErrorCode.NON_NESTED)
        if self.overlap_layers >= self.ratio:
            raise ConfigurationError(f"overlap l*h must stay below H: l = {self.overlap_layers}, H/h = {self.ratio}",
                                     ErrorCode.OVERLAP_RANGE)
        if self.eta is not None:
            if not _is_real(self.eta):
                raise ConfigurationError(f"eta must be a number, got {self.eta!r}")
            if not self.eta > 0:
                raise ConfigurationError(f"penalty parameter eta must be positive, got {self.eta}",
                                         ErrorCode.INVALID_PENALTY)
        if not _is_real(self.tol) or not self.tol > 0:
            raise ConfigurationError(f"tol must be a positive number, got {self.tol!r}")
        for name in ("output", "export"):
            value = getattr(self, name)
            if value is not None and not isinstance(value, str):
                raise ConfigurationError(f"{name} must be a path string, got {value!r}")
        if not isinstance(self.rhs, (str, type(None))):
            raise ConfigurationError(f"rhs must be a string, got {self.rhs!r}")
        rhs = self.resolved_rhs
        if rhs not in RHS_CHOICES:
            raise ConfigurationError(f"unknown right-hand side '{rhs}', expected one of {RHS_CHOICES}")
        if rhs.startswith("manufactured-m") and rhs != f"manufactured-m{family.m}":
            raise ConfigurationError(f"{family.value} solves an m = {family.m} problem, "
                                     f"right-hand side '{rhs}' does not match")
        return self


def default_prefix(config: ExperimentConfig, directory: Union[str, Path]) -> str:
    name = f"{config.element}-h{config.h_exponent}-H{config.H_exponent}-l{config.overlap_layers}-{config.precond}"
    return str(Path(directory) / name)


def _comparison(element: str) -> List[Dict[str, Any]]:
    # h = 2^-7, H = 2^-3, delta = 2^-5
    return [dict(element=element, h_exponent=7, H_exponent=3, overlap_layers=4, precond=level.value,
                 tol=FIGURE_TOL, output=f"results/fig-comparison-{element}/{level.value}")
            for level in PreconditionerLevel]


def _scaling(element: str, layers: int, exponents: Sequence[int] = SCALING_EXPONENTS,
             name: Optional[str] = None) -> List[Dict[str, Any]]:
    # H/h = 16 fixed while h is refined
    name = name or f"fig-scaling-{element}-d{layers}"
    return [dict(element=element, h_exponent=a, H_exponent=a - 4, overlap_layers=layers,
                 tol=FIGURE_TOL, output=f"results/{name}/h{a}")
            for a in exponents]


PRESETS: Dict[str, List[Dict[str, Any]]] = {}
for _family in ElementFamily:
    PRESETS[f"fig-comparison-{_family.value}"] = _comparison(_family.value)
    for _layers in (2, 4):
        PRESETS[f"fig-scaling-{_family.value}-d{_layers}"] = _scaling(_family.value, _layers)
        # h = 2^-8 .. 2^-10; long runs
        _name = f"fig-scaling-{_family.value}-d{_layers}-full"
        PRESETS[_name] = _scaling(_family.value, _layers, FULL_SCALING_EXPONENTS, _name)


@dataclass(eq=False)
class RunResult:
    config: ExperimentConfig
    summary: Dict[str, Any]
    report: PcgReport
    files: Tuple[Path, Path]

    @property
    def exit_code(self) -> int:
        return ErrorCode.OK.value if self.report.converged else ErrorCode.NOT_CONVERGED.value


def write_residuals(path: Path, history: Sequence[float]) -> None:
    table = np.column_stack([np.arange(len(history)), np.asarray(history, dtype=float)])
    np.savetxt(path, table, fmt=("%d", "%.17g"), delimiter=",", header="iter,relres",
               comments="", encoding="utf-8")


def _finite_or_none(name: str, value: float) -> Optional[float]:
    if np.isfinite(value):
        return value
    LOGGER.warning("%s is %s, written as null", name, value)
    return None


def _format_kappa(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{value:.4g}"


def run(config: ExperimentConfig) -> RunResult:
    config.validate()
    family = config.family
    fine = build_mesh(2 ** config.h_exponent)
    coarse = build_mesh(2 ** config.H_exponent)
    load, solution = right_hand_side(config.resolved_rhs)

    eta = config.resolved_eta
    dofmap, A = assemble_system(fine, family, eta if eta is not None else DEFAULT_ETA)
    f = assemble_load(fine, dofmap.element, dofmap, load)
    if config.export is not None:
        Path(config.export).parent.mkdir(parents=True, exist_ok=True)
        for path in export_system(config.export, A, f):
            LOGGER.info("exported %s", path)

    start = time.perf_counter()
    decomposition = build_decomposition(coarse, fine, config.overlap_layers)
    precond = build_preconditioner(config.level, decomposition, dofmap, A, config.threads)
    setup_seconds = time.perf_counter() - start

    start = time.perf_counter()
    report = pcg(A, precond, f, config.tol, config.max_iters)
    solve_seconds = time.perf_counter() - start

    summary: Dict[str, Any] = {
        "element": family.value,
        "m": family.m,
        "h": config.h,
        "H": config.H,
        "delta": config.delta,
        "overlap_layers": config.overlap_layers,
        "precond": config.level.value,
        "rhs": config.resolved_rhs,
        "tol": config.tol,
        "dofs": dofmap.free_count,
        "subdomains": decomposition.num_subdomains,
        "coarse_dim": precond.coarse.dim if precond.coarse is not None else 0,
        "iterations": report.iterations,
        "converged": report.converged,
        "final_relres": report.final_relres,
        "kappa_estimate": _finite_or_none("kappa_estimate", report.kappa_estimate),
        "setup_seconds": setup_seconds,
        "solve_seconds": solve_seconds,
    }
    if eta is not None:
        summary["eta"] = eta
    if config.check_error:
        if solution is None:
            LOGGER.warning("--check-error needs a manufactured right-hand side, '%s' has no exact solution",
                           config.resolved_rhs)
            summary["energy_error"] = None
        else:
            summary["energy_error"] = energy_error(A, report.solution, dofmap.interpolate(solution.derivative))
    if config.check_kappa:
        if dofmap.free_count > KAPPA_CHECK_MAX_DOFS:
            LOGGER.warning("--check-kappa skipped: %d DOFs exceed %d", dofmap.free_count, KAPPA_CHECK_MAX_DOFS)
            summary["kappa_dense"] = None
        else:
            summary["kappa_dense"] = _finite_or_none("kappa_dense", dense_condition_number(A, precond))

    prefix = Path(config.output)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    csv_path = prefix.with_name(prefix.name + ".residuals.csv")
    json_path = prefix.with_name(prefix.name + ".summary.json")
    write_residuals(csv_path, report.relative_residuals)
    with open(json_path, "w", encoding="utf-8") as handle:
        json.dump(summary, handle, indent=2, allow_nan=False)
    LOGGER.info("wrote %s and %s", csv_path, json_path)
    return RunResult(config, summary, report, (csv_path, json_path))


@dataclass(eq=False)
class MatrixResult:
    rows: List[Dict[str, Any]]
    table: List[Dict[str, Any]]

    @property
    def failures(self) -> List[Dict[str, Any]]:
        return [row for row in self.rows if row["status"] == "failed"]

    @property
    def exit_code(self) -> int:
        if self.failures:
            return self.failures[0].get("code", ErrorCode.GENERAL_ERROR.value)
        if any(row["status"] == "not-converged" for row in self.rows):
            return ErrorCode.NOT_CONVERGED.value
        return ErrorCode.OK.value


def _entry_config(entry: Any, output_dir: Union[str, Path]) -> ExperimentConfig:
    if isinstance(entry, ExperimentConfig):
        config = entry
    elif isinstance(entry, dict):
        config = ExperimentConfig.from_dict(entry)
    else:
        raise ConfigurationError(f"sweep entry must be a configuration object, got {type(entry).__name__}")
    if config.output == DEFAULT_OUTPUT:
        # one file pair per row
        config = dataclasses.replace(config, output=default_prefix(config, output_dir))
    return config


def _run_row(entry: Any, output_dir: Union[str, Path] = "results") -> Dict[str, Any]:
    try:
        config = _entry_config(entry, output_dir)
        result = run(config)
    except (SolverError, TypeError, ValueError, OSError) as exc:
        LOGGER.error("run failed: %s", exc)
        code = exc.code if isinstance(exc, SolverError) else ErrorCode.GENERAL_ERROR
        if isinstance(entry, ExperimentConfig):
            echo: Any = entry.to_dict()
        else:
            echo = dict(entry) if isinstance(entry, dict) else repr(entry)
        return {"status": "failed", "error": str(exc), "code": code.value, "config": echo}
    status = "converged" if result.report.converged else "not-converged"
    return {"status": status, **result.summary, "output": config.output}


def scalability_table(rows: Sequence[Dict[str, Any]]) -> List[Dict[str, Any]]:
    """kappa and iterations across h for runs with equal (element, H/h, l, precond)."""
    groups: Dict[Tuple[str, int, int, str], List[Dict[str, Any]]] = {}
    for row in rows:
        if row["status"] == "failed":
            continue
        key = (row["element"], int(round(row["H"] / row["h"])), row["overlap_layers"], row["precond"])
        groups.setdefault(key, []).append(row)

    table = []
    for (element, ratio, layers, precond), members in sorted(groups.items()):
        members = sorted(members, key=lambda r: -r["h"])
        kappas = [r["kappa_estimate"] for r in members]
        variation = [abs(b / a - 1.0) for a, b in zip(kappas, kappas[1:]) if a is not None and b is not None]
        table.append({
            "element": element,
            "H_over_h": ratio,
            "overlap_layers": layers,
            "precond": precond,
            "h": [r["h"] for r in members],
            "kappa_estimate": kappas,
            "iterations": [r["iterations"] for r in members],
            "max_kappa_variation": max(variation) if variation else 0.0,
        })
    return table


def run_matrix(entries: Sequence[Union[ExperimentConfig, Dict[str, Any]]], workers: int = 1,
               output_dir: Optional[Union[str, Path]] = None) -> MatrixResult:
    """
    Run every configuration; failures are recorded per row and do not stop the
    sweep. Entries without an explicit `output` write below `output_dir`.
    """
    row_dir = Path(output_dir) if output_dir is not None else Path(DEFAULT_OUTPUT).parent
    if workers > 1 and len(entries) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda entry: _run_row(entry, row_dir), entries))
    else:
        rows = [_run_row(entry, row_dir) for entry in entries]

    result = MatrixResult(rows, scalability_table(rows))
    if output_dir is not None:
        path = Path(output_dir)
        path.mkdir(parents=True, exist_ok=True)
        with open(path / "sweep.summary.json", "w", encoding="utf-8") as handle:
            json.dump({"rows": result.rows, "scalability": result.table}, handle, indent=2, default=repr)
    LOGGER.info("sweep finished: %d runs, %d failed", len(rows), len(result.failures))
    return result


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Two-level overlapping Schwarz benchmark")
    parser.add_argument("--element", choices=[f.value for f in ElementFamily])
    parser.add_argument("--h-exp", dest="h_exponent", type=int, help="fine mesh size h = 2^-a")
    parser.add_argument("--H-exp", dest="H_exponent", type=int, help="coarse mesh size H = 2^-b")
    parser.add_argument("--overlap-layers", type=int, help="overlap delta in fine-cell layers")
    parser.add_argument("--eta", type=float, help=f"C0-IP penalty (default {DEFAULT_ETA})")
    parser.add_argument("--precond", choices=[p.value for p in PreconditionerLevel])
    parser.add_argument("--tol", type=float)
    parser.add_argument("--max-iters", type=int)
    parser.add_argument("--rhs", choices=RHS_CHOICES)
    parser.add_argument("--output", help="output path prefix")
    parser.add_argument("--check-error", action="store_true", default=None,
                        help="report the energy error against the manufactured solution")
    parser.add_argument("--check-kappa", action="store_true", default=None,
                        help=f"also compute kappa densely (<= {KAPPA_CHECK_MAX_DOFS} DOFs)")
    parser.add_argument("--threads", type=int, help="threads for local solves")
    parser.add_argument("--export", help="also write A and f as Matrix Market files at this prefix")
    parser.add_argument("--config", help="flat JSON configuration file")
    parser.add_argument("--sweep", help="JSON list of configurations")
    parser.add_argument("--preset", choices=sorted(PRESETS))
    parser.add_argument("--workers", type=int, default=1, help="concurrent runs in a sweep")
    parser.add_argument("--verbose", action="store_true")
    return parser


OVERRIDE_FIELDS = ("element", "h_exponent", "H_exponent", "overlap_layers", "eta", "precond", "tol",
                   "max_iters", "rhs", "output", "check_error", "check_kappa", "threads", "export")


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format=LOG_FORMAT)
    overrides = {name: getattr(args, name) for name in OVERRIDE_FIELDS}

    try:
        if args.sweep or args.preset:
            if args.sweep:
                with open(args.sweep, encoding="utf-8") as handle:
                    entries = json.load(handle)
                if not isinstance(entries, list):
                    raise ConfigurationError(f"{args.sweep}: expected a JSON list of configurations")
                output_dir = Path(args.sweep).with_suffix("")
            else:
                entries = PRESETS[args.preset]
                output_dir = Path("results") / args.preset
            shared = {k: v for k, v in overrides.items() if v is not None and k not in ("output", "export")}
            entries = [{**entry, **shared} if isinstance(entry, dict) else entry for entry in entries]
            result = run_matrix(entries, args.workers, output_dir)
            for row in result.rows:
                if row["status"] == "failed":
                    print(f"❌ {row['error']}")
                else:
                    mark = "✅" if row["status"] == "converged" else "❌"
                    print(f"{mark} {row['element']} h={row['h']:g} H={row['H']:g} l={row['overlap_layers']} "
                          f"{row['precond']}: {row['iterations']} iterations, "
                          f"kappa ~ {_format_kappa(row['kappa_estimate'])}")
            for group in result.table:
                print(f"📊 {group['element']} H/h={group['H_over_h']} l={group['overlap_layers']} "
                      f"{group['precond']}: kappa {[_format_kappa(k) for k in group['kappa_estimate']]}, "
                      f"max variation {group['max_kappa_variation']:.1%}")
            return result.exit_code

        if args.config:
            config = ExperimentConfig.from_json_file(args.config).with_overrides(**overrides)
        else:
            config = ExperimentConfig.from_dict({k: v for k, v in overrides.items() if v is not None})
        result = run(config)
    except SolverError as exc:
        print(f"❌ {exc}")
        return exc.code.value
    except (OSError, json.JSONDecodeError) as exc:
        print(f"❌ {exc}")
        return ErrorCode.GENERAL_ERROR.value

    summary = result.summary
    mark = "✅" if result.report.converged else "❌"
    print(f"{mark} {summary['element']} {summary['precond']}: {summary['iterations']} iterations, "
          f"relres {summary['final_relres']:.2e}, kappa ~ {_format_kappa(summary['kappa_estimate'])} "
          f"(setup {summary['setup_seconds']:.2f}s, solve {summary['solve_seconds']:.2f}s)")
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
