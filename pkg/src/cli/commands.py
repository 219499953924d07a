"""Subcommands: solve, audit, soc, mp, hypotheses.

Every subcommand writes a manifest.json next to its outputs. Exit codes: 0 on success,
1 on input errors, 2 when the solver stops without converging.
"""

import argparse
import json
from collections.abc import Callable
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
import yaml
from loguru import logger
from pydantic import ValidationError

from src.config.settings import configure_logging, get_settings
from src.core.evaluator import BatchEvaluator
from src.core.optimality import MultiplierSet, compute_multipliers, kkt_residuals, transport_consistency
from src.core.optimizer import SolveResult, growth_certificate, solve
from src.core.reporting import build_manifest, write_field_csv, write_json, write_table_csv
from src.detectors.soc_analyzer import SecondOrderAnalyzer, soc_verdict
from src.discretization.grid import Grid
from src.discretization.operator import DiscreteOperator
from src.mp.core import audit_point
from src.mp.instances import build_instance
from src.problem.hypotheses import SampleBox, check_hypotheses
from src.problem.spec import ProblemSpec
from src.scenarios.loader import build_from_scenario, load_mp_instance, load_scenario, parse_resolution
from src.schemas.scenario import ScenarioFile, SOCConfig
from src.solvers.fields import SpaceTimeField
from src.solvers.reduction import ControlPoint, from_reduced, reduced_state
from src.solvers.state import StateSolveError, operator_for, sup_norm_bound_check

EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_NOT_CONVERGED = 2

INPUT_ERRORS = (ValidationError, json.JSONDecodeError, yaml.YAMLError, ValueError, FileNotFoundError)


def _now() -> datetime:
    return datetime.now(timezone.utc)


def _load(args: argparse.Namespace) -> tuple[ScenarioFile, ProblemSpec, Grid]:
    scenario = load_scenario(args.scenario)
    resolution = parse_resolution(args.resolution_override) if args.resolution_override else None
    spec, grid = build_from_scenario(scenario, resolution)
    logger.info(
        "Loaded scenario {} (dim {}, nodes {}, {} steps, theta {})",
        scenario.name,
        spec.spatial_dim,
        grid.counts,
        grid.n_steps,
        grid.theta,
    )
    return scenario, spec, grid


def _finish(
    out: Path,
    subcommand: str,
    source: Path,
    started_at: datetime,
    exit_code: int,
    outputs: list[Path],
    seed: int | None = None,
    tolerances: dict[str, float] | None = None,
) -> int:
    manifest_path = out / "manifest.json"
    manifest = build_manifest(
        subcommand, source, started_at, _now(), exit_code, [*outputs, manifest_path], seed, tolerances
    )
    write_json(manifest_path, manifest.model_dump(mode="json"))
    logger.info("{} finished with exit code {}; wrote {} files to {}", subcommand, exit_code, len(outputs) + 1, out)
    return exit_code


def load_candidate(candidate_dir: Path, grid: Grid) -> tuple[ControlPoint, np.ndarray | None]:
    """Read T (and μ when present) from result.json and the control from control.csv."""
    result_path, control_path = candidate_dir / "result.json", candidate_dir / "control.csv"
    for path in (result_path, control_path):
        if not path.is_file():
            raise FileNotFoundError(f"candidate directory {candidate_dir} is missing {path.name}")
    result = json.loads(result_path.read_text(encoding="utf-8"))
    if "T" not in result:
        raise ValueError(f"{result_path} has no field 'T'")
    mu = result.get("multipliers", {}).get("mu")

    frame = pd.read_csv(control_path)
    missing = {"time_level", "node_index", "control"} - set(frame.columns)
    if missing:
        raise ValueError(f"{control_path} lacks column(s): {', '.join(sorted(missing))}")
    expected = grid.levels * grid.n_interior
    if len(frame) != expected:
        raise ValueError(
            f"dimension mismatch: {control_path} has {len(frame)} rows, grid needs {grid.levels} x {grid.n_interior} = {expected}"
        )
    frame = frame.sort_values(["time_level", "node_index"])
    values = frame["control"].to_numpy(dtype=float).reshape(grid.levels, grid.n_interior)
    cp = ControlPoint(T=float(result["T"]), v=SpaceTimeField(values, grid, None))
    return cp, (None if mu is None else np.asarray(mu, dtype=float))


def _kkt_payload(
    spec: ProblemSpec, grid: Grid, cp: ControlPoint, zeta: SpaceTimeField, multipliers: MultiplierSet, op: DiscreteOperator
) -> dict[str, Any]:
    report = kkt_residuals(spec, grid, cp, zeta, multipliers, op, with_fd=True)
    report.transport = transport_consistency(spec, grid, cp, zeta, multipliers, report, op)
    return report.to_dict()


def cmd_solve(args: argparse.Namespace) -> int:
    started_at = _now()
    scenario, spec, grid = _load(args)
    out = Path(args.out)
    op = operator_for(spec, grid)
    result = solve(spec, grid, scenario.solver)
    cp, zeta, multipliers = result.cp, result.state, result.multipliers

    y, u = from_reduced(zeta, cp.T), from_reduced(cp.v, cp.T)
    payload = result.to_dict()
    payload.update(
        {
            "scenario": scenario.name,
            "spatial_dim": spec.spatial_dim,
            "grid": {"nodes": list(grid.counts), "time_steps": grid.n_steps, "theta": grid.theta},
            "sup_norm_bound_check": sup_norm_bound_check(spec, y, u, spec.y0(grid.coords)),
        }
    )
    outputs = [
        write_json(out / "result.json", payload),
        write_field_csv(out / "state.csv", y, "state"),
        write_field_csv(out / "control.csv", u, "control"),
        write_field_csv(out / "adjoint.csv", from_reduced(multipliers.adjoint, cp.T), "adjoint"),
        write_json(out / "kkt.json", _kkt_payload(spec, grid, cp, zeta, multipliers, op)),
    ]
    seed = get_settings().default_seed if args.seed is None else args.seed
    if args.probes > 0:
        growth = growth_certificate(
            spec, grid, result, args.radius, args.probes, seed, scenario.solver.feas_tol, BatchEvaluator()
        )
        outputs.append(write_json(out / "growth.json", growth.to_dict()))
        outputs.append(write_table_csv(out / "growth_probes.csv", growth.probes))

    exit_code = EXIT_OK if result.converged else EXIT_NOT_CONVERGED
    if not result.converged:
        logger.warning("Solver stopped without converging: {}", result.termination.value)
    tolerances = {"grad_tol": scenario.solver.grad_tol, "feas_tol": scenario.solver.feas_tol}
    return _finish(out, "solve", Path(args.scenario), started_at, exit_code, outputs, seed, tolerances)


def cmd_audit(args: argparse.Namespace) -> int:
    started_at = _now()
    scenario, spec, grid = _load(args)
    out = Path(args.out)
    cp, mu = load_candidate(Path(args.candidate), grid)
    cp.check_bracket(spec)
    if mu is not None and mu.shape != (spec.m,):
        raise ValueError(f"candidate carries {mu.size} terminal multipliers, scenario has {spec.m}")
    if mu is None and spec.m:
        logger.warning("Candidate has no terminal multipliers; auditing with mu = 0")

    op = operator_for(spec, grid)
    zeta = reduced_state(spec, grid, cp, op)
    multipliers = compute_multipliers(spec, grid, cp, zeta, 1.0, mu, None, op)
    payload = _kkt_payload(spec, grid, cp, zeta, multipliers, op)
    outputs = [write_json(out / "kkt.json", payload)]
    tolerances = {"grad_tol": scenario.solver.grad_tol, "feas_tol": scenario.solver.feas_tol}
    return _finish(out, "audit", Path(args.scenario), started_at, EXIT_OK, outputs, None, tolerances)


def cmd_soc(args: argparse.Namespace) -> int:
    started_at = _now()
    scenario, spec, grid = _load(args)
    out = Path(args.out)
    overrides = {k: v for k, v in {"samples": args.samples, "seed": args.seed}.items() if v is not None}
    config = SOCConfig.model_validate({**scenario.soc.model_dump(), **overrides})
    evaluator = BatchEvaluator()
    exit_code = EXIT_OK
    if args.candidate:
        cp, mu = load_candidate(Path(args.candidate), grid)
        op = operator_for(spec, grid)
        zeta = reduced_state(spec, grid, cp, op)
        multipliers = compute_multipliers(spec, grid, cp, zeta, 1.0, mu, None, op)
        report = SecondOrderAnalyzer(spec, grid, cp, zeta, multipliers, op).verdict(config, evaluator)
    else:
        result: SolveResult = solve(spec, grid, scenario.solver)
        if not result.converged:
            exit_code = EXIT_NOT_CONVERGED
        report = soc_verdict(spec, grid, result, config, evaluator)

    outputs = [
        write_json(out / "soc.json", report.to_dict()),
        write_field_csv(out / "lc_margin.csv", report.legendre.margin, "lc_margin"),
    ]
    tolerances = {"soc_tol": config.soc_tol, "soc_margin": config.soc_margin, "dir_tol": config.dir_tol}
    return _finish(out, "soc", Path(args.scenario), started_at, exit_code, outputs, config.seed, tolerances)


def cmd_mp(args: argparse.Namespace) -> int:
    started_at = _now()
    instance_file = load_mp_instance(args.instance)
    out = Path(args.out)
    instance = build_instance(instance_file.instance, instance_file.params)
    candidate = np.asarray(instance_file.candidate if instance_file.candidate is not None else instance.candidate, dtype=float)
    if candidate.shape != (instance.problem.n,):
        raise ValueError(f"candidate has {candidate.size} entries, instance {instance_file.instance} has n = {instance.problem.n}")

    normalize = instance_file.normalize_lambda if args.normalize_lambda is None else args.normalize_lambda
    seed = instance_file.seed if args.seed is None else args.seed
    samples = instance_file.samples if args.samples is None else args.samples
    brute = instance_file.brute_force
    report = audit_point(
        instance.problem,
        candidate,
        normalize_lambda=normalize,
        samples=samples,
        seed=seed,
        box=list(brute.box) if brute else None,
        grid_points=brute.grid_points if brute else 41,
    )
    payload = report.to_dict()
    payload["normalize_lambda"] = normalize
    outputs = [write_json(out / "mp_report.json", payload)]
    return _finish(out, "mp", Path(args.instance), started_at, EXIT_OK, outputs, seed)


def cmd_hypotheses(args: argparse.Namespace) -> int:
    started_at = _now()
    _, spec, _ = _load(args)
    out = Path(args.out)
    seed = get_settings().default_seed if args.seed is None else args.seed
    report = check_hypotheses(spec, SampleBox(t_range=(0.0, spec.T_hi), seed=seed))
    outputs = [write_json(out / "hypotheses.json", report.to_dict())]
    return _finish(out, "hypotheses", Path(args.scenario), started_at, EXIT_OK, outputs, seed)


def _describe(exc: Exception) -> str:
    if isinstance(exc, ValidationError):
        return "; ".join(f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}" for err in exc.errors())
    if isinstance(exc, json.JSONDecodeError):
        return f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
    return str(exc)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chronopt", description="Free-horizon parabolic control solver and optimality auditor.")
    parser.add_argument("--log-level", default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_command(name: str, handler: Callable[[argparse.Namespace], int], help_text: str) -> argparse.ArgumentParser:
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--scenario", required=True)
        cmd.add_argument("--out", required=True)
        cmd.add_argument("--resolution-override", default=None, help="e.g. 17:32 or 17x17:32")
        cmd.set_defaults(handler=handler)
        return cmd

    solve_cmd = scenario_command("solve", cmd_solve, "solve a scenario and write trajectories and reports")
    solve_cmd.add_argument("--seed", type=int, default=None)
    solve_cmd.add_argument("--probes", type=int, default=0)
    solve_cmd.add_argument("--radius", type=float, default=0.1)

    audit_cmd = scenario_command("audit", cmd_audit, "recompute KKT residuals for a candidate directory")
    audit_cmd.add_argument("--candidate", required=True)

    soc_cmd = scenario_command("soc", cmd_soc, "second-order analysis at a solved or supplied point")
    soc_cmd.add_argument("--candidate", default=None)
    soc_cmd.add_argument(
        "--samples", type=int, default=None, help="critical-cone directions to sample (default: scenario soc.samples, 500)"
    )
    soc_cmd.add_argument("--seed", type=int, default=None)

    hyp_cmd = scenario_command("hypotheses", cmd_hypotheses, "sample the structural assumptions of a scenario")
    hyp_cmd.add_argument("--seed", type=int, default=None)

    mp_cmd = sub.add_parser("mp", help="audit a point of a finite-dimensional program")
    mp_cmd.add_argument("--instance", required=True)
    mp_cmd.add_argument("--out", required=True)
    mp_cmd.add_argument("--seed", type=int, default=None)
    mp_cmd.add_argument("--samples", type=int, default=None, help="critical directions to sample (default: instance samples, 200)")
    mp_cmd.add_argument("--normalize-lambda", action=argparse.BooleanOptionalAction, default=None)
    mp_cmd.set_defaults(handler=cmd_mp)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.handler(args)
    except INPUT_ERRORS as exc:
        logger.error("{} failed: {}", args.command, _describe(exc))
        return EXIT_INPUT_ERROR
    except StateSolveError as exc:
        logger.error("{} failed: state solve did not converge: {}", args.command, exc)
        return EXIT_NOT_CONVERGED
