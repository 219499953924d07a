import argparse

from loguru import logger

from src.config.settings import configure_logging
from src.core.evaluator import BatchEvaluator
from src.core.optimizer import solve
from src.core.reporting import dumps_report
from src.scenarios.bundled import ScenarioGenerator
from src.scenarios.loader import build_from_scenario
from src.schemas.scenario import ScenarioFile


def run_scenario(scenario: ScenarioFile) -> dict:
    spec, grid = build_from_scenario(scenario)
    result = solve(spec, grid, scenario.solver)
    return {
        "scenario": scenario.name,
        "T": result.cp.T,
        "objective": result.objective,
        "termination": result.termination.value,
        "iterations": len(result.trace),
        "mu": result.multipliers.mu.tolist(),
        "r_u": result.kkt.r_u,
        "r_T": result.kkt.r_T,
        "r_feas": result.kkt.r_feas,
    }


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--scenarios", default="", help="comma-separated names; empty runs everything")
    parser.add_argument("--concurrency", type=int, default=None)
    args = parser.parse_args()
    configure_logging()

    generator = ScenarioGenerator()
    scenarios = [*generator.generate_all_scenarios(), *generator.norm_reduction_sweep()]
    wanted = {name.strip() for name in args.scenarios.split(",") if name.strip()}
    if wanted:
        scenarios = [s for s in scenarios if s.name in wanted]

    outcomes = BatchEvaluator(args.concurrency).map(run_scenario, scenarios, label="scenario")
    rows = [o.value if o.ok else {"scenario": scenarios[o.index].name, "error": o.error} for o in outcomes]

    sweep = sorted((r for r in rows if r.get("scenario", "").startswith("norm_reduction_b") and "T" in r), key=lambda r: r["scenario"])
    if sweep:
        logger.info("Norm-reduction sweep: {}", ", ".join(f"{r['scenario']} T*={r['T']:.6g}" for r in sweep))
    print(dumps_report(rows))


if __name__ == "__main__":
    main()
