import argparse
from pathlib import Path

from loguru import logger

from src.config.settings import configure_logging
from src.core.reporting import write_json
from src.scenarios.bundled import ScenarioGenerator, scenario_payload


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="scenarios")
    parser.add_argument("--seed", type=int, default=None)
    args = parser.parse_args()
    configure_logging()

    out = Path(args.out)
    generator = ScenarioGenerator(seed=args.seed)
    for scenario in [*generator.generate_all_scenarios(), *generator.norm_reduction_sweep()]:
        write_json(out / f"{scenario.name}.json", scenario_payload(scenario))
    for instance in generator.generate_mp_instances():
        write_json(out / "mp" / f"{instance.instance}.json", scenario_payload(instance))
    logger.info("Exported bundled scenarios to {}", out)


if __name__ == "__main__":
    main()
