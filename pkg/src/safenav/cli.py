"""Command-line entry point: ``safenav run|sweep|check|garage``."""

import argparse
import sys
from collections.abc import Sequence
from pathlib import Path

from .errors import ScenarioConfigError
from .garage import write_garage
from .replay import replay_log
from .scenario import load_scenario, run_scenario, write_run_outputs
from .sweep import run_sweep
from .utils import get_logger

logger = get_logger(__name__)


def _float_list(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as err:
        raise argparse.ArgumentTypeError(
            f"expected comma-separated numbers: {text}"
        ) from err
    if not values:
        raise argparse.ArgumentTypeError("expected at least one number")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="safenav",
        description="Monitored NMPC for automated driving among occluded pedestrians",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Run one closed-loop scenario")
    run.add_argument("--scenario", type=Path, required=True)
    run.add_argument("--out", type=Path, default=Path("out"))

    sweep = commands.add_parser("sweep", help="Severity table over v_ped and T")
    sweep.add_argument("--scenario", type=Path, required=True)
    sweep.add_argument("--vped", type=_float_list, default=[0.5, 1.0, 1.5, 2.0])
    sweep.add_argument("--horizon", type=_float_list, default=[1.0, 1.5, 2.0, 2.5])
    sweep.add_argument("--out", type=Path, default=Path("sweep"))

    check = commands.add_parser("check", help="Re-verify a run log")
    check.add_argument("--replay", type=Path, required=True)

    garage = commands.add_parser("garage", help="Write the synthetic garage fixture")
    garage.add_argument("--out", type=Path, default=Path("garage"))
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            result = run_scenario(load_scenario(args.scenario))
            write_run_outputs(result, args.out)
            report = result.report
            print(
                f"{report.name}: {report.ticks} ticks, goal "
                f"{'reached' if report.goal_reached else 'not reached'}, "
                f"max overlap {report.max_overlap:.3f} ({report.severity.label})"
            )
        elif args.command == "sweep":
            table = run_sweep(
                load_scenario(args.scenario), args.vped, args.horizon, args.out
            )
            print(table.to_string())
        elif args.command == "check":
            report = replay_log(args.replay)
            for line in report.violations:
                print(line)
            print(
                f"{report.ticks} ticks, {report.accepted} accepted candidates, "
                f"{len(report.violations)} violations"
            )
            return 0 if report.ok else 1
        elif args.command == "garage":
            for file in write_garage(args.out):
                print(file)
    except (ScenarioConfigError, ValueError, OSError) as err:
        logger.error("%s", err)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
