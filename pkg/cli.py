"""
EquiSeek - Command line
Run, list, sweep and check scenarios without the HTTP server.

    python cli.py run duopoly-hetero --out runs --svg
    python cli.py sweep duopoly-hetero --param epsilon --values 1,0.75,0.5,0.25
    python cli.py check nplayer-delay
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from config import Config
from services.export_service import ExportService
from services.scenario_service import builtin_scenarios, check_scenario, load_scenario, run_scenario, sweep
from utils.errors import EquiSeekError

logger = logging.getLogger("equiseek.cli")


def _parse_values(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"Expected comma-separated numbers, got {text!r}") from e


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="equiseek", description="Extremum and Nash equilibrium seeking scenarios")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_run_options(p):
        p.add_argument("scenario", help="Built-in scenario name or path to a JSON config")
        p.add_argument("--out", type=Path, default=Config.OUTPUT_DIR, help="Output directory")
        p.add_argument("--dt", type=float, default=None, help="Target time step [s] before snapping")
        p.add_argument("--t-end", type=float, default=None, help="Horizon [s]")
        p.add_argument("--no-compensation", action="store_true", help="Run the uncompensated law")
        p.add_argument("--svg", action="store_true", help="Also write one SVG chart per signal")

    add_run_options(sub.add_parser("run", help="Run one scenario and export its artifacts"))
    sub.add_parser("list", help="List the built-in scenarios")

    sweep_parser = sub.add_parser("sweep", help="Run a scenario over several parameter values")
    add_run_options(sweep_parser)
    sweep_parser.add_argument("--param", default="epsilon", choices=["epsilon"])
    sweep_parser.add_argument("--values", type=_parse_values, required=True)

    check_parser = sub.add_parser("check", help="Print the stability report of a scenario")
    check_parser.add_argument("scenario")
    return parser


def _overrides(args) -> dict:
    return {
        "t_end": args.t_end,
        "dt": args.dt,
        "compensation": False if args.no_compensation else None,
    }


def _summary(result) -> str:
    if result.diverged:
        return f"{result.name}: diverged at t={result.divergence_time:.4g} s"
    final = ", ".join(f"{v:.4f}" for v in result.series["Theta"][-1])
    target = ", ".join(f"{v:.4f}" for v in result.Theta_star)
    return f"{result.name}: Θ(T)=({final}), Θ*=({target}), {result.n_steps} steps in {result.wall_time:.1f} s"


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(
        level=getattr(logging, Config.LOG_LEVEL, logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    args = build_parser().parse_args(argv)

    try:
        if args.command == "list":
            for scenario in builtin_scenarios().values():
                print(f"{scenario.name:28s} {scenario.description}")
            return 0

        config = load_scenario(args.scenario)

        if args.command == "check":
            print(json.dumps(check_scenario(config), indent=2))
            return 0

        if args.command == "run":
            result = run_scenario(config, **_overrides(args))
            ExportService.export(result, args.out, svg=args.svg)
            print(_summary(result))
            return 0

        # sweep
        results = sweep(config, args.param, args.values, **_overrides(args))
        for value, result in zip(args.values, results):
            out_dir = Path(args.out) / f"{args.param}-{value:g}"
            ExportService.export(result, out_dir, svg=args.svg)
            print(f"{args.param}={value:g}  {_summary(result)}")
        return 0

    except EquiSeekError as e:
        logger.error(str(e))
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
