"""
Command-line surface.

    sectordyn run <config.json> [--solver S] [--dt DT] [--modes N] [--out DIR]
    sectordyn preset <name> [--solver S] [--dt DT] [--modes N] [--out DIR]
    sectordyn check <config.json>

Exit codes: 0 success, 1 configuration error, 2 model or numerical error,
3 output error.
"""

import argparse
import logging
import sys
from typing import List, Optional

from dotenv import load_dotenv

from app.core.config import get_settings
from app.core.exceptions import ConfigError, ModelError, NumericalError, OutputError
from app.schemas.run_config import RunConfig, RunSolver
from app.services.config_parser import apply_overrides, list_presets, load_config, load_preset, materialize
from app.services.scenario_runner import run_scenario

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_OUTPUT = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sectordyn",
        description="Single-excitation open-system dynamics: solvers, reduced maps and spin-boson scenarios",
    )
    parser.add_argument("--log-level", type=str, default=None, help="Override LOG_LEVEL from the settings")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run a scenario config")
    run.add_argument("config", type=str, help="Path to a JSON scenario")
    _add_overrides(run)

    preset = sub.add_parser("preset", help="Run a bundled scenario by name")
    preset.add_argument("name", type=str, help=f"One of: {', '.join(list_presets()) or '(none installed)'}")
    _add_overrides(preset)

    check = sub.add_parser("check", help="Validate a scenario config without running it")
    check.add_argument("config", type=str, help="Path to a JSON scenario")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    parser = build_parser()
    args = parser.parse_args(argv)

    settings = get_settings()
    logging.basicConfig(
        level=(args.log_level or settings.LOG_LEVEL).upper(),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )

    try:
        if args.command == "check":
            cfg = load_config(args.config)
            model, _ = materialize(cfg)
            logger.info(f"Config '{cfg.name}' is valid (d={model.d}, N={model.n_modes})")
            return EXIT_OK

        cfg = load_config(args.config) if args.command == "run" else load_preset(args.name)
        cfg = _overridden(cfg, args)
        summary = run_scenario(cfg)
        for name in summary.files:
            print(name)
        return EXIT_OK
    except ConfigError as e:
        for path, reason in e.errors:
            logger.error(f"Config error at {path}: {reason}")
        return EXIT_CONFIG
    except (ModelError, NumericalError) as e:
        logger.error(f"Run failed: {str(e)}")
        return EXIT_NUMERICAL
    except OutputError as e:
        logger.error(f"Output failed: {str(e)}")
        return EXIT_OUTPUT


def _add_overrides(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--solver", choices=[s.value for s in RunSolver], help="Override run.solver")
    parser.add_argument("--dt", type=float, help="Override run.dt")
    parser.add_argument("--modes", type=int, help="Override model.reservoir.n_modes")
    parser.add_argument("--out", type=str, help="Output directory (default: OUTPUT_DIR/<name>)")


def _overridden(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    if args.solver is None and args.dt is None and args.modes is None and args.out is None:
        return cfg
    return apply_overrides(cfg, solver=args.solver, dt=args.dt, modes=args.modes, directory=args.out)


if __name__ == "__main__":
    sys.exit(main())
