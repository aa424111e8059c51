# -*- coding: utf-8 -*-
"""
Command-line entry point.

Each subcommand reads an optional configuration document, runs one scenario
family and writes ``<name>_summary.csv``, ``<name>_series.csv`` and a
``<name>_plots/`` directory of two-column series files under ``--out``.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from tb_stigma.analysis.insights import ScenarioInsights
from tb_stigma.analysis.scenarios import ScenarioError, run_equilibria, run_scenario
from tb_stigma.analysis.verification import run_checks
from tb_stigma.data.config import Config, ConfigError, Scenario, ScenarioConfig, load_config, parse_config
from tb_stigma.data.processor import FLOAT_FORMAT, ResultTable, emit_csv, emit_plot_data
from tb_stigma.model.integrate import IntegrationError
from tb_stigma.visualization.plotter import ScenarioPlotter

# Configure logging
logger = logging.getLogger(__name__)

# 子命令與預設情境
SUBCOMMANDS: Dict[str, Optional[Scenario]] = {
    "simulate": Scenario.SINGLE,
    "sweep-alpha": Scenario.ALPHA_SWEEP,
    "optimize": Scenario.CONTROL_GRID,
    "compare-subsets": Scenario.SUBSET_COMPARISON,
    "equilibria": Scenario.SINGLE,
    "verify": Scenario.SINGLE,
}

EXIT_OK = 0
EXIT_FAILED_CHECKS = 1
EXIT_CONFIG = 2
EXIT_RUN = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tb-stigma",
        description="Tuberculosis model with reinfection and stigmatization: "
                    "simulation, equilibria and optimal control scenarios",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    helps = {
        "simulate": "Single uncontrolled run",
        "sweep-alpha": "Uncontrolled runs over stigmatization levels",
        "optimize": "Optimal control over the cost-by-alpha grid",
        "compare-subsets": "Optimal control restricted to control subsets",
        "equilibria": "Disease-free and endemic equilibria as CSV",
        "verify": "Seeded randomized checks of the model and the adjoint system",
    }
    for name, text in helps.items():
        sub = subparsers.add_parser(name, help=text)
        sub.add_argument("config", nargs="?", default=None, help="TOML configuration file")
        sub.add_argument("--out", default=None, help="Output directory (overrides output.dir)")
        sub.add_argument("--steps", type=int, default=None, help="Grid steps (overrides grid.steps)")
        sub.add_argument("--seed", type=int, default=0, help="Seed of the randomized checks")
        sub.add_argument("--log-level", default="INFO",
                         choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="Logging level")
        sub.add_argument("--figures", action="store_true",
                         help="Also write plotly HTML figures next to the CSV files")
        if name == "verify":
            sub.add_argument("--draws", type=int, default=200, help="Random draws per check")
    return parser


def _load(args: argparse.Namespace) -> ScenarioConfig:
    overrides: Dict[str, Any] = {"output.dir": args.out, "grid.steps": args.steps}
    default_scenario = SUBCOMMANDS[args.command]
    if args.config is None:
        return parse_config("", default_scenario, overrides)
    return load_config(args.config, default_scenario, overrides)


def write_outputs(table: ResultTable, output_dir: Path, figures: bool = False) -> List[Path]:
    """Write the CSV files, plot data and (optionally) figures of one table."""
    written = [emit_csv(table, output_dir / f"{table.name}_summary.csv", "summary")]
    if not table.series.empty:
        written.append(emit_csv(table, output_dir / f"{table.name}_series.csv", "series"))
        written.extend(emit_plot_data(table, output_dir / f"{table.name}_plots"))
    if figures:
        for i, fig in enumerate(ScenarioPlotter.figures_for(table)):
            target = output_dir / f"{table.name}_figures" / f"{i:02d}.html"
            written.append(ScenarioPlotter.save_figure(fig, target))
    return written


def run(args: argparse.Namespace) -> int:
    config = _load(args)
    output_dir = Config.initialize(config.output_dir)

    if args.command == "verify":
        checks = run_checks(np.random.default_rng(args.seed), config.grid, args.draws)
        emit_csv(checks, output_dir / "verify_summary.csv")
        return EXIT_OK if bool(checks["passed"].all()) else EXIT_FAILED_CHECKS

    if args.command == "equilibria":
        table = run_equilibria(config)
        table.summary.to_csv(sys.stdout, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    else:
        table = run_scenario(config)

    write_outputs(table, output_dir, args.figures)
    for message in ScenarioInsights.generate_messages(table):
        logger.info(message)
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )
    try:
        return run(args)
    except ConfigError as e:
        logger.error(f"Invalid configuration: {str(e)}")
        return EXIT_CONFIG
    except (ScenarioError, IntegrationError, OSError) as e:
        logger.error(f"Run failed: {str(e)}")
        return EXIT_RUN


if __name__ == "__main__":
    sys.exit(main())
