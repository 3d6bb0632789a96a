"""Command-line entry point: estimate AMEs from a panel file or run simulations."""

import argparse
import logging
import sys
from pathlib import Path
from typing import Iterable, List, Optional

from ..core.errors import FactorAmeError
from ..core.monte_carlo import run_experiments
from ..core.pipeline import estimate_panel
from ..data.panel_io import ingest_long_csv
from .reports import write_estimate_reports, write_mc_reports
from .run_config import RunConfig, load_run_config

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Average marginal effects in factor models: estimation and Monte Carlo tables."
    )
    parser.add_argument("--config", type=Path, default=None, help="JSON file with run settings; flags override it")
    parser.add_argument("--task", choices=["estimate", "simulate"], default=None)
    parser.add_argument("--input", type=Path, default=None, help="Long-format panel CSV (estimate)")
    parser.add_argument("--output-dir", type=Path, default=None, help="Directory for report files")

    estimation = parser.add_argument_group("estimation")
    estimation.add_argument("--J", type=int, default=None, help="Number of basis functions (polynomial degree)")
    estimation.add_argument(
        "--kernel", action="append", default=None, choices=["hc", "qs", "parzen"],
        help="Variance estimator; repeat for several",
    )
    estimation.add_argument("--bandwidth", type=float, default=None, help="HAC bandwidth (default 1.3 sqrt(T))")
    estimation.add_argument("--rmax", type=int, default=None, help="Largest factor count considered")
    estimation.add_argument("--num-factors", type=int, default=None, help="Fix the number of factors")
    estimation.add_argument("--count-method", choices=["gr", "er"], default=None)
    estimation.add_argument("--level", type=float, default=None, help="Confidence level")
    estimation.add_argument("--center-x", action=argparse.BooleanOptionalAction, default=None)
    estimation.add_argument("--grid", type=float, nargs="+", default=None, help="Treatment values for curves")
    estimation.add_argument("--curve-controls", choices=["zero", "observed"], default=None)
    estimation.add_argument(
        "--curve-dates", type=int, nargs="+", default=None, help="Dates (file time labels) that get a date-level curve"
    )
    estimation.add_argument("--estimator", choices=["ols", "iv"], default=None)
    estimation.add_argument("--normalization", choices=["N", "L"], default=None)
    estimation.add_argument("--instrument-column", default=None)
    estimation.add_argument("--add-constant", action=argparse.BooleanOptionalAction, default=None)
    estimation.add_argument("--n-jobs", type=int, default=None, help="Parallel workers (joblib)")

    simulation = parser.add_argument_group("simulation")
    simulation.add_argument("--table", type=int, default=None, help="Simulation table preset 1-6")
    simulation.add_argument("--seed", type=int, default=None)
    simulation.add_argument("--replications", type=int, default=None)
    simulation.add_argument(
        "--full-scale", action=argparse.BooleanOptionalAction, default=None, help="Use 8000 replications"
    )
    simulation.add_argument("--date", type=int, default=None, help="Date index for the Delta_t target")

    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", action="store_true")
    verbosity.add_argument("--quiet", action="store_true")
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    values = {
        key: value
        for key, value in vars(args).items()
        if key not in ("config", "kernel", "verbose", "quiet")
    }
    values["kernels"] = args.kernel
    return values


def run_estimate(config: RunConfig) -> List[Path]:
    """Ingest the panel, run the full estimation and write the reports."""
    ingested = ingest_long_csv(config.input, config.panel_schema())
    options = config.estimation_options(ingested.dates)
    result = estimate_panel(ingested.panel, ingested.units, config.basis(), options)
    logger.info(
        f"Estimated {result.N} units with {result.factor_fit.r_hat} factors: "
        f"overall AME {result.estimands.delta:.4f}"
    )
    return write_estimate_reports(result, config.output_dir, ingested.dates, ingested.series)


def run_simulate(config: RunConfig) -> List[Path]:
    """Run every configured design cell and write one table per target."""
    report = run_experiments(
        config.dgp_specs(),
        config.total_replications,
        kernels=config.kernel_specs(),
        n_jobs=config.n_jobs,
        level=config.level,
        date=config.date,
        method=config.estimator,
    )
    return write_mc_reports(report, config.output_dir)


def main(argv: Optional[Iterable[str]] = None) -> int:
    args = build_parser().parse_args(None if argv is None else list(argv))
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    try:
        config = load_run_config(args.config, _overrides(args))
        if config.task == "estimate":
            run_estimate(config)
        else:
            run_simulate(config)
    except FactorAmeError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
