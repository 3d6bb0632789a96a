"""Replicated Monte Carlo experiments and their summary metrics."""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .basis import MonomialBasis
from .config import inference_config, simulation_config
from .errors import InputError, NumericalDegeneracyError
from .inference import EstimateWithCI, KernelSpec
from .pipeline import EstimationOptions, estimate_panel
from ..data.data_generator import DgpSpec, generate, generator_description

logger = logging.getLogger(__name__)

TARGETS = ("unit", "date", "overall")


@dataclass
class ReplicationOutcome:
    """Point estimates and interval results of one replication, keyed by target."""
    replication: int
    r_hat: Optional[int] = None
    points: Dict[str, float] = field(default_factory=dict)
    truths: Dict[str, float] = field(default_factory=dict)
    radii: Dict[str, Dict[str, float]] = field(default_factory=dict)  # target -> kernel label -> radius
    covered: Dict[str, Dict[str, bool]] = field(default_factory=dict)
    failure: Optional[str] = None


@dataclass
class KernelMetrics:
    radius: float
    coverage: float


@dataclass
class McCell:
    """Metrics of one estimator target in one design cell."""
    spec: DgpSpec
    target: str
    replications: int
    completed: int
    bias: float
    variance: float
    mse: float
    kernels: Dict[str, KernelMetrics]
    r_hat_share: float
    failures: int = 0

    @property
    def size(self) -> int:
        """Cross-section dimension of the cell: L for single-unit designs, N for panels."""
        return self.spec.L if self.spec.mode == "single" else self.spec.N

    @property
    def flagged(self) -> bool:
        return self.failures > simulation_config.failure_flag_share * self.replications

    def row(self) -> dict:
        row = {
            "target": self.target,
            "mode": self.spec.mode,
            "J": self.spec.J,
            "rho_f": self.spec.rho_f,
            "T": self.spec.T,
            "size": self.size,
            "Bias": self.bias,
            "Var": self.variance,
            "MSE": self.mse,
        }
        for label, metrics in self.kernels.items():
            row[f"Av. R. CI ({label})"] = metrics.radius
            row[f"Cov. CI ({label})"] = metrics.coverage
        row["R_hat = R"] = self.r_hat_share
        row["completed"] = self.completed
        row["failures"] = self.failures
        row["flagged"] = self.flagged
        return row


@dataclass
class McReport:
    """Monte Carlo metrics for one or more design cells."""
    cells: List[McCell] = field(default_factory=list)
    seeds: List[int] = field(default_factory=list)
    generator: str = field(default_factory=generator_description)

    def extend(self, other: "McReport") -> "McReport":
        self.cells.extend(other.cells)
        self.seeds.extend(seed for seed in other.seeds if seed not in self.seeds)
        return self

    def targets(self) -> List[str]:
        return [target for target in TARGETS if any(cell.target == target for cell in self.cells)]

    def to_frame(self, target: Optional[str] = None) -> pd.DataFrame:
        cells = [cell for cell in self.cells if target is None or cell.target == target]
        return pd.DataFrame([cell.row() for cell in cells])


def targets_for(spec: DgpSpec) -> List[str]:
    """Single-unit designs report Delta_i; panel designs report Delta_t and Delta."""
    return ["unit"] if spec.mode == "single" else ["date", "overall"]


def _record(outcome: ReplicationOutcome, target: str, estimates: Dict[str, EstimateWithCI], truth: float):
    first = next(iter(estimates.values()))
    outcome.points[target] = first.point
    outcome.truths[target] = truth
    outcome.radii[target] = {label: est.radius for label, est in estimates.items()}
    outcome.covered[target] = {label: est.covers(truth) for label, est in estimates.items()}


def run_replication(
    spec: DgpSpec,
    replication: int,
    kernels: Sequence[KernelSpec],
    level: float,
    date: int,
    method: str,
) -> ReplicationOutcome:
    """Draw one sample and run the full estimation procedure on it.

    Degenerate samples come back with ``failure`` set instead of raising.
    """
    outcome = ReplicationOutcome(replication=replication)
    sample = generate(spec, replication)
    targets = targets_for(spec)
    options = EstimationOptions(
        kernels=tuple(kernels),
        level=level,
        method=method,
        unit_inference="unit" in targets,
        dates=[date] if "date" in targets else [],
        overall_inference="overall" in targets,
    )
    try:
        result = estimate_panel(sample.panel, sample.units, MonomialBasis(spec.J), options)
    except NumericalDegeneracyError as e:
        outcome.failure = str(e)
        return outcome

    outcome.r_hat = result.factor_fit.r_hat
    if "unit" in targets:
        estimates = {label: intervals[0] for label, intervals in result.unit_intervals.items()}
        _record(outcome, "unit", estimates, float(sample.truth.delta_i[0]))
    if "date" in targets:
        estimate = result.date_intervals[date]
        _record(outcome, "date", {estimate.kernel.label: estimate}, float(sample.truth.delta_t[date]))
    if "overall" in targets:
        _record(outcome, "overall", result.overall_intervals, sample.truth.delta)
    return outcome


def summarize(
    spec: DgpSpec,
    target: str,
    outcomes: Sequence[ReplicationOutcome],
    replications: int,
) -> McCell:
    """Bias, variance, MSE and per-kernel radius and coverage over completed replications."""
    completed = sorted((o for o in outcomes if o.failure is None), key=lambda o: o.replication)
    failures = replications - len(completed)
    if not completed:
        return McCell(spec, target, replications, 0, np.nan, np.nan, np.nan, {}, np.nan, failures)

    errors = np.array([o.points[target] - o.truths[target] for o in completed])
    bias = float(errors.mean())
    variance = float(errors.var())
    labels = list(completed[0].radii[target])
    kernels = {
        label: KernelMetrics(
            radius=float(np.mean([o.radii[target][label] for o in completed])),
            coverage=float(np.mean([o.covered[target][label] for o in completed])),
        )
        for label in labels
    }
    r_hat_share = float(np.mean([o.r_hat == spec.R for o in completed]))
    return McCell(
        spec=spec,
        target=target,
        replications=replications,
        completed=len(completed),
        bias=bias,
        variance=variance,
        mse=bias ** 2 + variance,
        kernels=kernels,
        r_hat_share=r_hat_share,
        failures=failures,
    )


def run_experiment(
    spec: DgpSpec,
    replications: int,
    kernels: Sequence[KernelSpec] = (KernelSpec.hc(),),
    n_jobs: Optional[int] = None,
    level: Optional[float] = None,
    date: int = 0,
    method: str = "ols",
) -> McReport:
    """Replicate the design ``replications`` times and aggregate the metrics.

    Replication r always uses the stream keyed by (spec.seed, r), so the report
    does not depend on n_jobs or on the order in which replications finish.
    """
    if replications < 1:
        raise InputError(f"Need at least one replication, got {replications}")
    if not kernels:
        raise InputError("At least one kernel is required")
    if not 0 <= date < spec.T:
        raise InputError(f"Date index {date} outside 0..{spec.T - 1}")
    level = inference_config.level if level is None else level

    logger.info(
        f"Running {replications} replications: {spec.mode} design, T={spec.T}, "
        f"N={spec.N}, L={spec.L}, J={spec.J}, rho_f={spec.rho_f}"
    )
    batch_size = simulation_config.progress_every
    num_batches = (replications + batch_size - 1) // batch_size
    outcomes: List[ReplicationOutcome] = []
    with Parallel(n_jobs=n_jobs or 1) as parallel:
        for i in range(0, replications, batch_size):
            batch = range(i, min(i + batch_size, replications))
            outcomes.extend(
                parallel(delayed(run_replication)(spec, r, kernels, level, date, method) for r in batch)
            )
            logger.info(f"Processed batch {i // batch_size + 1}/{num_batches}")

    failed = [o for o in outcomes if o.failure is not None]
    for o in failed:
        logger.debug(f"Replication {o.replication} failed: {o.failure}")
    cells = [summarize(spec, target, outcomes, replications) for target in targets_for(spec)]
    if failed:
        log = logger.warning if cells[0].flagged else logger.info
        log(f"{len(failed)}/{replications} replications were degenerate and excluded")
    return McReport(cells=cells, seeds=[spec.seed])


def run_experiments(
    specs: Sequence[DgpSpec],
    replications: int,
    kernels: Sequence[KernelSpec] = (KernelSpec.hc(),),
    n_jobs: Optional[int] = None,
    level: Optional[float] = None,
    date: int = 0,
    method: str = "ols",
) -> McReport:
    """Run every cell in order and merge the reports."""
    if not specs:
        raise InputError("No design cells to simulate")
    report = McReport()
    for index, spec in enumerate(specs, start=1):
        logger.info(f"Cell {index}/{len(specs)}")
        report.extend(run_experiment(spec, replications, kernels, n_jobs, level, date, method))
    return report


def table_specs(table: int, seed: int = 0) -> List[DgpSpec]:
    """Design cells of one of the six simulation tables, both designs (rho_f = 0 and 0.5).

    Tables 1-2 are the single-unit design with J = 1, 2; tables 3-6 the panel
    design, 3 and 5 with J = 1, 4 and 6 with J = 2 (3/4 report Delta_t, 5/6 Delta).
    """
    if table not in simulation_config.table_grids:
        raise InputError(f"Unknown table preset {table}, expected one of {sorted(simulation_config.table_grids)}")
    J = 1 if table % 2 == 1 else 2
    specs = []
    for rho_f in (0.0, 0.5):
        for T, size in simulation_config.table_grids[table]:
            if table <= 2:
                specs.append(DgpSpec.single(T=T, L=size, J=J, rho_f=rho_f, seed=seed))
            else:
                specs.append(DgpSpec.panel(T=T, N=size, J=J, rho_f=rho_f, seed=seed))
    return specs


def table_target(table: int) -> str:
    if table <= 2:
        return "unit"
    return "date" if table <= 4 else "overall"
