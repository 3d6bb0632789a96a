"""End-to-end estimation: factor count, PCA, per-unit fits, estimands and intervals."""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .basis import Basis, validate_basis
from .config import inference_config
from .errors import InputError
from .estimands import (
    EstimandSet,
    Scope,
    compute_estimands,
    counterfactual_curve,
    marginal_effect_curve,
    unit_z_matrices,
)
from .factor import FactorCountResult, FactorFit, PanelMatrix, extract_factors, factor_count_diagnostics
from .inference import EstimateWithCI, KernelSpec, estimate_overall, estimate_time, estimate_unit
from .second_stage import UnitData, UnitFit, fit_units

logger = logging.getLogger(__name__)


@dataclass
class EstimationOptions:
    """Choices for one run of the estimation procedure."""
    num_factors: Optional[int] = None  # None: select with the factor-count statistic
    r_max: Optional[int] = None
    count_method: Optional[str] = None
    center: bool = False
    method: str = "ols"
    kernels: Tuple[KernelSpec, ...] = (KernelSpec.hc(),)
    level: float = inference_config.level
    normalization: Optional[str] = None
    unit_inference: bool = True
    dates: Optional[Sequence[int]] = None  # None: every date when N >= 2
    overall_inference: bool = True
    d_grid: Optional[Sequence[float]] = None
    curve_dates: Sequence[int] = ()  # date indices that also get a date-level curve
    curve_controls: str = "zero"
    n_jobs: Optional[int] = None


@dataclass
class CurvePoint:
    scope: str
    index: Optional[int]
    kind: str  # "level" or "slope"
    d: float
    value: float


@dataclass
class PanelEstimate:
    """Everything produced by one estimation run."""
    factor_fit: FactorFit
    count: Optional[FactorCountResult]
    unit_fits: List[UnitFit]
    estimands: EstimandSet
    unit_intervals: Dict[str, List[EstimateWithCI]] = field(default_factory=dict)  # kernel label -> per unit
    date_intervals: Dict[int, EstimateWithCI] = field(default_factory=dict)
    overall_intervals: Dict[str, EstimateWithCI] = field(default_factory=dict)  # kernel label -> estimate
    curves: List[CurvePoint] = field(default_factory=list)

    @property
    def N(self) -> int:
        return len(self.unit_fits)


def select_factors(x: PanelMatrix, options: EstimationOptions) -> Tuple[int, Optional[FactorCountResult]]:
    if options.num_factors is not None:
        return options.num_factors, None
    count = factor_count_diagnostics(x, r_max=options.r_max, method=options.count_method)
    return count.count, count


def estimate_panel(
    x: PanelMatrix,
    units: Sequence[UnitData],
    basis: Basis,
    options: Optional[EstimationOptions] = None,
) -> PanelEstimate:
    """Run the estimation procedure on an auxiliary panel and the units' data."""
    options = options or EstimationOptions()
    if len(units) == 0:
        raise InputError("No units to estimate")
    if options.center:
        x = x.centered()
    for unit in units:
        if unit.T != x.T:
            raise InputError(f"Unit {unit.unit_id!r} has {unit.T} dates, the panel has {x.T}")
    if options.curve_dates and options.d_grid is None:
        raise InputError("Date-level curves need a treatment grid")
    bad_dates = [t for t in options.curve_dates if not 0 <= t < x.T]
    if bad_dates:
        raise InputError(f"Curve dates {bad_dates} outside 0..{x.T - 1}")
    validate_basis(basis, np.concatenate([unit.d for unit in units]))

    r, count = select_factors(x, options)
    factor_fit = extract_factors(x, r)
    logger.debug(f"Using {r} factor(s) from a {x.T} x {x.L} panel")

    unit_fits = fit_units(factor_fit, units, basis, method=options.method, n_jobs=options.n_jobs)
    z_matrices = unit_z_matrices(factor_fit, units, basis)
    estimands = compute_estimands(factor_fit, units, unit_fits, basis, z_matrices)
    result = PanelEstimate(factor_fit=factor_fit, count=count, unit_fits=unit_fits, estimands=estimands)

    if options.unit_inference:
        for spec in options.kernels:
            result.unit_intervals[spec.label] = [
                estimate_unit(uf, z, spec, options.level) for uf, z in zip(unit_fits, z_matrices)
            ]

    if len(units) >= 2:
        dates = range(x.T) if options.dates is None else options.dates
        for t in dates:
            result.date_intervals[int(t)] = estimate_time(
                factor_fit, unit_fits, units, basis, int(t), options.level, options.normalization, z_matrices
            )
        if options.overall_inference:
            for spec in options.kernels:
                result.overall_intervals[spec.label] = estimate_overall(
                    factor_fit, unit_fits, units, basis, spec, options.level, estimands.delta_i
                )
    else:
        logger.info("Single unit: skipping date-level and overall intervals (they need N >= 2)")

    if options.d_grid is not None:
        result.curves = _curves(factor_fit, units, unit_fits, basis, options)
    return result


def _curves(
    fit: FactorFit,
    units: Sequence[UnitData],
    unit_fits: Sequence[UnitFit],
    basis: Basis,
    options: EstimationOptions,
) -> List[CurvePoint]:
    points: List[CurvePoint] = []
    targets = [(Scope.OVERALL, None)] + [(Scope.UNIT, i) for i in range(len(unit_fits))]
    targets += [(Scope.DATE, int(t)) for t in options.curve_dates]
    for scope, index in targets:
        levels = counterfactual_curve(
            scope, options.d_grid, unit_fits, fit, basis, index, units, options.curve_controls
        )
        slopes = marginal_effect_curve(scope, options.d_grid, unit_fits, fit, basis, index)
        for kind, curve in (("level", levels), ("slope", slopes)):
            points += [CurvePoint(scope.value, index, kind, d, value) for d, value in curve]
    return points
