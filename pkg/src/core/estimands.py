"""Plug-in average marginal effects and counterfactual curves.

z_it = (0_R', phi_1'(d_it) f_t', ..., phi_J'(d_it) f_t', 0_dc')' is the
derivative of w_it with respect to the treatment, so gamma_i' z_it is the
marginal effect of unit i at date t.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .basis import Basis
from .errors import InputError
from .factor import FactorFit
from .second_stage import UnitData, UnitFit, interacted_design

logger = logging.getLogger(__name__)


class Scope(str, Enum):
    UNIT = "unit"
    DATE = "date"
    OVERALL = "overall"


@dataclass(frozen=True, eq=False)
class EstimandSet:
    """Unit, date and overall AMEs estimated from one factor fit."""
    delta_i: np.ndarray
    delta_t: np.ndarray
    delta: float
    gamma_bar: np.ndarray
    unit_ids: Tuple[str, ...]
    r_hat: int
    method: str = "ols"


def z_vector(f_t: np.ndarray, d_it: float, basis: Basis, d_c: int) -> np.ndarray:
    """Derivative vector z_it for a single (unit, date) given the factor row f_t."""
    f_t = np.asarray(f_t, dtype=float).ravel()
    slopes = basis.differentiate(np.array([d_it]))[0]
    return np.concatenate([np.zeros(f_t.size), np.kron(slopes, f_t), np.zeros(d_c)])


def z_matrix(fit: FactorFit, d: np.ndarray, basis: Basis, d_c: int) -> np.ndarray:
    """T x ((J+1)R + d_c) matrix whose rows are z_it for t = 1..T."""
    d = np.asarray(d, dtype=float).ravel()
    if d.size != fit.T:
        raise InputError(f"Treatment has {d.size} dates but the factors have {fit.T}")
    slopes = basis.differentiate(d)
    derivative = interacted_design(fit.f_hat, slopes, np.zeros((fit.T, d_c)))
    derivative[:, : fit.r_hat] = 0.0
    return derivative


def _as_vector(values, name: str) -> np.ndarray:
    values = np.asarray(values, dtype=float).ravel()
    if not np.all(np.isfinite(values)):
        raise InputError(f"{name} has non-finite entries")
    return values


def ame_unit(unit_fit: UnitFit, z_bar_i: np.ndarray) -> float:
    """Delta_i = gamma_i' (T^{-1} sum_t z_it)."""
    z_bar_i = _as_vector(z_bar_i, "z_bar_i")
    if z_bar_i.size != unit_fit.gamma_hat.size:
        raise InputError(f"z_bar has length {z_bar_i.size}, gamma has {unit_fit.gamma_hat.size}")
    return float(unit_fit.gamma_hat @ z_bar_i)


def ame_time(gamma_bar: np.ndarray, z_bar_t: np.ndarray) -> float:
    """Delta_t = gamma_bar' (N^{-1} sum_i z_it)."""
    gamma_bar = _as_vector(gamma_bar, "gamma_bar")
    z_bar_t = _as_vector(z_bar_t, "z_bar_t")
    if gamma_bar.size != z_bar_t.size:
        raise InputError(f"gamma_bar has length {gamma_bar.size}, z_bar_t has {z_bar_t.size}")
    return float(gamma_bar @ z_bar_t)


def ame_overall(delta_i: Sequence[float]) -> float:
    """Delta = N^{-1} sum_i Delta_i."""
    delta_i = np.asarray(delta_i, dtype=float).ravel()
    if delta_i.size == 0:
        raise InputError("Cannot average an empty set of unit effects")
    return float(np.mean(delta_i))


def gamma_bar_of(unit_fits: Sequence[UnitFit]) -> np.ndarray:
    if len(unit_fits) == 0:
        raise InputError("No unit fits supplied")
    widths = {fit.gamma_hat.size for fit in unit_fits}
    if len(widths) != 1:
        raise InputError(f"Unit fits have different layouts: widths {sorted(widths)}")
    return np.mean([fit.gamma_hat for fit in unit_fits], axis=0)


def unit_z_matrices(
    fit: FactorFit, units: Sequence[UnitData], basis: Basis
) -> List[np.ndarray]:
    return [z_matrix(fit, unit.d, basis, unit.d_c) for unit in units]


def compute_estimands(
    fit: FactorFit,
    units: Sequence[UnitData],
    unit_fits: Sequence[UnitFit],
    basis: Basis,
    z_matrices: Optional[Sequence[np.ndarray]] = None,
) -> EstimandSet:
    """All plug-in AMEs: Delta_i per unit, Delta_t per date and Delta."""
    if len(units) != len(unit_fits):
        raise InputError(f"{len(units)} units but {len(unit_fits)} fits")
    if z_matrices is None:
        z_matrices = unit_z_matrices(fit, units, basis)

    delta_i = np.array([ame_unit(uf, z.mean(axis=0)) for uf, z in zip(unit_fits, z_matrices)])
    gamma_bar = gamma_bar_of(unit_fits)
    z_bar_t = np.mean(z_matrices, axis=0)  # T x K
    delta_t = z_bar_t @ gamma_bar
    methods = {uf.method for uf in unit_fits}
    return EstimandSet(
        delta_i=delta_i,
        delta_t=delta_t,
        delta=ame_overall(delta_i),
        gamma_bar=gamma_bar,
        unit_ids=tuple(unit.unit_id for unit in units),
        r_hat=fit.r_hat,
        method=methods.pop() if len(methods) == 1 else "mixed",
    )


def _check_grid(d_grid) -> np.ndarray:
    grid = np.asarray(d_grid, dtype=float).ravel()
    if grid.size == 0:
        raise InputError("Counterfactual grid is empty")
    if not np.all(np.isfinite(grid)):
        raise InputError("Counterfactual grid has non-finite values")
    return grid


def _unit_curve(
    gamma: np.ndarray,
    f_bar: np.ndarray,
    phi_grid: np.ndarray,
    d_c: int,
    c_bar: Optional[np.ndarray],
    derivative: bool,
) -> np.ndarray:
    """gamma' w_bar(d) on the grid, with w_bar(d) = (f_bar, phi(d) f_bar, c)."""
    R = f_bar.size
    intercept = 0.0 if derivative else float(gamma[:R] @ f_bar)
    slopes = np.array([gamma[j * R : (j + 1) * R] @ f_bar for j in range(1, phi_grid.shape[1] + 1)])
    values = intercept + phi_grid @ slopes
    if c_bar is not None and not derivative and d_c > 0:
        values = values + float(gamma[gamma.size - d_c :] @ c_bar)
    return values


def _curve(
    scope: Scope,
    d_grid,
    unit_fits: Sequence[UnitFit],
    fit: FactorFit,
    basis: Basis,
    index: Optional[int],
    units: Optional[Sequence[UnitData]],
    controls: str,
    derivative: bool,
) -> List[Tuple[float, float]]:
    scope = Scope(scope)
    grid = _check_grid(d_grid)
    if len(unit_fits) == 0:
        raise InputError("No unit fits supplied")
    if controls not in ("zero", "observed"):
        raise InputError(f"Unknown control treatment for curves: {controls}")
    if controls == "observed" and units is None:
        raise InputError("Observed-control curves need the unit data")
    phi_grid = basis.differentiate(grid) if derivative else basis.evaluate(grid)
    d_c = unit_fits[0].layout.d_c

    def c_bar(i: int) -> Optional[np.ndarray]:
        return units[i].c.mean(axis=0) if controls == "observed" else None

    if scope is Scope.UNIT:
        if index is None or not 0 <= index < len(unit_fits):
            raise InputError(f"Unit index {index} outside 0..{len(unit_fits) - 1}")
        values = _unit_curve(
            unit_fits[index].gamma_hat, fit.f_hat.mean(axis=0), phi_grid, d_c, c_bar(index), derivative
        )
    elif scope is Scope.DATE:
        if index is None or not 0 <= index < fit.T:
            raise InputError(f"Date index {index} outside 0..{fit.T - 1}")
        c_mean = None
        if controls == "observed":
            c_mean = np.mean([units[i].c[index] for i in range(len(units))], axis=0)
        values = _unit_curve(gamma_bar_of(unit_fits), fit.f_hat[index], phi_grid, d_c, c_mean, derivative)
    else:
        f_bar = fit.f_hat.mean(axis=0)
        values = np.mean(
            [
                _unit_curve(uf.gamma_hat, f_bar, phi_grid, d_c, c_bar(i), derivative)
                for i, uf in enumerate(unit_fits)
            ],
            axis=0,
        )
    return list(zip(grid.tolist(), np.asarray(values, dtype=float).tolist()))


def counterfactual_curve(
    scope: Scope,
    d_grid,
    unit_fits: Sequence[UnitFit],
    fit: FactorFit,
    basis: Basis,
    index: Optional[int] = None,
    units: Optional[Sequence[UnitData]] = None,
    controls: str = "zero",
) -> List[Tuple[float, float]]:
    """Average outcome had the treatment been fixed at each grid value.

    The control slot of w_it(d) is zero unless ``controls="observed"``, in which
    case the time (or cross-section) average of the observed controls is used.
    """
    return _curve(scope, d_grid, unit_fits, fit, basis, index, units, controls, derivative=False)


def marginal_effect_curve(
    scope: Scope,
    d_grid,
    unit_fits: Sequence[UnitFit],
    fit: FactorFit,
    basis: Basis,
    index: Optional[int] = None,
) -> List[Tuple[float, float]]:
    """Derivative of the counterfactual curve: average marginal effect at fixed d."""
    return _curve(scope, d_grid, unit_fits, fit, basis, index, None, "zero", derivative=True)
