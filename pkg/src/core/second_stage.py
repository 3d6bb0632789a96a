"""Interacted second-stage designs and per-unit OLS / IV fits.

Row t of the design for unit i is
    w_it = (f_t', phi_1(d_it) f_t', ..., phi_J(d_it) f_t', c_it')'
so gamma_i stacks the intercept loadings, the J slope loadings and the control
coefficients, in that order.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from .basis import Basis
from .config import regression_config
from .errors import InputError, SingularDesignError, WeakInstrumentError
from .factor import FactorFit

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class UnitData:
    """Observed series for one unit: outcome, treatment, controls and optional instrument."""
    y: np.ndarray
    d: np.ndarray
    c: Optional[np.ndarray] = None
    s: Optional[np.ndarray] = None
    unit_id: str = ""

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        d = np.asarray(self.d, dtype=float).ravel()
        if y.shape != d.shape:
            raise InputError(f"Unit {self.unit_id!r}: outcome has {y.size} dates, treatment {d.size}")
        T = y.size
        c = np.zeros((T, 0)) if self.c is None else np.asarray(self.c, dtype=float)
        if c.ndim == 1:
            c = c.reshape(-1, 1)
        if c.shape[0] != T:
            raise InputError(f"Unit {self.unit_id!r}: controls have {c.shape[0]} dates, expected {T}")
        arrays = [y, d, c]
        s = None
        if self.s is not None:
            s = np.asarray(self.s, dtype=float).ravel()
            if s.size != T:
                raise InputError(f"Unit {self.unit_id!r}: instrument has {s.size} dates, expected {T}")
            arrays.append(s)
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise InputError(f"Unit {self.unit_id!r} has non-finite entries")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "s", s)

    @property
    def T(self) -> int:
        return self.y.size

    @property
    def d_c(self) -> int:
        return self.c.shape[1]


@dataclass(frozen=True)
class DesignLayout:
    """Column blocks of the interacted design."""
    r_hat: int
    J: int
    d_c: int

    @property
    def width(self) -> int:
        return (self.J + 1) * self.r_hat + self.d_c

    @property
    def blocks(self) -> List[Tuple[str, slice]]:
        R = self.r_hat
        blocks = [("factors", slice(0, R))]
        blocks += [(f"phi_{j}*factors", slice(j * R, (j + 1) * R)) for j in range(1, self.J + 1)]
        blocks.append(("controls", slice((self.J + 1) * R, self.width)))
        return blocks

    def block_of(self, column: int) -> str:
        for name, span in self.blocks:
            if span.start <= column < span.stop:
                return name
        raise InputError(f"Column {column} outside a design of width {self.width}")

    def slope_slice(self, j: int) -> slice:
        """Columns multiplying phi_j(d) f_t (1-based j)."""
        return slice(j * self.r_hat, (j + 1) * self.r_hat)


def design_layout(r_hat: int, J: int, d_c: int) -> DesignLayout:
    return DesignLayout(r_hat=r_hat, J=J, d_c=d_c)


@dataclass(frozen=True)
class UnitFit:
    """Second-stage fit for one unit."""
    gamma_hat: np.ndarray
    w_hat: np.ndarray
    u_hat: np.ndarray
    layout: DesignLayout
    method: str = "ols"
    r_instruments: Optional[np.ndarray] = None  # IV only: rows r_it
    unit_id: str = ""
    condition_number: float = field(default=float("nan"), compare=False)
    first_stage_f: float = field(default=float("nan"), compare=False)  # IV only
    weak_instrument: bool = False

    @property
    def T(self) -> int:
        return self.w_hat.shape[0]

    @property
    def fitted(self) -> np.ndarray:
        return self.w_hat @ self.gamma_hat

    @property
    def moment_matrix(self) -> np.ndarray:
        """Matrix whose columns are orthogonal to the residuals: W for OLS, R for IV."""
        return self.w_hat if self.r_instruments is None else self.r_instruments


def interacted_design(f_hat: np.ndarray, phi: np.ndarray, controls: np.ndarray) -> np.ndarray:
    """Stack [f, phi_1 * f, ..., phi_J * f, c] column-wise."""
    blocks = [f_hat] + [phi[:, [j]] * f_hat for j in range(phi.shape[1])] + [controls]
    return np.hstack(blocks)


def _check_lengths(fit: FactorFit, unit: UnitData):
    if unit.T != fit.T:
        raise InputError(f"Unit {unit.unit_id!r} has {unit.T} dates but the factors have {fit.T}")


def build_design(fit: FactorFit, unit: UnitData, basis: Basis) -> np.ndarray:
    """T x ((J+1)R + d_c) interacted design for one unit."""
    _check_lengths(fit, unit)
    return interacted_design(fit.f_hat, basis.evaluate(unit.d), unit.c)


def _rank_check(matrix: np.ndarray, layout: Optional[DesignLayout], what: str, error=SingularDesignError):
    u, s, vt = np.linalg.svd(matrix, full_matrices=False)
    if s[0] <= 0.0 or s[-1] < regression_config.rank_tolerance * s[0]:
        column = int(np.argmax(np.abs(vt[-1])))
        block = layout.block_of(column) if layout is not None else f"column {column}"
        raise error(
            f"{what} is numerically singular (singular values {s[-1]:.3e} / {s[0]:.3e}); "
            f"offending block: {block}",
            block=block,
        )
    return u, s, vt


def fit_ols(
    w_hat: np.ndarray,
    y: np.ndarray,
    layout: Optional[DesignLayout] = None,
    unit_id: str = "",
) -> UnitFit:
    """Least squares of y on the design, solved through the SVD of the design."""
    w_hat = np.asarray(w_hat, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    T, K = w_hat.shape
    if y.size != T:
        raise InputError(f"Outcome has {y.size} dates but the design has {T} rows")
    if T <= K:
        raise InputError(f"Need more dates than regressors, got T={T} and {K} columns")
    if layout is None:
        layout = DesignLayout(r_hat=K, J=0, d_c=0)

    u, s, vt = _rank_check(w_hat, layout, f"Design of unit {unit_id!r}")
    gamma = vt.T @ ((u.T @ y) / s)
    residuals = y - w_hat @ gamma
    return UnitFit(
        gamma_hat=gamma,
        w_hat=w_hat,
        u_hat=residuals,
        layout=layout,
        method="ols",
        unit_id=unit_id,
        condition_number=float(s[0] / s[-1]),
    )


def first_stage_strength(r_hat: np.ndarray, w_hat: np.ndarray, layout: DesignLayout) -> float:
    """Cragg-Donald statistic from the smallest canonical correlation of instruments and design.

    Columns shared by both (factors, controls) have correlation one, so the
    minimum is attained on the treatment-interacted block.
    """
    T, K = w_hat.shape
    q_r, _ = np.linalg.qr(r_hat)
    q_w, _ = np.linalg.qr(w_hat)
    rho = np.linalg.svd(q_r.T @ q_w, compute_uv=False)[-1]
    rho2 = min(float(rho) ** 2, 1.0)
    if rho2 >= 1.0:
        return float("inf")
    endogenous = max(layout.J * layout.r_hat, 1)
    return (T - K) / endogenous * rho2 / (1.0 - rho2)


def fit_iv(fit: FactorFit, unit: UnitData, instrument: np.ndarray, basis: Basis) -> UnitFit:
    """Just-identified IV: gamma = (R'W)^{-1} R'y, R built like W with s in place of d."""
    _check_lengths(fit, unit)
    instrument = np.asarray(instrument, dtype=float).ravel()
    if instrument.size != unit.T:
        raise InputError(f"Instrument has {instrument.size} dates, expected {unit.T}")
    layout = design_layout(fit.r_hat, basis.size, unit.d_c)
    w_hat = build_design(fit, unit, basis)
    r_hat = interacted_design(fit.f_hat, basis.evaluate(instrument), unit.c)

    cross = r_hat.T @ w_hat
    _, s, _ = _rank_check(
        cross, layout, f"Instrument moment matrix of unit {unit.unit_id!r}", error=WeakInstrumentError
    )
    condition = float(s[0] / s[-1])
    if condition > regression_config.condition_warning:
        logger.warning(f"Unit {unit.unit_id!r}: ill-conditioned instrument moments, condition number {condition:.2e}")
    strength = first_stage_strength(r_hat, w_hat, layout)
    weak = strength < regression_config.weak_instrument_f
    if weak:
        logger.warning(
            f"Unit {unit.unit_id!r}: weak first stage (statistic {strength:.2f} below "
            f"{regression_config.weak_instrument_f:g}); the IV variance may be explosive"
        )
    gamma = np.linalg.solve(cross, r_hat.T @ unit.y)
    return UnitFit(
        gamma_hat=gamma,
        w_hat=w_hat,
        u_hat=unit.y - w_hat @ gamma,
        layout=layout,
        method="iv",
        r_instruments=r_hat,
        unit_id=unit.unit_id,
        condition_number=condition,
        first_stage_f=strength,
        weak_instrument=weak,
    )


def fit_unit(fit: FactorFit, unit: UnitData, basis: Basis, method: str = "ols") -> UnitFit:
    """Fit one unit by OLS or, when an instrument is attached, by IV."""
    if method == "iv":
        if unit.s is None:
            raise InputError(f"Unit {unit.unit_id!r} has no instrument for an IV fit")
        return fit_iv(fit, unit, unit.s, basis)
    if method != "ols":
        raise InputError(f"Unknown second-stage method: {method}")
    layout = design_layout(fit.r_hat, basis.size, unit.d_c)
    return fit_ols(build_design(fit, unit, basis), unit.y, layout=layout, unit_id=unit.unit_id)


def fit_units(
    fit: FactorFit,
    units: Sequence[UnitData],
    basis: Basis,
    method: str = "ols",
    n_jobs: Optional[int] = None,
) -> List[UnitFit]:
    """Fit every unit; units are independent so they may run in parallel."""
    if n_jobs is None or n_jobs == 1:
        fits = [fit_unit(fit, unit, basis, method) for unit in units]
    else:
        fits = Parallel(n_jobs=n_jobs)(delayed(fit_unit)(fit, unit, basis, method) for unit in units)
    logger.debug(f"Fitted {len(fits)} units by {method.upper()}")
    return list(fits)
