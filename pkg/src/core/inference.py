"""Asymptotic variances of the AME estimators and Gaussian confidence intervals.

Three targets:

* sigma_i^2 = omega_i' Sigma_h omega_i for Delta_i (rate sqrt(T)), with
  h_it = (u_it w_it', v_it')' and Sigma_h estimated by HC or kernel HAC;
* sigma_t^2 = (N/L) sigma_q^2 + var_i(gamma_i' z_it) for Delta_t (rate sqrt(N));
* sigma^2 = (N/T) gamma_bar' Sigma_mm gamma_bar + var(Delta_i) for Delta (rate sqrt(N)).
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .basis import Basis
from .config import inference_config, regression_config
from .errors import InputError, SingularDesignError
from .estimands import ame_time, gamma_bar_of, z_matrix, z_vector
from .factor import FactorFit
from .second_stage import UnitData, UnitFit

logger = logging.getLogger(__name__)

KERNEL_ALIASES = {
    "none": "none",
    "hc": "none",
    "qs": "quadratic_spectral",
    "quadratic_spectral": "quadratic_spectral",
    "parzen": "parzen",
}
KERNEL_LABELS = {"none": "HC", "quadratic_spectral": "QS", "parzen": "Parzen"}


@dataclass(frozen=True)
class KernelSpec:
    """Long-run covariance kernel; kind "none" is the heteroskedasticity-consistent estimator."""
    kind: str = "none"
    bandwidth: Optional[float] = None  # None means 1.3 T^{1/2}

    def __post_init__(self):
        kind = KERNEL_ALIASES.get(str(self.kind).lower())
        if kind is None:
            raise InputError(f"Unknown kernel: {self.kind}")
        object.__setattr__(self, "kind", kind)
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise InputError(f"Bandwidth must be positive, got {self.bandwidth}")

    @classmethod
    def hc(cls) -> "KernelSpec":
        return cls("none")

    @classmethod
    def quadratic_spectral(cls, bandwidth: Optional[float] = None) -> "KernelSpec":
        return cls("quadratic_spectral", bandwidth)

    @classmethod
    def parzen(cls, bandwidth: Optional[float] = None) -> "KernelSpec":
        return cls("parzen", bandwidth)

    @property
    def label(self) -> str:
        return KERNEL_LABELS[self.kind]

    def resolve_bandwidth(self, T: int) -> float:
        if self.bandwidth is not None:
            return float(self.bandwidth)
        return inference_config.default_bandwidth(T)


@dataclass(frozen=True)
class EstimateWithCI:
    """Point estimate with a symmetric Gaussian confidence interval."""
    point: float
    std_error: float
    ci_lower: float
    ci_upper: float
    level: float
    scaling: str  # "sqrt_T" or "sqrt_N"
    kernel: KernelSpec
    variance: float  # asymptotic variance before scaling

    @property
    def radius(self) -> float:
        return (self.ci_upper - self.ci_lower) / 2

    def covers(self, truth: float) -> bool:
        return self.ci_lower <= truth <= self.ci_upper


def normal_quantile(level: float) -> float:
    """Two-sided critical value z_{(1+level)/2}."""
    if not 0.0 < level < 1.0:
        raise InputError(f"Confidence level must lie in (0, 1), got {level}")
    return float(stats.norm.ppf((1.0 + level) / 2.0))


def confidence_interval(
    point: float,
    variance: float,
    sample_size: int,
    scaling: str,
    kernel: KernelSpec,
    level: Optional[float] = None,
) -> EstimateWithCI:
    level = inference_config.level if level is None else level
    variance = max(float(variance), 0.0)
    std_error = float(np.sqrt(variance / sample_size))
    radius = normal_quantile(level) * std_error
    return EstimateWithCI(
        point=float(point),
        std_error=std_error,
        ci_lower=float(point) - radius,
        ci_upper=float(point) + radius,
        level=level,
        scaling=scaling,
        kernel=kernel,
        variance=variance,
    )


def kernel_weight(spec: KernelSpec, x) -> np.ndarray:
    """Kernel weight k(x) for x >= 0 (scalar or array)."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise InputError("Kernel argument must be non-negative")
    if spec.kind == "none":
        return np.where(x == 0, 1.0, 0.0)
    if spec.kind == "parzen":
        inner = 1.0 - 6.0 * x ** 2 + 6.0 * x ** 3
        outer = 2.0 * (1.0 - x) ** 3
        return np.where(x <= 0.5, inner, np.where(x <= 1.0, outer, 0.0))
    z = 6.0 * np.pi * x / 5.0
    safe = np.where(z == 0, 1.0, z)
    weights = 25.0 / (12.0 * np.pi ** 2 * np.where(x == 0, 1.0, x) ** 2) * (np.sin(safe) / safe - np.cos(safe))
    return np.where(x == 0, 1.0, weights)


def hac_cov(series: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """Gamma_0 + sum_{j>=1} k(j/b) (Gamma_j + Gamma_j'), Gamma_j = T^{-1} sum_t h_{t+j} h_t'.

    With kind "none" only Gamma_0 is kept (HC estimator).
    """
    h = np.asarray(series, dtype=float)
    if h.ndim == 1:
        h = h.reshape(-1, 1)
    T = h.shape[0]
    if T < 2:
        raise InputError(f"Need at least 2 observations for a covariance, got {T}")

    cov = h.T @ h / T
    if spec.kind == "none":
        return cov

    bandwidth = spec.resolve_bandwidth(T)
    lags = np.arange(1, T)
    weights = kernel_weight(spec, lags / bandwidth)
    for lag, weight in zip(lags, weights):
        if weight == 0.0:
            continue
        gamma = h[lag:].T @ h[:-lag] / T
        cov += weight * (gamma + gamma.T)
    return cov


def h_vectors(unit_fit: UnitFit, z: np.ndarray) -> np.ndarray:
    """T x 2K matrix with rows (u_it m_it', v_it'), m = w for OLS and r for IV."""
    z = np.asarray(z, dtype=float)
    scores = unit_fit.u_hat[:, None] * unit_fit.moment_matrix
    return np.hstack([scores, z - z.mean(axis=0)])


def _invert_check(matrix: np.ndarray, what: str):
    s = np.linalg.svd(matrix, compute_uv=False)
    if s[0] <= 0.0 or s[-1] < regression_config.rank_tolerance * s[0]:
        raise SingularDesignError(f"{what} is numerically singular ({s[-1]:.3e} / {s[0]:.3e})")


def variance_unit(unit_fit: UnitFit, z: np.ndarray, spec: KernelSpec) -> float:
    """sigma_i^2 = omega_i' Sigma_h omega_i, omega_i = (z_bar' G^{-1}, gamma_i')'.

    G is T^{-1} W'W for OLS fits and T^{-1} R'W for IV fits.
    """
    z = np.asarray(z, dtype=float)
    T, K = unit_fit.w_hat.shape
    if z.shape != (T, K):
        raise InputError(f"z matrix has shape {z.shape}, expected {(T, K)}")
    gram = unit_fit.moment_matrix.T @ unit_fit.w_hat / T
    _invert_check(gram, f"Gram matrix of unit {unit_fit.unit_id!r}")

    omega = np.concatenate([np.linalg.solve(gram.T, z.mean(axis=0)), unit_fit.gamma_hat])
    sigma_h = hac_cov(h_vectors(unit_fit, z), spec)
    return max(float(omega @ sigma_h @ omega), 0.0)


def estimate_unit(
    unit_fit: UnitFit,
    z: np.ndarray,
    spec: KernelSpec,
    level: Optional[float] = None,
) -> EstimateWithCI:
    point = float(unit_fit.gamma_hat @ np.asarray(z).mean(axis=0))
    variance = variance_unit(unit_fit, z, spec)
    return confidence_interval(point, variance, unit_fit.T, "sqrt_T", spec, level)


def _check_panel(fit: FactorFit, unit_fits: Sequence[UnitFit], units: Sequence[UnitData]):
    if len(unit_fits) < 2:
        raise InputError(f"Cross-sectional inference needs N >= 2 units, got {len(unit_fits)}")
    if len(units) != len(unit_fits):
        raise InputError(f"{len(units)} units but {len(unit_fits)} fits")
    for uf in unit_fits:
        if uf.layout.r_hat != fit.r_hat:
            raise InputError(f"Unit {uf.unit_id!r} was fitted with {uf.layout.r_hat} factors, not {fit.r_hat}")


def _slope_blocks(gamma: np.ndarray, r_hat: int, J: int) -> np.ndarray:
    """J x R matrix of the slope-loading blocks of gamma."""
    return gamma[r_hat : (J + 1) * r_hat].reshape(J, r_hat)


def q_statistics(
    fit: FactorFit,
    unit_fits: Sequence[UnitFit],
    units: Sequence[UnitData],
    basis: Basis,
    t: int,
    normalization: Optional[str] = None,
) -> np.ndarray:
    """q_lt = N^{-1} sum_i gamma_i' b_ilt for every series l at date t.

    g_lt = (Lambda'Lambda / n)^{-1} lambda_l e_lt with n = L (default) or N.
    """
    normalization = (normalization or inference_config.loading_normalization).upper()
    if normalization not in ("N", "L"):
        raise InputError(f"Loading normalization must be 'N' or 'L', got {normalization}")
    N, J, R = len(unit_fits), basis.size, fit.r_hat
    scale = fit.L if normalization == "L" else N
    sigma_lambda = fit.lambda_hat.T @ fit.lambda_hat / scale
    _invert_check(sigma_lambda, "Loading second-moment matrix")

    g = np.linalg.solve(sigma_lambda, (fit.lambda_hat * fit.e_hat[t][:, None]).T).T  # L x R
    d_t = np.array([unit.d[t] for unit in units])
    slopes = basis.differentiate(d_t)  # N x J
    blocks = np.stack([_slope_blocks(uf.gamma_hat, R, J) for uf in unit_fits])  # N x J x R
    kappa = np.einsum("nj,njr->r", slopes, blocks) / N
    return g @ kappa


def variance_time(
    fit: FactorFit,
    unit_fits: Sequence[UnitFit],
    units: Sequence[UnitData],
    basis: Basis,
    t: int,
    normalization: Optional[str] = None,
    z_matrices: Optional[Sequence[np.ndarray]] = None,
) -> float:
    """sigma_t^2 = (N/L) L^{-1} sum_l q_lt^2 + N^{-1} sum_i (gamma_i' z_it - Delta_t)^2."""
    _check_panel(fit, unit_fits, units)
    if not 0 <= t < fit.T:
        raise InputError(f"Date index {t} outside 0..{fit.T - 1}")
    N = len(unit_fits)
    q = q_statistics(fit, unit_fits, units, basis, t, normalization)
    sigma_q = float(np.mean(q ** 2))

    if z_matrices is None:
        z_rows = np.array([_z_row(fit, unit, basis, t) for unit in units])
    else:
        z_rows = np.array([z[t] for z in z_matrices])
    gamma_bar = gamma_bar_of(unit_fits)
    delta_t = ame_time(gamma_bar, z_rows.mean(axis=0))
    effects = np.array([uf.gamma_hat @ z_row for uf, z_row in zip(unit_fits, z_rows)])
    dispersion = float(np.mean((effects - delta_t) ** 2))
    return max(N / fit.L * sigma_q + dispersion, 0.0)


def _z_row(fit: FactorFit, unit: UnitData, basis: Basis, t: int) -> np.ndarray:
    return z_vector(fit.f_hat[t], unit.d[t], basis, unit.d_c)


def estimate_time(
    fit: FactorFit,
    unit_fits: Sequence[UnitFit],
    units: Sequence[UnitData],
    basis: Basis,
    t: int,
    level: Optional[float] = None,
    normalization: Optional[str] = None,
    z_matrices: Optional[Sequence[np.ndarray]] = None,
) -> EstimateWithCI:
    if z_matrices is None:
        z_rows = np.array([_z_row(fit, unit, basis, t) for unit in units])
    else:
        z_rows = np.array([z[t] for z in z_matrices])
    point = ame_time(gamma_bar_of(unit_fits), z_rows.mean(axis=0))
    variance = variance_time(fit, unit_fits, units, basis, t, normalization, z_matrices)
    return confidence_interval(point, variance, len(unit_fits), "sqrt_N", KernelSpec.hc(), level)


def m_vectors(fit: FactorFit, units: Sequence[UnitData], basis: Basis, d_c: int) -> np.ndarray:
    """T x K matrix of m_t = (0, a_t1 f_t' - mean, ..., a_tJ f_t' - mean, 0), a_tj = N^{-1} sum_i phi_j'(d_it)."""
    R, J, T = fit.r_hat, basis.size, fit.T
    slopes = np.mean([basis.differentiate(unit.d) for unit in units], axis=0)  # T x J
    weighted = slopes[:, :, None] * fit.f_hat[:, None, :]  # T x J x R
    centered = (weighted - weighted.mean(axis=0)).reshape(T, J * R)
    return np.hstack([np.zeros((T, R)), centered, np.zeros((T, d_c))])


def variance_overall(
    fit: FactorFit,
    unit_fits: Sequence[UnitFit],
    units: Sequence[UnitData],
    basis: Basis,
    spec: KernelSpec,
    delta_i: Optional[np.ndarray] = None,
) -> float:
    """sigma^2 = (N/T) gamma_bar' Sigma_mm gamma_bar + N^{-1} sum_i (Delta_i - Delta)^2."""
    _check_panel(fit, unit_fits, units)
    N, T = len(unit_fits), fit.T
    gamma_bar = gamma_bar_of(unit_fits)
    m = m_vectors(fit, units, basis, unit_fits[0].layout.d_c)
    sigma_mm = hac_cov(m, spec)
    if delta_i is None:
        delta_i = _unit_effects(fit, units, unit_fits, basis)
    dispersion = float(np.mean((delta_i - np.mean(delta_i)) ** 2))
    return max(N / T * float(gamma_bar @ sigma_mm @ gamma_bar) + dispersion, 0.0)


def _unit_effects(fit, units, unit_fits, basis) -> np.ndarray:
    return np.array(
        [uf.gamma_hat @ z_matrix(fit, unit.d, basis, unit.d_c).mean(axis=0) for uf, unit in zip(unit_fits, units)]
    )


def estimate_overall(
    fit: FactorFit,
    unit_fits: Sequence[UnitFit],
    units: Sequence[UnitData],
    basis: Basis,
    spec: KernelSpec,
    level: Optional[float] = None,
    delta_i: Optional[np.ndarray] = None,
) -> EstimateWithCI:
    if delta_i is None:
        delta_i = _unit_effects(fit, units, unit_fits, basis)
    variance = variance_overall(fit, unit_fits, units, basis, spec, delta_i)
    return confidence_interval(float(np.mean(delta_i)), variance, len(unit_fits), "sqrt_N", spec, level)
