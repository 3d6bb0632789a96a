"""Principal-components factor extraction and factor-count selection.

The auxiliary panel X is T x L (rows are dates, columns are series). Factors
are sqrt(T) times the leading left singular vectors of X, which are the
leading eigenvectors of XX'; the eigenvalues of XX' are the squared singular
values. No centering happens unless the caller asks for it.
"""

import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np
from sklearn.utils.extmath import svd_flip

from .config import factor_config
from .errors import DegenerateFactorError, InputError

logger = logging.getLogger(__name__)


def _read_only(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class PanelMatrix:
    """Balanced T x L auxiliary panel, X[t, l] = x_{l t}."""
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise InputError(f"Panel must be a 2-D matrix, got {values.ndim} dimensions")
        T, L = values.shape
        if T < 2 or L < 2:
            raise InputError(f"Panel needs T >= 2 and L >= 2, got {T} x {L}")
        if not np.all(np.isfinite(values)):
            bad = np.argwhere(~np.isfinite(values))[0]
            raise InputError(f"Panel has a missing or non-finite entry at date {bad[0]}, series {bad[1]}")
        object.__setattr__(self, "values", _read_only(values))

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def L(self) -> int:
        return self.values.shape[1]

    def centered(self) -> "PanelMatrix":
        """Panel with each series demeaned over time (opt-in)."""
        return PanelMatrix(self.values - self.values.mean(axis=0, keepdims=True))

    def scaled(self, factor: float) -> "PanelMatrix":
        return PanelMatrix(self.values * factor)


@dataclass(frozen=True)
class FactorFit:
    """Estimated factors, loadings and idiosyncratic residuals."""
    f_hat: np.ndarray       # T x R
    lambda_hat: np.ndarray  # L x R
    e_hat: np.ndarray       # T x L
    r_hat: int
    d_hat: np.ndarray       # R x R, singular values of X / sqrt(TL)
    singular_values: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        for name in ("f_hat", "lambda_hat", "e_hat", "d_hat"):
            object.__setattr__(self, name, _read_only(getattr(self, name)))
        if self.f_hat.shape[1] != self.r_hat or self.lambda_hat.shape[1] != self.r_hat:
            raise InputError("Factor and loading matrices disagree with r_hat")

    @property
    def T(self) -> int:
        return self.f_hat.shape[0]

    @property
    def L(self) -> int:
        return self.lambda_hat.shape[0]

    @property
    def common_component(self) -> np.ndarray:
        return self.f_hat @ self.lambda_hat.T

    def flipped(self, columns: Iterable[int]) -> "FactorFit":
        """Same fit with the sign of the given factor (and loading) columns reversed."""
        signs = np.ones(self.r_hat)
        signs[list(columns)] = -1.0
        return FactorFit(
            f_hat=self.f_hat * signs,
            lambda_hat=self.lambda_hat * signs,
            e_hat=self.e_hat,
            r_hat=self.r_hat,
            d_hat=self.d_hat,
            singular_values=self.singular_values,
        )


def extract_factors(x: PanelMatrix, r: int) -> FactorFit:
    """Estimate r factors by principal components.

    F_hat = sqrt(T) x leading eigenvectors of XX', Lambda_hat = X'F_hat / T,
    E_hat = X - F_hat Lambda_hat'. Each factor column is signed so that the
    largest-magnitude entry of its loading column is positive.
    """
    T, L = x.T, x.L
    if not 1 <= r <= min(T, L):
        raise InputError(f"Number of factors must lie in 1..{min(T, L)}, got {r}")

    u, s, vt = np.linalg.svd(x.values, full_matrices=False)
    eigenvalues = s ** 2
    if eigenvalues[0] <= 0.0 or eigenvalues[r - 1] < factor_config.eigen_tolerance * eigenvalues[0]:
        raise DegenerateFactorError(
            f"Factor {r} is degenerate: eigenvalue {eigenvalues[r - 1]:.3e} "
            f"vs largest {eigenvalues[0]:.3e}"
        )

    # Loadings are V_r S_r / sqrt(T), so deciding on rows of V' is deciding on Lambda_hat
    u_r, _ = svd_flip(u[:, :r].copy(), vt[:r].copy(), u_based_decision=False)

    f_hat = np.sqrt(T) * u_r
    lambda_hat = x.values.T @ f_hat / T
    e_hat = x.values - f_hat @ lambda_hat.T
    d_hat = np.diag(s[:r] / np.sqrt(T * L))

    logger.debug(f"Extracted {r} factors from a {T} x {L} panel")
    return FactorFit(
        f_hat=f_hat,
        lambda_hat=lambda_hat,
        e_hat=e_hat,
        r_hat=r,
        d_hat=d_hat,
        singular_values=s,
    )


@dataclass(frozen=True)
class FactorCountResult:
    """Outcome of a factor-count selection."""
    count: int
    method: str
    statistics: np.ndarray  # statistic for k = 1..r_max
    eigenvalues: np.ndarray  # eigenvalues of XX' / (TL), descending
    ambiguous: bool


def factor_count_diagnostics(
    x: PanelMatrix,
    r_max: Optional[int] = None,
    method: Optional[str] = None,
) -> FactorCountResult:
    """Growth-ratio ("gr") or eigenvalue-ratio ("er") statistics for k = 1..r_max.

    GR(k) = ln(1 + mu_k / V_k) / ln(1 + mu_{k+1} / V_{k+1}) with V_k = sum_{j>k} mu_j;
    ER(k) = mu_k / mu_{k+1}. Both are scale free.
    """
    method = (method or factor_config.count_method).lower()
    if method not in ("gr", "er"):
        raise InputError(f"Unknown factor-count method: {method}")

    T, L = x.T, x.L
    if r_max is None:
        r_max = factor_config.default_r_max(T, L)
    if not 1 <= r_max <= min(T, L) - 2:
        raise InputError(f"r_max must lie in 1..{min(T, L) - 2}, got {r_max}")

    s = np.linalg.svd(x.values, compute_uv=False)
    mu = s ** 2 / (T * L)
    if mu[0] <= 0.0:
        raise DegenerateFactorError("Panel is identically zero")
    mu = np.where(mu < factor_config.eigen_tolerance * mu[0], 0.0, mu)

    rank = int(np.count_nonzero(mu))
    if rank == 1:
        return FactorCountResult(1, method, np.full(r_max, np.nan), mu, False)
    if rank <= r_max:
        # Exact low-rank panel: the last non-zero eigenvalue is followed by an infinite gap
        stats = np.full(r_max, np.nan)
        stats[rank - 1] = np.inf
        return FactorCountResult(rank, method, stats, mu, False)

    k = np.arange(1, r_max + 1)
    if method == "er":
        stats = mu[k - 1] / mu[k]
    else:
        tails = np.cumsum(mu[::-1])[::-1]  # tails[j] = sum_{i >= j} mu_i (0-based)
        tail_after = np.append(tails[1:], 0.0)  # V_k for k = 1..m
        ratios = np.divide(mu, tail_after, out=np.full_like(mu, np.inf), where=tail_after > 0)
        growth = np.log1p(ratios)
        stats = growth[k - 1] / growth[k]

    count = int(np.argmax(stats)) + 1
    ordered = np.sort(stats)[::-1]
    ambiguous = bool(r_max > 1 and ordered[0] < factor_config.ambiguity_ratio * ordered[1])
    if ambiguous:
        logger.warning(
            f"{method.upper()} statistic has no clear maximum "
            f"(values {np.round(stats, 3).tolist()}); proceeding with {count} factors"
        )
    return FactorCountResult(count, method, stats, mu, ambiguous)


def estimate_num_factors(
    x: PanelMatrix,
    r_max: Optional[int] = None,
    method: Optional[str] = None,
) -> int:
    """Number of factors maximising the growth ratio (or eigenvalue ratio)."""
    return factor_count_diagnostics(x, r_max=r_max, method=method).count
