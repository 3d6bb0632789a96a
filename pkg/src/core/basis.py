"""Treatment basis functions phi_1..phi_J and their derivatives.

The loading of unit i on the factors is lambda_i(d) = beta_0 + sum_j beta_j phi_j(d),
so every basis exposes both the functions and their analytic derivatives.
"""

import logging
from abc import ABC, abstractmethod
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InputError

logger = logging.getLogger(__name__)


class Basis(ABC):
    """Finite set of known, non-constant functions of the treatment."""

    @property
    @abstractmethod
    def size(self) -> int:
        """Number J of basis functions."""

    @abstractmethod
    def evaluate(self, d: np.ndarray) -> np.ndarray:
        """Return the len(d) x J matrix with columns phi_1(d), ..., phi_J(d)."""

    @abstractmethod
    def differentiate(self, d: np.ndarray) -> np.ndarray:
        """Return the len(d) x J matrix with columns phi_1'(d), ..., phi_J'(d)."""

    def eval(self, j: int, d):
        """phi_j(d) for a 1-based index j."""
        self._check_index(j)
        return self.evaluate(np.atleast_1d(np.asarray(d, dtype=float)))[:, j - 1]

    def deriv(self, j: int, d):
        """phi_j'(d) for a 1-based index j."""
        self._check_index(j)
        return self.differentiate(np.atleast_1d(np.asarray(d, dtype=float)))[:, j - 1]

    def _check_index(self, j: int):
        if not 1 <= j <= self.size:
            raise InputError(f"Basis index {j} outside 1..{self.size}")


class MonomialBasis(Basis):
    """phi_j(d) = d**j for j = 1..J."""

    def __init__(self, degree: int):
        if degree < 1:
            raise InputError(f"Basis must be non-empty, got degree {degree}")
        self.degree = int(degree)

    @property
    def size(self) -> int:
        return self.degree

    def evaluate(self, d: np.ndarray) -> np.ndarray:
        d = np.asarray(d, dtype=float).reshape(-1, 1)
        return d ** np.arange(1, self.degree + 1)

    def differentiate(self, d: np.ndarray) -> np.ndarray:
        d = np.asarray(d, dtype=float).reshape(-1, 1)
        powers = np.arange(1, self.degree + 1)
        return powers * d ** (powers - 1)

    def __repr__(self) -> str:
        return f"MonomialBasis(degree={self.degree})"


class FunctionBasis(Basis):
    """User-supplied basis built from vectorised callables and their derivatives."""

    def __init__(
        self,
        functions: Sequence[Callable[[np.ndarray], np.ndarray]],
        derivatives: Sequence[Callable[[np.ndarray], np.ndarray]],
        names: Optional[Sequence[str]] = None,
    ):
        if len(functions) == 0:
            raise InputError("Basis must be non-empty")
        if len(functions) != len(derivatives):
            raise InputError(
                f"Got {len(functions)} basis functions but {len(derivatives)} derivatives"
            )
        self.functions = list(functions)
        self.derivatives = list(derivatives)
        self.names = list(names) if names is not None else [f"phi_{j + 1}" for j in range(len(functions))]

    @property
    def size(self) -> int:
        return len(self.functions)

    def evaluate(self, d: np.ndarray) -> np.ndarray:
        d = np.asarray(d, dtype=float).ravel()
        return np.column_stack([np.broadcast_to(fn(d), d.shape) for fn in self.functions])

    def differentiate(self, d: np.ndarray) -> np.ndarray:
        d = np.asarray(d, dtype=float).ravel()
        return np.column_stack([np.broadcast_to(fn(d), d.shape) for fn in self.derivatives])

    def __repr__(self) -> str:
        return f"FunctionBasis({', '.join(self.names)})"


def validate_basis(basis: Basis, support: np.ndarray) -> None:
    """Check finiteness on the observed treatment support and that no phi_j is constant there."""
    support = np.asarray(support, dtype=float).ravel()
    values = basis.evaluate(support)
    slopes = basis.differentiate(support)
    if not (np.all(np.isfinite(values)) and np.all(np.isfinite(slopes))):
        raise InputError(f"{basis!r} is not finite on the observed treatment support")
    flat = np.all(slopes == 0.0, axis=0)
    if np.any(flat):
        raise InputError(f"{basis!r} has constant functions at positions {np.flatnonzero(flat) + 1}")


def derivative_mismatch(basis: Basis, points: np.ndarray, step: float = 1e-5) -> float:
    """Largest relative gap between central differences and the analytic derivatives."""
    points = np.asarray(points, dtype=float).ravel()
    numeric = (basis.evaluate(points + step) - basis.evaluate(points - step)) / (2 * step)
    analytic = basis.differentiate(points)
    scale = np.maximum(np.abs(analytic), 1.0)
    return float(np.max(np.abs(numeric - analytic) / scale))
