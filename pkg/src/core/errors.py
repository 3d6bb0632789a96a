"""Exception hierarchy shared by the library and the command line.

Every exception carries the exit code the CLI returns when it escapes a run:
1 for configuration problems, 2 for bad input data, 3 for numerical
degeneracies met during estimation.
"""

from typing import Iterable, List, Tuple


class FactorAmeError(Exception):
    """Base class for all errors raised by this package."""
    exit_code = 3


class ConfigError(FactorAmeError, ValueError):
    """Invalid run configuration."""
    exit_code = 1


class InputError(FactorAmeError, ValueError):
    """Invalid input data or arguments."""
    exit_code = 2


class UnbalancedPanelError(InputError):
    """Some (unit, date) cells are missing from a long panel."""

    def __init__(self, missing: Iterable[Tuple[str, int]]):
        self.missing: List[Tuple[str, int]] = list(missing)
        shown = ", ".join(f"({unit}, {date})" for unit, date in self.missing[:20])
        more = f" and {len(self.missing) - 20} more" if len(self.missing) > 20 else ""
        super().__init__(f"Unbalanced panel, missing (unit, time) pairs: {shown}{more}")


class DuplicateKeyError(InputError):
    """A (unit, date) key occurs more than once."""

    def __init__(self, duplicates: Iterable[Tuple[str, int]]):
        self.duplicates: List[Tuple[str, int]] = list(duplicates)
        shown = ", ".join(f"({unit}, {date})" for unit, date in self.duplicates[:20])
        super().__init__(f"Duplicate (unit, time) keys: {shown}")


class NumericalDegeneracyError(FactorAmeError):
    """Estimation cannot proceed because a matrix is (numerically) singular."""
    exit_code = 3


class DegenerateFactorError(NumericalDegeneracyError):
    """The requested factor has a numerically zero eigenvalue."""


class SingularDesignError(NumericalDegeneracyError):
    """Rank-deficient second-stage design or Gram matrix."""

    def __init__(self, message: str, block: str = ""):
        self.block = block
        super().__init__(message)


class WeakInstrumentError(SingularDesignError):
    """The instrument cross-moment matrix is numerically singular."""
