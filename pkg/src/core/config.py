"""Configuration defaults for factor extraction, regression, inference and simulation."""

from dataclasses import dataclass, field
from typing import Dict, Tuple


@dataclass
class FactorConfig:
    """Principal-components extraction and factor-count selection."""
    eigen_tolerance: float = 1e-12  # relative to the largest eigenvalue
    r_max_cap: int = 8
    ambiguity_ratio: float = 1.1
    count_method: str = "gr"

    def default_r_max(self, T: int, L: int) -> int:
        """min(cap, floor(min(T, L) / 2)), kept inside the admissible range."""
        upper = min(T, L) - 2
        return max(1, min(self.r_max_cap, min(T, L) // 2, upper))


@dataclass
class RegressionConfig:
    """Per-unit second-stage regressions."""
    rank_tolerance: float = 1e-10
    condition_warning: float = 1e8  # instrument moment matrix
    weak_instrument_f: float = 10.0  # first-stage strength below this is flagged


@dataclass
class InferenceConfig:
    """Variance estimation and confidence intervals."""
    level: float = 0.95
    bandwidth_scale: float = 1.3
    bandwidth_power: float = 0.5
    loading_normalization: str = "L"

    def default_bandwidth(self, T: int) -> float:
        return self.bandwidth_scale * T ** self.bandwidth_power


@dataclass
class SimulationConfig:
    """Monte Carlo harness defaults."""
    replications: int = 1000
    full_replications: int = 8000
    failure_flag_share: float = 0.01
    num_factors: int = 2
    progress_every: int = 100
    bit_generator: str = "Philox"

    # Design grids of the simulation table presets, keyed by preset number
    table_grids: Dict[int, Tuple[Tuple[int, int], ...]] = field(default=None)

    def __post_init__(self):
        if self.table_grids is None:
            grid = tuple((T, size) for T in (50, 100, 200) for size in (50, 100, 200))
            self.table_grids = {number: grid for number in range(1, 7)}


# Global configuration instances
factor_config = FactorConfig()
regression_config = RegressionConfig()
inference_config = InferenceConfig()
simulation_config = SimulationConfig()
