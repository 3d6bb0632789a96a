"""Simulated factor-model panels for the Monte Carlo designs.

Single-unit design (N = 1):
    f_tr = 0.5 + rho^r (f_{t-1,r} - 0.5) + noise, stationary N(0.5, 1)
    lambda_lr ~ U[-1, 1], e_lt ~ N(0, 1), X = F Lambda' + E
    d_t = f_t1 + 0.5 e_1t + 0.5 e_2t + eps_t
    y_t = lambda*(d_t)' f_t - 0.5 x_1t - 0.5 x_2t + u_t, lambda*_r(d) = 0.5 + sum_j 0.5 d^j

Panel design (L = 2N): unit i owns series 2i-1 and 2i, which are its two
controls and enter its treatment; lambda*_ir(d) = beta_0i + sum_j beta_ji d^j
with beta ~ 0.5 + U[-0.5, 0.5] drawn independently per (j, i).
"""

import logging
from dataclasses import dataclass
from typing import List

import numpy as np

from ..core.config import simulation_config
from ..core.errors import ConfigError, InputError
from ..core.factor import PanelMatrix
from ..core.second_stage import UnitData

logger = logging.getLogger(__name__)

MODES = ("single", "panel")


@dataclass(frozen=True)
class DgpSpec:
    """One Monte Carlo design cell."""
    mode: str = "single"
    T: int = 200
    N: int = 1
    L: int = 200
    R: int = 2
    rho_f: float = 0.0
    J: int = 1
    seed: int = 0
    endogeneity: float = 0.0
    with_instrument: bool = False
    instrument_noise: float = 0.5

    def __post_init__(self):
        if self.mode not in MODES:
            raise InputError(f"Unknown design mode {self.mode!r}, expected one of {MODES}")
        if self.mode == "single" and self.N != 1:
            raise InputError(f"Single-unit design needs N = 1, got {self.N}")
        if self.mode == "panel" and self.L != 2 * self.N:
            raise InputError(f"Panel design needs L = 2N, got L={self.L}, N={self.N}")
        if self.T < 2 or self.N < 1 or self.L < 2:
            raise InputError(f"Invalid dimensions T={self.T}, N={self.N}, L={self.L}")
        if self.R != simulation_config.num_factors:
            raise InputError(f"The designs use R = {simulation_config.num_factors} factors, got {self.R}")
        if not 0.0 <= self.rho_f < 1.0:
            raise InputError(f"rho_f must lie in [0, 1), got {self.rho_f}")
        if self.J not in (1, 2):
            raise InputError(f"The designs use J in {{1, 2}}, got {self.J}")
        if not 0 <= self.seed < 2 ** 64:
            raise InputError(f"Seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.instrument_noise < 0:
            raise InputError("Instrument noise scale must be non-negative")

    @classmethod
    def panel(cls, T: int, N: int, **kwargs) -> "DgpSpec":
        return cls(mode="panel", T=T, N=N, L=2 * N, **kwargs)

    @classmethod
    def single(cls, T: int, L: int, **kwargs) -> "DgpSpec":
        return cls(mode="single", T=T, N=1, L=L, **kwargs)


@dataclass(frozen=True, eq=False)
class Truth:
    """Population estimands for one simulated sample."""
    delta_i: np.ndarray  # per unit
    delta_t: np.ndarray  # per date
    delta: float


@dataclass(frozen=True, eq=False)
class SimulatedSample:
    panel: PanelMatrix
    units: List[UnitData]
    truth: Truth
    factors: np.ndarray
    loadings: np.ndarray


def replication_rng(seed: int, replication: int) -> np.random.Generator:
    """Stream keyed by (seed, replication), independent of run order; bit generator from simulation_config."""
    sequence = np.random.SeedSequence(entropy=seed, spawn_key=(replication,))
    return np.random.Generator(_bit_generator()(sequence))


def _bit_generator() -> type:
    name = simulation_config.bit_generator
    candidate = getattr(np.random, name, None)
    if not (isinstance(candidate, type) and issubclass(candidate, np.random.BitGenerator)):
        raise ConfigError(f"Unknown numpy bit generator: {name!r}")
    return candidate


def generator_description() -> str:
    return f"numpy {_bit_generator().__name__} via SeedSequence(entropy=seed, spawn_key=(replication,))"


def simulate_factors(rng: np.random.Generator, T: int, R: int, rho_f: float) -> np.ndarray:
    """AR(1) factors with stationary N(0.5, 1) marginals; factor r has persistence rho_f**r."""
    rho = rho_f ** np.arange(1, R + 1)
    innovation_sd = np.sqrt(1.0 - rho ** 2)
    factors = np.empty((T, R))
    factors[0] = 0.5 + rng.standard_normal(R)
    shocks = rng.standard_normal((T, R)) * innovation_sd
    for t in range(1, T):
        factors[t] = 0.5 + rho * (factors[t - 1] - 0.5) + shocks[t]
    return factors


def generate(spec: DgpSpec, replication: int) -> SimulatedSample:
    """Draw one sample of the design; the draw depends only on (spec.seed, replication)."""
    if replication < 0:
        raise InputError(f"Replication index must be non-negative, got {replication}")
    rng = replication_rng(spec.seed, replication)
    T, N, L, R, J = spec.T, spec.N, spec.L, spec.R, spec.J

    factors = simulate_factors(rng, T, R, spec.rho_f)
    loadings = rng.uniform(-1.0, 1.0, size=(L, R))
    errors = rng.standard_normal((T, L))
    x = factors @ loadings.T + errors

    eps = rng.standard_normal((T, N))
    u = rng.standard_normal((T, N))
    if spec.mode == "single":
        intercepts = np.full(N, 0.5)
        slopes = np.full((N, J), 0.5)
    else:
        intercepts = 0.5 + rng.uniform(-0.5, 0.5, size=N)
        slopes = 0.5 + rng.uniform(-0.5, 0.5, size=(N, J))
    instrument_shock = rng.standard_normal((T, N)) * spec.instrument_noise

    own = np.stack([2 * np.arange(N), 2 * np.arange(N) + 1], axis=1)  # series of unit i
    factor_sum = factors.sum(axis=1)
    units = []
    for i in range(N):
        a, b = own[i]
        exogenous = factors[:, 0] + 0.5 * errors[:, a] + 0.5 * errors[:, b] + eps[:, i]
        d = exogenous + spec.endogeneity * u[:, i]
        loading = intercepts[i] + (d[:, None] ** np.arange(1, J + 1) * slopes[i]).sum(axis=1)
        y = loading * factor_sum - 0.5 * x[:, a] - 0.5 * x[:, b] + u[:, i]
        s = exogenous + instrument_shock[:, i] if spec.with_instrument else None
        units.append(UnitData(y=y, d=d, c=x[:, [a, b]], s=s, unit_id=f"unit{i + 1}"))

    truth = _truth(spec, factors)
    return SimulatedSample(
        panel=PanelMatrix(x), units=units, truth=truth, factors=factors, loadings=loadings
    )


def _truth(spec: DgpSpec, factors: np.ndarray) -> Truth:
    """Population AMEs: E_t / E_i of lambda*'(d)' f_t under the design's laws.

    With E[beta_j] = 0.5, E[f_tr] = 0.5, var(f_tr) = 1 and E[d | f] = f_t1:
    Delta = 0.5 (J = 1) or 2 (J = 2); Delta_t = 0.5 (f_t1 + f_t2) plus
    f_t1 (f_t1 + f_t2) when J = 2.
    """
    factor_sum = factors.sum(axis=1)
    delta_t = 0.5 * factor_sum
    if spec.J == 2:
        delta_t = delta_t + 2 * 0.5 * factors[:, 0] * factor_sum
    delta = 0.5 if spec.J == 1 else 2.0
    return Truth(delta_i=np.full(spec.N, delta), delta_t=delta_t, delta=delta)
