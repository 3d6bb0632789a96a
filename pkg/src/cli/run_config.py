"""Validated run configuration for the command line."""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..core.basis import MonomialBasis
from ..core.config import inference_config, simulation_config
from ..core.errors import ConfigError, InputError
from ..core.inference import KERNEL_ALIASES, KernelSpec
from ..core.monte_carlo import table_specs
from ..core.pipeline import EstimationOptions
from ..data.data_generator import DgpSpec
from ..data.panel_io import PanelSchema

logger = logging.getLogger(__name__)


class CellConfig(BaseModel):
    """One simulation design cell. Panel cells set N (L = 2N); single-unit cells set L."""
    model_config = ConfigDict(extra="forbid")

    mode: Literal["single", "panel"] = "single"
    T: int = Field(ge=2)
    N: int = Field(default=1, ge=1)
    L: Optional[int] = Field(default=None, ge=2)
    rho_f: float = Field(default=0.0, ge=0.0, lt=1.0)
    J: Optional[int] = None
    endogeneity: float = 0.0
    with_instrument: bool = False

    @model_validator(mode="after")
    def check_dimensions(self):
        if self.mode == "single" and self.L is None:
            raise ValueError("single-unit cells need L")
        if self.mode == "single" and self.N != 1:
            raise ValueError("single-unit cells have N = 1")
        if self.mode == "panel" and self.L is not None and self.L != 2 * self.N:
            raise ValueError(f"panel cells have L = 2N, got L={self.L}, N={self.N}")
        return self

    def to_spec(self, J: int, seed: int) -> DgpSpec:
        L = self.L if self.mode == "single" else 2 * self.N
        return DgpSpec(
            mode=self.mode,
            T=self.T,
            N=self.N,
            L=L,
            rho_f=self.rho_f,
            J=self.J or J,
            seed=seed,
            endogeneity=self.endogeneity,
            with_instrument=self.with_instrument,
        )


class RunConfig(BaseModel):
    """Everything a run needs; built from a JSON file and command-line flags."""
    model_config = ConfigDict(extra="forbid")

    task: Literal["estimate", "simulate"] = "estimate"
    input: Optional[Path] = None
    output_dir: Path = Path("reports")

    # Estimation
    J: int = 1
    kernels: List[str] = Field(default_factory=lambda: ["hc"])
    bandwidth: Optional[float] = Field(default=None, gt=0)
    rmax: Optional[int] = Field(default=None, ge=1)
    num_factors: Optional[int] = Field(default=None, ge=1)
    count_method: Literal["gr", "er"] = "gr"
    level: float = Field(default=inference_config.level, gt=0.0, lt=1.0)
    center_x: bool = False
    grid: Optional[List[float]] = None
    curve_controls: Literal["zero", "observed"] = "zero"
    curve_dates: List[int] = Field(default_factory=list)  # time labels of the input file
    estimator: Literal["ols", "iv"] = "ols"
    normalization: Literal["N", "L"] = inference_config.loading_normalization
    n_jobs: Optional[int] = None

    # Input schema
    unit_column: str = "unit"
    time_column: str = "time"
    outcome_column: str = "y"
    treatment_column: str = "d"
    aux_columns: Optional[List[str]] = None
    control_columns: Optional[List[str]] = None
    instrument_column: Optional[str] = None
    add_constant: bool = False

    # Simulation
    seed: int = Field(default=0, ge=0, lt=2 ** 64)
    replications: int = Field(default=simulation_config.replications, ge=1)
    full_scale: bool = False
    table: Optional[int] = None
    cells: List[CellConfig] = Field(default_factory=list)
    date: int = Field(default=0, ge=0)

    @field_validator("J")
    @classmethod
    def basis_non_empty(cls, value: int) -> int:
        if value < 1:
            raise ValueError("basis must be non-empty (J >= 1)")
        return value

    @field_validator("kernels")
    @classmethod
    def known_kernels(cls, value: List[str]) -> List[str]:
        if not value:
            raise ValueError("at least one kernel is required")
        unknown = [kernel for kernel in value if kernel.lower() not in KERNEL_ALIASES]
        if unknown:
            raise ValueError(f"unknown kernels {unknown}, expected hc, qs or parzen")
        return [kernel.lower() for kernel in value]

    @field_validator("table")
    @classmethod
    def known_table(cls, value: Optional[int]) -> Optional[int]:
        if value is not None and value not in simulation_config.table_grids:
            raise ValueError(f"table must be one of {sorted(simulation_config.table_grids)}")
        return value

    @model_validator(mode="after")
    def check_task(self):
        if self.task == "estimate" and self.input is None:
            raise ValueError("estimate needs an input file")
        if self.task == "simulate" and self.table is None and not self.cells:
            raise ValueError("simulate needs a table preset or a non-empty cell list")
        if self.estimator == "iv" and self.task == "estimate" and not self.instrument_column:
            raise ValueError("the IV estimator needs instrument_column")
        if self.curve_dates and self.grid is None:
            raise ValueError("curve_dates need a treatment grid")
        return self

    @property
    def total_replications(self) -> int:
        return simulation_config.full_replications if self.full_scale else self.replications

    def kernel_specs(self) -> List[KernelSpec]:
        return [KernelSpec(kernel, self.bandwidth) for kernel in dict.fromkeys(self.kernels)]

    def basis(self) -> MonomialBasis:
        return MonomialBasis(self.J)

    def panel_schema(self) -> PanelSchema:
        return PanelSchema(
            unit_column=self.unit_column,
            time_column=self.time_column,
            outcome_column=self.outcome_column,
            treatment_column=self.treatment_column,
            aux_columns=self.aux_columns,
            control_columns=self.control_columns,
            instrument_column=self.instrument_column,
            add_constant=self.add_constant,
        )

    def estimation_options(self, dates: Optional[Sequence[int]] = None) -> EstimationOptions:
        """Options for estimate_panel; ``dates`` maps curve_dates labels to row positions."""
        return EstimationOptions(
            num_factors=self.num_factors,
            r_max=self.rmax,
            count_method=self.count_method,
            center=self.center_x,
            method=self.estimator,
            kernels=tuple(self.kernel_specs()),
            level=self.level,
            normalization=self.normalization,
            d_grid=self.grid,
            curve_controls=self.curve_controls,
            curve_dates=self.curve_date_positions(dates),
            n_jobs=self.n_jobs,
        )

    def curve_date_positions(self, dates: Optional[Sequence[int]] = None) -> List[int]:
        if dates is None:
            return list(self.curve_dates)
        positions = {label: t for t, label in enumerate(dates)}
        unknown = [label for label in self.curve_dates if label not in positions]
        if unknown:
            raise InputError(f"Curve dates {unknown} are not dates of the input panel")
        return [positions[label] for label in self.curve_dates]

    def dgp_specs(self) -> List[DgpSpec]:
        if self.table is not None:
            return table_specs(self.table, seed=self.seed)
        return [cell.to_spec(self.J, self.seed) for cell in self.cells]


def _read_json(path: Path) -> Dict[str, Any]:
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"Config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config file {path} is not valid JSON: {e}")
    if not isinstance(data, dict):
        raise ConfigError(f"Config file {path} must hold a JSON object")
    return data


def load_run_config(path: Optional[Path] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Config file values, then explicit overrides (``None`` values are ignored)."""
    values: Dict[str, Any] = _read_json(Path(path)) if path is not None else {}
    values.update({key: value for key, value in (overrides or {}).items() if value is not None})
    try:
        config = RunConfig.model_validate(values)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(part) for part in error['loc']) or 'config'}: {error['msg']}" for error in e.errors()
        )
        raise ConfigError(f"Invalid configuration: {problems}")
    logger.debug(f"Run configuration: {config.model_dump_json()}")
    return config
