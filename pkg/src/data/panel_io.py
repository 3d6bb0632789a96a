"""Long-format panel CSV input and output.

One row per (unit, date): unit id, integer date index, outcome, treatment,
then the unit's auxiliary series. The auxiliary panel X is assembled unit-major,
series-minor: with K series per unit, column k + K * i of X is series k of the
i-th unit, units in order of first appearance in the file and dates ascending.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from ..core.errors import DuplicateKeyError, InputError, UnbalancedPanelError
from ..core.factor import PanelMatrix
from ..core.second_stage import UnitData

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

DEFAULT_INSTRUMENT_COLUMN = "s"


@dataclass
class PanelSchema:
    """Column roles of a long-format panel file."""
    unit_column: str = "unit"
    time_column: str = "time"
    outcome_column: str = "y"
    treatment_column: str = "d"
    aux_columns: Optional[List[str]] = None  # None: every remaining column
    control_columns: Optional[List[str]] = None  # None: the unit's aux series
    instrument_column: Optional[str] = None
    add_constant: bool = False

    def key_columns(self) -> List[str]:
        return [self.unit_column, self.time_column]

    def resolve_aux(self, columns: Sequence[str]) -> List[str]:
        if self.aux_columns is not None:
            return list(self.aux_columns)
        reserved = set(self.key_columns()) | {self.outcome_column, self.treatment_column}
        if self.instrument_column:
            reserved.add(self.instrument_column)
        if self.control_columns:
            reserved |= set(self.control_columns)
        aux = [column for column in columns if column not in reserved]
        if self.instrument_column is None and DEFAULT_INSTRUMENT_COLUMN in aux:
            logger.warning(
                f"Column {DEFAULT_INSTRUMENT_COLUMN!r} is read as an auxiliary series; "
                f"set instrument_column to use it as the instrument"
            )
        return aux


class IngestedPanel(NamedTuple):
    panel: PanelMatrix
    units: List[UnitData]
    dates: List[int]
    series: List[Tuple[str, str]]  # (unit id, aux column) per column of X


def _numeric(frame: pd.DataFrame, column: str) -> np.ndarray:
    """Parse a text column to floats, naming the first bad cell (1-based file row)."""
    text = frame[column].str.strip()
    parsed = pd.to_numeric(text, errors="coerce").astype(float)
    bad = ~np.isfinite(parsed)
    if bad.any():
        index = bad.idxmax()
        raise InputError(
            f"Non-numeric value {frame.at[index, column]!r} in column {column!r} at row {index + 2}"
        )
    return text.astype(float).to_numpy()


def _dates(frame: pd.DataFrame, column: str) -> np.ndarray:
    values = _numeric(frame, column)
    fractional = values != np.round(values)
    if fractional.any():
        row = int(np.argmax(fractional))
        raise InputError(f"Date index {frame.at[row, column]!r} at row {row + 2} is not an integer")
    return values.astype(np.int64)


def ingest_long_csv(path: PathLike, schema: Optional[PanelSchema] = None) -> IngestedPanel:
    """Read a balanced long-format panel into the auxiliary matrix and per-unit data."""
    schema = schema or PanelSchema()
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except FileNotFoundError:
        raise InputError(f"Input file not found: {path}")
    except (pd.errors.EmptyDataError, pd.errors.ParserError, UnicodeDecodeError) as e:
        raise InputError(f"Could not parse {path}: {e}")
    raw.columns = [column.strip() for column in raw.columns]

    aux = schema.resolve_aux(raw.columns)
    controls = list(schema.control_columns) if schema.control_columns is not None else aux
    required = schema.key_columns() + [schema.outcome_column, schema.treatment_column] + aux + controls
    if schema.instrument_column:
        required.append(schema.instrument_column)
    missing = [column for column in dict.fromkeys(required) if column not in raw.columns]
    if missing:
        raise InputError(f"Missing columns in {path}: {missing}")
    if not aux:
        raise InputError("No auxiliary series columns to build the factor panel from")
    if raw.empty:
        raise InputError(f"{path} has no data rows")

    frame = pd.DataFrame({schema.unit_column: raw[schema.unit_column].str.strip()})
    frame[schema.time_column] = _dates(raw, schema.time_column)
    for column in dict.fromkeys(required[2:]):
        frame[column] = _numeric(raw, column)

    keys = schema.key_columns()
    duplicated = frame.duplicated(keys, keep=False)
    if duplicated.any():
        pairs = frame.loc[duplicated, keys].drop_duplicates().itertuples(index=False, name=None)
        raise DuplicateKeyError(list(pairs))

    unit_ids = list(pd.unique(frame[schema.unit_column]))
    dates = sorted(pd.unique(frame[schema.time_column]).tolist())
    full = pd.MultiIndex.from_product([unit_ids, dates], names=keys)
    indexed = frame.set_index(keys)
    absent = full.difference(indexed.index, sort=False)
    if len(absent) > 0:
        raise UnbalancedPanelError(list(absent))
    indexed = indexed.reindex(full)

    wide = indexed[aux].unstack(schema.unit_column)  # dates x (aux, unit)
    wide = wide.swaplevel(axis=1).reindex(columns=pd.MultiIndex.from_product([unit_ids, aux]))
    panel = PanelMatrix(wide.to_numpy(dtype=float))

    units = []
    for unit_id in unit_ids:
        rows = indexed.xs(unit_id, level=schema.unit_column)
        c = rows[controls].to_numpy(dtype=float)
        if schema.add_constant:
            c = np.hstack([c, np.ones((len(rows), 1))])
        s = rows[schema.instrument_column].to_numpy(dtype=float) if schema.instrument_column else None
        units.append(
            UnitData(
                y=rows[schema.outcome_column].to_numpy(dtype=float),
                d=rows[schema.treatment_column].to_numpy(dtype=float),
                c=c,
                s=s,
                unit_id=str(unit_id),
            )
        )

    logger.info(f"Loaded {len(unit_ids)} units x {len(dates)} dates with {len(aux)} auxiliary series per unit")
    return IngestedPanel(panel, units, [int(t) for t in dates], list(wide.columns))


def write_long_csv(
    path: PathLike,
    panel: PanelMatrix,
    units: Sequence[UnitData],
    series_names: Optional[Sequence[str]] = None,
    instrument_column: str = DEFAULT_INSTRUMENT_COLUMN,
) -> Path:
    """Write a panel in the long format ``ingest_long_csv`` reads (17 significant digits).

    X must hold K series per unit in the unit-major layout, K = L / N.
    """
    N = len(units)
    if N == 0 or panel.L % N != 0:
        raise InputError(f"Panel with {panel.L} series cannot be split over {N} units")
    K = panel.L // N
    series_names = list(series_names) if series_names is not None else [f"x{k + 1}" for k in range(K)]
    if len(series_names) != K:
        raise InputError(f"Expected {K} series names, got {len(series_names)}")

    with_instrument = all(unit.s is not None for unit in units)
    frames = []
    for i, unit in enumerate(units):
        if unit.T != panel.T:
            raise InputError(f"Unit {unit.unit_id!r} has {unit.T} dates, the panel has {panel.T}")
        block = pd.DataFrame(panel.values[:, i * K : (i + 1) * K], columns=series_names)
        block.insert(0, "d", unit.d)
        block.insert(0, "y", unit.y)
        block.insert(0, "time", np.arange(panel.T))
        block.insert(0, "unit", unit.unit_id or f"unit{i + 1}")
        if with_instrument:
            block[instrument_column] = unit.s
        frames.append(block)

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.concat(frames, ignore_index=True).to_csv(path, index=False, float_format="%.17g")
    logger.info(f"Wrote {N} units x {panel.T} dates to {path}")
    return path
