"""CSV and aligned-text reports for estimation and simulation runs.

No timestamps and fixed float formats, so identical runs give identical files.
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..core.inference import EstimateWithCI
from ..core.monte_carlo import McReport
from ..core.pipeline import PanelEstimate

logger = logging.getLogger(__name__)

CSV_FLOAT_FORMAT = "%.10g"
TEXT_FLOAT_FORMAT = "{:.4f}".format


def _interval_row(estimate: EstimateWithCI) -> Dict[str, float]:
    return {
        "estimate": estimate.point,
        "std_error": estimate.std_error,
        "ci_lower": estimate.ci_lower,
        "ci_upper": estimate.ci_upper,
    }


def _write_csv(frame: pd.DataFrame, path: Path) -> Path:
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    return path


def _write_text(frame: pd.DataFrame, path: Path, header: Sequence[str] = ()) -> Path:
    body = frame.to_string(index=False, float_format=TEXT_FLOAT_FORMAT, na_rep="-")
    path.write_text("\n".join(list(header) + [body]) + "\n", encoding="utf-8")
    return path


def summary_frame(result: PanelEstimate) -> pd.DataFrame:
    """Overall AME with one interval per kernel; a single unit reports its own Delta_i."""
    if result.overall_intervals:
        intervals = result.overall_intervals
    else:
        intervals = {label: estimates[0] for label, estimates in result.unit_intervals.items()}
    rows = [
        {"kernel": label, **_interval_row(estimate), "level": estimate.level}
        for label, estimate in intervals.items()
    ]
    if not rows:
        rows = [{"kernel": "-", "estimate": result.estimands.delta}]
    frame = pd.DataFrame(rows)
    frame["N"] = result.N
    frame["T"] = result.factor_fit.T
    frame["r_hat"] = result.factor_fit.r_hat
    return frame


def date_frame(result: PanelEstimate, dates: Optional[Sequence[int]] = None) -> pd.DataFrame:
    """Delta_t for every date, with pointwise intervals where they were computed."""
    labels = list(dates) if dates is not None else list(range(result.factor_fit.T))
    rows = []
    for t, point in enumerate(result.estimands.delta_t):
        row = {"date": labels[t], "estimate": float(point)}
        if t in result.date_intervals:
            row.update(_interval_row(result.date_intervals[t]))
        rows.append(row)
    return pd.DataFrame(rows)


def unit_frame(result: PanelEstimate) -> pd.DataFrame:
    frame = pd.DataFrame({"unit": list(result.estimands.unit_ids), "estimate": result.estimands.delta_i})
    for label, estimates in result.unit_intervals.items():
        frame[f"std_error ({label})"] = [e.std_error for e in estimates]
        frame[f"ci_lower ({label})"] = [e.ci_lower for e in estimates]
        frame[f"ci_upper ({label})"] = [e.ci_upper for e in estimates]
    if any(uf.method == "iv" for uf in result.unit_fits):
        frame["first_stage_F"] = [uf.first_stage_f for uf in result.unit_fits]
        frame["weak_instrument"] = [uf.weak_instrument for uf in result.unit_fits]
    return frame


def curve_frame(result: PanelEstimate, dates: Optional[Sequence[int]] = None) -> pd.DataFrame:
    unit_ids = result.estimands.unit_ids
    labels = list(dates) if dates is not None else list(range(result.factor_fit.T))
    rows = []
    for point in result.curves:
        rows.append(
            {
                "scope": point.scope,
                "unit": unit_ids[point.index] if point.scope == "unit" else "",
                "date": labels[point.index] if point.scope == "date" else "",
                "kind": point.kind,
                "d": point.d,
                "value": point.value,
            }
        )
    return pd.DataFrame(rows)


def loading_frame(result: PanelEstimate, series: Optional[Sequence[Tuple[str, str]]] = None) -> pd.DataFrame:
    """Estimated loadings, one row per column of the auxiliary panel."""
    fit = result.factor_fit
    frame = pd.DataFrame(fit.lambda_hat, columns=[f"lambda_{r + 1}" for r in range(fit.r_hat)])
    if series is None:
        frame.insert(0, "column", range(fit.L))
    else:
        frame.insert(0, "unit", [unit for unit, _ in series])
        frame.insert(1, "series", [name for _, name in series])
    return frame


def factor_lines(result: PanelEstimate) -> List[str]:
    lines = [f"factors used: {result.factor_fit.r_hat}"]
    count = result.count
    if count is None:
        lines.append("factor count: fixed by configuration")
        return lines
    statistics = ", ".join("-" if np.isnan(v) else f"{v:.4f}" for v in count.statistics)
    eigenvalues = ", ".join(f"{v:.6g}" for v in count.eigenvalues[: count.statistics.size + 1])
    lines += [
        f"selection method: {count.method}",
        f"statistics (k = 1..{count.statistics.size}): {statistics}",
        f"leading eigenvalues of XX'/(TL): {eigenvalues}",
        f"ambiguous maximum: {'yes' if count.ambiguous else 'no'}",
    ]
    return lines


def write_estimate_reports(
    result: PanelEstimate,
    output_dir: Path,
    dates: Optional[Sequence[int]] = None,
    series: Optional[Sequence[Tuple[str, str]]] = None,
) -> List[Path]:
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    summary = summary_frame(result)
    written = [
        _write_csv(summary, output_dir / "delta_summary.csv"),
        _write_text(summary, output_dir / "delta_summary.txt", [f"Overall average marginal effect (N={result.N})"]),
        _write_csv(date_frame(result, dates), output_dir / "delta_t.csv"),
        _write_csv(unit_frame(result), output_dir / "delta_i.csv"),
        _write_csv(loading_frame(result, series), output_dir / "loadings.csv"),
    ]
    if result.curves:
        written.append(_write_csv(curve_frame(result, dates), output_dir / "curves.csv"))
    factors = output_dir / "factors.txt"
    factors.write_text("\n".join(factor_lines(result)) + "\n", encoding="utf-8")
    written.append(factors)
    logger.info(f"Wrote {len(written)} report files to {output_dir}")
    return written


def write_mc_reports(report: McReport, output_dir: Path) -> List[Path]:
    """One CSV and one aligned-text table per estimator target (mc_<target>.*)."""
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    header = [
        f"generator: {report.generator}",
        f"seeds: {', '.join(str(seed) for seed in report.seeds)}",
    ]
    written = []
    for target in report.targets():
        frame = report.to_frame(target)
        replications = sorted(set(cell.replications for cell in report.cells if cell.target == target))
        lines = header + [f"target: {target}, replications: {', '.join(map(str, replications))}"]
        written.append(_write_csv(frame, output_dir / f"mc_{target}.csv"))
        for rho_f, design in frame.groupby("rho_f", sort=True):
            lines += ["", f"rho_f = {rho_f}"]
            lines.append(design.drop(columns=["target", "mode", "rho_f"]).to_string(
                index=False, float_format=TEXT_FLOAT_FORMAT, na_rep="-"
            ))
        path = output_dir / f"mc_{target}.txt"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        written.append(path)
    logger.info(f"Wrote {len(written)} report files to {output_dir}")
    return written
