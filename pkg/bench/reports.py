"""
Report emission: rounded JSON for machines, per-cell CSV for plotting and an
aligned text table for people.
"""

import csv
import json
from pathlib import Path
from typing import Dict, Optional

from bench.experiment import ExperimentReport
from processing.dataset import CSV_FLOAT_FORMAT, round_floats
from utils.validators import validate_output_path

CELL_COLUMNS = ("n", "replicate", "error", "baseline_error", "selected_dim", "failure")


def to_json(document: dict, precision: int = 12) -> str:
    """Serialize with floats rounded to `precision` significant digits; keys keep insertion order."""
    return json.dumps(round_floats(document, precision), indent=2)


def cells_path(out_path: str) -> Path:
    """`<stem>.cells.csv` next to the JSON report."""
    out = Path(out_path)
    return out.with_name(f"{out.stem}.cells.csv")


def write_cells_csv(report: ExperimentReport, path: str) -> Path:
    out = validate_output_path(str(path), (".csv",))
    with open(out, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CELL_COLUMNS)
        for cell in report.per_cell:
            writer.writerow([
                cell.n,
                cell.replicate,
                _fmt(cell.error),
                _fmt(cell.baseline_error),
                "" if cell.selected_dim is None else cell.selected_dim,
                cell.failure or "",
            ])
    return out


def _fmt(value: Optional[float]) -> str:
    return "" if value is None else format(float(value), CSV_FLOAT_FORMAT)


def format_table(report: ExperimentReport) -> str:
    """Aligned per-n summary (mean, sd, count) plus the rate fit when present."""
    rows = [("n", "mean", "sd", "count")]
    for agg in report.aggregates:
        rows.append((str(agg.n), f"{agg.mean:.4f}", f"{agg.sd:.4f}", str(agg.count)))
    widths = [max(len(row[j]) for row in rows) for j in range(len(rows[0]))]
    lines = ["  ".join(cell.rjust(w) for cell, w in zip(row, widths)) for row in rows]
    if report.rate_fit is not None:
        line = f"slope {report.rate_fit.slope:.4f} (r2 {report.rate_fit.r_squared:.3f})"
        if report.theory_slope is not None:
            line += f", theory {report.theory_slope:.4f}"
        lines.append(line)
    return "\n".join(lines)


def write_report(report: ExperimentReport, out_path: str, precision: int = 12) -> Dict[str, Path]:
    """
    Write `<out>.json` and `<stem>.cells.csv`.

    Returns:
        Dict with 'json' and 'cells' paths
    """
    out = validate_output_path(str(out_path), (".json",))
    with open(out, 'w', encoding='utf-8', newline='\n') as f:
        f.write(to_json(report.to_dict(), precision))
        f.write("\n")
    cells = write_cells_csv(report, str(cells_path(str(out))))
    return {"json": out, "cells": cells}
