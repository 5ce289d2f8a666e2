"""Deterministic CSV output with provenance comments."""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path

import numpy as np

from . import __version__
from .experiments import PolarizationResult, SweepResult, TransferResult
from .fitting import FitResult

def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".12g")
    return str(v)


def _rows(result) -> tuple[list[str], list[list]]:
    if isinstance(result, SweepResult):
        return [result.axis_name, "signal"], [[a, s] for a, s in zip(result.axis_values, result.signal)]
    if isinstance(result, FitResult):
        names = list(result.parameters)
        header = ["model", "converged", "residual_norm", "iterations"]
        header += names + [f"{n}_err" for n in names]
        row = [result.model, result.converged, result.residual_norm, result.iterations]
        row += [result.parameters[n] for n in names] + [result.std_errors[n] for n in names]
        return header, [row]
    if isinstance(result, PolarizationResult):
        header = ["p", "p_down", "p_up", "n_steps", "p_max_geometric", "p_populations"]
        return header, [[getattr(result, k) for k in header]]
    if isinstance(result, TransferResult):
        header = ["fidelity", "nuclear_down_population", "frame_phase"]
        return header, [[getattr(result, k) for k in header]]
    if isinstance(result, dict):
        return list(result), [list(result.values())]
    raise TypeError(f"cannot write {type(result).__name__} as CSV")


def render_csv(result, *, config_hash: str = "", seed: int | None = None, metadata: dict | None = None) -> str:
    """CSV text: '#' provenance lines, header, rows (12 significant digits)."""
    buf = io.StringIO()
    buf.write(f"# nvc13 {__version__}\n")
    buf.write(f"# config_sha256={config_hash}\n")
    buf.write(f"# seed={'' if seed is None else seed}\n")
    for k in sorted(metadata or {}):
        buf.write(f"# {k}={fmt(metadata[k])}\n")
    header, rows = _rows(result)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def emit_csv(result, path, *, config_hash: str = "", seed: int | None = None, metadata: dict | None = None) -> None:
    text = render_csv(result, config_hash=config_hash, seed=seed, metadata=metadata)
    if path is None or str(path) == "-":
        import sys

        sys.stdout.write(text)
        return
    Path(path).write_text(text, encoding="utf-8", newline="")


def read_two_columns(path) -> tuple[np.ndarray, np.ndarray]:
    """First two numeric columns of a CSV; '#' lines and a header row are skipped."""
    xs, ys = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.reader(line for line in fh if not line.lstrip().startswith("#")):
            if len(row) < 2 or not row[0].strip():
                continue
            try:
                x, y = float(row[0]), float(row[1])
            except ValueError:
                if xs:
                    raise ValueError(f"non-numeric row {row!r}") from None
                continue  # header
            xs.append(x)
            ys.append(y)
    return np.array(xs), np.array(ys)
