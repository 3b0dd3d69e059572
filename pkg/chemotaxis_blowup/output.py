"""
Writers for run artifacts: diagnostics tables (CSV, optional Parquet), field
snapshots (legacy VTK ASCII or raw little-endian float64 with a JSON sidecar)
and JSON reports.
"""

import json
import logging
import math
import os
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

import numpy as np
import pandas as pd

from .diagnostics import DiagnosticsRecord
from .grid import ScalarField

logger = logging.getLogger(__name__)

CSV_FLOAT_FORMAT = "%.17g"
VTK_FLOAT_FORMAT = "%.9g"


def _finite_or_none(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _finite_or_none(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_finite_or_none(v) for v in value]
    return value


def write_json(path: Union[str, Path], data: Dict[str, Any]) -> Path:
    """Write ``data`` with sorted keys; floats keep their shortest round-trip repr.

    Non-finite floats (overflowed norms and ratios after a blow-up) are written as ``null``.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(_finite_or_none(data), f, indent=2, sort_keys=True, allow_nan=False)
        f.write("\n")
    return path


def diagnostics_frame(records: Sequence[DiagnosticsRecord]) -> pd.DataFrame:
    return pd.DataFrame([r.as_row() for r in records], columns=DiagnosticsRecord.columns())


def write_diagnostics(records: Sequence[DiagnosticsRecord], csv_path: Union[str, Path],
                      parquet: bool = False) -> List[Path]:
    """Write the diagnostics table as CSV and, when asked, as a snappy Parquet file."""
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    df = diagnostics_frame(records)
    df.to_csv(csv_path, index=False, float_format=CSV_FLOAT_FORMAT)
    written = [csv_path]
    if parquet:
        parquet_path = csv_path.with_suffix(".parquet")
        df.to_parquet(parquet_path, index=False, compression="snappy")
        written.append(parquet_path)
    for p in written:
        size = os.path.getsize(p)
        logger.info(f"Wrote {p} ({len(df):,} rows, {size:,} bytes)")
    return written


class DiagnosticsSink:
    """Collects records during a run and writes the table on close."""

    def __init__(self, csv_path: Union[str, Path], parquet: bool = False):
        self.csv_path = Path(csv_path)
        self.parquet = parquet
        self.records: List[DiagnosticsRecord] = []
        self.written: List[Path] = []

    def on_record(self, record: DiagnosticsRecord) -> None:
        self.records.append(record)

    def on_state(self, state) -> None:
        pass

    def close(self) -> None:
        self.written = write_diagnostics(self.records, self.csv_path, self.parquet)


# ---------------------------------------------------------------------------
# Snapshots

def write_vtk(path: Union[str, Path], f: ScalarField, name: str, title: str = "") -> Path:
    """Legacy VTK STRUCTURED_POINTS file, ASCII, one value per line in x-fastest order."""
    path = Path(path)
    grid = f.grid
    nx, ny, nz = grid.spec.n
    header = [
        "# vtk DataFile Version 3.0",
        (title or name)[:255],
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {nx} {ny} {nz}",
        "ORIGIN {!r} {!r} {!r}".format(*grid.spec.lo),
        "SPACING {!r} {!r} {!r}".format(*grid.spacing),
        f"POINT_DATA {grid.node_count}",
        f"SCALARS {name} double 1",
        "LOOKUP_TABLE default",
    ]
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(header) + "\n")
        np.savetxt(fh, f.values, fmt=VTK_FLOAT_FORMAT)
    return path


def write_raw(path: Union[str, Path], f: ScalarField, name: str, t: float, step: int) -> Path:
    """Raw ``<f8`` values plus a ``.json`` sidecar describing the layout."""
    path = Path(path)
    f.values.astype("<f8").tofile(path)
    grid = f.grid
    write_json(path.with_suffix(".json"), {
        "field": name,
        "dtype": "<f8",
        "n": list(grid.spec.n),
        "shape": list(grid.shape),
        "order": "C, array axes (z, y, x), x fastest",
        "origin": list(grid.spec.lo),
        "spacing": list(grid.spacing),
        "t": t,
        "step": step,
    })
    return path


class SnapshotSink:
    """Writes u, v, w every ``stride`` steps; fields past a blow-up are skipped."""

    def __init__(self, directory: Union[str, Path], stride: int = 1, fmt: str = "vtk"):
        if fmt not in ("vtk", "raw", "none"):
            raise ValueError(f"unknown snapshot format {fmt!r}")
        self.directory = Path(directory)
        self.stride = stride
        self.fmt = fmt
        self.count = 0
        if fmt != "none":
            self.directory.mkdir(parents=True, exist_ok=True)

    def on_record(self, record: DiagnosticsRecord) -> None:
        pass

    def on_state(self, state) -> None:
        if self.fmt == "none" or state.step % self.stride != 0:
            return
        if not state.is_finite():
            logger.debug(f"Skipping snapshot of non-finite state at step {state.step}")
            return
        for name, f in (("u", state.u), ("v", state.v), ("w", state.w)):
            stem = self.directory / f"{name}_{state.step:06d}"
            if self.fmt == "vtk":
                write_vtk(stem.with_suffix(".vtk"), f, name, title=f"{name} t={state.t!r} step={state.step}")
            else:
                write_raw(stem.with_suffix(".raw"), f, name, state.t, state.step)
        self.count += 1

    def close(self) -> None:
        if self.fmt != "none":
            logger.info(f"Wrote {self.count} snapshot sets to {self.directory}")
