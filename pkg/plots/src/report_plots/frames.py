"""Parsing and validation of filterlab trace CSVs and their summary metadata."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

EXPECTED_HEADER = ["step", "bl", "tv", "predictor_bl", "predictor_tv", "cos_lower"]
METRIC_COLUMNS = EXPECTED_HEADER[1:]


class TraceFormatError(ValueError):
    """The CSV does not follow the trace schema."""


class MissingColumnError(TraceFormatError):
    """A required metric column is absent or entirely empty."""


@dataclass
class TraceFrame:
    """One parsed trace CSV plus any run metadata found in summary.json."""

    path: Path
    step: np.ndarray
    columns: dict
    metadata: dict = field(default_factory=dict)

    @property
    def seed(self) -> Optional[str]:
        stem = self.path.stem
        return stem.split("_", 1)[1] if "_" in stem else None

    def metric(self, name: str) -> np.ndarray:
        """A metric column that actually carries data."""
        if name not in self.columns:
            raise MissingColumnError(f"{self.path}: no column {name!r}")
        values = self.columns[name]
        if not np.isfinite(values).any():
            raise MissingColumnError(f"{self.path}: column {name!r} is empty")
        return values

    def has_metric(self, name: str) -> bool:
        return name in self.columns and bool(np.isfinite(self.columns[name]).any())


def load_trace(path, summary: Optional[dict] = None) -> TraceFrame:
    """Read one trace CSV, enforcing the schema and strictly increasing steps."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TraceFormatError(f"{path}: file is empty")
        if header != EXPECTED_HEADER:
            raise TraceFormatError(
                f"{path}: header {header} does not match {EXPECTED_HEADER}")
        rows = list(reader)
    if not rows:
        raise TraceFormatError(f"{path}: no data rows")

    step = np.array([int(r[0]) for r in rows])
    if np.any(np.diff(step) <= 0):
        raise TraceFormatError(f"{path}: steps are not strictly increasing")
    columns = {}
    for j, name in enumerate(EXPECTED_HEADER[1:], start=1):
        columns[name] = np.array([float(r[j]) if r[j] else math.nan for r in rows])

    if summary is None:
        summary = _sibling_summary(path)
    return TraceFrame(path=path, step=step, columns=columns, metadata=summary or {})


def _sibling_summary(path: Path) -> dict:
    candidate = path.parent / "summary.json"
    if candidate.exists():
        try:
            return json.loads(candidate.read_text())
        except json.JSONDecodeError:
            return {}
    return {}


def load_traces(paths) -> list:
    frames = [load_trace(p) for p in paths]
    if not frames:
        raise TraceFormatError("no trace files given")
    return frames
