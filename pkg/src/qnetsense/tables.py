"""Rectangular result tables with a provenance header, written as CSV."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DIVERGENT = "divergent"

Cell = int | float | str


def format_cell(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isinf(value):
            return DIVERGENT
        if math.isnan(value):
            raise ValueError("NaN cannot be written to a result table")
        return repr(value)
    return str(value)


def parse_cell(text: str) -> Cell:
    try:
        return int(text)
    except ValueError:
        pass
    try:
        v = float(text)
    except ValueError:
        return text
    return v if math.isfinite(v) else text


def _normalize(cell) -> Cell:
    if isinstance(cell, (bool, np.bool_)):
        return int(cell)
    if isinstance(cell, (int, np.integer)):
        return int(cell)
    if isinstance(cell, (float, np.floating)):
        return parse_cell(format_cell(float(cell)))
    return str(cell)


def real_or_sentinel(value: float) -> Cell:
    """Finite values pass through; infinities become the divergence marker."""
    value = float(value)
    return value if math.isfinite(value) else DIVERGENT


@dataclass
class ResultTable:
    columns: list[str]
    rows: list[list[Cell]] = field(default_factory=list)
    provenance: dict[str, str] = field(default_factory=dict)

    def add(self, *cells) -> None:
        if len(cells) != len(self.columns):
            raise ValueError(f"row has {len(cells)} cells, table has {len(self.columns)} columns")
        self.rows.append([_normalize(c) for c in cells])

    def column(self, name: str) -> list[Cell]:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        for key, val in self.provenance.items():
            buf.write(f"# {key}: {val}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([format_cell(c) for c in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ResultTable":
        lines = text.splitlines()
        prov = {}
        body_start = 0
        for i, line in enumerate(lines):
            if not line.startswith("# "):
                body_start = i
                break
            key, _, val = line[2:].partition(": ")
            prov[key] = val
        reader = csv.reader(lines[body_start:])
        columns = next(reader)
        rows = [[parse_cell(c) for c in r] for r in reader]
        return cls(columns, rows, prov)

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_csv(), encoding="utf-8")
        return path
