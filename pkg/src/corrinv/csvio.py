"""CSV serialization with exact double-precision round-tripping."""

from __future__ import annotations

from pathlib import Path

import numpy as np

__all__ = ["format_number", "write_csv", "read_csv", "CsvTable"]


def format_number(x) -> str:
    """17 significant digits: round-trip exact for IEEE doubles."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


class CsvTable:
    """A rectangular numeric table with a header row."""

    def __init__(self, header, rows):
        self.header = list(header)
        self.rows = [tuple(r) for r in rows]
        for r in self.rows:
            if len(r) != len(self.header):
                raise ValueError("ragged CSV row")

    def column(self, name: str) -> np.ndarray:
        i = self.header.index(name)
        return np.array([float(r[i]) for r in self.rows])


def write_csv(path, header, rows) -> None:
    table = CsvTable(header, rows)
    lines = [",".join(table.header)]
    for row in table.rows:
        cells = [c if isinstance(c, str) else format_number(c) for c in row]
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path) -> CsvTable:
    text = Path(path).read_text().strip().splitlines()
    if not text:
        raise ValueError(f"empty CSV file {path}")
    header = text[0].split(",")
    rows = []
    for line in text[1:]:
        cells = []
        for c in line.split(","):
            try:
                cells.append(float(c))
            except ValueError:
                cells.append(c)
        rows.append(tuple(cells))
    return CsvTable(header, rows)
