"""Time-stamped samples of a state with integrator metadata."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class Trajectory:
    t: np.ndarray
    states: np.ndarray
    chart: str
    columns: tuple[str, ...]
    stats: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.t)

    def column(self, name: str) -> np.ndarray:
        return self.states[:, self.columns.index(name)]

    def to_csv(self, path: str | Path) -> None:
        write_csv(path, self.t, self.states, self.columns, header_line=f"# chart={self.chart}")


def write_csv(path, t, values, columns, header_line: str | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        if header_line:
            fh.write(header_line + "\n")
        w = csv.writer(fh)
        w.writerow(["t", *columns])
        for ti, row in zip(t, values):
            w.writerow([repr(float(ti)), *(repr(float(x)) for x in row)])


def read_csv(path) -> tuple[dict, np.ndarray, list[str]]:
    """Returns (metadata, table, header) of a file written by :func:`write_csv`."""
    meta = {}
    with Path(path).open() as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            for tok in line[1:].split():
                if "=" in tok:
                    k, v = tok.split("=", 1)
                    meta[k] = v
        else:
            body.append(line)
    header = body[0].split(",")
    data = np.array([[float(x) for x in row.split(",")] for row in body[1:]]) if len(body) > 1 else np.empty((0, len(header)))
    return meta, data, header
