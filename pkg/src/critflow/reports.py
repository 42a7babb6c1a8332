"""Measured-inequality reports and deterministic CSV output."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Any

import numpy as np


def fmt(x) -> str:
    """Shortest round-trip text for a number (deterministic across runs)."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path_or_buf, header, rows) -> None:
    own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
    fh = open(path_or_buf, "w", newline="") if own else path_or_buf
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    finally:
        if own:
            fh.close()


def safe_ratio(lhs, rhs, tiny: float = 1e-300) -> np.ndarray:
    """lhs/rhs with 0/0 read as 0 and x/0 (x > 0) as inf."""
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    out = np.zeros(np.broadcast(lhs, rhs).shape)
    pos = rhs > tiny
    out[pos] = (lhs * np.ones_like(out))[pos] / (rhs * np.ones_like(out))[pos]
    out[~pos & (lhs * np.ones_like(out) > tiny)] = np.inf
    return out


@dataclass
class EstimateReport:
    """Per-sample LHS/RHS of one inequality and its measured constant."""

    inequality: str
    lhs: np.ndarray
    rhs: np.ndarray
    c_q: np.ndarray | None = None
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.lhs = np.atleast_1d(np.asarray(self.lhs, dtype=float))
        self.rhs = np.atleast_1d(np.asarray(self.rhs, dtype=float))
        if self.lhs.shape != self.rhs.shape:
            raise ValueError("lhs and rhs differ in shape")
        if self.c_q is not None:
            c = np.clip(np.asarray(self.c_q, dtype=float), 0.0, None)
            tot = c.sum()
            self.c_q = c / tot if tot > 0 else c

    @property
    def ratios(self) -> np.ndarray:
        return safe_ratio(self.lhs, self.rhs)

    @property
    def constant(self) -> float:
        return float(self.ratios.max()) if self.ratios.size else 0.0

    def holds(self, C: float = 1.0) -> bool:
        return bool(np.all(self.lhs <= C * self.rhs))

    def to_csv(self, path_or_buf=None):
        rows = [(i, l, r, q) for i, (l, r, q) in enumerate(zip(self.lhs, self.rhs, self.ratios))]
        rows.append(("max", self.lhs.max() if self.lhs.size else 0.0,
                     self.rhs.max() if self.rhs.size else 0.0, self.constant))
        if path_or_buf is None:
            buf = io.StringIO()
            write_csv(buf, ["sample", "lhs", "rhs", "ratio"], rows)
            return buf.getvalue()
        write_csv(path_or_buf, ["sample", "lhs", "rhs", "ratio"], rows)
        return None
