"""CSV readers and writers.  Floats are written with 17 significant digits so
every value round-trips exactly."""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .models import Trajectory


class ParseError(ValueError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class NonContiguousIndex(ValueError):
    pass


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def load_trajectory_csv(path) -> Trajectory:
    """Read ``k,x1,...,xn`` rows; k must cover 0..K exactly once."""
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(1, "empty file")
    header = [h.strip() for h in rows[0]]
    if len(header) < 2 or header[0] != "k":
        raise ParseError(1, "header must be 'k,x1,...,xn'")
    n = len(header) - 1
    ks, states = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != n + 1:
            raise ParseError(lineno, f"expected {n + 1} fields, got {len(row)}")
        try:
            k = int(row[0])
        except ValueError:
            raise ParseError(lineno, f"step index {row[0]!r} is not an integer") from None
        try:
            x = [float(c) for c in row[1:]]
        except ValueError as exc:
            raise ParseError(lineno, str(exc)) from None
        if not np.all(np.isfinite(x)):
            raise ParseError(lineno, "non-finite state value")
        ks.append(k)
        states.append(x)
    if not ks:
        raise ParseError(2, "no data rows")
    order = np.argsort(ks, kind="stable")
    ks_sorted = np.asarray(ks)[order]
    expected = np.arange(len(ks))
    if not np.array_equal(ks_sorted, expected):
        dup = sorted({k for k in ks if ks.count(k) > 1})
        missing = sorted(set(range(max(ks) + 1)) - set(ks))
        raise NonContiguousIndex(
            f"step indices must be 0..K without gaps or duplicates "
            f"(duplicates: {dup[:5]}, missing: {missing[:5]})")
    return Trajectory(np.asarray(states)[order])


def write_trajectory_csv(path, t: Trajectory) -> None:
    header = ["k"] + [f"x{i + 1}" for i in range(t.n_x)]
    write_rows(path, header, ([k, *x] for k, x in enumerate(t.states)))


def write_rows(path, header: Sequence[str], rows: Iterable[Sequence[float]]) -> int:
    """Write a CSV; the first column is an integer index, the rest floats."""
    n = 0
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([str(int(row[0]))] + [fmt(v) for v in row[1:]])
            n += 1
    return n


def read_table(path) -> tuple[list[str], np.ndarray]:
    """Read a numeric CSV back as (header, array)."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(c) for c in r] for r in rows[1:]], dtype=float)


MSE_FIELDS = ("rmse_filter", "rmse_smoother", "bias_filter", "bias_smoother",
              "sqrtP_filter", "sqrtP_smoother")


def mse_header(n_x: int, extra: Sequence[str] = ()) -> list[str]:
    cols = ["k"]
    for i in range(1, n_x + 1):
        cols += [f"{f}_{i}" for f in (*MSE_FIELDS, *extra)]
    return cols


def mse_row(k, mse_f, mse_s, b_f, b_s, P_f, P_s, extra: Sequence[np.ndarray] = ()):
    """One ``mse.csv`` row from per-step matrices/vectors."""
    cols = [
        np.sqrt(np.diag(mse_f)), np.sqrt(np.diag(mse_s)), b_f, b_s,
        np.sqrt(np.diag(P_f)), np.sqrt(np.diag(P_s)), *extra,
    ]
    out = [k]
    for i in range(len(b_f)):
        out += [c[i] for c in cols]
    return out
