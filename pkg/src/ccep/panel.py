"""Balanced panel container, long-format CSV I/O and cross-sectional means.

Units are always stored in canonical label order (numeric order when every
label parses as a number, lexicographic otherwise).  Two datasets holding the
same observations are therefore identical array-for-array no matter how the
input rows or units were ordered, which makes every downstream estimate
invariant to unit permutation bit for bit.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DuplicateObservation,
    MissingValue,
    PanelError,
    SchemaMismatch,
    UnbalancedPanel,
)


def _label_sort_keys(labels: Sequence[str]) -> list:
    """Numeric keys when every label parses as a finite float, else the strings."""
    try:
        keys = [float(lab) for lab in labels]
    except ValueError:
        return [str(lab) for lab in labels]
    if all(math.isfinite(k) for k in keys):
        return keys
    return [str(lab) for lab in labels]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class PanelDataset:
    """Balanced N x T panel with k regressors.

    Attributes
    ----------
    y : ndarray, shape (N, T)
    X : ndarray, shape (N, T, k)
    unit_ids, time_ids, regressor_names : tuple of str
    """

    y: np.ndarray
    X: np.ndarray
    unit_ids: tuple = field(default=())
    time_ids: tuple = field(default=())
    regressor_names: tuple = field(default=())

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64)
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim == 2:
            X = X[:, :, None]
        if y.ndim != 2 or X.ndim != 3:
            raise PanelError("y must be (N, T) and X must be (N, T, k)")
        N, T = y.shape
        if X.shape[:2] != (N, T):
            raise PanelError(f"X has shape {X.shape}, expected ({N}, {T}, k)")
        k = X.shape[2]
        if N < 2 or T < 2 or k < 1:
            raise PanelError(f"need N >= 2, T >= 2, k >= 1; got N={N}, T={T}, k={k}")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
            raise MissingValue("panel contains non-finite values")

        units = tuple(str(u) for u in self.unit_ids) or tuple(str(i + 1) for i in range(N))
        times = tuple(str(t) for t in self.time_ids) or tuple(str(t + 1) for t in range(T))
        names = tuple(str(n) for n in self.regressor_names) or tuple(f"x{j + 1}" for j in range(k))
        if len(units) != N or len(set(units)) != N:
            raise PanelError("unit_ids must be N distinct labels")
        if len(times) != T or len(set(times)) != T:
            raise PanelError("time_ids must be T distinct labels")
        if len(names) != k:
            raise PanelError("regressor_names must have k entries")

        keys = _label_sort_keys(units)
        order = sorted(range(N), key=lambda i: keys[i])
        if order != list(range(N)):
            y = y[order]
            X = X[order]
            units = tuple(units[i] for i in order)

        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "unit_ids", units)
        object.__setattr__(self, "time_ids", times)
        object.__setattr__(self, "regressor_names", names)

    @property
    def N(self) -> int:
        return self.y.shape[0]

    @property
    def T(self) -> int:
        return self.y.shape[1]

    @property
    def k(self) -> int:
        return self.X.shape[2]

    def equals(self, other: "PanelDataset") -> bool:
        """Exact (bitwise) equality of data and labels."""
        return (
            self.unit_ids == other.unit_ids
            and self.time_ids == other.time_ids
            and self.regressor_names == other.regressor_names
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.X, other.X)
        )

    def scaled(self, c: float) -> "PanelDataset":
        """Copy with every outcome multiplied by ``c``."""
        return PanelDataset(self.y * c, self.X, self.unit_ids, self.time_ids,
                            self.regressor_names)


@dataclass(frozen=True)
class CrossSectionMeans:
    X_bar: np.ndarray  # (T, k)
    y_bar: np.ndarray  # (T,)


def cross_section_means(ds: PanelDataset) -> CrossSectionMeans:
    """Per-period averages over units: ``X_bar = N^-1 sum X_i``, ``y_bar = N^-1 sum y_i``."""
    return CrossSectionMeans(X_bar=unit_mean(ds.X), y_bar=unit_mean(ds.y))


def unit_mean(a: np.ndarray) -> np.ndarray:
    """Average over the leading (unit) axis with pairwise summation."""
    # numpy only sums pairwise along a contiguous axis
    moved = np.ascontiguousarray(np.moveaxis(np.asarray(a, dtype=np.float64), 0, -1))
    return moved.mean(axis=-1)


# -- CSV ------------------------------------------------------------------------


@dataclass(frozen=True)
class CsvSchema:
    """Column mapping for long-format files.

    ``x=None`` selects the columns x1, x2, ... if present, otherwise every
    column other than unit, time and y.
    """

    unit: str = "unit"
    time: str = "time"
    y: str = "y"
    x: tuple | None = None

    @classmethod
    def from_mapping(cls, m: Mapping) -> "CsvSchema":
        x = m.get("x")
        if isinstance(x, str):
            x = tuple(s.strip() for s in x.split(",") if s.strip())
        return cls(unit=m.get("unit", "unit"), time=m.get("time", "time"),
                   y=m.get("y", "y"), x=tuple(x) if x is not None else None)


def _default_x_columns(header: Sequence[str]) -> tuple:
    cols = []
    j = 1
    while f"x{j}" in header:
        cols.append(f"x{j}")
        j += 1
    return tuple(cols)


def _parse_cell(raw: str, column: str, line: int) -> float:
    if raw is None or raw.strip() == "":
        raise MissingValue(f"line {line}: empty cell in column {column!r}")
    try:
        v = float(raw)
    except ValueError:
        raise MissingValue(f"line {line}: non-numeric value {raw!r} in column {column!r}") from None
    if not math.isfinite(v):
        raise MissingValue(f"line {line}: non-finite value {raw!r} in column {column!r}")
    return v


def load_csv(path, schema: CsvSchema | Mapping | None = None) -> PanelDataset:
    """Read a long-format CSV (one row per unit-period) into a balanced panel.

    Rows may come in any order.  Periods are ordered by their labels
    (numerically when all parse as numbers); units are put in canonical order.

    Raises
    ------
    SchemaMismatch
        Missing header or named columns.
    MissingValue
        Empty, non-numeric or non-finite cell.
    DuplicateObservation
        The same (unit, time) pair appears twice.
    UnbalancedPanel
        Some unit is not observed in every period.
    """
    if schema is None:
        schema = CsvSchema()
    elif not isinstance(schema, CsvSchema):
        schema = CsvSchema.from_mapping(schema)

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SchemaMismatch(f"{path}: empty file, header row required")
        header = [h.strip() for h in header]
        x_cols = schema.x if schema.x is not None else _default_x_columns(header)
        if schema.x is None and not x_cols:
            x_cols = tuple(h for h in header if h not in (schema.unit, schema.time, schema.y))
        if not x_cols:
            raise SchemaMismatch("no regressor columns found (expected x1..xk or an explicit list)")
        needed = [schema.unit, schema.time, schema.y, *x_cols]
        missing = [c for c in needed if c not in header]
        if missing:
            raise SchemaMismatch(f"columns not found in header: {missing}")
        pos = [header.index(c) for c in needed]

        cells: dict[tuple[str, str], list[float]] = {}
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < len(header):
                raise SchemaMismatch(f"line {line}: expected {len(header)} fields, got {len(row)}")
            unit, time = row[pos[0]].strip(), row[pos[1]].strip()
            if not unit or not time:
                raise MissingValue(f"line {line}: empty unit or time label")
            key = (unit, time)
            if key in cells:
                raise DuplicateObservation(f"line {line}: unit {unit!r} period {time!r} appears twice")
            cells[key] = [_parse_cell(row[p], c, line) for p, c in zip(pos[2:], needed[2:])]

    if not cells:
        raise PanelError(f"{path}: no observations")
    units = sorted({u for u, _ in cells})
    times = sorted({t for _, t in cells})
    tkeys = _label_sort_keys(times)
    times = [times[i] for i in sorted(range(len(times)), key=lambda i: tkeys[i])]
    N, T, k = len(units), len(times), len(x_cols)
    y = np.empty((N, T))
    X = np.empty((N, T, k))
    for i, u in enumerate(units):
        for t, tl in enumerate(times):
            vals = cells.get((u, tl))
            if vals is None:
                raise UnbalancedPanel(f"unit {u!r} has no observation for period {tl!r}")
            y[i, t] = vals[0]
            X[i, t] = vals[1:]
    return PanelDataset(y, X, tuple(units), tuple(times), tuple(x_cols))


def _iter_rows(ds: PanelDataset) -> Iterable[list[str]]:
    for i, u in enumerate(ds.unit_ids):
        yi, Xi = ds.y[i], ds.X[i]
        for t, tl in enumerate(ds.time_ids):
            yield [u, tl, repr(float(yi[t])), *(repr(float(v)) for v in Xi[t])]


def write_csv(ds: PanelDataset, path) -> None:
    """Write the panel as long-format CSV, rows sorted by (unit, time).

    Header is ``unit,time,y,<regressor names>``.  Floats use Python's
    shortest round-trip representation, so ``load_csv`` recovers every value
    bit for bit.  Rows are streamed; the file is never built in memory.
    """
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["unit", "time", "y", *ds.regressor_names])
        for row in _iter_rows(ds):
            w.writerow(row)
