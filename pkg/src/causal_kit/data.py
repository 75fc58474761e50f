"""Columnar datasets with outcome / treatment / covariate roles."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import DataError, EmptyArmError


@dataclass(frozen=True)
class Dataset:
    """Numeric table plus role designations.

    Roles are optional at construction (simulators emit every node) and are
    attached with :meth:`with_roles`.  Binary treatment is enforced by the
    estimators that need it (:meth:`treatment_arms`), not here, because the
    high-dimensional estimators also accept a continuous target regressor.
    """

    columns: Mapping[str, np.ndarray]
    y: Optional[str] = None
    d: Optional[str] = None
    x: tuple = ()
    n: int = field(init=False)

    def __post_init__(self):
        cols = {}
        n = None
        for name, values in self.columns.items():
            arr = np.asarray(values, dtype=float)
            if arr.ndim != 1:
                raise DataError(f"column {name!r} is not one-dimensional")
            if n is None:
                n = arr.shape[0]
            elif arr.shape[0] != n:
                raise DataError(f"column {name!r} has {arr.shape[0]} rows, expected {n}")
            if not np.all(np.isfinite(arr)):
                raise DataError(f"column {name!r} has missing or non-finite values")
            arr.setflags(write=False)
            cols[str(name)] = arr
        if not cols or n == 0:
            raise DataError("dataset needs at least one column and one row")
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "x", tuple(self.x))
        object.__setattr__(self, "n", n)
        for role in [self.y, self.d, *self.x]:
            if role is not None and role not in cols:
                raise DataError(f"role column {role!r} not in dataset")

    def __getitem__(self, name) -> np.ndarray:
        try:
            return self.columns[name]
        except KeyError:
            raise DataError(f"no column {name!r}") from None

    @property
    def names(self) -> list:
        return list(self.columns)

    def with_roles(self, y=None, d=None, x=None) -> "Dataset":
        return Dataset(
            self.columns,
            y=self.y if y is None else y,
            d=self.d if d is None else d,
            x=self.x if x is None else tuple(x),
        )

    @property
    def Y(self) -> np.ndarray:
        if self.y is None:
            raise DataError("no outcome column designated")
        return self.columns[self.y]

    @property
    def D(self) -> np.ndarray:
        if self.d is None:
            raise DataError("no treatment column designated")
        return self.columns[self.d]

    @property
    def X(self) -> np.ndarray:
        if not self.x:
            return np.empty((self.n, 0))
        return np.column_stack([self.columns[c] for c in self.x])

    def treatment_arms(self, min_rows: int = 1):
        """Boolean masks (control, treated); requires a 0/1 treatment column."""
        d = self.D
        if not np.all((d == 0) | (d == 1)):
            raise DataError(f"treatment column {self.d!r} must be binary 0/1")
        treated = d == 1
        control = ~treated
        for arm, mask in ((0, control), (1, treated)):
            if mask.sum() < min_rows:
                raise EmptyArmError(
                    arm, f"treatment arm D={arm} has {int(mask.sum())} rows, need >= {min_rows}"
                )
        return control, treated

    def take(self, index) -> "Dataset":
        index = np.asarray(index)
        return Dataset(
            {k: v[index] for k, v in self.columns.items()}, y=self.y, d=self.d, x=self.x
        )

    def select(self, names: Iterable[str]) -> "Dataset":
        names = list(names)
        return Dataset({k: self[k] for k in names}, y=self.y if self.y in names else None,
                       d=self.d if self.d in names else None,
                       x=[c for c in self.x if c in names])

    @classmethod
    def from_arrays(cls, y, d, x=None, x_names: Optional[Sequence[str]] = None) -> "Dataset":
        """Convenience constructor with columns ``Y``, ``D`` and ``X1..Xp``."""
        cols = {"Y": np.asarray(y, float), "D": np.asarray(d, float)}
        names = []
        if x is not None:
            x = np.asarray(x, float)
            if x.ndim == 1:
                x = x[:, None]
            names = list(x_names) if x_names is not None else [f"X{j + 1}" for j in range(x.shape[1])]
            for j, name in enumerate(names):
                cols[name] = x[:, j]
        return cls(cols, y="Y", d="D", x=tuple(names))


def format_number(value: float) -> str:
    """Shortest decimal that round-trips; integral values print without a point."""
    value = float(value)
    if value.is_integer() and abs(value) < 2**53:
        return str(int(value))
    return repr(value)


def write_csv(ds: Dataset, path=None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ds.names)
    cols = [ds.columns[k] for k in ds.names]
    for i in range(ds.n):
        writer.writerow([format_number(c[i]) for c in cols])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


def parse_csv(text: str) -> Dataset:
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r]
    if not rows:
        raise DataError("empty CSV")
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header) or any(not h for h in header):
        raise DataError("CSV header must contain unique non-empty names")
    body = rows[1:]
    if not body:
        raise DataError("CSV has no data rows")
    values = np.empty((len(body), len(header)))
    for i, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise DataError(f"CSV line {i}: expected {len(header)} cells, got {len(row)}")
        try:
            values[i - 2] = [float(c) for c in row]
        except ValueError:
            raise DataError(f"CSV line {i}: non-numeric cell") from None
    return Dataset({h: values[:, j] for j, h in enumerate(header)})


def read_csv(path) -> Dataset:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_csv(fh.read())
