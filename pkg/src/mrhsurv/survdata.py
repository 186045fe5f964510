"""Right-censored survival data, CSV ingestion and dyadic time-grid bookkeeping.

Bins are left-open/right-closed, ``(t_{j-1}, t_j]``; a time of exactly 0 is
assigned to the first bin. Times beyond the grid horizon are treated as
censored at the horizon by every estimator that works on the grid.
"""

from __future__ import annotations

import csv
import hashlib
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "DataError",
    "SchemaError",
    "ParseError",
    "ValidationError",
    "SubjectRecord",
    "TimeGrid",
    "Dataset",
    "CsvSchema",
    "load_csv",
    "write_csv",
    "bin_index",
    "exposure",
    "exposure_matrix",
]


class DataError(ValueError):
    """Base class for problems with input data."""


class SchemaError(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message: str, row: int | None = None):
        self.row = row
        super().__init__(message if row is None else f"row {row}: {message}")


class ValidationError(DataError):
    pass


@dataclass(frozen=True)
class SubjectRecord:
    time: float
    event: bool
    stratum: int
    covariates: tuple[float, ...] = ()

    def __post_init__(self):
        if not math.isfinite(self.time) or self.time < 0:
            raise ValidationError(f"time must be finite and >= 0, got {self.time}")


@dataclass(frozen=True)
class TimeGrid:
    """Dyadic partition ``0 = t_0 < t_1 < ... < t_J`` with ``J = 2**M``."""

    M: int
    boundaries: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.boundaries, dtype=float)
        if self.M < 0:
            raise ValidationError("M must be >= 0")
        if b.shape != (2**self.M + 1,):
            raise ValidationError(
                f"expected {2**self.M + 1} boundaries for M={self.M}, got {b.size}"
            )
        if b[0] != 0.0:
            raise ValidationError("first boundary must be 0")
        if not np.all(np.diff(b) > 0):
            raise ValidationError("boundaries must be strictly increasing")
        b.setflags(write=False)
        object.__setattr__(self, "boundaries", b)

    @classmethod
    def equal(cls, M: int, horizon: float) -> "TimeGrid":
        if not horizon > 0:
            raise ValidationError("horizon must be positive")
        return cls(M, np.linspace(0.0, horizon, 2**M + 1))

    @property
    def J(self) -> int:
        return 2**self.M

    @property
    def horizon(self) -> float:
        return float(self.boundaries[-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.boundaries)

    def __eq__(self, other):
        if not isinstance(other, TimeGrid):
            return NotImplemented
        return self.M == other.M and np.array_equal(self.boundaries, other.boundaries)

    def __hash__(self):
        return hash((self.M, self.boundaries.tobytes()))

    def to_dict(self) -> dict:
        return {"M": self.M, "boundaries": [float(x) for x in self.boundaries]}


def bin_index(t, grid: TimeGrid):
    """1-based bin containing ``t``; times past the horizon clamp to ``J``.

    Accepts a scalar or an array.
    """
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise ValueError("bin_index is undefined for negative times")
    j = np.searchsorted(grid.boundaries, arr, side="left")
    j = np.clip(j, 1, grid.J)
    if j.ndim == 0:
        return int(j)
    return j


def exposure(record: SubjectRecord | float, grid: TimeGrid) -> np.ndarray:
    """Time at risk spent in each bin; sums to ``min(T, t_J)``."""
    t = record.time if isinstance(record, SubjectRecord) else float(record)
    return np.clip(t - grid.boundaries[:-1], 0.0, grid.widths)


def exposure_matrix(times: np.ndarray, grid: TimeGrid) -> np.ndarray:
    """Row ``i`` is :func:`exposure` of ``times[i]``, shape ``(n, J)``."""
    times = np.asarray(times, dtype=float)
    return np.clip(times[:, None] - grid.boundaries[None, :-1], 0.0, grid.widths[None, :])


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable column store of right-censored records.

    Parameters
    ----------
    time, event, stratum : array_like, shape (n,)
    X : array_like, shape (n, z)
    stratum_count : int
    covariate_names : sequence of str
    grid : TimeGrid
    stratum_labels : sequence of str, optional
        Original labels of the integer strata, used when writing CSV.
    """

    time: np.ndarray
    event: np.ndarray
    stratum: np.ndarray
    X: np.ndarray
    stratum_count: int
    covariate_names: tuple[str, ...]
    grid: TimeGrid
    stratum_labels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        time = np.array(self.time, dtype=float)
        event = np.array(self.event, dtype=bool)
        stratum = np.array(self.stratum, dtype=np.int64)
        n = time.shape[0]
        X = np.array(self.X, dtype=float)
        if X.size == 0 and (n == 0 or not self.covariate_names):
            X = np.zeros((n, len(self.covariate_names)))
        X = X.reshape(n, -1)
        names = tuple(self.covariate_names)
        if event.shape != (n,) or stratum.shape != (n,):
            raise ValidationError("time, event and stratum must have equal length")
        if X.shape[1] != len(names):
            raise ValidationError(
                f"{X.shape[1]} covariate columns but {len(names)} covariate names"
            )
        bad = np.flatnonzero(~np.isfinite(time) | (time < 0))
        if bad.size:
            raise ValidationError(f"record {bad[0]}: time must be finite and >= 0")
        bad = np.flatnonzero(~np.all(np.isfinite(X), axis=1)) if n else []
        if len(bad):
            raise ValidationError(f"record {bad[0]}: non-finite covariate")
        L = int(self.stratum_count)
        if L < 1:
            raise ValidationError("stratum_count must be >= 1")
        if n and (stratum.min() < 0 or stratum.max() >= L):
            raise ValidationError(f"stratum labels must lie in 0..{L - 1}")
        counts = np.bincount(stratum, minlength=L)
        if np.any(counts == 0):
            raise ValidationError(f"stratum {int(np.argmin(counts))} has no records")
        labels = tuple(self.stratum_labels) or tuple(str(i) for i in range(L))
        if len(labels) != L:
            raise ValidationError("stratum_labels must have stratum_count entries")
        n_late = int(np.sum(time > self.grid.horizon))
        if n_late:
            warnings.warn(
                f"{n_late} observation(s) beyond the grid horizon {self.grid.horizon:g} "
                "are treated as censored at the horizon",
                stacklevel=3,
            )
        for name, arr in (("time", time), ("event", event), ("stratum", stratum), ("X", X)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "covariate_names", names)
        object.__setattr__(self, "stratum_count", L)
        object.__setattr__(self, "stratum_labels", labels)

    @classmethod
    def from_records(
        cls,
        records: Sequence[SubjectRecord],
        grid: TimeGrid,
        covariate_names: Sequence[str] = (),
        stratum_count: int | None = None,
        stratum_labels: Sequence[str] = (),
    ) -> "Dataset":
        z = len(covariate_names)
        for i, r in enumerate(records):
            if len(r.covariates) != z:
                raise ValidationError(f"record {i}: expected {z} covariates")
        stratum = np.array([r.stratum for r in records], dtype=np.int64)
        L = stratum_count if stratum_count is not None else int(stratum.max()) + 1
        return cls(
            time=np.array([r.time for r in records], dtype=float),
            event=np.array([r.event for r in records], dtype=bool),
            stratum=stratum,
            X=np.array([r.covariates for r in records], dtype=float).reshape(len(records), z),
            stratum_count=L,
            covariate_names=tuple(covariate_names),
            grid=grid,
            stratum_labels=tuple(stratum_labels),
        )

    @property
    def n(self) -> int:
        return self.time.shape[0]

    @property
    def z(self) -> int:
        return self.X.shape[1]

    @property
    def records(self) -> list[SubjectRecord]:
        return [
            SubjectRecord(float(t), bool(e), int(s), tuple(float(v) for v in x))
            for t, e, s, x in zip(self.time, self.event, self.stratum, self.X)
        ]

    @property
    def event_in_grid(self) -> np.ndarray:
        """Event flags with observations past the horizon recoded as censored."""
        return self.event & (self.time <= self.grid.horizon)

    def stratum_mask(self, stratum: int) -> np.ndarray:
        return self.stratum == stratum

    def with_grid(self, grid: TimeGrid) -> "Dataset":
        return Dataset(self.time, self.event, self.stratum, self.X, self.stratum_count,
                       self.covariate_names, grid, self.stratum_labels)

    def bin_counts(self, stratum: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Per-bin (event count, total exposure), optionally for one stratum."""
        mask = np.ones(self.n, dtype=bool) if stratum is None else self.stratum_mask(stratum)
        ev = self.event_in_grid[mask]
        bins = bin_index(self.time[mask][ev], self.grid) if ev.any() else np.zeros(0, dtype=int)
        counts = np.bincount(np.asarray(bins, dtype=int) - 1, minlength=self.grid.J)[: self.grid.J]
        expo = exposure_matrix(self.time[mask], self.grid).sum(axis=0)
        return counts.astype(float), expo

    def fingerprint(self) -> str:
        """Content hash used to refuse comparisons across different datasets."""
        h = hashlib.sha256()
        for arr in (self.time, self.event.astype(np.int8), self.stratum, self.X):
            h.update(np.ascontiguousarray(arr).tobytes())
        h.update("|".join(self.covariate_names).encode())
        return h.hexdigest()

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            np.array_equal(self.time, other.time)
            and np.array_equal(self.event, other.event)
            and np.array_equal(self.stratum, other.stratum)
            and np.array_equal(self.X, other.X)
            and self.stratum_count == other.stratum_count
            and self.covariate_names == other.covariate_names
            and self.grid == other.grid
            and self.stratum_labels == other.stratum_labels
        )


@dataclass
class CsvSchema:
    """Column mapping for :func:`load_csv`.

    ``covariates`` lists numeric columns; ``categorical`` maps a column to its
    reference level, the remaining levels becoming ``col[level]`` indicators.
    ``covariates=None`` takes every unmapped column as numeric.
    """

    time: str = "time"
    event: str = "event"
    stratum: str = "stratum"
    covariates: list[str] | None = None
    categorical: dict[str, str] = field(default_factory=dict)
    stratum_levels: list[str] | None = None


def _label_sort_key(label: str):
    try:
        return (0, float(label), label)
    except ValueError:
        return (1, 0.0, label)


def load_csv(
    path: str | Path,
    schema: CsvSchema | None = None,
    M: int = 6,
    horizon: float | None = None,
    grid: TimeGrid | None = None,
) -> Dataset:
    """Read a comma-delimited UTF-8 file into a validated :class:`Dataset`.

    The grid is ``grid`` if given, else ``M`` equal-width bins on
    ``[0, horizon]`` with ``horizon`` defaulting to the largest time.
    """
    schema = schema or CsvSchema()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError("empty file") from None
        rows = [r for r in reader if r and any(c.strip() for c in r)]

    required = [schema.time, schema.event, schema.stratum]
    numeric = (
        list(schema.covariates)
        if schema.covariates is not None
        else [h for h in header if h not in required and h not in schema.categorical]
    )
    for col in required + numeric + list(schema.categorical):
        if col not in header:
            raise SchemaError(f"missing column {col!r}")
    pos = {h: i for i, h in enumerate(header)}

    n = len(rows)
    time = np.empty(n)
    event = np.empty(n, dtype=bool)
    raw_strata: list[str] = []
    num = np.empty((n, len(numeric)))
    cats: dict[str, list[str]] = {c: [] for c in schema.categorical}
    for r, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", r)
        i = r - 2
        try:
            time[i] = float(row[pos[schema.time]])
        except ValueError:
            raise ParseError(f"non-numeric time {row[pos[schema.time]]!r}", r) from None
        if not math.isfinite(time[i]) or time[i] < 0:
            raise ValidationError(f"row {r}: time must be finite and >= 0")
        ev = row[pos[schema.event]].strip()
        if ev not in ("0", "1", "0.0", "1.0", "True", "False", "true", "false"):
            raise ParseError(f"event must be 0/1, got {ev!r}", r)
        event[i] = ev in ("1", "1.0", "True", "true")
        raw_strata.append(row[pos[schema.stratum]].strip())
        for k, col in enumerate(numeric):
            try:
                num[i, k] = float(row[pos[col]])
            except ValueError:
                raise ParseError(f"non-numeric value in column {col!r}", r) from None
        for col in cats:
            cats[col].append(row[pos[col]].strip())

    if schema.stratum_levels is not None:
        levels = [str(s) for s in schema.stratum_levels]
        for r, s in enumerate(raw_strata, start=2):
            if s not in levels:
                raise ValidationError(f"row {r}: unknown stratum label {s!r}")
    else:
        levels = sorted(set(raw_strata), key=_label_sort_key)
    lookup = {s: i for i, s in enumerate(levels)}
    stratum = np.array([lookup[s] for s in raw_strata], dtype=np.int64)

    names = list(numeric)
    blocks = [num]
    for col, ref in schema.categorical.items():
        values = cats[col]
        observed = sorted(set(values), key=_label_sort_key)
        if ref not in observed:
            raise ValidationError(f"reference level {ref!r} not present in column {col!r}")
        others = [v for v in observed if v != ref]
        names += [f"{col}[{v}]" for v in others]
        blocks.append(np.array([[float(v == o) for o in others] for v in values]).reshape(n, len(others)))

    if grid is None:
        h = horizon if horizon is not None else float(time.max()) if n else 1.0
        grid = TimeGrid.equal(M, h)
    return Dataset(
        time=time,
        event=event,
        stratum=stratum,
        X=np.hstack(blocks) if blocks else np.zeros((n, 0)),
        stratum_count=len(levels),
        covariate_names=tuple(names),
        grid=grid,
        stratum_labels=tuple(levels),
    )


def write_csv(data: Dataset, path: str | Path) -> None:
    """Write ``data`` in the layout :func:`load_csv` reads back.

    Floats use ``repr`` so a round trip is exact.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "event", "stratum", *data.covariate_names])
        for t, e, s, x in zip(data.time, data.event, data.stratum, data.X):
            w.writerow([repr(float(t)), int(e), data.stratum_labels[s], *(repr(float(v)) for v in x)])
