"""Panel ingestion: period labels, CSV load/serialize, quarterly resampling and alignment.

A panel is a set of columns keyed by ``(series, feature)`` (for example
``("US", "cpi")`` or ``("GOLD", "price")``) observed on a common, strictly
increasing grid of monthly or quarterly periods. Missing cells carry
``available == False`` and hold NaN.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Mapping, Sequence, Union

import numpy as np

from .errors import AlignmentError, ConflictError, FormatError, ParseError, UnknownFeatureError

log = logging.getLogger(__name__)

MONTHLY = "monthly"
QUARTERLY = "quarterly"

_MONTH_RE = re.compile(r"^(\d{4})-(\d{2})$")
_QUARTER_RE = re.compile(r"^(\d{4})-Q([1-4])$")


@dataclass(frozen=True, order=True)
class PeriodLabel:
    year: int
    subperiod: int
    granularity: str = field(default=MONTHLY, compare=False)

    def __post_init__(self):
        if self.granularity == MONTHLY:
            hi = 12
        elif self.granularity == QUARTERLY:
            hi = 4
        else:
            raise ValueError(f"unknown granularity {self.granularity!r}")
        if not 1 <= self.subperiod <= hi:
            raise ValueError(f"subperiod {self.subperiod} out of range for {self.granularity}")

    @classmethod
    def parse(cls, text: str) -> "PeriodLabel":
        text = text.strip()
        m = _MONTH_RE.match(text)
        if m:
            return cls(int(m.group(1)), int(m.group(2)), MONTHLY)
        m = _QUARTER_RE.match(text)
        if m:
            return cls(int(m.group(1)), int(m.group(2)), QUARTERLY)
        raise ValueError(f"malformed period label {text!r}")

    @property
    def quarter(self) -> int:
        if self.granularity == QUARTERLY:
            return self.subperiod
        return (self.subperiod - 1) // 3 + 1

    def to_quarter(self) -> "PeriodLabel":
        return PeriodLabel(self.year, self.quarter, QUARTERLY)

    def __str__(self) -> str:
        if self.granularity == MONTHLY:
            return f"{self.year:04d}-{self.subperiod:02d}"
        return f"{self.year:04d}-Q{self.subperiod}"


ColumnKey = tuple  # (series, feature)


def column_id(series: str, feature: str) -> str:
    return f"{series}_{feature}"


@dataclass(frozen=True, eq=False)
class TimeSeriesPanel:
    """Immutable (series, feature) x time panel with an availability mask.

    ``values`` and ``available`` have shape ``(n_columns, n_times)``; row ``j``
    belongs to ``columns[j]``.
    """

    columns: tuple
    timestamps: tuple
    values: np.ndarray
    available: np.ndarray

    def __post_init__(self):
        columns = tuple((str(s), str(f)) for s, f in self.columns)
        timestamps = tuple(self.timestamps)
        values = np.array(self.values, dtype=float, copy=True).reshape(len(columns), len(timestamps))
        available = np.array(self.available, dtype=bool, copy=True).reshape(values.shape)

        if len(set(columns)) != len(columns):
            raise ConflictError("duplicate (series, feature) column in panel")
        grans = {t.granularity for t in timestamps}
        if len(grans) > 1:
            raise FormatError("panel mixes monthly and quarterly timestamps")
        for a, b in zip(timestamps, timestamps[1:]):
            if not a < b:
                raise FormatError(f"timestamps not strictly increasing at {a} -> {b}")
        if not np.all(np.isfinite(values[available])):
            raise FormatError("non-finite value in an available cell")
        values[~available] = np.nan

        values.setflags(write=False)
        available.setflags(write=False)
        object.__setattr__(self, "columns", columns)
        object.__setattr__(self, "timestamps", timestamps)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "available", available)

    @property
    def granularity(self) -> str | None:
        return self.timestamps[0].granularity if self.timestamps else None

    @property
    def series(self) -> list[str]:
        return list(dict.fromkeys(s for s, _ in self.columns))

    countries = series

    @property
    def features(self) -> list[str]:
        return list(dict.fromkeys(f for _, f in self.columns))

    @property
    def column_ids(self) -> list[str]:
        return [column_id(s, f) for s, f in self.columns]

    def __len__(self) -> int:
        return len(self.timestamps)

    def index(self, series: str, feature: str) -> int:
        try:
            return self.columns.index((series, feature))
        except ValueError:
            raise UnknownFeatureError(f"no column for series {series!r}, feature {feature!r}") from None

    def get(self, series: str, feature: str) -> tuple[np.ndarray, np.ndarray]:
        j = self.index(series, feature)
        return self.values[j], self.available[j]

    def series_with(self, feature: str) -> list[str]:
        return [s for s, f in self.columns if f == feature]

    def select(self, columns: Iterable[ColumnKey]) -> "TimeSeriesPanel":
        idx = [self.index(s, f) for s, f in columns]
        return TimeSeriesPanel(
            tuple(self.columns[j] for j in idx), self.timestamps, self.values[idx], self.available[idx]
        )

    def feature_block(self, feature: str) -> tuple[list[str], np.ndarray, np.ndarray]:
        """Return ``(series, values, available)`` for every column carrying ``feature``."""
        names = self.series_with(feature)
        if not names:
            raise UnknownFeatureError(f"feature {feature!r} absent from panel")
        idx = [self.index(s, feature) for s in names]
        return names, self.values[idx], self.available[idx]

    def schema(self) -> dict:
        return {column_id(s, f): {"series": s, "feature": f} for s, f in self.columns}

    def equals(self, other: "TimeSeriesPanel") -> bool:
        return (
            self.columns == other.columns
            and self.timestamps == other.timestamps
            and np.array_equal(self.available, other.available)
            and np.array_equal(self.values[self.available], other.values[other.available])
        )

    def to_csv(self) -> str:
        return write_panel(self)

    def summary(self) -> dict:
        return {
            "granularity": self.granularity,
            "n_times": len(self.timestamps),
            "first": str(self.timestamps[0]) if self.timestamps else None,
            "last": str(self.timestamps[-1]) if self.timestamps else None,
            "series": self.series,
            "features": self.features,
            "columns": self.column_ids,
            "missing_cells": int((~self.available).sum()),
        }


# --------------------------------------------------------------------------
# CSV ingestion

Source = Union[bytes, bytearray, str, os.PathLike, IO]


def _read_text(source: Source) -> str:
    if isinstance(source, (bytes, bytearray)):
        return bytes(source).decode("utf-8-sig")
    if isinstance(source, os.PathLike):
        return Path(source).read_text(encoding="utf-8-sig")
    if isinstance(source, str):
        return source
    data = source.read()
    return data.decode("utf-8-sig") if isinstance(data, (bytes, bytearray)) else data


def load_schema(source: Source) -> dict:
    """Read a JSON schema mapping column name -> {"series": ..., "feature": ...}."""
    raw = json.loads(_read_text(source))
    if not isinstance(raw, dict):
        raise FormatError("schema must be a JSON object")
    out = {}
    for col, spec in raw.items():
        if not isinstance(spec, dict) or "series" not in spec or "feature" not in spec:
            raise FormatError(f"schema entry for {col!r} needs 'series' and 'feature'")
        out[col] = {"series": str(spec["series"]), "feature": str(spec["feature"])}
    return out


def _infer_key(name: str) -> tuple[str, str]:
    series, sep, feature = name.rpartition("_")
    if not sep or not series or not feature:
        raise FormatError(f"column {name!r} is not of the form <SERIES>_<feature> and no schema was given")
    return series, feature


def load_panel(source: Source, schema: Mapping | None = None) -> TimeSeriesPanel:
    """Parse a panel CSV.

    ``source`` is raw bytes, CSV text, a path-like object or an open file.
    Without ``schema`` each column name is split at its last underscore into
    ``(series, feature)``. Rows may arrive in any order; identical duplicate
    rows are merged, differing duplicates raise :class:`ConflictError`.
    """
    text = _read_text(source)
    reader = csv.reader(io.StringIO(text, newline=""))
    try:
        header = next(reader)
    except StopIteration:
        raise FormatError("empty CSV: header row required") from None
    header = [h.strip() for h in header]
    if not header or header[0] != "date":
        raise FormatError("first column must be 'date'")
    names = header[1:]
    if len(set(names)) != len(names):
        raise ConflictError("duplicate column name in header")

    if schema is None:
        keys = [_infer_key(n) for n in names]
    else:
        missing = [n for n in names if n not in schema]
        if missing:
            raise FormatError(f"schema does not map column(s): {', '.join(missing)}")
        keys = [(str(schema[n]["series"]), str(schema[n]["feature"])) for n in names]
    if len(set(keys)) != len(keys):
        raise ConflictError("two columns map to the same (series, feature)")

    cells: dict[PeriodLabel, list] = {}
    granularity = None
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"row {lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            label = PeriodLabel.parse(row[0])
        except ValueError:
            raise ParseError(f"row {lineno}: malformed date {row[0]!r}") from None
        if granularity is None:
            granularity = label.granularity
        elif label.granularity != granularity:
            raise FormatError(f"row {lineno}: {label.granularity} date {row[0]!r} in a {granularity} file")

        parsed = []
        for name, raw in zip(names, row[1:]):
            raw = raw.strip()
            if raw == "":
                parsed.append(None)
                continue
            try:
                x = float(raw)
            except ValueError:
                raise ParseError(f"row {lineno}: column {name!r} has non-numeric value {raw!r}") from None
            if not math.isfinite(x):
                raise ParseError(f"row {lineno}: column {name!r} has non-finite value {raw!r}")
            parsed.append(x)

        prev = cells.get(label)
        if prev is None:
            cells[label] = parsed
            continue
        for j, (old, new) in enumerate(zip(prev, parsed)):
            if new is None:
                continue
            if old is not None and old != new:
                raise ConflictError(f"row {lineno}: duplicate value for ({label}, {names[j]})")
            prev[j] = new

    timestamps = sorted(cells)
    values = np.full((len(keys), len(timestamps)), np.nan)
    available = np.zeros(values.shape, dtype=bool)
    for t, label in enumerate(timestamps):
        for j, x in enumerate(cells[label]):
            if x is not None:
                values[j, t] = x
                available[j, t] = True
    return TimeSeriesPanel(tuple(keys), tuple(timestamps), values, available)


def read_panel(path: str | os.PathLike, schema_path: str | os.PathLike | None = None) -> TimeSeriesPanel:
    schema = load_schema(Path(schema_path)) if schema_path is not None else None
    return load_panel(Path(path), schema)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_panel(panel: TimeSeriesPanel) -> str:
    """Serialize to the CSV format read by :func:`load_panel` (shortest round-trip floats)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["date", *panel.column_ids])
    for t, label in enumerate(panel.timestamps):
        row = [str(label)]
        for j in range(len(panel.columns)):
            row.append(_fmt(panel.values[j, t]) if panel.available[j, t] else "")
        w.writerow(row)
    return buf.getvalue()


# --------------------------------------------------------------------------
# resampling and alignment


@dataclass(frozen=True)
class Resampled:
    timestamps: tuple
    values: np.ndarray
    available: np.ndarray
    counts: np.ndarray  # months contributing to each quarter
    already_quarterly: bool = False


def resample_quarterly(timestamps: Sequence[PeriodLabel], values, available=None) -> Resampled:
    """Average monthly observations over calendar quarters (Q1 = Jan-Mar, ...).

    Each quarter takes the mean of its *available* months; a quarter with no
    available month is masked. Quarterly input is returned unchanged with
    ``already_quarterly`` set.
    """
    values = np.asarray(values, dtype=float)
    if available is None:
        available = np.isfinite(values)
    available = np.asarray(available, dtype=bool)
    if values.shape != available.shape or values.shape[-1] != len(timestamps):
        raise FormatError("values, mask and timestamps disagree in length")

    if timestamps and timestamps[0].granularity == QUARTERLY:
        log.warning("resample_quarterly: input already quarterly, returning unchanged")
        return Resampled(tuple(timestamps), values.copy(), available.copy(), available.astype(int), True)

    quarters = list(dict.fromkeys(t.to_quarter() for t in timestamps))
    slot = {q: i for i, q in enumerate(quarters)}
    group = np.array([slot[t.to_quarter()] for t in timestamps], dtype=int)

    squeeze = values.ndim == 1
    v2 = np.atleast_2d(values)
    a2 = np.atleast_2d(available)
    sums = np.zeros((v2.shape[0], len(quarters)))
    counts = np.zeros((v2.shape[0], len(quarters)), dtype=int)
    np.add.at(sums.T, group, np.where(a2, v2, 0.0).T)
    np.add.at(counts.T, group, a2.T.astype(int))

    avail = counts > 0
    out = np.full(sums.shape, np.nan)
    out[avail] = sums[avail] / counts[avail]
    if squeeze:
        return Resampled(tuple(quarters), out[0], avail[0], counts[0])
    return Resampled(tuple(quarters), out, avail, counts)


def to_quarterly(panel: TimeSeriesPanel) -> TimeSeriesPanel:
    if panel.granularity != MONTHLY:
        log.warning("to_quarterly: panel already %s, returning unchanged", panel.granularity)
        return panel
    r = resample_quarterly(panel.timestamps, panel.values, panel.available)
    return TimeSeriesPanel(panel.columns, r.timestamps, r.values, r.available)


def align(panels: Sequence[TimeSeriesPanel]) -> TimeSeriesPanel:
    """Union of columns over the intersection of timestamps."""
    if not panels:
        raise AlignmentError("nothing to align")
    grans = {p.granularity for p in panels}
    if len(grans) != 1:
        raise FormatError("cannot align panels of different granularity; resample first")

    common = set(panels[0].timestamps)
    for p in panels[1:]:
        common &= set(p.timestamps)
    if not common:
        raise AlignmentError("panels share no timestamps")
    timestamps = sorted(common)

    order: list = []
    vals: dict = {}
    avail: dict = {}
    for p in panels:
        pos = {t: i for i, t in enumerate(p.timestamps)}
        idx = [pos[t] for t in timestamps]
        for j, key in enumerate(p.columns):
            v = p.values[j, idx]
            a = p.available[j, idx]
            if key not in vals:
                order.append(key)
                vals[key] = v.copy()
                avail[key] = a.copy()
                continue
            both = a & avail[key]
            if np.any(vals[key][both] != v[both]):
                raise ConflictError(f"panels disagree on column {column_id(*key)}")
            take = a & ~avail[key]
            vals[key][take] = v[take]
            avail[key] |= a

    return TimeSeriesPanel(
        tuple(order),
        tuple(timestamps),
        np.array([vals[k] for k in order]).reshape(len(order), len(timestamps)),
        np.array([avail[k] for k in order]).reshape(len(order), len(timestamps)),
    )
