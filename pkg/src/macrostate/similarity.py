"""Labeled square matrices: driver distances, temporal self-similarity and state cosine similarity."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError, DimensionError, InsufficientDataError, KindError
from .panel import TimeSeriesPanel, column_id
from .transform import feature_matrix, l1_normalize

DISTANCE = "distance"
SIMILARITY = "similarity"
SYM_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class SquareMatrix:
    labels: tuple
    entries: np.ndarray
    kind: str

    def __post_init__(self):
        labels = tuple(str(x) for x in self.labels)
        m = np.array(self.entries, dtype=float, copy=True)
        n = len(labels)
        if m.shape != (n, n):
            raise DimensionError(f"matrix shape {m.shape} does not match {n} labels")
        if self.kind not in (DISTANCE, SIMILARITY):
            raise KindError(f"unknown matrix kind {self.kind!r}")
        if np.isnan(m).any():
            raise DataError("matrix contains NaN")
        scale = max(1.0, float(np.abs(m).max(initial=0.0)))
        if np.abs(m - m.T).max(initial=0.0) > SYM_TOL * scale:
            raise KindError("matrix is not symmetric")
        if self.kind == DISTANCE:
            if np.abs(np.diag(m)).max(initial=0.0) > SYM_TOL * scale or (m < -SYM_TOL * scale).any():
                raise KindError("distance matrix needs zero diagonal and nonnegative entries")
        elif np.abs(np.diag(m) - 1.0).max(initial=0.0) > SYM_TOL:
            raise KindError("similarity matrix needs unit diagonal")
        m.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "entries", m)

    def __len__(self):
        return len(self.labels)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["", *self.labels])
        for lab, row in zip(self.labels, self.entries):
            w.writerow([lab, *(repr(float(x)) for x in row)])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"labels": list(self.labels), "entries": self.entries.tolist(), "kind": self.kind}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "SquareMatrix":
        d = json.loads(text)
        return cls(tuple(d["labels"]), np.array(d["entries"], dtype=float), d["kind"])

    @classmethod
    def from_csv(cls, text: str, kind: str) -> "SquareMatrix":
        rows = list(csv.reader(io.StringIO(text)))
        labels = rows[0][1:]
        return cls(tuple(labels), np.array([[float(x) for x in r[1:]] for r in rows[1:]]), kind)


def _pairwise_l1(x: np.ndarray) -> np.ndarray:
    """L1 distances between the rows of ``x``, computed on the upper triangle and mirrored."""
    n = x.shape[0]
    out = np.zeros((n, n))
    for i in range(n - 1):
        out[i, i + 1 :] = np.abs(x[i + 1 :] - x[i]).sum(axis=1)
    return np.triu(out, 1) + np.triu(out, 1).T


def driver_distance_matrix(trajectories: Mapping | Iterable) -> SquareMatrix:
    """Pairwise L1 distance between L1-normalised trajectories.

    ``trajectories`` is a mapping or an iterable of ``(label, series)`` pairs;
    the label order is kept. Entries lie in ``[0, 2]``.
    """
    items = list(trajectories.items()) if isinstance(trajectories, Mapping) else list(trajectories)
    if not items:
        raise InsufficientDataError("no trajectories")
    lengths = {len(np.asarray(s)) for _, s in items}
    if len(lengths) != 1:
        raise DimensionError(f"trajectories differ in length: {sorted(lengths)}")
    normed = np.array([l1_normalize(s) for _, s in items])
    return SquareMatrix(tuple(lab for lab, _ in items), _pairwise_l1(normed), DISTANCE)


def driver_trajectories(panel: TimeSeriesPanel, features: Sequence[str] = ("cpi", "gdp", "equity")) -> list:
    """Collect one trajectory per (series, feature), feature-major, on a common fully observed grid.

    Return features (equity) are taken as log returns. Timestamps where any
    trajectory is missing are dropped.
    """
    blocks = [feature_matrix(panel, f) for f in features]
    common = set(blocks[0][1])
    for _, stamps, _, _ in blocks[1:]:
        common &= set(stamps)
    grid = sorted(common)
    labels, rows, masks = [], [], []
    for feat, (names, stamps, vals, avail) in zip(features, blocks):
        pos = {t: i for i, t in enumerate(stamps)}
        idx = [pos[t] for t in grid]
        for name, v, a in zip(names, vals, avail):
            labels.append(column_id(name, feat))
            rows.append(v[idx])
            masks.append(a[idx])
    keep = np.all(masks, axis=0) if masks else np.zeros(0, bool)
    if keep.sum() < 1:
        raise InsufficientDataError("no timestamp where every trajectory is observed")
    return [(lab, r[keep]) for lab, r in zip(labels, rows)]


def temporal_self_similarity(panel: TimeSeriesPanel, feature: str) -> SquareMatrix:
    """T x T matrix of L1 distances between cross-country vectors at each pair of times.

    Only timestamps where every series carrying ``feature`` is observed are
    used; equity enters as log returns.
    """
    _, stamps, vals, avail = feature_matrix(panel, feature)
    keep = avail.all(axis=0)
    if keep.sum() < 2:
        raise InsufficientDataError(f"fewer than 2 fully observed timestamps for {feature!r}")
    x = vals[:, keep].T
    labels = tuple(str(t) for t, k in zip(stamps, keep) if k)
    return SquareMatrix(labels, _pairwise_l1(x), DISTANCE)


def _state_rows(states) -> tuple[list, np.ndarray, np.ndarray]:
    labels, rows, masks = [], [], []
    for i, s in enumerate(states):
        if hasattr(s, "states"):
            labels.append(s.country)
            rows.append(np.asarray(s.states, dtype=float))
            masks.append(np.asarray(s.available, dtype=bool))
        else:
            labels.append(str(i))
            r = np.asarray(s, dtype=float)
            rows.append(r)
            masks.append(np.ones(r.shape, bool))
    if len({len(r) for r in rows}) > 1:
        raise DimensionError("state series differ in length")
    return labels, np.array(rows), np.array(masks)


def economic_state_similarity(states: Sequence) -> SquareMatrix:
    """Cosine similarity between countries' state sequences.

    Accepts :class:`~macrostate.regime.StateSeries` objects or plain arrays of
    states in {1, 2, 3, 4}. Times masked in any series are excluded.
    """
    if not states:
        raise InsufficientDataError("no state series")
    labels, x, masks = _state_rows(states)
    keep = masks.all(axis=0)
    if keep.sum() < 1:
        raise InsufficientDataError("no timestamp where every state series is observed")
    x = x[:, keep]
    if not np.isin(x, (1, 2, 3, 4)).all():
        raise DataError("states must lie in {1, 2, 3, 4}")
    norms = np.sqrt((x * x).sum(axis=1))
    sim = (x @ x.T) / np.outer(norms, norms)
    sim = np.minimum((sim + sim.T) / 2.0, 1.0)
    np.fill_diagonal(sim, 1.0)
    return SquareMatrix(tuple(labels), sim, SIMILARITY)
