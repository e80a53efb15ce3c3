"""Agglomerative clustering over labeled distance matrices, tree cutting and silhouette-based k selection."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, DataError, InsufficientDataError, KindError
from .similarity import DISTANCE, SIMILARITY, SquareMatrix

LINKAGES = ("single", "complete", "average")
DEFAULT_LINKAGE = "average"
_TIE_RTOL = 1e-12


def similarity_to_distance(m: SquareMatrix) -> SquareMatrix:
    """``D = 1 - S`` with an exactly zero diagonal."""
    s = np.asarray(m.entries, dtype=float)
    if np.abs(np.diag(s) - 1.0).max(initial=0.0) > 1e-9:
        raise KindError("similarity matrix must have unit diagonal")
    if (s < -1 - 1e-9).any() or (s > 1 + 1e-9).any():
        raise KindError("similarity entries must lie in [-1, 1]")
    d = np.clip(1.0 - s, 0.0, 2.0)
    np.fill_diagonal(d, 0.0)
    return SquareMatrix(m.labels, d, DISTANCE)


@dataclass(frozen=True)
class Merge:
    left: int
    right: int
    height: float
    size: int


@dataclass(frozen=True)
class Dendrogram:
    """Merge list in scipy node numbering: leaves are ``0..n-1``, merge ``i`` creates node ``n+i``."""

    leaf_labels: tuple
    merges: tuple

    @property
    def n_leaves(self) -> int:
        return len(self.leaf_labels)

    def heights(self) -> np.ndarray:
        return np.array([m.height for m in self.merges])

    def to_linkage(self) -> np.ndarray:
        """Merges as an ``(n-1, 4)`` array in scipy's linkage-matrix layout."""
        return np.array([[m.left, m.right, m.height, m.size] for m in self.merges], dtype=float).reshape(-1, 4)

    def members(self, node: int) -> list[int]:
        n = self.n_leaves
        if node < n:
            return [node]
        m = self.merges[node - n]
        return self.members(m.left) + self.members(m.right)

    def to_dict(self) -> dict:
        return {
            "leaf_labels": list(self.leaf_labels),
            "merges": [{"left": m.left, "right": m.right, "height": m.height, "size": m.size} for m in self.merges],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "Dendrogram":
        merges = tuple(Merge(int(m["left"]), int(m["right"]), float(m["height"]), int(m["size"])) for m in d["merges"])
        return cls(tuple(d["leaf_labels"]), merges)


def _check_distance(d: SquareMatrix) -> np.ndarray:
    if d.kind != DISTANCE:
        raise KindError(f"expected a distance matrix, got {d.kind}")
    x = np.asarray(d.entries, dtype=float)
    if np.isnan(x).any():
        raise DataError("distance matrix contains NaN")
    return x


def hierarchical_cluster(d: SquareMatrix, linkage: str = DEFAULT_LINKAGE) -> Dendrogram:
    """Agglomerative clustering with single, complete or average linkage.

    At each step the pair of clusters with minimal linkage distance is merged.
    Near-ties (relative 1e-12) go to the pair with the lexicographically
    lowest (smaller key, larger key), where a cluster's key is the smallest
    leaf label it contains; this makes the tree independent of input order.
    """
    if linkage not in LINKAGES:
        raise ArgumentError(f"unknown linkage {linkage!r}; choose from {LINKAGES}")
    x = _check_distance(d)
    n = x.shape[0]
    if n < 2:
        raise InsufficientDataError("clustering needs at least 2 items")
    labels = list(d.labels)
    if len(set(labels)) != n:
        raise DataError("leaf labels must be unique")

    cd = x.copy()
    active = list(range(n))
    node = list(range(n))
    key = labels[:]
    size = [1] * n
    merges = []
    for step in range(n - 1):
        sub = cd[np.ix_(active, active)]
        iu = np.triu_indices(len(active), 1)
        vals = sub[iu]
        m = vals.min()
        cand = np.flatnonzero(vals <= m + _TIE_RTOL * abs(m))
        best = None
        for c in cand:
            a, b = active[iu[0][c]], active[iu[1][c]]
            k = (min(key[a], key[b]), max(key[a], key[b]))
            if best is None or k < best[0]:
                best = (k, a, b)
        _, a, b = best
        if key[b] < key[a]:
            a, b = b, a
        h = float(cd[a, b])
        merged_size = size[a] + size[b]
        merges.append(Merge(node[a], node[b], h, merged_size))

        # Lance-Williams update, result stored in slot a
        others = [o for o in active if o not in (a, b)]
        for o in others:
            if linkage == "single":
                v = min(cd[a, o], cd[b, o])
            elif linkage == "complete":
                v = max(cd[a, o], cd[b, o])
            else:
                v = (size[a] * cd[a, o] + size[b] * cd[b, o]) / merged_size
            cd[a, o] = cd[o, a] = v
        active.remove(b)
        node[a] = n + step
        key[a] = min(key[a], key[b])
        size[a] = merged_size
    return Dendrogram(tuple(labels), tuple(merges))


def cut_tree(dend: Dendrogram, k: int) -> np.ndarray:
    """Flat labels ``0..k-1`` after undoing the ``k-1`` last (highest) merges.

    Clusters are numbered in order of their first leaf.
    """
    n = dend.n_leaves
    if not 1 <= k <= n:
        raise ArgumentError(f"k must lie in [1, {n}], got {k}")
    parent = list(range(2 * n - 1))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, m in enumerate(dend.merges[: n - k]):
        parent[find(m.left)] = n + i
        parent[find(m.right)] = n + i
    roots: dict = {}
    return np.array([roots.setdefault(find(i), len(roots)) for i in range(n)], dtype=int)


def silhouette(d: np.ndarray, labels) -> float:
    """Mean silhouette coefficient from a precomputed distance matrix (singletons score 0)."""
    d = np.asarray(d, dtype=float)
    labels = np.asarray(labels)
    uniq = np.unique(labels)
    if len(uniq) < 2:
        raise ArgumentError("silhouette needs at least 2 clusters")
    n = len(labels)
    scores = np.zeros(n)
    for i in range(n):
        own = labels == labels[i]
        if own.sum() == 1:
            continue
        a = d[i, own].sum() / (own.sum() - 1)
        b = min(d[i, labels == c].mean() for c in uniq if c != labels[i])
        denom = max(a, b)
        scores[i] = (b - a) / denom if denom > 0 else 0.0
    return float(scores.mean())


def select_k(d: SquareMatrix, dend: Dendrogram, k_max: int | None = None) -> int:
    """Number of clusters in ``[2, k_max]`` maximising mean silhouette; ties go to the smaller k."""
    x = _check_distance(d)
    n = x.shape[0]
    if n < 3:
        raise InsufficientDataError("selecting k needs at least 3 items")
    if k_max is None:
        k_max = n - 1
    if not 2 <= k_max <= n - 1:
        raise ArgumentError(f"k_max must lie in [2, {n - 1}], got {k_max}")
    best_k, best = 2, -np.inf
    for k in range(2, k_max + 1):
        score = silhouette(x, cut_tree(dend, k))
        if score > best + 1e-12:
            best_k, best = k, score
    return best_k


def labels_csv(dend: Dendrogram, assignment) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["label", "cluster"])
    for lab, c in zip(dend.leaf_labels, assignment):
        w.writerow([lab, int(c)])
    return buf.getvalue()


