"""Four-state economic classification, state integral and empirical transition matrices.

States:
    1  ascending growth    growth above threshold, inflation > 0
    2  descending growth   growth above threshold, inflation <= 0
    3  stagflation         growth at/below threshold, inflation > 0
    4  contraction         growth at/below threshold, inflation <= 0

The growth threshold of a country is ``mean(gdp) - std(gdp)`` over its whole
available sample (population standard deviation).
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DimensionError, InsufficientDataError, UnknownFeatureError
from .panel import TimeSeriesPanel

N_STATES = 4
STATE_NAMES = {1: "ascending growth", 2: "descending growth", 3: "stagflation", 4: "contraction"}


@dataclass(frozen=True, eq=False)
class StateSeries:
    country: str
    states: np.ndarray  # int8, 0 where masked
    available: np.ndarray
    threshold: float
    mean_gdp: float
    std_gdp: float
    timestamps: tuple = field(default=())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["date", "state", "masked"])
        stamps = self.timestamps or tuple(range(len(self.states)))
        for t, s, a in zip(stamps, self.states, self.available):
            w.writerow([str(t), int(s) if a else "", "false" if a else "true"])
        return buf.getvalue()


@dataclass(frozen=True)
class StateIntegral:
    country: str
    value: float


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    country: str
    probs: np.ndarray
    counts: np.ndarray
    visited: np.ndarray

    def to_dict(self) -> dict:
        return {
            "country": self.country,
            "probs": self.probs.tolist(),
            "counts": self.counts.tolist(),
            "visited": self.visited.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "TransitionMatrix":
        return cls(d["country"], np.array(d["probs"], float), np.array(d["counts"], int), np.array(d["visited"], bool))


def _as_masked(x) -> tuple[np.ndarray, np.ndarray]:
    v = np.asarray(x, dtype=float)
    return v, np.isfinite(v)


def classify_states(gdp, inflation, country: str = "", timestamps=()) -> StateSeries:
    """Assign each time one of the four states.

    ``gdp`` and ``inflation`` are equal-length sequences with NaN marking
    missing observations; times where either is missing are masked (state 0).
    """
    g, g_ok = _as_masked(gdp)
    c, c_ok = _as_masked(inflation)
    if g.ndim != 1 or g.shape != c.shape:
        raise DimensionError(f"gdp and inflation lengths differ ({g.shape} vs {c.shape})")
    if g.size < 2:
        raise InsufficientDataError("need at least 2 periods to classify")
    if g_ok.sum() < 2:
        raise InsufficientDataError(f"{country or 'series'}: fewer than 2 available gdp points")

    mu = float(g[g_ok].mean())
    sigma = float(g[g_ok].std())
    threshold = mu - sigma

    ok = g_ok & c_ok
    above = g > threshold
    inflating = c > 0
    states = np.where(above, np.where(inflating, 1, 2), np.where(inflating, 3, 4)).astype(np.int8)
    states[~ok] = 0
    return StateSeries(country, states, ok, threshold, mu, sigma, tuple(timestamps))


def classify_panel(panel: TimeSeriesPanel, gdp_feature: str = "gdp", cpi_feature: str = "cpi") -> list[StateSeries]:
    """Classify every series that carries both a gdp and a cpi column, in panel order."""
    both = [s for s in panel.series_with(gdp_feature) if s in set(panel.series_with(cpi_feature))]
    if not both:
        raise UnknownFeatureError(f"no series carries both {gdp_feature!r} and {cpi_feature!r}")
    out = []
    for s in both:
        g, ga = panel.get(s, gdp_feature)
        c, ca = panel.get(s, cpi_feature)
        out.append(classify_states(np.where(ga, g, np.nan), np.where(ca, c, np.nan), s, panel.timestamps))
    return out


def state_integral(s: StateSeries) -> StateIntegral:
    """Mean state over unmasked times."""
    obs = np.asarray(s.states)[np.asarray(s.available, bool)]
    if obs.size == 0:
        raise InsufficientDataError(f"{s.country or 'series'}: every state is masked")
    return StateIntegral(s.country, float(obs.mean()))


def transition_matrix(s: StateSeries) -> TransitionMatrix:
    """Row-normalised counts of adjacent unmasked state pairs.

    A masked time breaks adjacency. Rows never left from are all zero and
    flagged ``visited = False``.
    """
    st = np.asarray(s.states, dtype=int)
    ok = np.asarray(s.available, dtype=bool)
    pair = ok[:-1] & ok[1:]
    if not pair.any():
        raise InsufficientDataError(f"{s.country or 'series'}: no pair of consecutive observed states")
    src, dst = st[:-1][pair], st[1:][pair]
    if not (np.isin(src, (1, 2, 3, 4)).all() and np.isin(dst, (1, 2, 3, 4)).all()):
        raise DataError("observed states must lie in {1, 2, 3, 4}")
    counts = np.zeros((N_STATES, N_STATES), dtype=np.int64)
    np.add.at(counts, (src - 1, dst - 1), 1)
    rows = counts.sum(axis=1)
    visited = rows > 0
    probs = np.zeros((N_STATES, N_STATES))
    probs[visited] = counts[visited] / rows[visited, None]
    return TransitionMatrix(s.country, probs, counts, visited)


def simulate_chain(probs, length: int, rng: np.random.Generator, start: int = 1) -> np.ndarray:
    """Sample a state path (states 1..4) from a row-stochastic matrix."""
    p = np.asarray(probs, dtype=float)
    cum = np.cumsum(p, axis=1)
    u = rng.random(length - 1)
    out = np.empty(length, dtype=np.int8)
    out[0] = start
    cur = start - 1
    for t in range(1, length):
        cur = min(int(np.searchsorted(cum[cur], u[t - 1], side="right")), N_STATES - 1)
        out[t] = cur + 1
    return out


def integral_table(series: list[StateSeries]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["country", "state_integral"])
    for s in series:
        w.writerow([s.country, repr(state_integral(s).value)])
    return buf.getvalue()
