"""Series transforms: log returns, L1 normalisation and cross-country signed sums."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InsufficientDataError, NormalizationError, UnknownFeatureError
from .panel import TimeSeriesPanel

# features that enter the analysis as log returns rather than raw levels
RETURN_FEATURES = frozenset({"equity"})


def log_returns(prices) -> np.ndarray:
    """``r[t] = ln(p[t+1] / p[t])``; output is one element shorter than the input."""
    p = np.asarray(prices, dtype=float)
    if p.ndim != 1 or p.size < 2:
        raise InsufficientDataError("log returns need at least 2 prices")
    bad = np.flatnonzero(~(p > 0))
    if bad.size:
        i = int(bad[0])
        raise DomainError(f"price at index {i} is not strictly positive ({p[i]!r})")
    return np.log(p[1:] / p[:-1])


def masked_log_returns(prices, available) -> tuple[np.ndarray, np.ndarray]:
    """Log returns on a masked grid.

    Return ``t`` (aligned with price ``t+1``) is available only when both
    neighbouring prices are; the output has length ``len(prices) - 1``.
    """
    p = np.asarray(prices, dtype=float)
    a = np.asarray(available, dtype=bool)
    ok = a[1:] & a[:-1]
    bad = np.flatnonzero(a & ~(p > 0))
    if bad.size:
        i = int(bad[0])
        raise DomainError(f"price at index {i} is not strictly positive ({p[i]!r})")
    out = np.full(p.size - 1, np.nan)
    out[ok] = np.log(p[1:][ok] / p[:-1][ok])
    return out, ok


def l1_normalize(series) -> np.ndarray:
    """Divide by the sum of absolute values; signs are kept."""
    x = np.asarray(series, dtype=float)
    norm = np.abs(x).sum()
    if not norm > 0:
        raise NormalizationError("cannot L1-normalise an all-zero series")
    return x / norm


def feature_matrix(panel: TimeSeriesPanel, feature: str):
    """Per-series matrix for ``feature`` on its analysis scale.

    Returns ``(series, timestamps, values, available)``. Return features are
    converted to log returns, which drops the first timestamp.
    """
    names, vals, avail = panel.feature_block(feature)
    stamps = list(panel.timestamps)
    if feature in RETURN_FEATURES:
        if len(stamps) < 2:
            raise InsufficientDataError("log returns need at least 2 timestamps")
        pairs = [masked_log_returns(v, a) for v, a in zip(vals, avail)]
        vals = np.array([r for r, _ in pairs]).reshape(len(names), len(stamps) - 1)
        avail = np.array([m for _, m in pairs]).reshape(vals.shape)
        stamps = stamps[1:]
    return names, stamps, np.array(vals), np.array(avail)


@dataclass(frozen=True)
class GlobalSumSeries:
    feature: str
    timestamps: list
    values: np.ndarray
    contributing_series: list


def global_sum(panel: TimeSeriesPanel, feature: str) -> GlobalSumSeries:
    """Signed sum over all series carrying ``feature``, at times where all are observed."""
    if feature not in panel.features:
        raise UnknownFeatureError(f"feature {feature!r} absent from panel")
    names, stamps, vals, avail = feature_matrix(panel, feature)
    full = avail.all(axis=0)
    total = vals[:, full].sum(axis=0)
    return GlobalSumSeries(feature, [t for t, k in zip(stamps, full) if k], total, names)
