"""Seeded synthetic monthly panel spanning six decades, used as the bundled fixture.

Four countries carry inflation rates (cpi, percent), growth rates (gdp,
percent) and equity index levels; three non-equity assets carry price
levels. Oil only starts in the third decade so that the backtest exercises
per-window exclusion.
"""
from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np

from .panel import MONTHLY, PeriodLabel, TimeSeriesPanel

COUNTRIES = ("AUS", "JPN", "UK", "US")
ASSETS = ("GOLD", "OIL", "CRB")
START_YEAR = 1960
N_MONTHS = 720
OIL_START = 240  # first month index with an oil price

FIXTURE_CSV = "synthetic_6decade.csv"
FIXTURE_SCHEMA = "synthetic_6decade_schema.json"


def _ar1(rng, n, mean, phi, scale, start=None):
    x = np.empty(n)
    x[0] = mean if start is None else start
    eps = rng.normal(0.0, scale, n)
    for t in range(1, n):
        x[t] = mean + phi * (x[t - 1] - mean) + eps[t]
    return x


def _prices(rng, n, drift, vol, p0=100.0):
    r = rng.normal(drift, vol, n - 1)
    return p0 * np.exp(np.concatenate([[0.0], np.cumsum(r)]))


def synthetic_panel(seed: int = 0, n_months: int = N_MONTHS) -> TimeSeriesPanel:
    rng = np.random.default_rng(seed)
    stamps = tuple(PeriodLabel(START_YEAR + m // 12, m % 12 + 1, MONTHLY) for m in range(n_months))
    years = np.arange(n_months) / 12.0
    # inflation surge centred on the mid 1970s
    surge = 6.0 * np.exp(-0.5 * ((years - 15.0) / 4.0) ** 2)

    columns, rows = [], []
    infl_base = {"AUS": 3.0, "JPN": 1.0, "UK": 3.5, "US": 3.0}
    for c in COUNTRIES:
        cpi = _ar1(rng, n_months, infl_base[c], 0.95, 0.6) + surge
        gdp = _ar1(rng, n_months, 2.5, 0.9, 0.8)
        shocks = rng.random(n_months) < 0.01
        for t in np.flatnonzero(shocks):
            gdp[t : t + 6] -= 4.0
        eq = _prices(rng, n_months, 0.006, 0.045)
        columns += [(c, "cpi"), (c, "gdp"), (c, "equity")]
        rows += [np.round(cpi, 6), np.round(gdp, 6), np.round(eq, 6)]

    for a, drift, vol in zip(ASSETS, (0.005, 0.004, 0.003), (0.05, 0.09, 0.04)):
        p = np.round(_prices(rng, n_months, drift, vol, 50.0), 6)
        if a == "OIL":
            p[:OIL_START] = np.nan
        columns.append((a, "price"))
        rows.append(p)

    values = np.array(rows)
    return TimeSeriesPanel(tuple(columns), stamps, values, np.isfinite(values))


def fixture_path(name: str = FIXTURE_CSV) -> Path:
    return Path(str(resources.files("macrostate") / "data" / name))
