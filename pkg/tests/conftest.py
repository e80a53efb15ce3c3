import sys
import statistics

import numpy as np
import pytest

from macrostate.panel import MONTHLY, QUARTERLY, PeriodLabel, TimeSeriesPanel
from macrostate.portfolio import mean_and_cov
from macrostate.synthetic import FIXTURE_SCHEMA, fixture_path


def months(n, year=1960, month=1):
    out = []
    for k in range(n):
        m = month - 1 + k
        out.append(PeriodLabel(year + m // 12, m % 12 + 1, MONTHLY))
    return tuple(out)


def quarters(n, year=1960):
    return tuple(PeriodLabel(year + k // 4, k % 4 + 1, QUARTERLY) for k in range(n))


def make_panel(data: dict, stamps=None):
    """``data`` maps (series, feature) -> 1-D array with NaN for missing."""
    cols = list(data)
    vals = np.array([np.asarray(data[c], float) for c in cols])
    stamps = stamps or months(vals.shape[1])
    return TimeSeriesPanel(tuple(cols), stamps, vals, np.isfinite(vals))


def random_country_panel(rng, n_countries, n_times, features=("cpi", "gdp", "equity")):
    data = {}
    for i in range(n_countries):
        for f in features:
            if f == "equity":
                data[(f"C{i}", f)] = 100 * np.exp(np.cumsum(rng.normal(0.005, 0.05, n_times)))
            else:
                data[(f"C{i}", f)] = rng.normal(2.0, 2.0, n_times)
    return make_panel(data)


def classify_oracle(gdp, infl):
    """Four-branch classification written with plain Python control flow."""
    avail = [g for g in gdp if g == g]
    thr = statistics.fmean(avail) - statistics.pstdev(avail)
    out = []
    for g, c in zip(gdp, infl):
        if g != g or c != c:
            out.append(0)
        elif g > thr and c > 0:
            out.append(1)
        elif g > thr and c <= 0:
            out.append(2)
        elif g <= thr and c > 0:
            out.append(3)
        else:
            out.append(4)
    return out


def grid_oracle(mu, cov, lo, hi, denominator="variance", h=0.005, center=None, radius=None):
    """Exhaustive search over the K=3 capped simplex on a lattice of spacing ``h``.

    With ``center``/``radius`` the lattice is restricted to a box around
    ``center`` (used for a finer local pass).
    """
    n = int(round(1 / h))
    ii = jj = np.arange(n + 1)
    if center is not None:
        ii, jj = (np.arange(max(0, int(np.floor((x - radius) / h))), min(n, int(np.ceil((x + radius) / h))) + 1)
                  for x in center[:2])
    i, j = np.meshgrid(ii, jj, indexing="ij")
    w = np.stack([i.ravel() * h, j.ravel() * h, 1.0 - (i.ravel() + j.ravel()) * h], axis=1)
    keep = np.all((w >= lo - 1e-12) & (w <= hi + 1e-12), axis=1)
    if center is not None:
        keep &= np.all(np.abs(w - center) <= radius + 1e-12, axis=1)
    w = w[keep]
    num = w @ mu
    den = np.einsum("ij,jk,ik->i", w, cov, w)
    f = num / (den if denominator == "variance" else np.sqrt(den))
    b = int(np.argmax(f))
    return float(f[b]), w[b]


def random_instance(rng, k=3, n=119):
    """Mean/covariance estimated from simulated monthly log returns."""
    m = rng.uniform(-0.004, 0.012, k)
    vol = rng.uniform(0.02, 0.07, k)
    a = rng.normal(size=(k, k))
    c = a @ a.T + 0.5 * np.eye(k)
    d = np.sqrt(np.diag(c))
    r = rng.multivariate_normal(m, c / np.outer(d, d) * np.outer(vol, vol), size=n).T
    return mean_and_cov(r)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def fixture_csv():
    return fixture_path()


@pytest.fixture(scope="session")
def fixture_schema():
    return fixture_path(FIXTURE_SCHEMA)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
