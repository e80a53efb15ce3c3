"""Rolling-window maximisation of return-over-risk under box bounds and full investment.

The objective is ``mu @ w / (w @ cov @ w)`` (``denominator="variance"``) or
``mu @ w / sqrt(w @ cov @ w)`` (``denominator="stdev"``), maximised over
``{w : sum(w) = 1, lower <= w <= upper}``. The risk-free rate is zero.
"""
from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    ArgumentError,
    DataError,
    FeasibilityError,
    InsufficientDataError,
    MacrostateError,
    WindowError,
)
from .panel import TimeSeriesPanel, column_id
from .transform import log_returns

log = logging.getLogger(__name__)

DENOMINATORS = ("variance", "stdev")
NON_ASSET_FEATURES = frozenset({"cpi", "gdp"})


@dataclass(frozen=True)
class OptimizerConfig:
    lower_bound: float = 0.025
    upper_bound: float = 0.4
    window: int = 120
    step: int = 120
    stationarity_tol: float = 1e-8
    ridge: float = 1e-10
    denominator: str = "variance"
    n_starts: int = 16
    seed: int = 0
    max_iter: int = 5000

    def __post_init__(self):
        if not 0 <= self.lower_bound < self.upper_bound <= 1:
            raise ArgumentError(
                f"bounds must satisfy 0 <= lower < upper <= 1, got [{self.lower_bound}, {self.upper_bound}]"
            )
        if self.window < 2:
            raise ArgumentError("window must be at least 2 periods")
        if self.step < 1:
            raise ArgumentError("step must be positive")
        if self.denominator not in DENOMINATORS:
            raise ArgumentError(f"denominator must be one of {DENOMINATORS}")
        if self.n_starts < 1 or self.max_iter < 1:
            raise ArgumentError("n_starts and max_iter must be positive")
        if self.ridge < 0 or self.stationarity_tol <= 0:
            raise ArgumentError("ridge must be >= 0 and stationarity_tol > 0")

    def check_feasible(self, k: int) -> None:
        if k < 1:
            raise FeasibilityError("no assets to allocate")
        if self.lower_bound * k > 1:
            raise FeasibilityError(f"lower_bound * K = {self.lower_bound} * {k} = {self.lower_bound * k:g} > 1")
        if self.upper_bound * k < 1:
            raise FeasibilityError(f"upper_bound * K = {self.upper_bound} * {k} = {self.upper_bound * k:g} < 1")

    @classmethod
    def from_dict(cls, d: Mapping) -> "OptimizerConfig":
        known = cls.__dataclass_fields__
        unknown = set(d) - set(known)
        if unknown:
            raise ArgumentError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def mean_and_cov(returns, ridge: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Per-asset mean and sample covariance (divisor n-1) of a K x n return matrix.

    A ridge of ``ridge * I`` is added, scaled by the mean sample variance so that
    rescaling the returns rescales the covariance exactly. When the variances
    are at rounding level (constant returns) the ridge is added as is.
    """
    r = np.atleast_2d(np.asarray(returns, dtype=float))
    if r.shape[1] < 2:
        raise InsufficientDataError("need at least 2 return periods")
    if not np.isfinite(r).all():
        raise DataError("return matrix has missing or non-finite cells")
    mu = r.mean(axis=1)
    dev = r - mu[:, None]
    cov = dev @ dev.T / (r.shape[1] - 1)
    cov = (cov + cov.T) / 2.0
    scale = float(np.diag(cov).mean())
    if not scale > (1e-12 * np.abs(r).max()) ** 2:
        scale = 1.0
    cov += ridge * scale * np.eye(r.shape[0])
    return mu, cov


# --------------------------------------------------------------------------
# solver


def project_capped_simplex(v, lower: float, upper: float) -> np.ndarray:
    """Euclidean projection onto ``{w : sum(w) = 1, lower <= w <= upper}``.

    ``sum(clip(v - lam, lower, upper))`` is piecewise linear and nonincreasing
    in ``lam``; the root is found exactly between consecutive breakpoints.
    """
    v = np.asarray(v, dtype=float)
    bps = np.sort(np.concatenate([v - upper, v - lower]))
    sums = np.clip(v[None, :] - bps[:, None], lower, upper).sum(axis=1)
    # sums is nonincreasing; find the last breakpoint with sum >= 1
    i = int(np.searchsorted(-sums, -1.0, side="right")) - 1
    i = min(max(i, 0), len(bps) - 2)
    s0, s1 = sums[i], sums[i + 1]
    lam = bps[i] if s0 == s1 else bps[i] + (s0 - 1.0) * (bps[i + 1] - bps[i]) / (s0 - s1)
    return np.clip(v - lam, lower, upper)


class _Problem:
    def __init__(self, mu, cov, lower, upper, denominator):
        self.mu = np.asarray(mu, dtype=float)
        self.cov = np.asarray(cov, dtype=float)
        self.lo = lower
        self.hi = upper
        self.p = 1.0 if denominator == "variance" else 0.5

    def value(self, w) -> float:
        return float(self.mu @ w / (w @ self.cov @ w) ** self.p)

    def grad(self, w) -> np.ndarray:
        sw = self.cov @ w
        d = w @ sw
        n = self.mu @ w
        return (self.mu - 2.0 * self.p * n / d * sw) / d**self.p

    def project(self, v) -> np.ndarray:
        return project_capped_simplex(v, self.lo, self.hi)

    def residual(self, w, g=None) -> float:
        """Scale-free stationarity measure ``|P(w + g/s) - w|_inf``.

        ``s`` is the size of the two gradient terms rather than of ``g`` itself:
        the stdev objective is scale invariant, so ``g`` vanishes at an interior
        optimum and normalising by it would only amplify rounding noise.
        """
        sw = self.cov @ w
        d = w @ sw
        if g is None:
            g = self.grad(w)
        s = max(np.abs(self.mu).max(), np.abs(2.0 * self.p * (self.mu @ w) / d * sw).max()) / d**self.p
        if s == 0:
            return 0.0
        return float(np.abs(self.project(w + g / s) - w).max())


def _ascend(prob: _Problem, w, max_iter: int, tol: float) -> np.ndarray:
    """Projected gradient ascent with Armijo backtracking and step growth."""
    w = prob.project(w)
    f = prob.value(w)
    g = prob.grad(w)
    alpha = 0.1 / max(np.abs(g).max(), 1e-300)
    for _ in range(max_iter):
        for _ in range(60):
            cand = prob.project(w + alpha * g)
            fc = prob.value(cand)
            if fc >= f + 1e-4 * (g @ (cand - w)):
                break
            alpha *= 0.5
        else:
            break
        moved = np.abs(cand - w).max()
        w, f = cand, fc
        g = prob.grad(w)
        if moved < 1e-15 or prob.residual(w, g) < tol * 0.1:
            break
        alpha *= 2.0
    return w


def _polish(prob: _Problem, w, eps: float = 1e-7) -> np.ndarray | None:
    """Solve the stationarity conditions exactly on the active face of ``w``.

    Free coordinates satisfy ``mu_F - c (cov w)_F = nu`` with
    ``c = 2 p (mu @ w) / (w @ cov @ w)``; ``c`` is refreshed until it settles.
    Coordinates that leave the box are pinned to the violated bound.
    """
    lo, hi = prob.lo, prob.hi
    w = w.copy()
    at_lo = w <= lo + eps
    at_hi = w >= hi - eps
    for _ in range(len(w) + 1):
        w[at_lo] = lo
        w[at_hi] = hi
        free = ~(at_lo | at_hi)
        nf = int(free.sum())
        if nf == 0:
            return w if abs(w.sum() - 1.0) < 1e-12 else None
        budget = 1.0 - w[~free].sum()
        if nf == 1:
            w[free] = budget
        else:
            cff = prob.cov[np.ix_(free, free)]
            cfb = prob.cov[np.ix_(free, ~free)]
            kkt = np.zeros((nf + 1, nf + 1))
            kkt[:nf, nf] = 1.0
            kkt[nf, :nf] = 1.0
            prev = None
            for _ in range(200):
                c = 2.0 * prob.p * (prob.mu @ w) / (w @ prob.cov @ w)
                if c <= 0:
                    return None
                kkt[:nf, :nf] = c * cff
                rhs = np.append(prob.mu[free] - c * cfb @ w[~free], budget)
                try:
                    sol = np.linalg.solve(kkt, rhs)
                except np.linalg.LinAlgError:
                    return None
                w[free] = sol[:nf]
                if prev is not None and np.abs(sol[:nf] - prev).max() < 1e-16:
                    break
                prev = sol[:nf]
        below = free & (w < lo)
        above = free & (w > hi)
        if not (below.any() or above.any()):
            return w
        at_lo |= below
        at_hi |= above
    return None


def _starts(k: int, cfg: OptimizerConfig) -> list[np.ndarray]:
    out = [np.full(k, 1.0 / k)]
    out += [np.eye(k)[i] for i in range(k)]
    rng = np.random.default_rng(cfg.seed)
    while len(out) < cfg.n_starts:
        out.append(rng.dirichlet(np.ones(k)))
    return out[: max(cfg.n_starts, 1)]


@dataclass(frozen=True, eq=False)
class SharpeResult:
    weights: np.ndarray
    objective: float
    stationarity: float


def solve_max_sharpe(mean, cov, cfg: OptimizerConfig | None = None) -> SharpeResult:
    """Multi-start projected gradient ascent followed by an exact active-face polish."""
    cfg = cfg or OptimizerConfig()
    mu = np.asarray(mean, dtype=float).ravel()
    sigma = np.asarray(cov, dtype=float)
    k = mu.size
    if sigma.shape != (k, k):
        raise DataError(f"covariance shape {sigma.shape} does not match {k} means")
    if not (np.isfinite(mu).all() and np.isfinite(sigma).all()):
        raise DataError("non-finite mean or covariance")
    cfg.check_feasible(k)
    prob = _Problem(mu, sigma, cfg.lower_bound, cfg.upper_bound, cfg.denominator)

    best = None
    for w0 in _starts(k, cfg):
        w = _ascend(prob, w0, cfg.max_iter, cfg.stationarity_tol)
        f, r = prob.value(w), prob.residual(w)
        pw = _polish(prob, w)
        if pw is not None and np.all(pw >= cfg.lower_bound - 1e-12) and np.all(pw <= cfg.upper_bound + 1e-12):
            pf, pr = prob.value(pw), prob.residual(pw)
            if pf >= f - 1e-12 * abs(f) and pr <= r:
                w, f, r = pw, pf, pr
        if best is None or f > best[1] + 1e-14 * abs(best[1]):
            best = (w, f, r)
    w, f, r = best
    if r > cfg.stationarity_tol:
        log.warning("max_sharpe: stationarity residual %.3g exceeds tolerance %.3g", r, cfg.stationarity_tol)
    return SharpeResult(w, f, r)


def max_sharpe(mean, cov, cfg: OptimizerConfig | None = None) -> np.ndarray:
    return solve_max_sharpe(mean, cov, cfg).weights


def portfolio_objective(w, mean, cov, denominator: str = "variance") -> float:
    w = np.asarray(w, dtype=float)
    d = w @ np.asarray(cov, dtype=float) @ w
    return float(np.asarray(mean, dtype=float) @ w / (d if denominator == "variance" else np.sqrt(d)))


# --------------------------------------------------------------------------
# backtest


@dataclass(frozen=True, eq=False)
class PortfolioSolution:
    window_end: object
    assets: list
    weights: np.ndarray
    objective: float = float("nan")
    mean_vector: np.ndarray | None = None
    covariance: np.ndarray | None = None
    excluded: list = field(default_factory=list)
    window_start: object = None
    stationarity: float = float("nan")

    def weight_of(self, asset: str) -> float | None:
        try:
            return float(self.weights[self.assets.index(asset)])
        except ValueError:
            return None


@dataclass(frozen=True)
class WindowFailure:
    window_end: object
    message: str


@dataclass
class BacktestResult:
    solutions: list
    failures: list
    assets: list

    def __iter__(self):
        return iter(self.solutions)

    def __len__(self):
        return len(self.solutions)

    def __getitem__(self, i):
        return self.solutions[i]


def _resolve_assets(panel: TimeSeriesPanel, assets) -> list[tuple[str, str]]:
    if assets is None:
        return [c for c in panel.columns if c[1] not in NON_ASSET_FEATURES]
    ids = {column_id(s, f): (s, f) for s, f in panel.columns}
    out = []
    for a in assets:
        if isinstance(a, tuple):
            panel.index(*a)
            out.append(a)
        elif a in ids:
            out.append(ids[a])
        else:
            matches = [c for c in panel.columns if c[0] == a and c[1] not in NON_ASSET_FEATURES]
            if len(matches) != 1:
                raise ArgumentError(f"asset {a!r} does not identify a single panel column")
            out.append(matches[0])
    return out


def schedule(n_periods: int, window: int, step: int) -> list[int]:
    """Window end counts ``window, window + step, ...`` not exceeding ``n_periods``."""
    return list(range(window, n_periods + 1, step))


def _optimize_window(panel, keys, t, cfg) -> PortfolioSolution:
    lo = t - cfg.window
    names = [column_id(*k) for k in keys]
    included, excluded, rets = [], [], []
    for name, key in zip(names, keys):
        v, a = panel.get(*key)
        if a[lo:t].all():
            included.append(name)
            rets.append(log_returns(v[lo:t]))
        else:
            excluded.append(name)
    if not included:
        raise WindowError("no asset has complete data in this window")
    cfg.check_feasible(len(included))
    mu, cov = mean_and_cov(np.array(rets), cfg.ridge)
    res = solve_max_sharpe(mu, cov, cfg)
    return PortfolioSolution(
        window_end=panel.timestamps[t - 1],
        assets=included,
        weights=res.weights,
        objective=res.objective,
        mean_vector=mu,
        covariance=cov,
        excluded=excluded,
        window_start=panel.timestamps[lo],
        stationarity=res.stationarity,
    )


def decade_backtest(
    panel: TimeSeriesPanel, assets=None, cfg: OptimizerConfig | None = None, threads: int = 1
) -> BacktestResult:
    """Optimise weights on trailing windows of ``cfg.window`` prices every ``cfg.step`` periods.

    The window ending at count ``t`` covers price positions ``t - window .. t - 1``
    and yields ``window - 1`` log returns. Assets with any missing price in a
    window are excluded from it. Windows that cannot be optimised (no assets,
    infeasible bounds for the reduced asset count, bad prices) are recorded in
    ``failures`` and the run continues.
    """
    cfg = cfg or OptimizerConfig()
    keys = _resolve_assets(panel, assets)
    ends = schedule(len(panel), cfg.window, cfg.step)

    def run(t):
        try:
            return _optimize_window(panel, keys, t, cfg)
        except MacrostateError as exc:
            log.warning("window ending %s skipped: %s", panel.timestamps[t - 1], exc)
            return WindowFailure(panel.timestamps[t - 1], str(exc))

    if threads > 1 and len(ends) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, ends))
    else:
        results = [run(t) for t in ends]
    return BacktestResult(
        [r for r in results if isinstance(r, PortfolioSolution)],
        [r for r in results if isinstance(r, WindowFailure)],
        [column_id(*k) for k in keys],
    )


# --------------------------------------------------------------------------
# summaries


@dataclass(frozen=True)
class AssetAverage:
    asset: str
    mean_weight: float  # over windows where the asset was included
    n_included: int
    n_windows: int
    mean_all_windows: float  # exclusion counted as zero weight

    @property
    def excluded_any(self) -> bool:
        return self.n_included < self.n_windows


def _pairs(sol) -> list[tuple[str, float]]:
    if isinstance(sol, Mapping):
        return [(str(a), float(w)) for a, w in sol.items() if w is not None]
    return [(str(a), float(w)) for a, w in zip(sol.assets, sol.weights)]


def average_weights(solutions: Sequence) -> dict[str, AssetAverage]:
    """Per-asset average weight across windows.

    Accepts :class:`PortfolioSolution` objects or plain ``{asset: weight}``
    mappings (``None`` marks an excluded asset).
    """
    rows = [dict(_pairs(s)) for s in solutions]
    if not rows:
        raise InsufficientDataError("no solutions to average")
    order = list(dict.fromkeys(a for r in rows for a in r))
    n = len(rows)
    out = {}
    for a in order:
        ws = [r[a] for r in rows if a in r]
        out[a] = AssetAverage(a, float(np.mean(ws)), len(ws), n, float(sum(ws) / n))
    return out


def solutions_csv(solutions: Sequence[PortfolioSolution]) -> str:
    """Long format: one row per (window_end, asset)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["window_end", "asset", "weight", "objective"])
    for s in solutions:
        for a, x in zip(s.assets, s.weights):
            w.writerow([str(s.window_end), a, repr(float(x)), repr(float(s.objective))])
    return buf.getvalue()


def weights_table_csv(solutions: Sequence[PortfolioSolution], assets: Sequence[str]) -> str:
    """Wide format: one row per window, one column per asset (blank when excluded)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["window_end", "objective", *assets])
    for s in solutions:
        cells = [s.weight_of(a) for a in assets]
        w.writerow([str(s.window_end), repr(float(s.objective)), *("" if c is None else repr(c) for c in cells)])
    return buf.getvalue()


def averages_csv(avgs: Mapping[str, AssetAverage]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["asset", "mean_weight", "n_included", "n_windows", "mean_all_windows", "excluded_any"])
    for a in avgs.values():
        w.writerow([a.asset, repr(a.mean_weight), a.n_included, a.n_windows, repr(a.mean_all_windows),
                    str(a.excluded_any).lower()])
    return buf.getvalue()
