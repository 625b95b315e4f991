"""Rolling-window backtester and performance metrics.

Each window pair (estimation, holding) refits every strategy on the
estimation periods and then lets the resulting weights drift buy-and-hold
through the holding periods: after a period with asset returns ``r`` the
weights become ``w * (1 + r) / (1 + w @ r)``.  Wealth starts at one and
compounds exactly as ``W <- W * (1 + w @ r)``.

The benchmark is the cross-sectional average return (an equally weighted
index rebalanced every period) over the same holding periods.

A wealth-reactive investor (see :mod:`drpfolio.dynamics`) retunes the
robust allocator's loss aversion and reference point at every rebalance
from the wealth ratio across the previous window; the applied values are
recorded in an audit trail.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import clone

from .data import ScenarioSet, WindowPlan, rolling_windows
from .dynamics import InvestorState, InvestorType, update_aversion
from .estimators import DistributionallyRobust
from .exceptions import (
    DimensionMismatchError,
    NonpositiveWealthError,
    ReturnTooLowError,
    ValidationError,
    ZeroBetaError,
    ZeroTrackingVarianceError,
    ZeroVarianceBenchmarkError,
    ZeroVariancePathError,
)

__all__ = [
    "WealthPath",
    "MetricsReport",
    "BacktestResult",
    "run_backtest",
    "annualized_return",
    "annualized_std",
    "sharpe_ratio",
    "max_drawdown",
    "beta",
    "jensen_alpha",
    "treynor_ratio",
    "information_ratio",
    "compute_metrics",
    "metrics_table",
]

BENCHMARK_NAME = "benchmark"


@dataclass(frozen=True, eq=False)
class WealthPath:
    """Wealth trajectory: ``wealth[0] == 1`` and one return per period."""

    period_ids: tuple
    returns: np.ndarray
    wealth: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.returns, dtype=np.float64)
        w = np.asarray(self.wealth, dtype=np.float64)
        if w.shape != (r.shape[0] + 1,):
            raise DimensionMismatchError(
                "wealth must have one more entry than returns"
            )
        if len(self.period_ids) != r.shape[0]:
            raise DimensionMismatchError("one period id per return")
        if w[0] != 1.0:
            raise ValidationError("wealth paths are normalized to start at 1")
        if w.min() <= 0.0:
            raise NonpositiveWealthError("wealth must stay positive")

    @property
    def n_periods(self) -> int:
        return self.returns.shape[0]

    @classmethod
    def from_returns(cls, period_ids, returns) -> "WealthPath":
        r = np.asarray(returns, dtype=np.float64)
        w = np.empty(r.shape[0] + 1)
        w[0] = 1.0
        for t, rt in enumerate(r):
            w[t + 1] = w[t] * (1.0 + rt)
        return cls(tuple(period_ids), r, w)


@dataclass(frozen=True)
class MetricsReport:
    annualized_return: float
    annualized_std: float
    sharpe: float
    max_drawdown: float
    beta: float
    alpha: float
    treynor: float
    information_ratio: float


@dataclass(frozen=True, eq=False)
class BacktestResult:
    """Per-strategy wealth paths plus the dynamics audit trail.

    ``paths`` maps strategy names (insertion order preserved, benchmark
    last) to WealthPath objects.  ``audit`` lists one record per rebalance
    at which a wealth-reactive update was applied.
    """

    paths: dict
    audit: tuple
    plan: WindowPlan


def _drift_window(weights: np.ndarray, holding: np.ndarray):
    """Buy-and-hold returns of ``weights`` across the holding matrix."""
    w = weights.copy()
    out = np.empty(holding.shape[0])
    for t, row in enumerate(holding):
        rp = float(w @ row)
        out[t] = rp
        growth = 1.0 + rp
        if growth <= 0.0:
            raise NonpositiveWealthError(
                "portfolio lost 100% within a holding period"
            )
        w = w * (1.0 + row) / growth
    return out


def run_backtest(scenarios: ScenarioSet, plan: WindowPlan, strategies,
                 investor_type=None, reference_mode: str = "constant",
                 ) -> BacktestResult:
    """Walk the windows, refit each strategy, and compound wealth.

    Parameters
    ----------
    strategies : mapping of name -> allocator estimator
        Estimators are cloned, so callers' instances are never mutated.
    investor_type : InvestorType or str, optional
        When set (and not constant), robust allocators are retuned at
        every rebalance from realized wealth.
    reference_mode : {"constant", "index"}
        With ``"index"``, a robust allocator's base reference point is
        replaced each window by the benchmark's mean estimation-window
        return (wealth dynamics then scale that base).
    """
    if np.any(scenarios.returns <= -1.0):
        raise ReturnTooLowError(
            "a per-period return at or below -100% makes wealth vanish"
        )
    if reference_mode not in ("constant", "index"):
        raise ValidationError("reference_mode must be 'constant' or 'index'")
    investor = None
    if investor_type is not None:
        investor = InvestorType(investor_type)
        if investor is InvestorType.CONSTANT:
            investor = None

    if not hasattr(strategies, "items"):
        strategies = dict(strategies)
    windows = rolling_windows(scenarios, plan)
    paths = {}
    audit = []
    for name, proto in strategies.items():
        allocator = clone(proto)
        robust = isinstance(allocator, DistributionallyRobust)
        base_lam = getattr(allocator, "loss_aversion", None)
        base_ref = getattr(allocator, "reference_point", None)
        wealth = 1.0
        wealth_prev_rebalance = None
        rets = []
        pids = []
        for w_idx, (est, hold) in enumerate(windows):
            if robust:
                ref_base = base_ref
                if reference_mode == "index":
                    ref_base = float(est.returns.mean(axis=1).mean())
                lam_t, ref_t = base_lam, ref_base
                if investor is not None and w_idx >= 1:
                    state = InvestorState(
                        investor_type=investor,
                        base_loss_aversion=base_lam,
                        base_reference=ref_base,
                        wealth_prev=wealth_prev_rebalance,
                        wealth_now=wealth,
                    )
                    lam_t, ref_t = update_aversion(state)
                if investor is not None or reference_mode == "index":
                    audit.append({
                        "strategy": name,
                        "window": w_idx,
                        "wealth_prev": wealth_prev_rebalance,
                        "wealth_now": wealth,
                        "loss_aversion": lam_t,
                        "reference_point": ref_t,
                    })
                allocator.set_params(loss_aversion=lam_t,
                                     reference_point=ref_t)
            wealth_prev_rebalance = wealth
            allocator.fit(est.returns)
            window_returns = _drift_window(allocator.weights_, hold.returns)
            for rt in window_returns:
                wealth *= 1.0 + rt
            rets.extend(window_returns)
            pids.extend(hold.period_ids)
        paths[name] = WealthPath.from_returns(pids, np.asarray(rets))

    bench_rets = []
    bench_pids = []
    for est, hold in windows:
        bench_rets.extend(hold.returns.mean(axis=1))
        bench_pids.extend(hold.period_ids)
    paths[BENCHMARK_NAME] = WealthPath.from_returns(
        bench_pids, np.asarray(bench_rets))
    return BacktestResult(paths=paths, audit=tuple(audit), plan=plan)


# ---------------------------------------------------------------------------
# metrics


def annualized_return(path: WealthPath, periods_per_year: float) -> float:
    """Geometric annualization: ``W_T ** (ppy / T) - 1``."""
    t = path.n_periods
    if t < 1:
        raise ValidationError("need at least one period")
    return float(path.wealth[-1]) ** (periods_per_year / t) - 1.0


def annualized_std(path: WealthPath, periods_per_year: float) -> float:
    """Sample (ddof=1) per-period volatility scaled by sqrt(ppy)."""
    if path.n_periods < 2:
        raise ValidationError("volatility needs at least two periods")
    return float(np.std(path.returns, ddof=1)) * float(
        np.sqrt(periods_per_year))


def sharpe_ratio(path: WealthPath, rf: float,
                 periods_per_year: float) -> float:
    vol = annualized_std(path, periods_per_year)
    if vol == 0.0:
        raise ZeroVariancePathError("sharpe undefined for a constant path")
    return (annualized_return(path, periods_per_year) - rf) / vol


def max_drawdown(path: WealthPath) -> float:
    """Largest peak-to-trough decline ``max (1 - W_u / W_t)`` over u >= t."""
    peaks = np.maximum.accumulate(path.wealth)
    return float(np.max(1.0 - path.wealth / peaks))


def _aligned(path: WealthPath, benchmark: WealthPath):
    if path.n_periods != benchmark.n_periods:
        raise DimensionMismatchError(
            "path and benchmark cover different period counts"
        )
    return path.returns, benchmark.returns


def beta(path: WealthPath, benchmark: WealthPath) -> float:
    """Slope of per-period returns on the benchmark (ddof=1 moments)."""
    rp, rb = _aligned(path, benchmark)
    if rp.shape[0] < 2:
        raise ValidationError("beta needs at least two periods")
    rp_c = rp - rp.mean()
    rb_c = rb - rb.mean()
    var_b = float(rb_c @ rb_c) / (rb.shape[0] - 1)
    if var_b == 0.0:
        raise ZeroVarianceBenchmarkError(
            "beta undefined against a constant benchmark"
        )
    cov = float(rp_c @ rb_c) / (rb.shape[0] - 1)
    return cov / var_b


def jensen_alpha(path: WealthPath, benchmark: WealthPath, rf: float,
                 periods_per_year: float) -> float:
    """Annualized excess over the beta-scaled benchmark (CAPM residual)."""
    b = beta(path, benchmark)
    rp = annualized_return(path, periods_per_year)
    rb = annualized_return(benchmark, periods_per_year)
    return rp - (rf + b * (rb - rf))


def treynor_ratio(path: WealthPath, benchmark: WealthPath, rf: float,
                  periods_per_year: float) -> float:
    b = beta(path, benchmark)
    if b == 0.0:
        raise ZeroBetaError("treynor undefined at beta zero")
    return (annualized_return(path, periods_per_year) - rf) / b


def information_ratio(path: WealthPath, benchmark: WealthPath,
                      periods_per_year: float) -> float:
    """Annualized arithmetic mean of active returns over tracking error."""
    rp, rb = _aligned(path, benchmark)
    if rp.shape[0] < 2:
        raise ValidationError("information ratio needs two periods")
    active = rp - rb
    tracking = float(np.std(active, ddof=1)) * float(
        np.sqrt(periods_per_year))
    if tracking == 0.0:
        raise ZeroTrackingVarianceError(
            "information ratio undefined at zero tracking variance"
        )
    return float(active.mean()) * periods_per_year / tracking


def compute_metrics(path: WealthPath, benchmark: WealthPath, rf: float = 0.0,
                    periods_per_year: float = 12.0) -> MetricsReport:
    """All metrics, strict: degenerate inputs raise their specific errors."""
    return MetricsReport(
        annualized_return=annualized_return(path, periods_per_year),
        annualized_std=annualized_std(path, periods_per_year),
        sharpe=sharpe_ratio(path, rf, periods_per_year),
        max_drawdown=max_drawdown(path),
        beta=beta(path, benchmark),
        alpha=jensen_alpha(path, benchmark, rf, periods_per_year),
        treynor=treynor_ratio(path, benchmark, rf, periods_per_year),
        information_ratio=information_ratio(path, benchmark,
                                            periods_per_year),
    )


def metrics_table(paths, rf: float = 0.0, periods_per_year: float = 12.0,
                  benchmark_name: str = BENCHMARK_NAME):
    """Rows = metric names, columns = strategies (benchmark included).

    Metrics that are undefined for a column (for instance the benchmark's
    information ratio against itself) come back as ``None`` instead of
    raising, so a full comparison table can always be rendered.
    """
    if benchmark_name not in paths:
        raise ValidationError(f"paths must include '{benchmark_name}'")
    bench = paths[benchmark_name]
    calcs = {
        "annualized_return": lambda p: annualized_return(p, periods_per_year),
        "annualized_std": lambda p: annualized_std(p, periods_per_year),
        "sharpe": lambda p: sharpe_ratio(p, rf, periods_per_year),
        "max_drawdown": max_drawdown,
        "beta": lambda p: beta(p, bench),
        "alpha": lambda p: jensen_alpha(p, bench, rf, periods_per_year),
        "treynor": lambda p: treynor_ratio(p, bench, rf, periods_per_year),
        "information_ratio": lambda p: information_ratio(
            p, bench, periods_per_year),
    }
    table = {}
    for metric, fn in calcs.items():
        row = {}
        for name, path in paths.items():
            try:
                row[name] = fn(path)
            except (ZeroVariancePathError, ZeroVarianceBenchmarkError,
                    ZeroBetaError, ValidationError):
                row[name] = None
        table[metric] = row
    return table
