"""Quarterly rebalancing backtester.

The strategy portfolio is bought at the start date, marked to market
daily, and reviewed every ``period_months``: held names with weak trailing
returns or elevated volatility are sold at the close, and the proceeds
(pooled with residual cash) are reinvested in same-sector replacements
chosen by the configured pipeline strategy. A buy-and-hold benchmark runs
alongside for comparison.

Estimation windows: every decision uses only price data up to its own
date: the initial purchase estimates from history up to the start date,
and each rebalance from history up to its event date. When the backtest
starts at the very first price date (no prior history exists), the
initial purchase falls back to estimating over the full provided series,
which reproduces the usual single-period experiment design.
"""

from __future__ import annotations

import calendar
import logging
from dataclasses import dataclass, replace
from datetime import date
from typing import Callable, Mapping, Sequence

import numpy as np

from .allocator import WeightVector, max_sharpe_weights
from .errors import InputError, SolverError
from .marketdata import (
    AssetStats,
    PriceMatrix,
    ReturnsMatrix,
    SectorMap,
    compute_returns,
    estimate_stats,
)
from .pipeline import (
    Holdings,
    PipelineConfig,
    _run_hybrid_stages,
    optimize_integer_shares,
    portfolio_value,
    select_assets,
    to_shares,
)

log = logging.getLogger(__name__)

StatsProvider = Callable[[Sequence[str]], AssetStats]


@dataclass(frozen=True)
class RebalancePolicy:
    """Review cadence and the rules that flag a holding as risky.

    A held name is flagged when its trailing mean daily return is at or
    below ``risk_return_threshold``, or when its trailing volatility lies
    strictly above the ``risk_vol_quantile`` quantile of the held names'
    volatilities (strict, so a quantile of 1.0 disables the volatility
    rule and exact ties never flag).
    """

    period_months: int = 3
    risk_return_threshold: float = 0.0
    risk_vol_quantile: float = 0.8
    lookback_days: int = 63
    min_candidates_per_sector: int = 1

    def __post_init__(self):
        if self.period_months < 1:
            raise InputError("period_months must be positive")
        if not 0 < self.risk_vol_quantile <= 1:
            raise InputError("risk_vol_quantile must lie in (0, 1]")
        if self.lookback_days < 2:
            raise InputError("lookback_days must be at least 2")
        if self.min_candidates_per_sector < 0:
            raise InputError("min_candidates_per_sector must be nonnegative")

    def to_dict(self) -> dict:
        return {
            "period_months": self.period_months,
            "risk_return_threshold": self.risk_return_threshold,
            "risk_vol_quantile": self.risk_vol_quantile,
            "lookback_days": self.lookback_days,
            "min_candidates_per_sector": self.min_candidates_per_sector,
        }


@dataclass(frozen=True)
class RebalanceEvent:
    """One review: what was sold, what was bought, and with what budget.

    ``new_budget`` pools sale proceeds with the cash held before the event;
    ``cash_after`` is what remains once the purchases settle, so
    proceeds + prior cash = cost + cash_after at every event.
    """

    date: date
    sold: dict[str, tuple[int, float]]
    bought: dict[str, tuple[int, float]]
    new_budget: float
    universe_used: tuple[str, ...]
    cash_after: float = 0.0
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "date": self.date.isoformat(),
            "sold": {t: {"shares": s, "proceeds": p} for t, (s, p) in sorted(self.sold.items())},
            "bought": {t: {"shares": s, "cost": c} for t, (s, c) in sorted(self.bought.items())},
            "new_budget": self.new_budget,
            "universe_used": list(self.universe_used),
            "cash_after": self.cash_after,
            "note": self.note,
        }


@dataclass(frozen=True)
class HealthReport:
    """Per-asset trailing statistics plus portfolio-level state at a review."""

    as_of: date
    asset_stats: dict[str, tuple[float, float]]  # ticker -> (mean daily return, daily vol)
    flagged: tuple[str, ...]
    value: float
    profit: float | None


@dataclass(frozen=True)
class BacktestReport:
    dates: tuple[date, ...]
    algo_values: tuple[float, ...]
    bench_values: tuple[float, ...]
    events: tuple[RebalanceEvent, ...]
    final_algo: float
    final_bench: float
    config_echo: dict
    initial_holdings: dict | None = None

    def to_dict(self) -> dict:
        return {
            "dates": [d.isoformat() for d in self.dates],
            "algo": list(self.algo_values),
            "bench": list(self.bench_values),
            "events": [e.to_dict() for e in self.events],
            "final": {"algo": self.final_algo, "bench": self.final_bench},
            "initial": self.initial_holdings,
            "config": self.config_echo,
        }

    def to_plot_csv(self) -> str:
        lines = ["date,algo_value,bench_value"]
        for d, a, b in zip(self.dates, self.algo_values, self.bench_values):
            lines.append(f"{d.isoformat()},{a!r},{b!r}")
        return "\n".join(lines) + "\n"


def add_months(d: date, months: int) -> date:
    """Calendar-month shift, clamping the day into the target month."""
    total = d.month - 1 + months
    year = d.year + total // 12
    month = total % 12 + 1
    day = min(d.day, calendar.monthrange(year, month)[1])
    return date(year, month, day)


def _trailing_window(returns: ReturnsMatrix, as_of: date, lookback: int) -> np.ndarray:
    rows = [i for i, d in enumerate(returns.dates) if d <= as_of]
    if len(rows) < lookback:
        raise InputError(
            f"insufficient history: need {lookback} daily returns up to {as_of}, have {len(rows)}"
        )
    return returns.values[rows[-lookback:]]


def identify_risky(
    returns: ReturnsMatrix,
    holdings: Holdings,
    policy: RebalancePolicy,
    as_of: date,
) -> set[str]:
    """Held tickers whose trailing return or volatility trips the policy."""
    held = holdings.held_tickers()
    if not held:
        return set()
    window = _trailing_window(returns, as_of, policy.lookback_days)
    cols = []
    for t in held:
        if t not in returns.tickers:
            raise InputError(f"no return history for held ticker {t!r}")
        cols.append(returns.tickers.index(t))
    data = window[:, cols]
    means = data.mean(axis=0)
    vols = data.std(axis=0, ddof=1)
    vol_cut = float(np.quantile(vols, policy.risk_vol_quantile))
    flagged = {
        t
        for t, mu, vol in zip(held, means, vols)
        if mu <= policy.risk_return_threshold or vol > vol_cut
    }
    return flagged


def health_check(
    holdings: Holdings,
    prices: PriceMatrix,
    returns: ReturnsMatrix,
    policy: RebalancePolicy,
    as_of: date,
    initial_value: float | None = None,
) -> HealthReport:
    """Trailing mean/vol per held asset, the flagged set, value, and profit."""
    held = holdings.held_tickers()
    stats: dict[str, tuple[float, float]] = {}
    if held:
        window = _trailing_window(returns, as_of, policy.lookback_days)
        for t in held:
            col = window[:, returns.tickers.index(t)]
            stats[t] = (float(col.mean()), float(col.std(ddof=1)))
    flagged = tuple(sorted(identify_risky(returns, holdings, policy, as_of)))
    value = portfolio_value(holdings, prices.prices_at(as_of))
    profit = None if initial_value is None else value - initial_value
    return HealthReport(as_of, stats, flagged, value, profit)


def _candidate_universe(
    flagged: Sequence[str],
    held: Sequence[str],
    universe: Sequence[str],
    sectors: SectorMap,
    min_per_sector: int,
) -> tuple[tuple[str, ...], bool]:
    """Same-sector replacements first; widen to the full universe if too thin.

    Too thin means fewer candidates than names to replace, or any sold
    sector contributing fewer than ``min_per_sector`` candidates.
    """
    sold_sectors = {sectors.sector_of(t) for t in flagged}
    excluded = set(flagged) | set(held)
    in_sector = tuple(
        t for t in sorted(universe) if t not in excluded and sectors.sector_of(t) in sold_sectors
    )
    per_sector_ok = all(
        sum(1 for t in in_sector if sectors.sector_of(t) == s) >= min_per_sector
        for s in sold_sectors
    )
    if len(in_sector) >= len(flagged) and per_sector_ok:
        return in_sector, False
    widened = tuple(t for t in sorted(universe) if t not in excluded)
    return widened, True


def rebalance_step(
    holdings: Holdings,
    flagged: set[str] | Sequence[str],
    prices_at: Mapping[str, float],
    sectors: SectorMap,
    stats_provider: StatsProvider,
    cfg: PipelineConfig,
    policy: RebalancePolicy,
    as_of: date,
) -> tuple[Holdings, RebalanceEvent]:
    """Sell every flagged holding and redeploy the proceeds.

    Proceeds pool with residual cash to form the new budget. Replacement
    candidates come from the sold names' sectors, excluding sold and
    currently held tickers; if that universe cannot supply N = |flagged|
    names it widens to all sectors, and if still too thin the step holds
    cash and records a degenerate event. Repurchase failures inside the
    optimizer likewise degrade to holding cash rather than aborting.
    """
    flagged = sorted(set(flagged))
    held = holdings.held_tickers()
    if any(t not in held for t in flagged):
        raise InputError("flagged tickers must be currently held")
    if not flagged:
        event = RebalanceEvent(
            as_of, {}, {}, holdings.cash, (), holdings.cash, "no holdings flagged"
        )
        return holdings, event

    sold: dict[str, tuple[int, float]] = {}
    proceeds = 0.0
    retained = dict(holdings.shares)
    for t in flagged:
        count = retained.pop(t)
        if t not in prices_at:
            raise InputError(f"no price available for {t!r} on {as_of}")
        amount = count * float(prices_at[t])
        sold[t] = (count, amount)
        proceeds += amount
    new_budget = proceeds + holdings.cash

    n_replace = len(flagged)
    remaining_held = tuple(sorted(retained))
    universe = tuple(sorted(prices_at.keys()))
    candidates, widened = _candidate_universe(
        flagged, remaining_held, universe, sectors, policy.min_candidates_per_sector
    )
    note = "widened to all sectors" if widened else ""

    if len(candidates) < n_replace:
        note = (note + "; " if note else "") + "degenerate: not enough candidates, holding cash"
        event = RebalanceEvent(as_of, sold, {}, new_budget, candidates, new_budget, note)
        return Holdings(retained, new_budget, as_of), event

    try:
        bought_holdings = _repurchase(candidates, n_replace, new_budget, prices_at, stats_provider, cfg)
    except SolverError as exc:
        note = (note + "; " if note else "") + f"degenerate: repurchase failed ({exc}), holding cash"
        log.warning("rebalance on %s could not repurchase: %s", as_of, exc)
        event = RebalanceEvent(as_of, sold, {}, new_budget, candidates, new_budget, note)
        return Holdings(retained, new_budget, as_of), event

    bought: dict[str, tuple[int, float]] = {}
    for t, count in bought_holdings.shares.items():
        if count > 0:
            bought[t] = (count, count * float(prices_at[t]))
            retained[t] = retained.get(t, 0) + count
    new_holdings = Holdings(retained, bought_holdings.cash, as_of)
    event = RebalanceEvent(as_of, sold, bought, new_budget, candidates, new_holdings.cash, note)
    return new_holdings, event


def _repurchase(
    candidates: Sequence[str],
    n_replace: int,
    budget: float,
    prices_at: Mapping[str, float],
    stats_provider: StatsProvider,
    cfg: PipelineConfig,
) -> Holdings:
    stats = stats_provider(candidates)
    subset = select_assets(stats, n_replace, cfg.q, cfg.lambda_, cfg.sampler, cfg.seed)
    if cfg.strategy == "fully_quantum":
        sub_stats = stats.subset([stats.tickers.index(t) for t in subset])
        share_cfg = replace(cfg, budget=budget)
        return optimize_integer_shares(prices_at, sub_stats, share_cfg)
    weights, _ = max_sharpe_weights(stats, [stats.tickers.index(t) for t in subset], cfg.allocator)
    return to_shares(weights, prices_at, budget)


def _initial_portfolio(
    prices: PriceMatrix,
    cfg: PipelineConfig,
    start: date,
) -> Holdings:
    """Buy the opening portfolio at the start date's closes.

    Statistics come from the history up to the start date; with fewer than
    three price rows available there (a backtest starting at the first
    date), the full series is used instead.
    """
    history = prices.window(end=start)
    if len(history.dates) < 3:
        log.info("no pre-start history; initial estimates use the full series")
        history = prices
    returns = compute_returns(history, cfg.returns_method)
    stats = estimate_stats(returns, cfg.annualization_factor)
    prices_at = prices.prices_at(start)
    if cfg.strategy == "fully_quantum":
        return optimize_integer_shares(prices_at, stats, cfg, start)
    holdings, _, _, _ = _run_hybrid_stages(stats, prices_at, cfg, start)
    return holdings


def run_backtest(
    prices: PriceMatrix,
    sectors: SectorMap,
    initial_budget: float,
    cfg: PipelineConfig,
    policy: RebalancePolicy,
    benchmark: WeightVector | str,
    start: date | None = None,
    end: date | None = None,
) -> BacktestReport:
    """Daily-valued backtest with periodic reviews against a buy-and-hold benchmark.

    Review boundaries fall at start + k * period_months, rolled forward to
    the next trading date; boundaries past the end of the range stop the
    rebalancing but valuation continues. Every boundary inside the range
    produces exactly one event (possibly a no-op). Event k derives its
    sampler seed as cfg.seed + k so rebalances are reproducible.
    """
    if not initial_budget > 0:
        raise InputError("initial budget must be positive")
    first, last = prices.dates[0], prices.dates[-1]
    start = prices.first_date_on_or_after(start or first)
    if start is None:
        raise InputError("start date is past the end of the data")
    end = end if end is not None else last
    if end < start:
        raise InputError("end date precedes start date")
    trading = [d for d in prices.dates if start <= d <= end]
    if not trading:
        raise InputError("no trading dates in the requested range")

    if isinstance(benchmark, str):
        if benchmark not in prices.tickers:
            raise InputError(f"benchmark ticker {benchmark!r} not in the price data")
        benchmark = WeightVector((benchmark,), np.array([1.0]))
    bench_holdings = to_shares(benchmark, prices.prices_at(start), initial_budget, start)

    buy_cfg = replace(cfg, budget=initial_budget)
    holdings = _initial_portfolio(prices, buy_cfg, start)
    initial_holdings = holdings.to_dict()

    boundaries: list[date] = []
    k = 1
    while True:
        target = add_months(start, k * policy.period_months)
        mapped = prices.first_date_on_or_after(target)
        if mapped is None or mapped > end:
            break
        boundaries.append(mapped)
        k += 1
    if not boundaries:
        log.warning(
            "no rebalance boundary falls inside the data range "
            "(period %d months, span %s..%s)",
            policy.period_months,
            start,
            end,
        )

    returns_all = compute_returns(prices, cfg.returns_method)

    def make_provider(as_of: date) -> StatsProvider:
        def provider(tickers: Sequence[str]) -> AssetStats:
            window = prices.restrict(tickers).window(end=as_of)
            rets = compute_returns(window, cfg.returns_method)
            return estimate_stats(rets, cfg.annualization_factor)

        return provider

    events: list[RebalanceEvent] = []
    algo_values: list[float] = []
    bench_values: list[float] = []
    boundary_set = set(boundaries)
    for d in trading:
        if d in boundary_set:
            event_seed = cfg.seed + len(events) + 1
            event_cfg = replace(cfg, seed=event_seed)
            report = health_check(holdings, prices, returns_all, policy, d, initial_budget)
            holdings, event = rebalance_step(
                holdings,
                set(report.flagged),
                prices.prices_at(d),
                sectors,
                make_provider(d),
                event_cfg,
                policy,
                d,
            )
            events.append(event)
        algo_values.append(portfolio_value(holdings, prices.prices_at(d)))
        bench_values.append(portfolio_value(bench_holdings, prices.prices_at(d)))

    config_echo = {
        "pipeline": cfg.to_dict(),
        "policy": policy.to_dict(),
        "initial_budget": initial_budget,
        "benchmark": benchmark.as_dict(),
        "start": start.isoformat(),
        "end": end.isoformat(),
        "seed": cfg.seed,
    }
    return BacktestReport(
        tuple(trading),
        tuple(algo_values),
        tuple(bench_values),
        tuple(events),
        algo_values[-1],
        bench_values[-1],
        config_echo,
        initial_holdings,
    )
