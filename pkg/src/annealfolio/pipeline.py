"""End-to-end portfolio construction strategies.

Two flows produce integer share counts under a budget:

- ``hybrid``: annealer-style binary selection picks which assets to hold,
  then the convex max-Sharpe allocator weights them and the weights are
  rounded to whole shares.
- ``fully_quantum``: share counts are optimized directly as encoded
  integers in the budgeted mean-variance model.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from datetime import date
from typing import Mapping, Sequence

import numpy as np

from .allocator import (
    AllocatorConfig,
    PortfolioMetrics,
    WeightVector,
    compute_metrics,
    derive_cardinality,
    max_sharpe_weights,
)
from .errors import InputError, SolverError
from .marketdata import AssetStats, PriceMatrix, compute_returns, estimate_stats
from .model import (
    LinearConstraint,
    QuboModel,
    build_mpt_model,
    build_mvo_qubo,
    default_selection_penalty,
    penalize_inequality,
    quadratic_symmetric,
    qubo_energies,
)
from .sampler import AnnealSchedule, best_feasible, simulated_anneal, state_to_array

log = logging.getLogger(__name__)

STRATEGIES = ("hybrid", "fully_quantum")

# Integer-share problems beyond this many encoding bits are refused; the
# annealer's hit rate and the exhaustive cross-checks degrade past it.
SHARE_BIT_CAP = 64

SLACK_GRANULARITY = 1.0  # one currency unit


@dataclass(frozen=True)
class PipelineConfig:
    budget: float
    seed: int
    strategy: str = "hybrid"
    cardinality: int | str = "auto"
    q: float = 1.0
    lambda_: float | str = "auto"
    sampler: AnnealSchedule = field(default_factory=AnnealSchedule)
    allocator: AllocatorConfig = field(default_factory=AllocatorConfig)
    returns_method: str = "simple"
    annualization_factor: float = 252.0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise InputError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if not self.budget > 0:
            raise InputError(f"budget must be positive, got {self.budget}")
        if not self.q > 0:
            raise InputError(f"q must be positive, got {self.q}")
        if isinstance(self.cardinality, str):
            if self.cardinality != "auto":
                raise InputError("cardinality must be a positive integer or 'auto'")
        elif self.cardinality < 1:
            raise InputError("cardinality must be a positive integer or 'auto'")
        if isinstance(self.lambda_, str):
            if self.lambda_ != "auto":
                raise InputError("lambda must be a positive number or 'auto'")
        elif not self.lambda_ > 0:
            raise InputError("lambda must be a positive number or 'auto'")
        if not isinstance(self.seed, int):
            raise InputError("seed must be an integer")

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "budget": self.budget,
            "cardinality": self.cardinality,
            "q": self.q,
            "lambda": self.lambda_,
            "seed": self.seed,
            "sampler": self.sampler.to_dict(),
            "allocator": {
                "risk_free_rate": self.allocator.risk_free_rate,
                "risk_aversion_q": self.allocator.risk_aversion_q,
                "kkt_tolerance": self.allocator.kkt_tolerance,
                "max_iterations": self.allocator.max_iterations,
                "zero_weight_threshold": self.allocator.zero_weight_threshold,
                "cardinality_mode": self.allocator.cardinality_mode,
            },
            "returns_method": self.returns_method,
            "annualization_factor": self.annualization_factor,
        }


@dataclass(frozen=True)
class Holdings:
    """Whole-share positions plus residual cash."""

    shares: dict[str, int]
    cash: float
    as_of: date | None = None

    def __post_init__(self):
        clean = {t: int(c) for t, c in self.shares.items()}
        if any(c < 0 for c in clean.values()):
            raise InputError("share counts must be nonnegative")
        object.__setattr__(self, "shares", clean)
        if self.cash < -1e-9:
            raise InputError(f"cash must be nonnegative, got {self.cash}")
        object.__setattr__(self, "cash", max(float(self.cash), 0.0))

    def held_tickers(self) -> tuple[str, ...]:
        return tuple(sorted(t for t, c in self.shares.items() if c > 0))

    def to_dict(self) -> dict:
        return {
            "shares": {t: self.shares[t] for t in sorted(self.shares)},
            "cash": self.cash,
            "as_of": self.as_of.isoformat() if self.as_of else None,
        }


def select_assets(
    stats: AssetStats,
    k: int,
    q: float,
    lam: float | str,
    schedule: AnnealSchedule,
    seed: int,
) -> tuple[str, ...]:
    """Pick exactly k tickers by sampling the selection QUBO.

    Falls back to doubling the penalty once, then to exhaustive search
    (n <= 24) if no sampled state hits the cardinality; raises SolverError
    only when even that fails.
    """
    n = stats.n
    if not 1 <= k <= n:
        raise InputError(f"cardinality k={k} must be in [1, {n}]")
    if k == n:
        return stats.tickers
    lam_val = default_selection_penalty(stats, q) if lam == "auto" else float(lam)
    card = LinearConstraint(np.ones(n), "eq", float(k))

    for attempt_lam in (lam_val, 2.0 * lam_val):
        m = build_mvo_qubo(stats, q, k, attempt_lam)
        s = simulated_anneal(m, schedule, seed)
        state = best_feasible(s, [card], tolerance=1e-6)
        if state is not None:
            return _state_tickers(state, stats)
    if n <= 24:
        m = build_mvo_qubo(stats, q, k, lam_val)
        state = _exhaustive_feasible_selection(m, k)
        if state is not None:
            return _state_tickers(state, stats)
    raise SolverError(f"no feasible selection of {k} assets found")


def _exhaustive_feasible_selection(m: QuboModel, k: int) -> str | None:
    """Lowest-energy state with exactly k ones, by chunked enumeration.

    Streams the 2^n states instead of materializing a full SampleSet, so
    the fallback stays cheap on memory all the way to the n = 24 cap.
    """
    chunk = 1 << 18
    size = 1 << m.n
    bit_cols = np.arange(m.n, dtype=np.uint32)
    best_energy, best_state = math.inf, None
    for lo in range(0, size, chunk):
        codes = np.arange(lo, min(lo + chunk, size), dtype=np.uint32)
        X = ((codes[:, None] >> bit_cols) & 1).astype(float)
        mask = X.sum(axis=1) == k
        if not mask.any():
            continue
        Xf = X[mask]
        energies = qubo_energies(m, Xf)
        i = int(np.argmin(energies))
        if energies[i] < best_energy:
            best_energy = float(energies[i])
            best_state = "".join("1" if v > 0.5 else "0" for v in Xf[i])
    return best_state


def _state_tickers(state: str, stats: AssetStats) -> tuple[str, ...]:
    return tuple(t for t, ch in zip(stats.tickers, state) if ch == "1")


def to_shares(
    weights: WeightVector,
    prices_at: Mapping[str, float],
    budget: float,
    as_of: date | None = None,
) -> Holdings:
    """Round target weights down to whole shares, then spend leftovers greedily.

    Each asset gets floor(w_i * budget / p_i) shares; remaining cash buys
    one extra share per asset in order of largest fractional remainder
    (ties by position in the weight vector) while affordable. Never
    overspends.
    """
    if budget < 0:
        raise InputError("budget must be nonnegative")
    shares: dict[str, int] = {}
    remainders: list[tuple[float, int, str, float]] = []
    spend = 0.0
    for pos, (t, w) in enumerate(zip(weights.tickers, weights.weights)):
        try:
            p = float(prices_at[t])
        except KeyError:
            raise InputError(f"no price available for {t!r}") from None
        if p <= 0:
            raise InputError(f"non-positive price for {t!r}")
        exact = w * budget / p
        count = int(math.floor(exact + 1e-9))
        shares[t] = count
        spend += count * p
        remainders.append((exact - count, pos, t, p))
    cash = budget - spend
    for _, _, t, p in sorted(remainders, key=lambda r: (-r[0], r[1])):
        if p <= cash:
            shares[t] += 1
            cash -= p
    return Holdings(shares, cash, as_of)


def portfolio_value(h: Holdings, prices_at: Mapping[str, float]) -> float:
    """Mark-to-market value: share counts times closes, plus cash."""
    total = h.cash
    for t, count in h.shares.items():
        if count == 0:
            continue
        if t not in prices_at:
            raise InputError(f"no price available for held ticker {t!r}")
        total += count * float(prices_at[t])
    return total


def realized_weights(h: Holdings, prices_at: Mapping[str, float], tickers: Sequence[str]) -> WeightVector:
    """Value fractions actually held after rounding, over the given tickers."""
    values = np.array([h.shares.get(t, 0) * float(prices_at[t]) for t in tickers])
    total = float(values.sum())
    if total <= 0:
        raise SolverError("no invested value: cannot form realized weights")
    return WeightVector(tuple(tickers), values / total)


def hybrid_optimize(
    prices: PriceMatrix,
    cfg: PipelineConfig,
    as_of: date | None = None,
) -> tuple[Holdings, WeightVector, PortfolioMetrics]:
    """Selection by annealing, weighting by max-Sharpe, purchase at the close.

    ``as_of`` defaults to the last date of the matrix. With
    ``cardinality='auto'`` the convex allocation over the full universe is
    solved first and its support size fixes k. Metrics are computed on the
    realized (post-rounding) weights.
    """
    if cfg.strategy != "hybrid":
        raise InputError("hybrid_optimize requires strategy='hybrid'")
    as_of = as_of or prices.dates[-1]
    returns = compute_returns(prices, cfg.returns_method)
    stats = estimate_stats(returns, cfg.annualization_factor)
    holdings, target, metrics, _ = _run_hybrid_stages(stats, prices.prices_at(as_of), cfg, as_of)
    return holdings, target, metrics


def _run_hybrid_stages(
    stats: AssetStats,
    prices_at: Mapping[str, float],
    cfg: PipelineConfig,
    as_of: date | None,
) -> tuple[Holdings, WeightVector, PortfolioMetrics, int]:
    if cfg.cardinality == "auto":
        _, y_full = max_sharpe_weights(stats, None, cfg.allocator)
        k = derive_cardinality(y_full, cfg.allocator)
    else:
        k = int(cfg.cardinality)
        if k > stats.n:
            raise InputError(f"cardinality {k} exceeds universe size {stats.n}")
    subset = select_assets(stats, k, cfg.q, cfg.lambda_, cfg.sampler, cfg.seed)
    subset_idx = [stats.tickers.index(t) for t in subset]
    target, _ = max_sharpe_weights(stats, subset_idx, cfg.allocator)
    holdings = to_shares(target, prices_at, cfg.budget, as_of)
    if not any(c > 0 for c in holdings.shares.values()):
        raise SolverError(
            f"budget {cfg.budget} too small to buy any share of the selected assets"
        )
    realized = realized_weights(holdings, prices_at, target.tickers)
    metrics = compute_metrics(realized, stats, cfg.allocator)
    return holdings, target, metrics, k


def _share_penalty(m: QuboModel, dollar_coeffs: np.ndarray) -> float:
    """Soft budget-penalty weight: beat the objective slope per violated dollar.

    Budget violations come in share-price quanta, so flipping bit t on from
    the feasible boundary costs at least lam * c_t^2 in penalty against at
    most its single-flip objective swing in gain; lam slightly above
    max(swing_t / c_t^2) makes every such move unprofitable while keeping
    the penalty ridges between feasible states low enough for the annealer
    to cross. Composite moves with small net violations slip through by
    design; infeasible samples are filtered out afterwards.
    """
    if m.n == 0:
        return 1.0
    coupling = np.abs(quadratic_symmetric(m)).sum(axis=1)
    swings = np.abs(m.linear) + coupling
    return float(np.max(swings / dollar_coeffs**2)) * 1.25 + 0.01


def _strict_share_penalty(m: QuboModel, granularity: float) -> float:
    """Fallback weight: one granularity step of violation beats any single flip."""
    if m.n == 0:
        return 1.0
    coupling = np.abs(quadratic_symmetric(m)).sum(axis=1)
    swing = float(np.max(np.abs(m.linear) + coupling))
    return (swing + 1.0) / (granularity * granularity)


def _dollar_objective(counts, prices, stats: AssetStats, q: float) -> float:
    y = np.asarray(prices) * np.asarray(counts, dtype=float)
    return q * float(y @ stats.sigma @ y) - float(stats.mu @ y)


def _polish_shares(counts, prices, stats, q, budget, uppers, max_rounds=300):
    """Best-improvement descent over single-share and swap moves.

    Cleans up annealer output the way hybrid solvers post-process: the
    slack penalty separates adjacent share vectors by ridges the sampler
    sometimes fails to cross, and these moves are exactly the crossings.
    Deterministic; never leaves the budget region.
    """
    counts = list(counts)
    n = len(counts)
    current = _dollar_objective(counts, prices, stats, q)
    moves = [((i, d),) for i in range(n) for d in (1, -1)]
    moves += [
        ((i, di), (j, dj))
        for i in range(n)
        for j in range(n)
        if i != j
        for di, dj in ((-1, 1), (-1, 2), (-2, 1))
    ]
    for _ in range(max_rounds):
        spend = float(np.dot(counts, prices))
        best = None
        for move in moves:
            delta_spend = 0.0
            ok = True
            for i, d in move:
                if not 0 <= counts[i] + d <= uppers[i]:
                    ok = False
                    break
                delta_spend += d * prices[i]
            if not ok or spend + delta_spend > budget + 1e-9:
                continue
            for i, d in move:
                counts[i] += d
            val = _dollar_objective(counts, prices, stats, q)
            for i, d in move:
                counts[i] -= d
            if val < current - 1e-12 and (best is None or val < best[0]):
                best = (val, move)
        if best is None:
            break
        current = best[0]
        for i, d in best[1]:
            counts[i] += d
    return counts


def optimize_integer_shares(
    prices_at: Mapping[str, float],
    stats: AssetStats,
    cfg: PipelineConfig,
    as_of: date | None = None,
) -> Holdings:
    """Optimize whole-share counts directly under the budget inequality.

    The integer model is encoded into binaries, the budget constraint is
    lowered into a slack penalty, and the annealer samples the result with
    4x the configured restarts (the slack penalty fragments the landscape
    into many basins, and restarts are prefix-stable, so extra ones only
    add coverage). Sampled states that truly satisfy the budget are
    re-ranked by the exact dollar objective, and the winner gets a greedy
    single-share polish before decoding into Holdings. If the soft penalty
    yields no feasible sample at all, one strict-penalty retry runs before
    giving up.
    """
    if cfg.strategy != "fully_quantum":
        raise InputError("optimize_integer_shares requires strategy='fully_quantum'")
    price_vec = []
    for t in stats.tickers:
        if t not in prices_at:
            raise InputError(f"no price available for {t!r}")
        price_vec.append(float(prices_at[t]))
    # cfg.q is budget-normalized (risk vs return on invested fractions); the
    # dollar-scale model coefficient is q / budget so both strategies share
    # one dimensionless risk knob.
    q_dollar = cfg.q / cfg.budget
    cm = build_mpt_model(stats, price_vec, cfg.budget, q_dollar)
    if cm.total_bits > SHARE_BIT_CAP:
        raise SolverError(
            f"integer-share model needs {cm.total_bits} encoded bits (cap {SHARE_BIT_CAP}); "
            "reduce the universe or the budget"
        )
    if cm.total_bits == 0:
        return Holdings({t: 0 for t in stats.tickers}, cfg.budget, as_of)

    budget_con = cm.constraints[0]
    if cfg.lambda_ == "auto":
        lam_attempts = [
            _share_penalty(cm.objective, budget_con.coeffs),
            _strict_share_penalty(cm.objective, SLACK_GRANULARITY),
        ]
    else:
        lam_attempts = [float(cfg.lambda_)]
    schedule = replace(cfg.sampler, restarts=4 * cfg.sampler.restarts)

    best_counts, best_obj = None, math.inf
    for lam in lam_attempts:
        penalized, _ = penalize_inequality(cm.objective, budget_con, lam, SLACK_GRANULARITY)
        s = simulated_anneal(penalized, schedule, cfg.seed)
        for rec in s.records:
            bits = state_to_array(rec.state)[: cm.objective.n]
            if float(budget_con.coeffs @ bits) > cfg.budget + 1e-6:
                continue
            counts = cm.decode_integers(bits)
            obj = _dollar_objective(counts, price_vec, stats, q_dollar)
            if obj < best_obj - 1e-12:
                best_obj, best_counts = obj, counts
        if best_counts is not None:
            break
    if best_counts is None:
        raise SolverError("no sampled state satisfies the budget")

    uppers = [enc.upper for enc in cm.encodings]
    counts = _polish_shares(best_counts, price_vec, stats, q_dollar, cfg.budget, uppers)
    shares = {t: int(c) for t, c in zip(stats.tickers, counts)}
    spend = sum(shares[t] * p for t, p in zip(stats.tickers, price_vec))
    return Holdings(shares, cfg.budget - spend, as_of)


def run_pipeline(
    prices: PriceMatrix,
    cfg: PipelineConfig,
    as_of: date | None = None,
) -> dict:
    """Run the configured strategy and assemble the result record.

    The returned dict is the machine-readable pipeline report: strategy,
    selected tickers, target and realized weights (identical for the
    integer-share strategy), share counts, residual cash, metrics, seed,
    and the cardinality mode in force.
    """
    as_of = as_of or prices.dates[-1]
    prices_at = prices.prices_at(as_of)
    returns = compute_returns(prices, cfg.returns_method)
    stats = estimate_stats(returns, cfg.annualization_factor)

    if cfg.strategy == "hybrid":
        holdings, target, metrics, k = _run_hybrid_stages(stats, prices_at, cfg, as_of)
        selected = target.tickers
        realized = realized_weights(holdings, prices_at, selected)
    else:
        holdings = optimize_integer_shares(prices_at, stats, cfg, as_of)
        selected = holdings.held_tickers()
        if not selected:
            raise SolverError(
                "integer-share optimum holds only cash at this risk aversion; lower q"
            )
        realized = realized_weights(holdings, prices_at, selected)
        target = realized
        metrics = compute_metrics(realized, stats, cfg.allocator)
        k = len(selected)

    return {
        "strategy": cfg.strategy,
        "selected": list(selected),
        "weights_target": target.as_dict(),
        "weights_realized": realized.as_dict(),
        "shares": {t: holdings.shares[t] for t in sorted(holdings.shares)},
        "cash": holdings.cash,
        "metrics": metrics.to_dict(realized),
        "seed": cfg.seed,
        "cardinality_mode": cfg.allocator.cardinality_mode,
        "cardinality": k,
        "as_of": as_of.isoformat(),
    }
