import itertools
from datetime import date

import numpy as np
import pytest

from annealfolio.allocator import WeightVector
from annealfolio.errors import InputError, SolverError
from annealfolio.marketdata import AssetStats
from annealfolio.model import build_mvo_qubo, qubo_energy
from annealfolio.pipeline import (
    Holdings,
    PipelineConfig,
    hybrid_optimize,
    optimize_integer_shares,
    portfolio_value,
    run_pipeline,
    select_assets,
    to_shares,
)
from annealfolio.sampler import AnnealSchedule

from conftest import grw_matrix

FAST = AnnealSchedule(sweeps=300, restarts=8)


def make_stats(mu, sigma, tickers=None):
    mu = np.asarray(mu, dtype=float)
    tickers = tuple(tickers or (f"T{i}" for i in range(len(mu))))
    return AssetStats(tickers, mu, np.asarray(sigma, dtype=float), "daily", 1.0)


def cfg_for(budget, strategy="hybrid", seed=7, **kw):
    return PipelineConfig(budget=budget, seed=seed, strategy=strategy, sampler=FAST, **kw)


class TestSelectAssets:
    def test_zero_covariance_picks_top_returns(self):
        stats = make_stats([0.1, 0.2, 0.3], np.zeros((3, 3)))
        picked = select_assets(stats, 2, 1.0, "auto", FAST, seed=1)
        assert picked == ("T1", "T2")

    def test_full_universe_shortcut(self):
        stats = make_stats([0.1, 0.2], np.diag([1.0, 1.0]))
        assert select_assets(stats, 2, 1.0, "auto", FAST, seed=1) == ("T0", "T1")

    def test_matches_exhaustive_feasible_optimum(self):
        # default schedule, annualized-scale statistics
        rng = np.random.default_rng(12)
        hits = 0
        for trial in range(10):
            n = 12
            A = rng.normal(0, 0.15, (n, n))
            stats = make_stats(rng.uniform(0.0, 0.5, n), A @ A.T)
            k = int(rng.integers(2, 6))
            picked = select_assets(stats, k, 1.0, "auto", AnnealSchedule(), seed=trial)
            assert len(picked) == k
            m = build_mvo_qubo(stats, 1.0, k)
            x = np.array([1.0 if t in picked else 0.0 for t in stats.tickers])
            feas = [
                s
                for s in itertools.product((0, 1), repeat=n)
                if sum(s) == k
            ]
            best = min(qubo_energy(m, np.array(s, dtype=float)) for s in feas)
            if qubo_energy(m, x) <= best + 1e-9:
                hits += 1
        assert hits >= 9

    def test_cardinality_out_of_range(self):
        stats = make_stats([0.1], [[0.0]])
        with pytest.raises(InputError):
            select_assets(stats, 2, 1.0, "auto", FAST, seed=1)

    def test_exhaustive_fallback_rescues_weak_penalty(self):
        # an explicit tiny penalty makes every sampled state infeasible
        # (all-ones dominates), so selection must fall back to enumeration
        stats = make_stats([10.0, 10.0, 10.0], np.zeros((3, 3)))
        weak = AnnealSchedule(sweeps=50, restarts=2)
        picked = select_assets(stats, 1, 1.0, 0.001, weak, seed=3)
        assert len(picked) == 1


class TestToShares:
    def test_single_asset_floor(self):
        w = WeightVector(("A",), np.array([1.0]))
        h = to_shares(w, {"A": 30.0}, 100.0)
        assert h.shares == {"A": 3}
        assert h.cash == pytest.approx(10.0)

    def test_remainder_pass_ticker_order(self):
        w = WeightVector(("A", "B"), np.array([0.5, 0.5]))
        h = to_shares(w, {"A": 30.0, "B": 30.0}, 100.0)
        assert h.shares == {"A": 2, "B": 1}
        assert h.cash == pytest.approx(10.0)

    def test_zero_budget(self):
        w = WeightVector(("A",), np.array([1.0]))
        h = to_shares(w, {"A": 30.0}, 0.0)
        assert h.shares == {"A": 0}
        assert h.cash == 0.0

    def test_exact_divisibility(self):
        w = WeightVector(("A", "B"), np.array([2 / 3, 1 / 3]))
        h = to_shares(w, {"A": 10.0, "B": 10.0}, 3000.0)
        assert h.shares == {"A": 200, "B": 100}
        assert h.cash == pytest.approx(0.0, abs=1e-9)

    def test_never_overspends(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            n = int(rng.integers(1, 6))
            raw = rng.dirichlet(np.ones(n))
            w = WeightVector(tuple(f"T{i}" for i in range(n)), raw)
            prices = {f"T{i}": float(rng.uniform(1, 50)) for i in range(n)}
            budget = float(rng.uniform(0, 500))
            h = to_shares(w, prices, budget)
            spend = sum(h.shares[t] * prices[t] for t in prices)
            assert spend <= budget + 1e-9
            assert h.cash == pytest.approx(budget - spend, abs=1e-9)

    def test_rounding_consistency_bound(self):
        rng = np.random.default_rng(9)
        for _ in range(30):
            n = int(rng.integers(1, 5))
            w = WeightVector(tuple(f"T{i}" for i in range(n)), rng.dirichlet(np.ones(n)))
            prices = {f"T{i}": float(rng.uniform(5, 80)) for i in range(n)}
            budget = float(rng.uniform(200, 2000))
            h = to_shares(w, prices, budget)
            bound = max(prices.values()) / budget
            for i, t in enumerate(w.tickers):
                realized = h.shares[t] * prices[t] / budget
                assert abs(realized - w.weights[i]) <= bound + 1e-12

    def test_missing_price(self):
        w = WeightVector(("A",), np.array([1.0]))
        with pytest.raises(InputError):
            to_shares(w, {}, 100.0)


class TestPortfolioValue:
    def test_simple(self):
        h = Holdings({"A": 10}, 0.0)
        assert portfolio_value(h, {"A": 150.0}) == pytest.approx(1500.0)

    def test_cash_only(self):
        assert portfolio_value(Holdings({}, 7.0), {}) == pytest.approx(7.0)

    def test_mixed(self):
        h = Holdings({"A": 2, "B": 3}, 5.0)
        assert portfolio_value(h, {"A": 10.0, "B": 20.0}) == pytest.approx(85.0)

    def test_missing_price_for_held(self):
        h = Holdings({"A": 1}, 0.0)
        with pytest.raises(InputError):
            portfolio_value(h, {"B": 3.0})

    def test_zero_position_needs_no_price(self):
        h = Holdings({"A": 0}, 3.0)
        assert portfolio_value(h, {}) == pytest.approx(3.0)


def rising_single_asset(final_price=30.0, n_days=40):
    # gentle riser ending exactly at final_price
    path = final_price * np.exp(np.linspace(-0.04, 0.0, n_days))
    path[-1] = final_price
    from annealfolio.marketdata import PriceMatrix
    from annealfolio.synthetic import business_days

    return PriceMatrix(
        tuple(business_days(date(2023, 1, 2), n_days)), ("AAA",), path[:, None]
    )


class TestHybridOptimize:
    def test_single_asset_universe(self):
        prices = rising_single_asset(30.0)
        holdings, target, metrics = hybrid_optimize(prices, cfg_for(100.0))
        assert holdings.shares == {"AAA": 3}
        assert holdings.cash == pytest.approx(10.0)
        assert target.weights == pytest.approx([1.0])

    def test_budget_too_small(self):
        prices = rising_single_asset(30.0)
        with pytest.raises(SolverError, match="too small"):
            hybrid_optimize(prices, cfg_for(5.0))

    def test_deterministic(self):
        prices = grw_matrix(
            [("AAA", 20.0, 0.002, 0.01), ("BBB", 35.0, 0.001, 0.02), ("CCC", 11.0, 0.003, 0.015)],
            seed=3,
        )
        cfg = cfg_for(5000.0, seed=42)
        h1, w1, m1 = hybrid_optimize(prices, cfg)
        h2, w2, m2 = hybrid_optimize(prices, cfg)
        assert h1.shares == h2.shares and h1.cash == h2.cash
        assert np.array_equal(w1.weights, w2.weights)
        assert m1 == m2

    def test_explicit_cardinality(self):
        prices = grw_matrix(
            [("AAA", 20.0, 0.002, 0.01), ("BBB", 35.0, 0.001, 0.02), ("CCC", 11.0, 0.003, 0.015)],
            seed=3,
        )
        h, w, _ = hybrid_optimize(prices, cfg_for(5000.0, cardinality=2))
        assert len(w.tickers) == 2

    def test_budget_safety(self):
        prices = grw_matrix(
            [("AAA", 20.0, 0.002, 0.01), ("BBB", 35.0, 0.001, 0.02)], seed=4
        )
        cfg = cfg_for(777.0)
        holdings, _, _ = hybrid_optimize(prices, cfg)
        last = prices.prices_at(prices.dates[-1])
        spend = sum(holdings.shares[t] * last[t] for t in holdings.shares)
        assert spend <= cfg.budget + 1e-9
        assert holdings.cash >= 0


class TestIntegerShares:
    def test_single_asset_spends_budget(self):
        stats = make_stats([0.1], [[0.0]])
        h = optimize_integer_shares({"T0": 50.0}, stats, cfg_for(100.0, "fully_quantum"))
        assert h.shares == {"T0": 2}
        assert h.cash == pytest.approx(0.0, abs=1e-9)

    def test_huge_risk_aversion_holds_cash(self):
        stats = make_stats([0.1], [[0.5]])
        h = optimize_integer_shares(
            {"T0": 50.0}, stats, cfg_for(100.0, "fully_quantum", q=1e9)
        )
        assert h.shares == {"T0": 0}
        assert h.cash == pytest.approx(100.0)

    def test_two_asset_enumeration_case(self):
        stats = make_stats([0.3, 0.1], np.zeros((2, 2)))
        h = optimize_integer_shares(
            {"T0": 30.0, "T1": 40.0}, stats, cfg_for(100.0, "fully_quantum")
        )
        assert h.shares == {"T0": 3, "T1": 0}
        assert h.cash == pytest.approx(10.0)

    def test_budget_never_violated(self):
        rng = np.random.default_rng(21)
        for trial in range(10):
            n = int(rng.integers(1, 4))
            A = rng.normal(0, 0.05, (n, n))
            stats = make_stats(rng.uniform(0.0, 0.3, n), A @ A.T)
            prices = {f"T{i}": float(rng.uniform(5, 40)) for i in range(n)}
            budget = float(rng.uniform(50, 200))
            h = optimize_integer_shares(
                prices, stats, cfg_for(budget, "fully_quantum", seed=trial)
            )
            spend = sum(h.shares[t] * prices[t] for t in prices)
            assert spend <= budget + 1e-6
            assert h.cash >= 0

    def test_bit_cap(self):
        stats = make_stats([0.1] * 8, np.zeros((8, 8)))
        prices = {f"T{i}": 1.0 for i in range(8)}  # upper 10^6 each: way past the cap
        with pytest.raises(SolverError, match="encoded bits"):
            optimize_integer_shares(prices, stats, cfg_for(1e6, "fully_quantum"))


class TestRunPipeline:
    def test_result_schema(self):
        prices = grw_matrix(
            [("AAA", 20.0, 0.002, 0.01), ("BBB", 35.0, 0.001, 0.02), ("CCC", 11.0, 0.003, 0.015)],
            seed=5,
        )
        result = run_pipeline(prices, cfg_for(5000.0, seed=9))
        expected_keys = {
            "strategy", "selected", "weights_target", "weights_realized", "shares",
            "cash", "metrics", "seed", "cardinality_mode", "cardinality", "as_of",
        }
        assert expected_keys <= set(result)
        assert result["strategy"] == "hybrid"
        assert sum(result["weights_realized"].values()) == pytest.approx(1.0, abs=1e-9)
        assert sum(result["metrics"]["weights"].values()) == pytest.approx(100.0, abs=0.01)

    def test_strategy_mismatch_guards(self):
        prices = rising_single_asset()
        with pytest.raises(InputError):
            hybrid_optimize(prices, cfg_for(100.0, "fully_quantum"))
        stats = make_stats([0.1], [[0.0]])
        with pytest.raises(InputError):
            optimize_integer_shares({"T0": 1.0}, stats, cfg_for(100.0, "hybrid"))


class TestPipelineConfig:
    def test_validation(self):
        with pytest.raises(InputError):
            PipelineConfig(budget=-1.0, seed=1)
        with pytest.raises(InputError):
            PipelineConfig(budget=1.0, seed=1, strategy="psychic")
        with pytest.raises(InputError):
            PipelineConfig(budget=1.0, seed=1, cardinality="some")
        with pytest.raises(InputError):
            PipelineConfig(budget=1.0, seed=1, lambda_=-2.0)
        with pytest.raises(InputError):
            PipelineConfig(budget=1.0, seed="nope")
