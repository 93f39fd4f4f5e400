"""Command-line entry point.

Subcommands: ``optimize`` (single portfolio construction), ``backtest``
(rebalancing simulation), ``report`` (render a result JSON as a
comparison table), and ``gen-data`` (regenerate the synthetic dataset).

Configuration comes from a JSON file plus command-line overrides; flags
win. A seed is mandatory for optimize/backtest so every run is
reproducible. Exit codes: 0 success, 1 runtime/solver failure, 2
input/config failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from datetime import date, datetime
from pathlib import Path

import numpy as np

from .allocator import AllocatorConfig, WeightVector
from .data import bundled_prices_path, bundled_sectors_path
from .errors import InputError, SolverError
from .marketdata import load_prices, load_sectors
from .pipeline import PipelineConfig, run_pipeline
from .rebalance import RebalancePolicy, run_backtest
from .sampler import AnnealSchedule
from . import synthetic

OUT_DIR_ENV = "ANNEALFOLIO_OUT_DIR"

_CONFIG_KEYS = {
    "prices", "sectors", "benchmark", "budget", "strategy", "cardinality",
    "q", "lambda", "seed", "out_dir", "period_months", "risk_return_threshold",
    "risk_vol_quantile", "lookback_days", "returns_method", "annualization_factor",
    "risk_free_rate", "cardinality_mode", "sampler", "start", "end",
}


@dataclass
class RunConfig:
    """Materialized run settings after merging config file and flags."""

    prices: str
    sectors: str
    seed: int
    out_dir: str
    budget: float = 1_000_000.0
    strategy: str = "hybrid"
    cardinality: int | str = "auto"
    q: float = 1.0
    lambda_: float | str = "auto"
    benchmark: object = None
    period_months: int = 3
    risk_return_threshold: float = 0.0
    risk_vol_quantile: float = 0.8
    lookback_days: int = 63
    returns_method: str = "simple"
    annualization_factor: float = 252.0
    risk_free_rate: float = 0.0
    cardinality_mode: str = "support"
    sampler: dict = field(default_factory=dict)
    start: date | None = None
    end: date | None = None

    def pipeline_config(self) -> PipelineConfig:
        return PipelineConfig(
            budget=self.budget,
            seed=self.seed,
            strategy=self.strategy,
            cardinality=self.cardinality,
            q=self.q,
            lambda_=self.lambda_,
            sampler=AnnealSchedule(**self.sampler) if self.sampler else AnnealSchedule(),
            allocator=AllocatorConfig(
                risk_free_rate=self.risk_free_rate,
                cardinality_mode=self.cardinality_mode,
            ),
            returns_method=self.returns_method,
            annualization_factor=self.annualization_factor,
        )

    def policy(self) -> RebalancePolicy:
        return RebalancePolicy(
            period_months=self.period_months,
            risk_return_threshold=self.risk_return_threshold,
            risk_vol_quantile=self.risk_vol_quantile,
            lookback_days=self.lookback_days,
        )


def _parse_date(value) -> date | None:
    if value is None:
        return None
    try:
        return datetime.strptime(str(value), "%Y-%m-%d").date()
    except ValueError:
        raise InputError(f"bad date {value!r} (expected YYYY-MM-DD)") from None


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise InputError(f"config file not found: {path}")
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InputError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise InputError(f"config file {path} must hold a JSON object")
    unknown = set(data) - _CONFIG_KEYS
    if unknown:
        raise InputError(f"unknown config keys: {sorted(unknown)}")
    return data


def _coerce_cardinality(value):
    if value in (None, "auto"):
        return "auto"
    try:
        return int(value)
    except (TypeError, ValueError):
        raise InputError(f"cardinality must be an integer or 'auto', got {value!r}") from None


def _coerce_lambda(value):
    if value in (None, "auto"):
        return "auto"
    try:
        return float(value)
    except (TypeError, ValueError):
        raise InputError(f"lambda must be a number or 'auto', got {value!r}") from None


def build_run_config(args: argparse.Namespace, need_seed: bool = True) -> RunConfig:
    cfg = _load_config_file(getattr(args, "config", None))

    def pick(flag_name: str, cfg_key: str, default=None):
        flag_val = getattr(args, flag_name, None)
        if flag_val is not None:
            return flag_val
        return cfg.get(cfg_key, default)

    seed = pick("seed", "seed")
    if seed is None:
        if need_seed:
            raise InputError("a seed is required (set --seed or the 'seed' config field)")
        seed = 0
    out_dir = pick("out_dir", "out_dir") or os.environ.get(OUT_DIR_ENV) or "."

    prices = pick("prices", "prices") or bundled_prices_path()
    sectors = pick("sectors", "sectors") or bundled_sectors_path()
    for label, path in (("price", prices), ("sector", sectors)):
        if not Path(path).exists():
            raise InputError(f"{label} file not found: {path}")

    rc = RunConfig(
        prices=str(prices),
        sectors=str(sectors),
        seed=int(seed),
        out_dir=str(out_dir),
        budget=float(pick("budget", "budget", 1_000_000.0)),
        strategy=str(pick("strategy", "strategy", "hybrid")),
        cardinality=_coerce_cardinality(pick("cardinality", "cardinality", "auto")),
        q=float(pick("q", "q", 1.0)),
        lambda_=_coerce_lambda(pick("lambda_", "lambda", "auto")),
        benchmark=pick("benchmark", "benchmark"),
        period_months=int(pick("period_months", "period_months", 3)),
        risk_return_threshold=float(cfg.get("risk_return_threshold", 0.0)),
        risk_vol_quantile=float(cfg.get("risk_vol_quantile", 0.8)),
        lookback_days=int(cfg.get("lookback_days", 63)),
        returns_method=str(cfg.get("returns_method", "simple")),
        annualization_factor=float(cfg.get("annualization_factor", 252.0)),
        risk_free_rate=float(cfg.get("risk_free_rate", 0.0)),
        cardinality_mode=str(cfg.get("cardinality_mode", "support")),
        sampler=dict(cfg.get("sampler", {})),
        start=_parse_date(cfg.get("start")),
        end=_parse_date(cfg.get("end")),
    )
    return rc


def _resolve_benchmark(spec, tickers) -> WeightVector | str:
    """Benchmark spec: a ticker symbol, a weights JSON path, or an inline map."""
    if spec is None:
        raise InputError("backtest needs a benchmark (ticker symbol or weights file)")
    if isinstance(spec, dict):
        return _weights_from_mapping(spec)
    spec = str(spec)
    if Path(spec).exists():
        try:
            data = json.loads(Path(spec).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise InputError(f"benchmark weights file {spec} is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise InputError("benchmark weights file must hold a JSON object of ticker: weight")
        return _weights_from_mapping(data)
    if spec in tickers:
        return spec
    raise InputError(f"benchmark {spec!r} is neither a known ticker nor an existing weights file")


def _weights_from_mapping(data: dict) -> WeightVector:
    if not data:
        raise InputError("benchmark weights are empty")
    tickers = sorted(data)
    vals = np.array([float(data[t]) for t in tickers])
    if np.any(vals < 0) or vals.sum() <= 0:
        raise InputError("benchmark weights must be nonnegative with a positive sum")
    return WeightVector(tuple(tickers), vals / vals.sum())


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# report rendering

_METRIC_ROWS = (
    ("Returns", "return_pct"),
    ("Risk", "risk_pct"),
    ("Sharpe Ratio", "sharpe"),
    ("Diversification Ratio", "diversification_ratio"),
)


def render_comparison(result: dict) -> str:
    """Text table of per-asset weight percentages plus the four metric rows."""
    if "metrics" in result:
        algo = result["metrics"]
        bench = (result.get("benchmark") or {}).get("metrics")
        return _render_weight_table(algo, bench)
    if "final" in result:
        lines = [
            f"{'':24}{'Algorithm':>12}{'Benchmark':>12}",
            f"{'Final Value':<24}{result['final']['algo']:>12.2f}{result['final']['bench']:>12.2f}",
            f"{'Rebalance Events':<24}{len(result.get('events', [])):>12}",
        ]
        return "\n".join(lines)
    raise InputError("result JSON has neither pipeline metrics nor a backtest summary")


def _render_weight_table(algo: dict, bench: dict | None) -> str:
    weights = algo.get("weights") or {}
    if not weights:
        raise InputError("result carries no weights to report")
    bench_weights = (bench or {}).get("weights") or {}
    names = sorted(set(weights) | set(bench_weights))
    width = max(len("Diversification Ratio"), max(len(n) for n in names)) + 2

    def fmt(value) -> str:
        return f"{value:>12.2f}" if value is not None else f"{'-':>12}"

    header = f"{'Name':<{width}}{'Algorithm':>12}"
    if bench is not None:
        header += f"{'Benchmark':>12}"
    lines = [header, "-" * len(header)]
    for n in names:
        row = f"{n:<{width}}{fmt(weights.get(n))}"
        if bench is not None:
            row += fmt(bench_weights.get(n))
        lines.append(row)
    lines.append("-" * len(header))
    for label, key in _METRIC_ROWS:
        row = f"{label:<{width}}{fmt(algo.get(key))}"
        if bench is not None:
            row += fmt(bench.get(key))
        lines.append(row)
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# subcommands


def cmd_optimize(args: argparse.Namespace) -> int:
    rc = build_run_config(args)
    prices = load_prices(rc.prices)
    result = run_pipeline(prices, rc.pipeline_config())
    out_dir = Path(rc.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(out_dir / "optimize_result.json", result)
    table = render_comparison(result)
    (out_dir / "optimize_result.txt").write_text(table + "\n", encoding="utf-8")
    print(table)
    print(f"\nwrote {out_dir / 'optimize_result.json'}")
    return 0


def cmd_backtest(args: argparse.Namespace) -> int:
    rc = build_run_config(args)
    prices = load_prices(rc.prices)
    sectors = load_sectors(rc.sectors)
    benchmark = _resolve_benchmark(rc.benchmark, prices.tickers)
    report = run_backtest(
        prices,
        sectors,
        rc.budget,
        rc.pipeline_config(),
        rc.policy(),
        benchmark,
        start=rc.start,
        end=rc.end,
    )
    out_dir = Path(rc.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(out_dir / "backtest_report.json", report.to_dict())
    (out_dir / "backtest_plot.csv").write_text(report.to_plot_csv(), encoding="utf-8")
    if not report.events:
        print("warning: no rebalance boundary fell inside the data range", file=sys.stderr)
    print(
        f"final value  algorithm {report.final_algo:.2f}  benchmark {report.final_bench:.2f}  "
        f"({len(report.events)} rebalance events)"
    )
    print(f"wrote {out_dir / 'backtest_report.json'} and {out_dir / 'backtest_plot.csv'}")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    path = Path(args.result)
    if not path.exists():
        raise InputError(f"result file not found: {path}")
    try:
        result = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InputError(f"result file {path} is not valid JSON: {exc}") from None
    if not isinstance(result, dict):
        raise InputError("result file must hold a JSON object")
    print(render_comparison(result))
    return 0


def cmd_gen_data(args: argparse.Namespace) -> int:
    out_dir = Path(
        args.out_dir or os.environ.get(OUT_DIR_ENV) or "."
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = args.seed if args.seed is not None else synthetic.DEFAULT_SEED
    days = args.days or synthetic.DEFAULT_DAYS
    start = _parse_date(args.start) or synthetic.DEFAULT_START
    matrix, sectors = synthetic.generate_dataset(seed=seed, n_days=days, start=start)
    prices_path = out_dir / "synthetic_prices.csv"
    sectors_path = out_dir / "synthetic_sectors.csv"
    prices_path.write_text(synthetic.prices_to_csv(matrix), encoding="utf-8")
    sectors_path.write_text(synthetic.sectors_to_csv(sectors), encoding="utf-8")
    print(f"wrote {prices_path} and {sectors_path} (seed {seed}, {days} trading days)")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="annealfolio",
        description="Annealing-based asset selection, Sharpe-ratio allocation, and rebalancing backtests.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON config file; flags override its fields")
        p.add_argument("--prices", help="price CSV (date,ticker,close); default: bundled dataset")
        p.add_argument("--sectors", help="sector CSV (ticker,sector); default: bundled dataset")
        p.add_argument("--budget", type=float, help="investment budget")
        p.add_argument("--strategy", choices=["hybrid", "fully_quantum"])
        p.add_argument("--seed", type=int, help="random seed (required here or in the config)")
        p.add_argument("--out-dir", dest="out_dir", help=f"output directory (default ${OUT_DIR_ENV} or .)")
        p.add_argument("--cardinality", help="number of assets to select, or 'auto'")
        p.add_argument("--q", type=float, help="risk aversion coefficient")
        p.add_argument("--lambda", dest="lambda_", help="constraint penalty weight, or 'auto'")
        p.add_argument("--period-months", dest="period_months", type=int, help="rebalance cadence")
        p.add_argument("--benchmark", help="benchmark ticker or weights JSON path (backtest)")

    p_opt = sub.add_parser("optimize", help="construct a portfolio and report its weights/metrics")
    add_common(p_opt)
    p_opt.set_defaults(func=cmd_optimize)

    p_bt = sub.add_parser("backtest", help="run the rebalancing backtest against a benchmark")
    add_common(p_bt)
    p_bt.set_defaults(func=cmd_backtest)

    p_rep = sub.add_parser("report", help="render a result JSON as a comparison table")
    p_rep.add_argument("result", help="path to a result JSON from optimize or backtest")
    p_rep.set_defaults(func=cmd_report)

    p_gen = sub.add_parser("gen-data", help="regenerate the synthetic dataset")
    p_gen.add_argument("--out-dir", dest="out_dir", help="where to write the CSVs")
    p_gen.add_argument("--seed", type=int, help=f"generator seed (default {synthetic.DEFAULT_SEED})")
    p_gen.add_argument("--days", type=int, help=f"trading days (default {synthetic.DEFAULT_DAYS})")
    p_gen.add_argument("--start", help=f"first calendar date (default {synthetic.DEFAULT_START})")
    p_gen.set_defaults(func=cmd_gen_data)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
