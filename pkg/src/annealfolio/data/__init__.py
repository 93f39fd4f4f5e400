"""Bundled datasets: a synthetic price history, its sector map, and a
sample comparison report for the ``report`` command."""

from importlib.resources import files


def bundled_prices_path() -> str:
    return str(files(__package__) / "synthetic_prices.csv")


def bundled_sectors_path() -> str:
    return str(files(__package__) / "synthetic_sectors.csv")


def sample_comparison_path() -> str:
    return str(files(__package__) / "sample_comparison.json")
