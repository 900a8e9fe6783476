"""Optimal order execution engine for continuous intraday electricity markets.

Calibrates order-book market-impact models from minute/volume-bucketed LOB
data, computes cost- and mean-variance-optimal trade trajectories with a
genetic algorithm, and benchmarks them against instant execution, TWAP and
VWAP in an out-of-sample backtest.
"""

__version__ = "0.1.0"
