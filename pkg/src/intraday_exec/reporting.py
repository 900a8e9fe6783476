"""Report rendering: delimited tables, long-format CSVs, and figures.

Tables mirror the benchmark-study layout (strategies as rows, scenario cells
as columns, medians with means in brackets).  Every output file embeds the
config hash and the seed: JSON in its meta block, CSV as a leading comment
line, PNG in its metadata text chunk.  All writers iterate in sorted order so
repeat runs produce byte-identical files.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .backtest import BacktestReport
from .strategies import TradeTrajectory

STRATEGY_LABELS = {
    "iobe": "IOBE",
    "twap": "TWAP",
    "vwap": "VWAP",
    "opti_c": "Opti_C",
    "opti_sv": "Opti_sv",
}

FIG_SIZE = (8.0, 5.0)


def _stamp(config_hash: str, seed: int) -> str:
    return f"config_hash={config_hash} seed={seed}"


def _png_metadata(config_hash: str, seed: int) -> dict:
    return {"Software": f"intraday-exec ({_stamp(config_hash, seed)})"}


def write_json(payload: dict, path: Path, config_hash: str, seed: int) -> None:
    payload = dict(payload)
    payload.setdefault("meta", {})
    payload["meta"]["config_hash"] = config_hash
    payload["meta"]["seed"] = seed
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_table(
    path: Path,
    header: List[str],
    rows: List[List[str]],
    config_hash: str,
    seed: int,
) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# {_stamp(config_hash, seed)}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def _scenario_columns(report: BacktestReport) -> List[str]:
    return [s.scenario_key for s in report.scenarios]


def _strategy_rows(report: BacktestReport) -> List[str]:
    names: List[str] = []
    for s in report.scenarios:
        for name in s.stats:
            if name not in names:
                names.append(name)
    order = list(STRATEGY_LABELS)
    return sorted(names, key=lambda n: (order.index(n) if n in order else 99, n))


def write_bas_table(report: BacktestReport, path: Path, config_hash: str, seed: int) -> None:
    """Median (mean) realized spread per strategy and scenario."""
    cols = _scenario_columns(report)
    rows = []
    for name in _strategy_rows(report):
        row = [STRATEGY_LABELS.get(name, name)]
        for s in report.scenarios:
            st = s.stats.get(name)
            row.append("" if st is None else f"{st.median_bas:.4f} ({st.mean_bas:.4f})")
        rows.append(row)
    _write_table(path, ["strategy"] + cols, rows, config_hash, seed)


def write_std_table(report: BacktestReport, path: Path, config_hash: str, seed: int) -> None:
    """Volume-weighted spread dispersion per strategy and scenario."""
    cols = _scenario_columns(report)
    rows = []
    for name in _strategy_rows(report):
        row = [STRATEGY_LABELS.get(name, name)]
        for s in report.scenarios:
            st = s.stats.get(name)
            row.append("" if st is None else f"{st.weighted_std:.6f}")
        rows.append(row)
    _write_table(path, ["strategy"] + cols, rows, config_hash, seed)


def write_prices_table(report: BacktestReport, path: Path, config_hash: str, seed: int) -> None:
    """Median buy and sell execution prices per strategy and scenario."""
    cols: List[str] = []
    for s in report.scenarios:
        cols += [f"{s.scenario_key} buy", f"{s.scenario_key} sell"]
    rows = []
    for name in _strategy_rows(report):
        row = [STRATEGY_LABELS.get(name, name)]
        for s in report.scenarios:
            st = s.stats.get(name)
            if st is None:
                row += ["", ""]
            else:
                row += [f"{st.median_buy_price:.4f}", f"{st.median_sell_price:.4f}"]
        rows.append(row)
    _write_table(path, ["strategy"] + cols, rows, config_hash, seed)


def write_pvalues_table(report: BacktestReport, path: Path, config_hash: str, seed: int) -> None:
    """One-sided Welch p-values of the optimizer beating each benchmark."""
    pairs: List[str] = []
    for s in report.scenarios:
        for pair in s.t_test_pvalues:
            if pair not in pairs:
                pairs.append(pair)
    pairs.sort()
    rows = []
    for pair in pairs:
        row = [pair]
        for s in report.scenarios:
            p = s.t_test_pvalues.get(pair)
            row.append("" if p is None else f"{p:.6g}")
        rows.append(row)
    _write_table(path, ["comparison"] + _scenario_columns(report), rows, config_hash, seed)


def write_trajectories_csv(
    trajectories: Dict[Tuple[str, str], TradeTrajectory],
    path: Path,
    config_hash: str,
    seed: int,
) -> None:
    """Long-format trajectory export: scenario, strategy, k, n_k, x_k."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# {_stamp(config_hash, seed)}\n")
        fh.write("scenario,strategy,k,n_k,x_k\n")
        for (scenario_key, strategy) in sorted(trajectories):
            traj = trajectories[(scenario_key, strategy)]
            alloc = traj.allocations
            inv = traj.inventory
            for k in range(1, traj.n_buckets + 1):
                fh.write(
                    f"{scenario_key},{strategy},{k},{alloc[k - 1]:.1f},{inv[k]:.1f}\n"
                )


def write_robustness_csv(
    robustness: List[Tuple[float, List[str], BacktestReport]],
    path: Path,
    config_hash: str,
    seed: int,
) -> None:
    """Long-format robustness export across subsample fractions."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# {_stamp(config_hash, seed)}\n")
        fh.write("fraction,scenario,strategy,median_bas,mean_bas,weighted_std,sample_days\n")
        for fraction, _, report in robustness:
            for s in report.scenarios:
                for name in sorted(s.stats):
                    st = s.stats[name]
                    fh.write(
                        f"{fraction:g},{s.scenario_key},{name},"
                        f"{st.median_bas:.6f},{st.mean_bas:.6f},"
                        f"{st.weighted_std:.6f},{st.sample_days}\n"
                    )


# ---------------------------------------------------------------------------
# Figures
# ---------------------------------------------------------------------------

def render_trajectory_figure(
    trajectories: Dict[str, TradeTrajectory],
    scenario_key: str,
    path: Path,
    config_hash: str,
    seed: int,
) -> None:
    """Inventory paths x_k of every strategy for one scenario."""
    fig, ax = plt.subplots(figsize=FIG_SIZE)
    for name in sorted(trajectories, key=lambda n: list(STRATEGY_LABELS).index(n)
                       if n in STRATEGY_LABELS else 99):
        traj = trajectories[name]
        ax.plot(
            np.arange(0, traj.n_buckets + 1),
            np.abs(traj.inventory),
            label=STRATEGY_LABELS.get(name, name),
            linewidth=1.4,
        )
    ax.set_xlabel("minute bucket k")
    ax.set_ylabel("open position [MWh]")
    ax.set_title(f"Trade trajectories, scenario {scenario_key}")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_png_metadata(config_hash, seed))
    plt.close(fig)


def render_robustness_figure(
    robustness: List[Tuple[float, List[str], BacktestReport]],
    path: Path,
    config_hash: str,
    seed: int,
) -> None:
    """Median realized spread per strategy across subsample fractions."""
    scenario_keys = [s.scenario_key for s in robustness[0][2].scenarios]
    fig, axes = plt.subplots(
        1, len(scenario_keys), figsize=(FIG_SIZE[0], 4.0), squeeze=False,
        sharey=False,
    )
    for ax, key in zip(axes[0], scenario_keys):
        per_strategy: Dict[str, List[Tuple[float, float]]] = {}
        for fraction, _, report in robustness:
            scenario = report.scenario(key)
            for name, st in scenario.stats.items():
                per_strategy.setdefault(name, []).append((fraction, st.median_bas))
        for name in sorted(per_strategy, key=lambda n: list(STRATEGY_LABELS).index(n)
                           if n in STRATEGY_LABELS else 99):
            points = sorted(per_strategy[name], reverse=True)
            ax.plot(
                [p[0] for p in points],
                [p[1] for p in points],
                marker="o",
                markersize=3,
                label=STRATEGY_LABELS.get(name, name),
            )
        ax.set_xlabel("retained fraction of days")
        ax.set_ylabel("median realized BAS [EUR/MWh]")
        ax.set_title(key)
        ax.invert_xaxis()
        ax.grid(True, alpha=0.3)
    axes[0][0].legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_png_metadata(config_hash, seed))
    plt.close(fig)


def render_fit_figure(
    binned_medians: Dict[int, float],
    fitted: Dict[int, float],
    path: Path,
    config_hash: str,
    seed: int,
) -> None:
    """Binned training spread medians against the fitted impact curve."""
    ks = sorted(binned_medians)
    fig, ax = plt.subplots(figsize=FIG_SIZE)
    ax.plot(ks, [binned_medians[k] for k in ks], label="training median BAS",
            linewidth=1.0, alpha=0.7)
    ax.plot(ks, [fitted[k] for k in ks], label="fitted impact curve",
            linestyle="--", linewidth=1.6)
    ax.set_xlabel("minute bucket k")
    ax.set_ylabel("spread at top depth [EUR/MWh]")
    ax.set_title("In-sample fit of the temporary impact surface")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_png_metadata(config_hash, seed))
    plt.close(fig)
