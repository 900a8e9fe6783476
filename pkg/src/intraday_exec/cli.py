"""Command-line entry point: synth, fit, run, report.

Exit codes: 0 success, 2 config error, 3 data error, 4 fit error, 5 at least
one scenario failed (the others still complete and get reported).  Every run
is reproducible: outputs embed the config hash and seed, and scenario-level
GA seeds derive deterministically from (run seed, scenario, strategy).
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import __version__
from .backtest import (
    BacktestReport,
    DaySeries,
    Scenario,
    build_scenario_report,
    evaluate_days,
    subsample_robustness,
)
from .config import RunConfig, load_config
from .errors import (
    ArrivalAfterCutoff,
    ConfigError,
    DegenerateInput,
    EmptyBook,
    EmptySample,
    EngineError,
    InsufficientData,
    NotFitted,
    ParseError,
    SchemaVersionMismatch,
)
from .impact import (
    DayMeta,
    ImpactModel,
    extract_permanent,
    extract_temporary,
    fit_impact_model,
)
from .ingest import LobFileHeader, SynthConfig, read_lob_csv, synth_lob, write_lob_csv
from .lob import BucketGrid, VolumeBucketScheme, aggregate
from .optimizer import CostModelParams, GaConfig, optimize_with_trace
from .reporting import (
    render_fit_figure,
    render_robustness_figure,
    render_trajectory_figure,
    write_bas_table,
    write_json,
    write_prices_table,
    write_pvalues_table,
    write_robustness_csv,
    write_std_table,
    write_trajectories_csv,
)
from .strategies import (
    STRATEGY_IOBE,
    STRATEGY_OPTI_C,
    STRATEGY_OPTI_SV,
    STRATEGY_TWAP,
    STRATEGY_VWAP,
    TradeTrajectory,
    VolumeProfile,
    iobe,
    twap,
    volume_profile,
    vwap,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_FIT = 4
EXIT_PARTIAL = 5

# Trajectories are computed once per scenario for a weekday peak delivery;
# weekend/off-peak paths differ only marginally through the dummy terms.
TRAJECTORY_META = DayMeta(weekend=False, peak=True)


def _derive_seed(base: int, *tags: str) -> int:
    digest = hashlib.sha256("/".join([str(base), *tags]).encode()).hexdigest()
    return int(digest[:16], 16)


def _require_dir(path: Path, what: str) -> None:
    if not path.is_dir():
        raise ConfigError(f"{what} directory {path} does not exist")


def _require_file(path: Path, what: str) -> None:
    if not path.is_file():
        raise ConfigError(f"{what} file {path} does not exist")


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def cmd_synth(cfg: RunConfig) -> int:
    plan = (
        ("train", cfg.training_start_date, cfg.training_days, cfg.training_dir),
        ("oos", cfg.oos_start_date, cfg.oos_days, cfg.oos_dir),
    )
    for phase, start, days, directory in plan:
        directory.mkdir(parents=True, exist_ok=True)
        date0 = datetime.fromisoformat(start).replace(tzinfo=timezone.utc)
        count = 0
        for day in range(days):
            for hour in cfg.hours:
                delivery = date0 + timedelta(days=day, hours=hour)
                arrival = delivery - timedelta(minutes=cfg.lead_time_minutes)
                events = synth_lob(cfg.synth, delivery, arrival)
                header = LobFileHeader(1, delivery, arrival)
                name = f"{phase}_{delivery:%Y%m%d_%H}.csv"
                write_lob_csv(directory / name, header, events)
                count += 1
        print(f"synth: wrote {count} {phase} files to {directory}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------

def _load_grids(directory: Path, scheme: VolumeBucketScheme):
    """Read and aggregate every LOB file of a directory, keyed by file stem."""
    files = sorted(directory.glob("*.csv"))
    if not files:
        raise ConfigError(f"no .csv files in {directory}")
    grids: Dict[str, BucketGrid] = {}
    events_by_day = {}
    n_ref = None
    for path in files:
        header, events = read_lob_csv(path)
        horizon_s = (header.delivery_start - header.observation_start).total_seconds()
        grid = aggregate(events, horizon_s, 0.0, scheme, delivery_start=header.delivery_start)
        if n_ref is None:
            n_ref = grid.n_buckets
        elif grid.n_buckets != n_ref:
            raise ParseError(0, f"{path.name}: horizon {grid.n_buckets} differs from {n_ref}")
        grids[path.stem] = grid
        events_by_day[path.stem] = events
    return grids, events_by_day, n_ref


def cmd_fit(cfg: RunConfig) -> int:
    _require_dir(cfg.training_dir, "training data")
    scheme = VolumeBucketScheme()
    grids, events_by_day, n_buckets = _load_grids(cfg.training_dir, scheme)
    observations = []
    counters: Dict[str, int] = {}
    for day in sorted(grids):
        observations.extend(extract_temporary(grids[day], scheme))
        observations.extend(
            extract_permanent(events_by_day[day], grids[day], scheme=scheme,
                              counters=counters)
        )
    model = fit_impact_model(observations, n_buckets, cfg.fit)
    profile = volume_profile(list(grids.values()))

    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    cfg.model_file.parent.mkdir(parents=True, exist_ok=True)
    chash = cfg.config_hash()
    write_json({"model": model.to_dict()}, cfg.model_file, chash, cfg.seed)
    write_json(
        {"profile": profile.to_dict(), "n_buckets": n_buckets},
        cfg.profile_file, chash, cfg.seed,
    )

    print(f"fit: {len(observations)} observations from {len(grids)} files, "
          f"horizon {n_buckets} buckets")
    print(f"fit: permanent clusters={counters.get('clusters', 0)} "
          f"skipped_window={counters.get('skipped_window', 0)} "
          f"skipped_empty={counters.get('skipped_empty', 0)}")
    for (kind, regime), stratum in sorted(model.strata.items()):
        print(
            f"fit: {kind}/{regime}: n={stratum.n_obs} floored={stratum.floored_mu} "
            f"gcv_gamma_k={stratum.mu.k_term.gamma:g} "
            f"gcv_gamma_n={stratum.mu.logn_term.gamma:g}"
        )

    # in-sample diagnostic: top-of-book training medians vs fitted curve
    meta = DayMeta(weekend=False, peak=True)
    binned: Dict[int, List[float]] = {}
    for grid in grids.values():
        if grid.is_weekend or not grid.is_peak:
            continue
        for k in range(1, grid.n_buckets + 1):
            if grid.has_bas(k, 1):
                binned.setdefault(k, []).append(grid.bas(k, 1))
    if binned:
        medians = {k: float(np.median(v)) for k, v in binned.items()}
        fitted = {
            k: model.evaluate("temporary", scheme.midpoint(1), k, n_buckets, meta)[0]
            for k in medians
        }
        render_fit_figure(medians, fitted, cfg.out_dir / "fit_diagnostics.png",
                          chash, cfg.seed)
    print(f"fit: model written to {cfg.model_file}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

def _load_model(cfg: RunConfig) -> Tuple[ImpactModel, VolumeProfile]:
    _require_file(cfg.model_file, "impact model")
    _require_file(cfg.profile_file, "volume profile")
    with open(cfg.model_file, "r", encoding="utf-8") as fh:
        model = ImpactModel.from_dict(json.load(fh)["model"])
    with open(cfg.profile_file, "r", encoding="utf-8") as fh:
        profile = VolumeProfile.from_dict(json.load(fh)["profile"])
    return model, profile


def _scenario_trajectories(
    scenario: Scenario,
    cfg: RunConfig,
    model: ImpactModel,
    profile: VolumeProfile,
) -> Tuple[Dict[str, TradeTrajectory], Dict[str, dict]]:
    n = scenario.n_buckets
    x = scenario.volume
    direction = scenario.direction
    sliced_profile = profile.slice_tail(n)
    trajectories: Dict[str, TradeTrajectory] = {}
    traces: Dict[str, dict] = {}
    for strategy in cfg.strategies:
        if strategy == STRATEGY_IOBE:
            trajectories[strategy] = iobe(x, n, direction)
        elif strategy == STRATEGY_TWAP:
            trajectories[strategy] = twap(x, n, direction)
        elif strategy == STRATEGY_VWAP:
            trajectories[strategy] = vwap(x, n, sliced_profile, direction)
        elif strategy in (STRATEGY_OPTI_C, STRATEGY_OPTI_SV):
            lam = 0.0 if strategy == STRATEGY_OPTI_C else cfg.lambda_risk
            params = CostModelParams(
                y0=cfg.y0, sigma_price=cfg.sigma_price, lam=lam, impact=model
            )
            ga = GaConfig(
                population_size=cfg.ga.population_size,
                max_stall_iterations=cfg.ga.max_stall_iterations,
                mutation_rate=cfg.ga.mutation_rate,
                crossover_rate=cfg.ga.crossover_rate,
                seed=_derive_seed(cfg.seed, scenario.key, strategy),
                elitism_count=cfg.ga.elitism_count,
                generation_cap=cfg.ga.generation_cap,
            )
            traj, trace = optimize_with_trace(
                x, n, direction, params, ga, TRAJECTORY_META, profile=sliced_profile
            )
            trajectories[strategy] = traj
            traces[strategy] = trace
    return trajectories, traces


def _run_scenario(scenario, cfg, model, profile, grids, scheme):
    n = scenario.n_buckets
    sliced = {}
    for day, grid in grids.items():
        if grid.n_buckets < n:
            raise EngineError(
                f"grid {day} has {grid.n_buckets} buckets, scenario needs {n}"
            )
        sliced[day] = grid.slice_tail(n)
    trajectories, traces = _scenario_trajectories(scenario, cfg, model, profile)
    series = {
        name: evaluate_days(traj, sliced, scheme)
        for name, traj in trajectories.items()
    }
    report = build_scenario_report(scenario, series)
    return report, trajectories, traces, series


def cmd_run(cfg: RunConfig) -> int:
    _require_dir(cfg.oos_dir, "out-of-sample data")
    scheme = VolumeBucketScheme()
    model, profile = _load_model(cfg)
    grids, _, _ = _load_grids(cfg.oos_dir, scheme)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    chash = cfg.config_hash()

    def worker(scenario):
        try:
            return scenario, _run_scenario(scenario, cfg, model, profile, grids, scheme), None
        except EngineError as exc:
            return scenario, None, exc

    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            outcomes = list(pool.map(worker, cfg.scenarios))
    else:
        outcomes = [worker(s) for s in cfg.scenarios]

    scenario_reports = []
    all_trajectories: Dict[Tuple[str, str], TradeTrajectory] = {}
    series_bundle: Dict[str, Tuple[Scenario, Dict[str, DaySeries]]] = {}
    failures: List[Tuple[str, str]] = []
    trace_dir = cfg.out_dir / "traces"
    for scenario, result, error in outcomes:
        if error is not None:
            failures.append((scenario.key, str(error)))
            print(f"run: scenario {scenario.key} FAILED: {error}", file=sys.stderr)
            continue
        report, trajectories, traces, series = result
        scenario_reports.append(report)
        series_bundle[scenario.key] = (scenario, series)
        for name, traj in trajectories.items():
            all_trajectories[(scenario.key, name)] = traj
        trace_dir.mkdir(parents=True, exist_ok=True)
        for name, trace in traces.items():
            write_json(
                {"trace": trace},
                trace_dir / f"{scenario.key.replace('@', '_at_')}_{name}.json",
                chash, cfg.seed,
            )
        print(f"run: scenario {scenario.key} ok "
              f"({report.stats[cfg.strategies[0]].sample_days} days)")

    report = BacktestReport(
        scenarios=scenario_reports,
        meta={
            "strategies": list(cfg.strategies),
            "oos_days": len(grids),
            "failed_scenarios": [k for k, _ in failures],
        },
    )
    write_json(report.to_dict(), cfg.out_dir / "report.json", chash, cfg.seed)
    write_bas_table(report, cfg.out_dir / "bas_table.csv", chash, cfg.seed)
    write_std_table(report, cfg.out_dir / "std_table.csv", chash, cfg.seed)
    write_prices_table(report, cfg.out_dir / "prices_table.csv", chash, cfg.seed)
    write_pvalues_table(report, cfg.out_dir / "pvalues_table.csv", chash, cfg.seed)
    write_trajectories_csv(all_trajectories, cfg.out_dir / "trajectories.csv",
                           chash, cfg.seed)

    fig_key = next(
        (k for k in cfg.robustness_scenarios if k in series_bundle),
        next(iter(series_bundle), None),
    )
    if fig_key is not None:
        render_trajectory_figure(
            {name: t for (key, name), t in all_trajectories.items() if key == fig_key},
            fig_key, cfg.out_dir / "trajectories.png", chash, cfg.seed,
        )

    robust_keys = [k for k in cfg.robustness_scenarios if k in series_bundle]
    if robust_keys:
        bundle = {k: series_bundle[k] for k in robust_keys}
        robustness = subsample_robustness(bundle, cfg.subsample_fractions, cfg.seed)
        write_json(
            {
                "paths": [
                    {
                        "fraction": frac,
                        "retained_days": retained,
                        "report": rep.to_dict(),
                    }
                    for frac, retained, rep in robustness
                ]
            },
            cfg.out_dir / "robustness.json", chash, cfg.seed,
        )
        write_robustness_csv(robustness, cfg.out_dir / "robustness.csv", chash, cfg.seed)
        render_robustness_figure(robustness, cfg.out_dir / "robustness.png",
                                 chash, cfg.seed)

    if failures:
        print(f"run: {len(failures)} scenario(s) failed: "
              f"{', '.join(k for k, _ in failures)}", file=sys.stderr)
        return EXIT_PARTIAL
    print(f"run: all {len(scenario_reports)} scenarios completed, "
          f"outputs in {cfg.out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# report (re-render from stored results)
# ---------------------------------------------------------------------------

def _report_from_dict(payload: dict) -> BacktestReport:
    from .backtest import ScenarioReport, StrategyStats

    scenarios = []
    for sd in payload["scenarios"]:
        stats = {
            name: StrategyStats(**vals) for name, vals in sd["strategies"].items()
        }
        scenarios.append(
            ScenarioReport(
                scenario_key=sd["scenario"],
                volume=sd["volume"],
                lead_time_minutes=sd["lead_time_minutes"],
                stats=stats,
                t_test_pvalues=sd["t_test_pvalues"],
            )
        )
    return BacktestReport(scenarios=scenarios, meta=payload.get("meta", {}))


def _read_trajectories_csv(path: Path) -> Dict[Tuple[str, str], TradeTrajectory]:
    rows: Dict[Tuple[str, str], List[float]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("scenario,"):
                continue
            scenario, strategy, _, n_k, _ = line.split(",")
            rows.setdefault((scenario, strategy), []).append(float(n_k))
    out = {}
    for key, alloc in rows.items():
        arr = np.asarray(alloc)
        direction = "sell" if np.any(arr < 0) else "buy"
        ticks = np.round(np.abs(arr) / 0.1).astype(np.int64)
        out[key] = TradeTrajectory(direction, float(ticks.sum()) * 0.1, ticks)
    return out


def cmd_report(cfg: RunConfig) -> int:
    report_path = cfg.out_dir / "report.json"
    _require_file(report_path, "stored report")
    with open(report_path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    chash = payload.get("meta", {}).get("config_hash", cfg.config_hash())
    seed = payload.get("meta", {}).get("seed", cfg.seed)
    report = _report_from_dict(payload)
    write_bas_table(report, cfg.out_dir / "bas_table.csv", chash, seed)
    write_std_table(report, cfg.out_dir / "std_table.csv", chash, seed)
    write_prices_table(report, cfg.out_dir / "prices_table.csv", chash, seed)
    write_pvalues_table(report, cfg.out_dir / "pvalues_table.csv", chash, seed)

    traj_path = cfg.out_dir / "trajectories.csv"
    if traj_path.exists():
        trajectories = _read_trajectories_csv(traj_path)
        keys = sorted({k for k, _ in trajectories})
        if keys:
            fig_key = keys[0]
            render_trajectory_figure(
                {name: t for (key, name), t in trajectories.items() if key == fig_key},
                fig_key, cfg.out_dir / "trajectories.png", chash, seed,
            )
    robust_path = cfg.out_dir / "robustness.json"
    if robust_path.exists():
        with open(robust_path, "r", encoding="utf-8") as fh:
            rpayload = json.load(fh)
        robustness = [
            (p["fraction"], p["retained_days"], _report_from_dict(p["report"]))
            for p in rpayload["paths"]
        ]
        if robustness:
            write_robustness_csv(robustness, cfg.out_dir / "robustness.csv", chash, seed)
            render_robustness_figure(robustness, cfg.out_dir / "robustness.png",
                                     chash, seed)
    print(f"report: tables and figures re-rendered in {cfg.out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="intraday-exec",
        description="Optimal order execution engine for intraday power markets",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("synth", "generate synthetic training and out-of-sample LOB files"),
        ("fit", "calibrate the impact model and volume profile"),
        ("run", "run all strategies over the scenario grid and write reports"),
        ("report", "re-render tables and figures from stored results"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="path to the key = value config file")
        p.add_argument("--seed", help="override the run seed")
        p.add_argument("--jobs", help="scenario-level parallelism")
        p.add_argument("--out", help="override the output directory")
        p.add_argument("--scenarios", help="comma list of VOLUME@LEAD cells")
        p.add_argument("--strategies", help="comma list of strategies to run")
    return parser


_COMMANDS = {
    "synth": cmd_synth,
    "fit": cmd_fit,
    "run": cmd_run,
    "report": cmd_report,
}

_DATA_ERRORS = (
    ParseError,
    SchemaVersionMismatch,
    ArrivalAfterCutoff,
    EmptyBook,
    EmptySample,
    FileNotFoundError,
    OSError,
)
_FIT_ERRORS = (InsufficientData, DegenerateInput, NotFitted)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {
        key: getattr(args, key)
        for key in ("seed", "jobs", "out", "scenarios", "strategies")
        if getattr(args, key, None) is not None
    }
    try:
        cfg = load_config(args.config, overrides)
        return _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _FIT_ERRORS as exc:
        print(f"fit error: {exc}", file=sys.stderr)
        return EXIT_FIT
    except _DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
