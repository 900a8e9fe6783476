"""Run configuration: one documented key = value file drives every command.

The file is INI-style (configparser).  Every section has working defaults
pre-filled with the study's parameters (arrival price 47.22, daily volatility
20.57, zero drift, risk aversion 2e-5), so a config file only needs to state
what differs.  CLI flags --seed/--jobs/--out/--scenarios/--strategies
override the file.
"""
from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .backtest import Scenario
from .errors import ConfigError
from .impact import FitConfig
from .ingest import SynthConfig
from .lob import BUY, SELL
from .optimizer import GaConfig
from .strategies import ALL_STRATEGIES

MINUTES_PER_DAY = 1440.0

DEFAULTS = {
    "paths": {
        "training_dir": "data/train",
        "oos_dir": "data/oos",
        "out_dir": "out",
        "model_file": "out/impact_model.json",
        "profile_file": "out/volume_profile.json",
    },
    "synth": {
        "seed": "42",
        "training_days": "40",
        "oos_days": "200",
        "hours": "3,12",
        "training_start_date": "2018-01-01",
        "oos_start_date": "2019-01-01",
        "lead_time_minutes": "300",
        "base_price": "47.22",
        "daily_volatility": "20.57",
        "spread_profile": "empirical-shape",
        "volume_profile": "empirical-shape",
        "xbid_cut_minutes": "60",
        "local_start_minutes": "30",
    },
    "impact": {
        "epsilon_floor": "0.01",
        "k_interior_knots": "10",
        "n_interior_knots": "8",
        "min_stratum_obs": "8",
    },
    "ga": {
        "population_size": "200",
        "max_stall_iterations": "650",
        "mutation_rate": "0.1",
        "crossover_rate": "0.8",
        "elitism_count": "5",
        "generation_cap": "13000",
    },
    "run": {
        "seed": "42",
        "jobs": "1",
        "scenarios": "100@90,100@300,300@90,300@300,1000@90,1000@300",
        "strategies": "iobe,twap,vwap,opti_c,opti_sv",
        "direction": "buy",
        "y0": "47.22",
        "sigma_daily": "20.57",
        "drift": "0",
        "lambda_risk": "2e-5",
        "subsample_fractions": "1.0,0.75,0.4,0.375",
        "robustness_scenarios": "300@300,300@90",
    },
}


@dataclass
class RunConfig:
    training_dir: Path
    oos_dir: Path
    out_dir: Path
    model_file: Path
    profile_file: Path
    synth: SynthConfig
    training_days: int
    oos_days: int
    hours: List[int]
    training_start_date: str
    oos_start_date: str
    lead_time_minutes: int
    fit: FitConfig
    ga: GaConfig
    seed: int
    jobs: int
    scenarios: List[Scenario]
    strategies: List[str]
    y0: float
    sigma_daily: float
    drift: float
    lambda_risk: float
    subsample_fractions: List[float]
    robustness_scenarios: List[str]
    raw: Dict[str, Dict[str, str]] = field(default_factory=dict)

    @property
    def sigma_price(self) -> float:
        """Per-minute-bucket price volatility scaled from the daily figure."""
        return self.sigma_daily / MINUTES_PER_DAY**0.5

    def config_hash(self) -> str:
        canonical = "\n".join(
            f"{section}.{key}={value}"
            for section in sorted(self.raw)
            for key, value in sorted(self.raw[section].items())
        )
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def _parse_scenario(token: str) -> Scenario:
    try:
        volume_s, lead_s = token.split("@")
        return Scenario(volume=float(volume_s), lead_time_minutes=int(lead_s))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad scenario {token!r} (expected VOLUME@LEAD): {exc}") from None


def load_config(
    path: Optional[str] = None,
    overrides: Optional[Dict[str, str]] = None,
) -> RunConfig:
    """Parse the config file, apply defaults, validate, and apply overrides.

    ``overrides`` maps flag names (seed, jobs, out, scenarios, strategies)
    to raw string values.
    """
    parser = configparser.ConfigParser()
    parser.read_dict(DEFAULTS)
    if path is not None:
        if not Path(path).exists():
            raise ConfigError(f"config file {path} does not exist")
        try:
            with open(path, "r", encoding="utf-8") as fh:
                parser.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from None
        for section in parser.sections():
            if section not in DEFAULTS:
                raise ConfigError(f"unknown config section [{section}]")
            for key in parser[section]:
                if key not in DEFAULTS[section]:
                    raise ConfigError(f"unknown key {key!r} in section [{section}]")

    overrides = overrides or {}
    if "seed" in overrides:
        parser["synth"]["seed"] = overrides["seed"]
        parser["run"]["seed"] = overrides["seed"]
    if "jobs" in overrides:
        parser["run"]["jobs"] = overrides["jobs"]
    if "out" in overrides:
        out = overrides["out"]
        parser["paths"]["out_dir"] = out
        parser["paths"]["model_file"] = str(Path(out) / "impact_model.json")
        parser["paths"]["profile_file"] = str(Path(out) / "volume_profile.json")
    if "scenarios" in overrides:
        parser["run"]["scenarios"] = overrides["scenarios"]
    if "strategies" in overrides:
        parser["run"]["strategies"] = overrides["strategies"]

    raw = {s: dict(parser[s]) for s in parser.sections()}

    def split_list(value: str) -> List[str]:
        return [v.strip() for v in value.split(",") if v.strip()]

    try:
        synth = SynthConfig(
            seed=parser.getint("synth", "seed"),
            base_price=parser.getfloat("synth", "base_price"),
            daily_volatility=parser.getfloat("synth", "daily_volatility"),
            spread_profile=parser.get("synth", "spread_profile"),
            volume_profile=parser.get("synth", "volume_profile"),
            xbid_cut_minutes=parser.getint("synth", "xbid_cut_minutes"),
            local_start_minutes=parser.getint("synth", "local_start_minutes"),
        )
        fit = FitConfig(
            epsilon_floor=parser.getfloat("impact", "epsilon_floor"),
            k_interior_knots=parser.getint("impact", "k_interior_knots"),
            n_interior_knots=parser.getint("impact", "n_interior_knots"),
            min_stratum_obs=parser.getint("impact", "min_stratum_obs"),
        )
        ga = GaConfig(
            population_size=parser.getint("ga", "population_size"),
            max_stall_iterations=parser.getint("ga", "max_stall_iterations"),
            mutation_rate=parser.getfloat("ga", "mutation_rate"),
            crossover_rate=parser.getfloat("ga", "crossover_rate"),
            seed=parser.getint("run", "seed"),
            elitism_count=parser.getint("ga", "elitism_count"),
            generation_cap=parser.getint("ga", "generation_cap"),
        )
        scenarios = [_parse_scenario(t) for t in split_list(parser.get("run", "scenarios"))]
        strategies = split_list(parser.get("run", "strategies"))
        direction = parser.get("run", "direction")
        if direction not in (BUY, SELL):
            raise ConfigError(f"direction must be buy or sell, got {direction!r}")
        scenarios = [
            Scenario(s.volume, s.lead_time_minutes, direction) for s in scenarios
        ]
        for name in strategies:
            if name not in ALL_STRATEGIES:
                raise ConfigError(
                    f"unknown strategy {name!r} (choose from {', '.join(ALL_STRATEGIES)})"
                )
        fractions = [float(v) for v in split_list(parser.get("run", "subsample_fractions"))]
        hours = [int(h) for h in split_list(parser.get("synth", "hours"))]
        if any(not 0 <= h <= 23 for h in hours) or not hours:
            raise ConfigError("synth hours must be a nonempty list of 0..23")
        config = RunConfig(
            training_dir=Path(parser.get("paths", "training_dir")),
            oos_dir=Path(parser.get("paths", "oos_dir")),
            out_dir=Path(parser.get("paths", "out_dir")),
            model_file=Path(parser.get("paths", "model_file")),
            profile_file=Path(parser.get("paths", "profile_file")),
            synth=synth,
            training_days=parser.getint("synth", "training_days"),
            oos_days=parser.getint("synth", "oos_days"),
            hours=hours,
            training_start_date=parser.get("synth", "training_start_date"),
            oos_start_date=parser.get("synth", "oos_start_date"),
            lead_time_minutes=parser.getint("synth", "lead_time_minutes"),
            fit=fit,
            ga=ga,
            seed=parser.getint("run", "seed"),
            jobs=parser.getint("run", "jobs"),
            scenarios=scenarios,
            strategies=strategies,
            y0=parser.getfloat("run", "y0"),
            sigma_daily=parser.getfloat("run", "sigma_daily"),
            drift=parser.getfloat("run", "drift"),
            lambda_risk=parser.getfloat("run", "lambda_risk"),
            subsample_fractions=fractions,
            robustness_scenarios=split_list(parser.get("run", "robustness_scenarios")),
        )
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(str(exc)) from None

    if config.lead_time_minutes <= 30:
        raise ConfigError("lead_time_minutes must exceed 30")
    if config.training_days < 1 or config.oos_days < 1:
        raise ConfigError("training_days and oos_days must be positive")
    for s in config.scenarios:
        if s.lead_time_minutes > config.lead_time_minutes:
            raise ConfigError(
                f"scenario {s.key} lead exceeds the generated horizon "
                f"{config.lead_time_minutes}"
            )
    for key in config.robustness_scenarios:
        if key not in {s.key for s in config.scenarios}:
            raise ConfigError(f"robustness scenario {key!r} not in the scenario list")
    if config.drift != 0.0:
        raise ConfigError("price drift is fixed at zero in this model")
    config.raw = raw
    return config
