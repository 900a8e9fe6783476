"""Out-of-sample evaluation of trade trajectories against held-out grids.

A trajectory is scored day by day: every nonzero allocation n_k hits the
depth bucket containing its own clip size (that is what makes 5 MW and
1.1 MW clips indistinguishable when both land in the 1-5 MW bucket), and the
day's realized spread is the volume-weighted mean over the buckets hit.
Days with an empty required cell are excluded and counted, never imputed.

Scenario statistics are medians and means over days, a volume-weighted
standard deviation of the realized spread, and one-sided Welch tests of the
optimizer beating each benchmark.  Robustness reports re-aggregate the same
per-day series on nested random subsets of days.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import special

from .errors import DegenerateSample, EmptySample, MissingCell
from .lob import BUY, SELL, SIDE_INDEX, BucketGrid, VolumeBucketScheme
from .strategies import TradeTrajectory

HOURS_PER_YEAR = 24 * 365


@dataclass(frozen=True)
class Scenario:
    """One backtest cell: position size and nominal time to delivery."""

    volume: float
    lead_time_minutes: int
    direction: str = BUY

    def __post_init__(self):
        if self.lead_time_minutes <= 30:
            raise ValueError("lead time must exceed the 30-minute trading stop")
        if self.volume <= 0:
            raise ValueError("scenario volume must be positive")

    @property
    def n_buckets(self) -> int:
        return self.lead_time_minutes - 30

    @property
    def key(self) -> str:
        return f"{self.volume:g}@{self.lead_time_minutes}"


def realized_bas(
    traj: TradeTrajectory,
    grid: BucketGrid,
    scheme: Optional[VolumeBucketScheme] = None,
) -> float:
    """Volume-weighted realized spread of one day, EUR/MWh."""
    scheme = scheme or VolumeBucketScheme()
    if traj.n_buckets > grid.n_buckets:
        raise ValueError("grid does not cover the trajectory horizon")
    total = 0.0
    weight = 0.0
    for k in range(1, traj.n_buckets + 1):
        vol = float(traj.volumes[k - 1])
        if vol == 0.0:
            continue
        r = scheme.index_of(vol)
        if not grid.has_bas(k, r):
            raise MissingCell(k, r)
        total += vol * grid.bas(k, r)
        weight += vol
    return total / weight


def realized_price(
    traj: TradeTrajectory,
    grid: BucketGrid,
    direction: str,
    scheme: Optional[VolumeBucketScheme] = None,
) -> float:
    """Volume-weighted execution price of one day, EUR/MWh.

    Buyers accept resting asks and sellers resting bids (all strategies
    actively pay the spread), so the buy price reads the sell side of the
    grid and vice versa.
    """
    scheme = scheme or VolumeBucketScheme()
    if traj.n_buckets > grid.n_buckets:
        raise ValueError("grid does not cover the trajectory horizon")
    side = SELL if direction == BUY else BUY
    d = SIDE_INDEX[side]
    total = 0.0
    weight = 0.0
    for k in range(1, traj.n_buckets + 1):
        vol = float(traj.volumes[k - 1])
        if vol == 0.0:
            continue
        r = scheme.index_of(vol)
        price = grid.median_price[k - 1, r - 1, d]
        if math.isnan(price):
            raise MissingCell(k, r)
        total += vol * price
        weight += vol
    return total / weight


def weighted_std_bas(
    bas_series: Sequence[float],
    volumes: Sequence[float],
    conventional: bool = False,
) -> float:
    """Volume-weighted dispersion of realized spreads.

    The default implements the study's estimator literally: an unweighted
    squared-deviation numerator around the volume-weighted mean over a
    volume-sum denominator,

        sqrt( sum_t (BAS_t - mu)^2 / ( ((T-1)/T) * sum_t v_t ) ).

    ``conventional=True`` switches to the standard volume-weighted variance
    (same denominator, volume-weighted numerator); it exists for comparison
    and is excluded from acceptance checks.
    """
    bas = np.asarray(bas_series, dtype=float)
    v = np.asarray(volumes, dtype=float)
    if bas.shape != v.shape or bas.ndim != 1:
        raise ValueError("series and volumes must be equal-length 1-d arrays")
    t = len(bas)
    if t < 2:
        raise DegenerateSample(f"need at least 2 days, got {t}")
    if np.any(v <= 0):
        raise ValueError("volumes must be positive")
    mu = float(np.sum(v * bas) / np.sum(v))
    dev = (bas - mu) ** 2
    num = float(np.sum(v * dev)) if conventional else float(np.sum(dev))
    denom = (t - 1) / t * float(np.sum(v))
    return math.sqrt(num / denom)


def one_sided_t_test(sample_a: Sequence[float], sample_b: Sequence[float]) -> float:
    """Welch p-value for the alternative mean(a) < mean(b)."""
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    if len(a) < 2 or len(b) < 2:
        raise DegenerateSample("both samples need at least 2 observations")
    var_a = float(np.var(a, ddof=1))
    var_b = float(np.var(b, ddof=1))
    se2 = var_a / len(a) + var_b / len(b)
    diff = float(np.mean(a) - np.mean(b))
    if se2 == 0.0:
        return 0.5 if diff == 0.0 else (0.0 if diff < 0 else 1.0)
    t_stat = diff / math.sqrt(se2)
    dof = se2**2 / (
        (var_a / len(a)) ** 2 / (len(a) - 1) + (var_b / len(b)) ** 2 / (len(b) - 1)
    )
    return float(special.stdtr(dof, t_stat))


def savings_summary(bas_a: float, bas_b: float, daily_mw: float) -> float:
    """Annualized saving, EUR/year, of strategy a over strategy b.

    Uses the half-spread approximation: a trade pays BAS/2 against the mid,
    so a spread improvement of d saves d/2 per MWh on daily_mw MW around the
    clock.
    """
    if daily_mw < 0:
        raise ValueError("daily_mw must be nonnegative")
    return daily_mw * HOURS_PER_YEAR * (bas_b - bas_a) / 2.0


def savings_per_delivery_hour(bas_a: float, bas_b: float, mw: float) -> float:
    """Saving for a single delivery hour position, EUR."""
    return savings_summary(bas_a, bas_b, mw) / HOURS_PER_YEAR


# ---------------------------------------------------------------------------
# Day series and reports
# ---------------------------------------------------------------------------

@dataclass
class DaySeries:
    """Per-day realized metrics of one strategy in one scenario."""

    day_ids: List[str]
    bas: np.ndarray
    buy_price: np.ndarray
    sell_price: np.ndarray
    volume: float  # v^algo traded per day (the full position)
    excluded_days: int = 0

    def subset(self, keep: Sequence[str]) -> "DaySeries":
        keep_set = set(keep)
        idx = [i for i, d in enumerate(self.day_ids) if d in keep_set]
        return DaySeries(
            day_ids=[self.day_ids[i] for i in idx],
            bas=self.bas[idx],
            buy_price=self.buy_price[idx],
            sell_price=self.sell_price[idx],
            volume=self.volume,
            excluded_days=self.excluded_days,
        )


def evaluate_days(
    traj: TradeTrajectory,
    grids: Dict[str, BucketGrid],
    scheme: Optional[VolumeBucketScheme] = None,
) -> DaySeries:
    """Score a trajectory against every day's grid; skip and count days with
    missing cells."""
    scheme = scheme or VolumeBucketScheme()
    day_ids: List[str] = []
    bas: List[float] = []
    buy: List[float] = []
    sell: List[float] = []
    excluded = 0
    for day_id in sorted(grids):
        grid = grids[day_id]
        try:
            b = realized_bas(traj, grid, scheme)
            p_buy = realized_price(traj, grid, BUY, scheme)
            p_sell = realized_price(traj, grid, SELL, scheme)
        except MissingCell:
            excluded += 1
            continue
        day_ids.append(day_id)
        bas.append(b)
        buy.append(p_buy)
        sell.append(p_sell)
    return DaySeries(
        day_ids=day_ids,
        bas=np.asarray(bas),
        buy_price=np.asarray(buy),
        sell_price=np.asarray(sell),
        volume=traj.total,
        excluded_days=excluded,
    )


@dataclass
class StrategyStats:
    strategy: str
    median_bas: float
    mean_bas: float
    median_buy_price: float
    median_sell_price: float
    weighted_std: float
    sample_days: int
    excluded_days: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class ScenarioReport:
    scenario_key: str
    volume: float
    lead_time_minutes: int
    stats: Dict[str, StrategyStats]
    t_test_pvalues: Dict[str, float]

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario_key,
            "volume": self.volume,
            "lead_time_minutes": self.lead_time_minutes,
            "strategies": {k: v.to_dict() for k, v in sorted(self.stats.items())},
            "t_test_pvalues": dict(sorted(self.t_test_pvalues.items())),
        }


@dataclass
class BacktestReport:
    scenarios: List[ScenarioReport]
    meta: Dict[str, object] = field(default_factory=dict)

    def scenario(self, key: str) -> ScenarioReport:
        for s in self.scenarios:
            if s.scenario_key == key:
                return s
        raise KeyError(key)

    def to_dict(self) -> dict:
        return {
            "meta": dict(self.meta),
            "scenarios": [s.to_dict() for s in self.scenarios],
        }


REFERENCE_STRATEGY = "opti_c"


def build_scenario_report(
    scenario: Scenario, series: Dict[str, DaySeries]
) -> ScenarioReport:
    """Aggregate per-day series into the Tables-2/4/5 statistics."""
    stats: Dict[str, StrategyStats] = {}
    for name, s in series.items():
        if len(s.day_ids) == 0:
            raise EmptySample(f"{scenario.key}/{name} has no evaluable days")
        volumes = np.full(len(s.day_ids), s.volume)
        stats[name] = StrategyStats(
            strategy=name,
            median_bas=float(np.median(s.bas)),
            mean_bas=float(np.mean(s.bas)),
            median_buy_price=float(np.median(s.buy_price)),
            median_sell_price=float(np.median(s.sell_price)),
            weighted_std=(
                weighted_std_bas(s.bas, volumes) if len(s.day_ids) >= 2 else float("nan")
            ),
            sample_days=len(s.day_ids),
            excluded_days=s.excluded_days,
        )
    pvalues: Dict[str, float] = {}
    if REFERENCE_STRATEGY in series:
        ref = series[REFERENCE_STRATEGY]
        for name, s in series.items():
            if name == REFERENCE_STRATEGY or len(ref.bas) < 2 or len(s.bas) < 2:
                continue
            common = sorted(set(ref.day_ids) & set(s.day_ids))
            if len(common) < 2:
                continue
            pvalues[f"{REFERENCE_STRATEGY}<{name}"] = one_sided_t_test(
                ref.subset(common).bas, s.subset(common).bas
            )
    return ScenarioReport(
        scenario_key=scenario.key,
        volume=scenario.volume,
        lead_time_minutes=scenario.lead_time_minutes,
        stats=stats,
        t_test_pvalues=pvalues,
    )


def subsample_robustness(
    scenario_series: Dict[str, Tuple[Scenario, Dict[str, DaySeries]]],
    fractions: Sequence[float],
    seed: int,
) -> List[Tuple[float, List[str], BacktestReport]]:
    """Re-aggregate scenario metrics on nested random day subsets.

    Fractions are of the full day set and must be nonincreasing; each subset
    is drawn from the previous one (deleting days step by step), emulating a
    trader who only shows up on some days.  Returns (fraction, retained day
    ids, report) triples; deterministic in the seed.
    """
    fractions = list(fractions)
    if not fractions or any(not 0 < f <= 1 for f in fractions):
        raise ValueError("fractions must lie in (0, 1]")
    if any(b > a for a, b in zip(fractions, fractions[1:])):
        raise ValueError("fractions must be nonincreasing (nested subsets)")
    all_days = sorted(
        {d for _, series in scenario_series.values()
         for s in series.values() for d in s.day_ids}
    )
    if not all_days:
        raise EmptySample("no evaluable days to subsample")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed))
    retained = list(all_days)
    out: List[Tuple[float, List[str], BacktestReport]] = []
    for frac in fractions:
        target = max(1, int(round(frac * len(all_days))))
        if target > len(retained):
            target = len(retained)
        keep_idx = rng.choice(len(retained), size=target, replace=False)
        retained = sorted(retained[i] for i in sorted(keep_idx))
        reports = []
        for key in sorted(scenario_series):
            scenario, series = scenario_series[key]
            sub = {name: s.subset(retained) for name, s in series.items()}
            reports.append(build_scenario_report(scenario, sub))
        out.append(
            (frac, list(retained), BacktestReport(scenarios=reports,
                                                  meta={"fraction": frac, "seed": seed}))
        )
    return out
