"""Trade trajectories and benchmark allocation strategies.

A trajectory allocates a total of X MWh over N one-minute buckets.  All
volumes are multiples of the 0.1 MWh exchange tick, so allocations are held
as integer deci-MWh internally and only converted to (signed) floats at the
boundary: buys are positive, sells negative, which keeps the cost notation
position-neutral.

Benchmarks:

* IOBE — the whole position in bucket 1 ("one click in the order book");
* TWAP — equal split, residual ticks to the earliest buckets;
* VWAP — proportional to a historical volume profile, largest-remainder
  rounding so the total is met exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Union

import numpy as np

from .errors import AllZeroVolume, InfeasibleTick, LengthMismatch
from .lob import BUY, SELL, BucketGrid

TICK = 0.1

STRATEGY_IOBE = "iobe"
STRATEGY_TWAP = "twap"
STRATEGY_VWAP = "vwap"
STRATEGY_OPTI_C = "opti_c"
STRATEGY_OPTI_SV = "opti_sv"
ALL_STRATEGIES = (
    STRATEGY_IOBE, STRATEGY_TWAP, STRATEGY_VWAP, STRATEGY_OPTI_C, STRATEGY_OPTI_SV
)


def volume_to_ticks(x: float) -> int:
    ticks = round(x / TICK)
    if abs(x - ticks * TICK) > 1e-9:
        raise InfeasibleTick(f"{x} MWh is not a multiple of {TICK} MWh")
    return int(ticks)


@dataclass(frozen=True)
class TradeTrajectory:
    """Executed volume per minute bucket with derived inventory path.

    ``ticks`` is the unsigned allocation in deci-MWh; signed views apply the
    direction.  Invariants: ticks sum to the total exactly, inventory starts
    at the signed total and ends at zero.
    """

    direction: str
    total: float
    ticks: np.ndarray

    def __post_init__(self):
        if self.direction not in (BUY, SELL):
            raise ValueError(f"unknown direction {self.direction!r}")
        object.__setattr__(
            self, "ticks", np.asarray(self.ticks, dtype=np.int64)
        )
        if np.any(self.ticks < 0):
            raise ValueError("tick allocations must be nonnegative")
        if int(self.ticks.sum()) != volume_to_ticks(self.total):
            raise ValueError("allocations must sum to the total volume")

    @property
    def n_buckets(self) -> int:
        return len(self.ticks)

    @property
    def sign(self) -> float:
        return 1.0 if self.direction == BUY else -1.0

    @property
    def allocations(self) -> np.ndarray:
        """Signed n_k in MWh: positive buys, negative sells."""
        return self.sign * self.ticks * TICK + 0.0  # normalize -0.0

    @property
    def volumes(self) -> np.ndarray:
        """Unsigned |n_k| in MWh."""
        return self.ticks * TICK

    @property
    def inventory(self) -> np.ndarray:
        """x_0..x_N with x_0 = signed total and x_N = 0, computed in ticks
        so the terminal position is exactly zero."""
        remaining = int(self.ticks.sum()) - np.concatenate(
            ([0], np.cumsum(self.ticks))
        )
        return self.sign * remaining * TICK + 0.0  # normalize -0.0


def iobe(x: float, n_buckets: int, direction: str) -> TradeTrajectory:
    """Instant order book execution: everything in the first minute."""
    if x <= 0 or n_buckets < 1:
        raise ValueError("need positive volume and at least one bucket")
    ticks = np.zeros(n_buckets, dtype=np.int64)
    ticks[0] = volume_to_ticks(x)
    return TradeTrajectory(direction, x, ticks)


def _cumulative_ceiling_ticks(cum_targets: np.ndarray, total: int) -> np.ndarray:
    """Ticks from a nondecreasing cumulative target via the ceiling rule.

    Rounding the cumulative schedule up (rather than the per-bucket amounts)
    keeps the inventory within one tick of the unrounded line everywhere and
    pushes each stretch's residual tick to its earliest bucket.  The 1e-9
    guard keeps exact integer targets from ceiling up on float noise.
    """
    cum = np.ceil(cum_targets - 1e-9).astype(np.int64)
    cum[-1] = total
    return np.diff(np.concatenate(([0], cum)))


def twap(x: float, n_buckets: int, direction: str) -> TradeTrajectory:
    """Equal split at tick resolution: every bucket gets floor or ceil of
    X/N, residual ticks spread so the inventory hugs the straight line."""
    if x <= 0 or n_buckets < 1:
        raise ValueError("need positive volume and at least one bucket")
    total = volume_to_ticks(x)
    k = np.arange(1, n_buckets + 1, dtype=np.int64)
    # exact integer ceil of k * total / N
    cum = -((-k * total) // n_buckets)
    ticks = np.diff(np.concatenate(([0], cum)))
    return TradeTrajectory(direction, x, ticks)


@dataclass(frozen=True)
class VolumeProfile:
    """Expected traded volume per minute bucket from a training period."""

    v_hat: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "v_hat", np.asarray(self.v_hat, dtype=float))
        if np.any(self.v_hat < 0):
            raise ValueError("volume estimates must be nonnegative")
        if not np.any(self.v_hat > 0):
            raise AllZeroVolume("volume profile has no positive entry")

    def __len__(self) -> int:
        return len(self.v_hat)

    def factors(self) -> np.ndarray:
        """Reallocation factors F_k = v_hat_k / mean(v_hat); mean(F) = 1."""
        return self.v_hat / self.v_hat.mean()

    def slice_tail(self, n_buckets: int) -> "VolumeProfile":
        """Profile for a later arrival: the last n buckets, since every
        horizon ends at the same 30-minute trading stop."""
        if not 1 <= n_buckets <= len(self.v_hat):
            raise LengthMismatch(
                f"cannot slice {n_buckets} buckets from a {len(self.v_hat)}-bucket profile"
            )
        return VolumeProfile(self.v_hat[-n_buckets:])

    def to_dict(self) -> dict:
        return {"v_hat": [float(v) for v in self.v_hat]}

    @classmethod
    def from_dict(cls, d: dict) -> "VolumeProfile":
        return cls(np.asarray(d["v_hat"], dtype=float))


def volume_profile(grids: Union[BucketGrid, Sequence[BucketGrid]]) -> VolumeProfile:
    """Empirical volume per bucket averaged over the training grids."""
    if isinstance(grids, BucketGrid):
        grids = [grids]
    grids = list(grids)
    if not grids:
        raise AllZeroVolume("no training grids")
    n = grids[0].n_buckets
    for g in grids:
        if g.n_buckets != n:
            raise LengthMismatch("training grids disagree on bucket count")
    v_hat = np.mean([g.volume_per_minute() for g in grids], axis=0)
    return VolumeProfile(v_hat)


def vwap(
    x: float, n_buckets: int, profile: VolumeProfile, direction: str
) -> TradeTrajectory:
    """Allocation proportional to the volume profile, tick-rounded through
    the cumulative-ceiling rule so the total is met exactly and a uniform
    profile reproduces TWAP tick for tick."""
    if x <= 0 or n_buckets < 1:
        raise ValueError("need positive volume and at least one bucket")
    if len(profile) != n_buckets:
        raise LengthMismatch(
            f"profile has {len(profile)} buckets, trajectory needs {n_buckets}"
        )
    total = volume_to_ticks(x)
    cum_share = np.cumsum(profile.v_hat) / profile.v_hat.sum()
    ticks = _cumulative_ceiling_ticks(total * cum_share, total)
    return TradeTrajectory(direction, x, ticks)


def write_trajectory_csv(traj: TradeTrajectory, path) -> None:
    """Export columns k, n_k, x_k."""
    alloc = traj.allocations
    inv = traj.inventory
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("k,n_k,x_k\n")
        for k in range(1, traj.n_buckets + 1):
            fh.write(f"{k},{alloc[k - 1]:.1f},{inv[k]:.1f}\n")
