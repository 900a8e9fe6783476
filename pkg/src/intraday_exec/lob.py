"""Limit-order-book domain types and deterministic aggregation.

The continuous intraday session is discretized along two axes:

* time    — one-minute buckets k = 1..N counted from position arrival, where
            N = floor(lead_minutes) - 30 because all trading stops 30 minutes
            before physical delivery;
* volume  — 23 cumulative-depth buckets (1 MW, 1-5 MW, ... , >500 MW) walked
            through the price-sorted book, so "the spread for the first
            r-bucket MWh" is well defined at any instant.

Aggregation reduces an event stream to per-cell statistics over per-second
book snapshots: for every second the resting liquidity is split across the
volume buckets and each bucket gets a volume-weighted price per side.  Cell
medians/means are then taken over the seconds of the minute.  Everything here
is a pure function of its inputs; identical inputs give bit-identical grids.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ArrivalAfterCutoff, EmptyBook, MissingSide

BUY = "buy"
SELL = "sell"
SIDES = (BUY, SELL)
SIDE_INDEX = {BUY: 0, SELL: 1}

ACTION_ADD = "add"
ACTION_CANCEL = "cancel"
ACTION_MATCH = "match"
ACTIONS = (ACTION_ADD, ACTION_CANCEL, ACTION_MATCH)

PRICE_TICK = 0.01
VOLUME_TICK = 0.1
PRICE_BAND = (-500.0, 3000.0)

# Minutes before delivery at which all activity stops (intra-grid trading only
# afterwards, and the reference indices stop there as well).
TRADING_STOP_MINUTES = 30

# Delivery hours counted as peak load, hour-beginning convention: [8, 20).
PEAK_HOUR_RANGE = (8, 20)


def _is_tick(value: float, tick: float) -> bool:
    scaled = value / tick
    return abs(scaled - round(scaled)) < 1e-6


@dataclass(frozen=True)
class OrderEvent:
    """One order lifecycle record.

    ``valid_from``/``valid_to`` are integer seconds since observation start;
    an order rests in the book at second s iff valid_from <= s <= valid_to.
    ``action`` describes the record type: ``add`` is a resting order (its
    validity window already ends at the actual removal time), ``cancel`` is a
    bookkeeping duplicate of an add that was removed early, and ``match`` is
    an executed trade at second ``valid_from``.
    """

    delivery_start: datetime
    side: str
    price: float
    volume: float
    valid_from: int
    valid_to: int
    action: str = ACTION_ADD

    def __post_init__(self):
        if self.side not in SIDES:
            raise ValueError(f"unknown side {self.side!r}")
        if self.action not in ACTIONS:
            raise ValueError(f"unknown action {self.action!r}")
        if self.volume <= 0:
            raise ValueError(f"volume must be positive, got {self.volume}")
        if self.valid_from >= self.valid_to:
            raise ValueError(
                f"valid_from {self.valid_from} must precede valid_to {self.valid_to}"
            )
        if not PRICE_BAND[0] <= self.price <= PRICE_BAND[1]:
            raise ValueError(f"price {self.price} outside sanity band {PRICE_BAND}")
        if not _is_tick(self.price, PRICE_TICK):
            raise ValueError(f"price {self.price} off the 0.01 tick")
        if not _is_tick(self.volume, VOLUME_TICK):
            raise ValueError(f"volume {self.volume} off the 0.1 MWh tick")


# Upper edges of the cumulative-volume buckets b_1..b_22; b_23 is open-ended.
_DEFAULT_EDGES = (
    1.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0,
    40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 100.0,
    125.0, 150.0, 175.0, 200.0,
    250.0, 300.0, 400.0, 500.0,
)


@dataclass(frozen=True)
class VolumeBucketScheme:
    """Partition of cumulative depth [0, inf) into 23 volume buckets.

    Bucket r covers cumulative volume (edge[r-1], edge[r]] with edge[0] = 0;
    the first bucket additionally contains 0 so that every nonnegative volume
    belongs to exactly one bucket.  A trade of 5 MW therefore falls in bucket
    2 (1-5 MW], which is what makes 5 MW and 1.1 MW clips indistinguishable at
    grid resolution.
    """

    upper_edges: Tuple[float, ...] = _DEFAULT_EDGES

    def __post_init__(self):
        edges = self.upper_edges
        if len(edges) < 1 or any(b <= a for a, b in zip(edges, edges[1:])):
            raise ValueError("bucket edges must be strictly increasing")
        if edges[0] <= 0:
            raise ValueError("first bucket edge must be positive")

    @property
    def n_buckets(self) -> int:
        return len(self.upper_edges) + 1

    def edges_array(self) -> np.ndarray:
        """Bucket boundaries including 0 and +inf, length n_buckets + 1."""
        return np.concatenate(([0.0], self.upper_edges, [np.inf]))

    def index_of(self, volume: float) -> int:
        """1-based bucket index containing cumulative volume ``volume``."""
        if volume < 0:
            raise ValueError(f"volume must be nonnegative, got {volume}")
        if volume == 0:
            return 1
        # (edge[r-1], edge[r]] membership
        return int(np.searchsorted(np.asarray(self.upper_edges), volume, side="left")) + 1

    def midpoint(self, r: int) -> float:
        """Representative volume of bucket r: interval midpoint, lower edge
        for the open-ended last bucket."""
        if not 1 <= r <= self.n_buckets:
            raise ValueError(f"bucket index {r} outside 1..{self.n_buckets}")
        edges = self.edges_array()
        if r == self.n_buckets:
            return float(edges[r - 1])
        return float(0.5 * (edges[r - 1] + edges[r]))


def time_bucket_membership(order: OrderEvent, k: int) -> bool:
    """Whether ``order`` is active at any second of minute bucket ``k``.

    Bucket k spans seconds [60(k-1), 60k); with inclusive validity endpoints
    this is exactly valid_from < 60k and valid_to >= 60(k-1).
    """
    if k < 1:
        raise ValueError(f"minute bucket must be >= 1, got {k}")
    return order.valid_from < 60 * k and order.valid_to >= 60 * (k - 1)


def _sort_side(orders: Sequence[OrderEvent], side: str) -> List[OrderEvent]:
    # Buys best-first means descending price; sells ascending.  Ties resolve
    # by arrival then volume so the walk is deterministic.
    sign = -1.0 if side == BUY else 1.0
    return sorted(orders, key=lambda o: (sign * o.price, o.valid_from, o.volume))


def _split_allocations(volumes: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Allocation matrix (orders x buckets) of a cumulative walk.

    Order j occupies cumulative interval (cum[j-1], cum[j]]; its overlap with
    each bucket interval is the allocated quantity.  Column sums therefore
    conserve total volume exactly up to float rounding.
    """
    cum_hi = np.cumsum(volumes)
    cum_lo = cum_hi - volumes
    lo = np.maximum(cum_lo[:, None], edges[None, :-1])
    hi = np.minimum(cum_hi[:, None], edges[None, 1:])
    return np.maximum(hi - lo, 0.0)


def cumulative_volume_split(
    orders: Sequence[OrderEvent],
    side: str,
    scheme: VolumeBucketScheme,
) -> Dict[int, List[Tuple[OrderEvent, float]]]:
    """Assign each MWh of a one-sided book to its cumulative-volume bucket.

    Orders are price-sorted (buys descending, sells ascending), the cumulative
    volume is walked, and an order straddling a bucket boundary is split
    proportionally so no volume is discarded.  Returns bucket index ->
    [(order, allocated MWh)] for buckets that received volume.
    """
    if not orders:
        raise EmptyBook(f"no {side} orders to split")
    if any(o.side != side for o in orders):
        raise ValueError("orders must all belong to the requested side")
    ordered = _sort_side(orders, side)
    volumes = np.array([o.volume for o in ordered])
    alloc = _split_allocations(volumes, scheme.edges_array())
    out: Dict[int, List[Tuple[OrderEvent, float]]] = {}
    rows, cols = np.nonzero(alloc > 1e-12)
    for j, r in zip(rows.tolist(), cols.tolist()):
        out.setdefault(r + 1, []).append((ordered[j], float(alloc[j, r])))
    return out


def bas_for_bucket(grid_cell_buy: Optional[float], grid_cell_sell: Optional[float]) -> float:
    """Bid-ask spread of a cell: sell-side price minus buy-side price.

    Negative values are legal (crossed synthetic books) and are flagged by the
    aggregation rather than rejected here.
    """
    if grid_cell_buy is None or (isinstance(grid_cell_buy, float) and math.isnan(grid_cell_buy)):
        raise MissingSide("buy side empty")
    if grid_cell_sell is None or (isinstance(grid_cell_sell, float) and math.isnan(grid_cell_sell)):
        raise MissingSide("sell side empty")
    return grid_cell_sell - grid_cell_buy


def is_peak_hour(delivery_start: datetime) -> bool:
    return PEAK_HOUR_RANGE[0] <= delivery_start.hour < PEAK_HOUR_RANGE[1]


def is_weekend(delivery_start: datetime) -> bool:
    return delivery_start.weekday() >= 5


@dataclass
class BucketGrid:
    """Aggregated per-(minute k, volume bucket r, side d) statistics.

    Arrays are 0-indexed internally; the accessors below take the 1-based
    k and r used throughout.  NaN marks an empty cell; downstream consumers
    must skip empties, never impute a zero spread.
    """

    n_buckets: int
    n_volume_buckets: int
    delivery_start: Optional[datetime] = None
    median_bas: np.ndarray = field(default=None)  # (N, R)
    mean_bas: np.ndarray = field(default=None)
    median_price: np.ndarray = field(default=None)  # (N, R, 2) buy/sell
    traded_volume: np.ndarray = field(default=None)  # (N, R, 2)
    order_count: np.ndarray = field(default=None)  # (N, R, 2)
    crossed: np.ndarray = field(default=None)  # (N, R) bool

    def __post_init__(self):
        n, rr = self.n_buckets, self.n_volume_buckets
        if self.median_bas is None:
            self.median_bas = np.full((n, rr), np.nan)
        if self.mean_bas is None:
            self.mean_bas = np.full((n, rr), np.nan)
        if self.median_price is None:
            self.median_price = np.full((n, rr, 2), np.nan)
        if self.traded_volume is None:
            self.traded_volume = np.zeros((n, rr, 2))
        if self.order_count is None:
            self.order_count = np.zeros((n, rr, 2), dtype=np.int64)
        if self.crossed is None:
            self.crossed = np.zeros((n, rr), dtype=bool)

    @property
    def is_weekend(self) -> bool:
        return self.delivery_start is not None and is_weekend(self.delivery_start)

    @property
    def is_peak(self) -> bool:
        return self.delivery_start is not None and is_peak_hour(self.delivery_start)

    @property
    def crossed_cell_count(self) -> int:
        return int(self.crossed.sum())

    def has_bas(self, k: int, r: int) -> bool:
        return not math.isnan(self.median_bas[k - 1, r - 1])

    def bas(self, k: int, r: int) -> float:
        return float(self.median_bas[k - 1, r - 1])

    def price(self, k: int, r: int, side: str) -> float:
        return float(self.median_price[k - 1, r - 1, SIDE_INDEX[side]])

    def volume_per_minute(self) -> np.ndarray:
        """Total traded volume per minute bucket, both sides, all depths."""
        return self.traded_volume.sum(axis=(1, 2))

    def slice_tail(self, n_buckets: int) -> "BucketGrid":
        """Grid for a later arrival: the last n minute buckets.

        Every horizon ends at the same 30-minute trading stop and arrivals
        land on whole minutes, so bucket boundaries coincide and slicing is
        exact.
        """
        if not 1 <= n_buckets <= self.n_buckets:
            raise ValueError(
                f"cannot slice {n_buckets} buckets from {self.n_buckets}"
            )
        s = slice(self.n_buckets - n_buckets, self.n_buckets)
        return BucketGrid(
            n_buckets,
            self.n_volume_buckets,
            delivery_start=self.delivery_start,
            median_bas=self.median_bas[s],
            mean_bas=self.mean_bas[s],
            median_price=self.median_price[s],
            traded_volume=self.traded_volume[s],
            order_count=self.order_count[s],
            crossed=self.crossed[s],
        )


def _weighted_median(values: List[float], weights: List[int]) -> float:
    # Weights are whole seconds (<= 60 per minute), so this equals the plain
    # median over the weight-expanded per-second series.
    if len(values) == 1:
        return values[0]
    pairs = sorted(zip(values, weights))
    total = sum(weights)
    lo_idx = (total - 1) // 2  # the two middle positions of the expansion
    hi_idx = total // 2
    acc = 0
    lo_val = None
    for v, w in pairs:
        acc += w
        if lo_val is None and acc > lo_idx:
            lo_val = v
        if acc > hi_idx:
            return 0.5 * (lo_val + v)
    return lo_val


def _bucket_prices(
    prices: np.ndarray, volumes: np.ndarray, edges: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Per-bucket volume-weighted price of an already-sorted one-sided book.

    Returns (vw prices, order x bucket allocation matrix); the price is NaN
    where the bucket received nothing.
    """
    n_r = len(edges) - 1
    if len(prices) == 0:
        return np.full(n_r, np.nan), np.zeros((0, n_r))
    alloc = _split_allocations(volumes, edges)
    total = alloc.sum(axis=0)
    with np.errstate(invalid="ignore"):
        vw = np.where(total > 1e-12, (alloc * prices[:, None]).sum(axis=0) / total, np.nan)
    return vw, alloc


def aggregate(
    events: Sequence[OrderEvent],
    delivery_s: float,
    arrival_s: float,
    scheme: Optional[VolumeBucketScheme] = None,
    delivery_start: Optional[datetime] = None,
) -> BucketGrid:
    """Aggregate an event stream into a BucketGrid.

    ``delivery_s`` and ``arrival_s`` are seconds since observation start.  The
    horizon is N = floor(lead minutes) - 30 so the last bucket ends at the
    30-minute trading stop.  Resting liquidity comes from ``add`` records
    only: ``cancel`` rows duplicate their add (dropping them avoids counting
    an order twice) and ``match`` rows feed the traded-volume statistics.

    Book snapshots are evaluated per second, but since the book only changes
    at event boundaries the minute is processed as constant segments weighted
    by their length in seconds, which is exact and much cheaper.
    """
    scheme = scheme or VolumeBucketScheme()
    lead_minutes = math.floor((delivery_s - arrival_s) / 60.0)
    n = lead_minutes - TRADING_STOP_MINUTES
    if n < 1:
        raise ArrivalAfterCutoff(
            f"arrival leaves {lead_minutes} lead minutes; need more than "
            f"{TRADING_STOP_MINUTES}"
        )
    if delivery_start is None:
        for e in events:
            delivery_start = e.delivery_start
            break
    grid = BucketGrid(n, scheme.n_buckets, delivery_start=delivery_start)
    edges = scheme.edges_array()
    horizon = 60 * n
    shift = arrival_s

    # rel_from, rel_to, price, volume, side index, seq (for deterministic ties)
    adds: List[Tuple[int, int, float, float, int, int]] = []
    for seq, e in enumerate(events):
        rf = e.valid_from - shift
        rt = e.valid_to - shift
        if e.action == ACTION_ADD:
            if rt < 0 or rf >= horizon:
                continue
            adds.append((int(rf), int(rt), e.price, e.volume, SIDE_INDEX[e.side], seq))
        elif e.action == ACTION_MATCH:
            if 0 <= rf < horizon:
                k = int(rf // 60) + 1
                r = scheme.index_of(e.volume)
                grid.traded_volume[k - 1, r - 1, SIDE_INDEX[e.side]] += e.volume
        # cancel rows intentionally ignored

    adds.sort(key=lambda a: a[0])
    pending = 0
    active: List[Tuple[int, int, float, float, int, int]] = []

    for k in range(1, n + 1):
        lo, hi = 60 * (k - 1), 60 * k
        while pending < len(adds) and adds[pending][0] < hi:
            active.append(adds[pending])
            pending += 1
        active = [a for a in active if a[1] >= lo]
        if not active:
            continue

        cuts = {lo, hi}
        for a in active:
            if a[0] > lo:
                cuts.add(a[0])
            if lo < a[1] + 1 < hi:
                cuts.add(a[1] + 1)
        bounds = sorted(cuts)

        # per (r): list of (value, weight); per (r, d) for prices
        spread_acc: Dict[int, Tuple[List[float], List[int]]] = {}
        price_acc: Dict[Tuple[int, int], Tuple[List[float], List[int]]] = {}
        seen_orders: Dict[Tuple[int, int], set] = {}

        for a0, a1 in zip(bounds[:-1], bounds[1:]):
            weight = a1 - a0
            if weight <= 0:
                continue
            per_side_prices = {}
            for side in SIDES:
                d = SIDE_INDEX[side]
                seg = [
                    (a[2], a[3], a[5])
                    for a in active
                    if a[0] <= a0 and a[1] >= a1 - 1 and a[4] == d
                ]
                sign = -1.0 if side == BUY else 1.0
                seg.sort(key=lambda t: (sign * t[0], t[2]))
                vw, alloc = _bucket_prices(
                    np.array([p for p, _, _ in seg]),
                    np.array([v for _, v, _ in seg]),
                    edges,
                )
                per_side_prices[d] = vw
                for j, r0 in zip(*np.nonzero(alloc > 1e-12)):
                    seen_orders.setdefault((int(r0), d), set()).add(seg[j][2])
                for r0 in np.nonzero(~np.isnan(vw))[0]:
                    vals, wts = price_acc.setdefault((int(r0), d), ([], []))
                    vals.append(float(vw[r0]))
                    wts.append(weight)
            both = ~np.isnan(per_side_prices[0]) & ~np.isnan(per_side_prices[1])
            for r0 in np.nonzero(both)[0]:
                sp = float(per_side_prices[1][r0] - per_side_prices[0][r0])
                vals, wts = spread_acc.setdefault(int(r0), ([], []))
                vals.append(sp)
                wts.append(weight)

        for (r0, d), (vals, wts) in price_acc.items():
            grid.median_price[k - 1, r0, d] = _weighted_median(vals, wts)
            grid.order_count[k - 1, r0, d] = len(seen_orders.get((r0, d), ()))
        for r0, (vals, wts) in spread_acc.items():
            med = _weighted_median(vals, wts)
            grid.median_bas[k - 1, r0] = med
            grid.mean_bas[k - 1, r0] = (
                sum(v * w for v, w in zip(vals, wts)) / sum(wts)
            )
            if med < 0:
                grid.crossed[k - 1, r0] = True

    return grid
