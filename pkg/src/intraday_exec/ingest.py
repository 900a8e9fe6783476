"""LOB file ingestion and synthetic stream generation.

The exchange's raw order-book feed is licensed, so the engine defines its own
canonical CSV: a `#key=value` header block, a fixed column header, then one
row per order lifecycle record with 2-decimal prices, 1-decimal volumes and
integer second offsets.  Files written by :func:`write_lob_csv` read back
field-for-field identical.

The synthetic generator is a test fixture, not a market model: it builds
deterministic books whose aggregated grid reproduces the qualitative spread
surface of the real market (flat while European coupling is live, a sharp
two-minute spike when it shuts down, an elevated level in local-only trading,
and spreads nondecreasing in depth), which is what the calibration and the
acceptance suite exercise.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ParseError, SchemaVersionMismatch
from .lob import (
    ACTION_ADD,
    ACTION_CANCEL,
    ACTION_MATCH,
    BUY,
    SELL,
    SIDES,
    SIDE_INDEX,
    BucketGrid,
    OrderEvent,
    is_peak_hour,
    is_weekend,
)

SCHEMA_VERSION = 1
COLUMNS = "side,price,volume,valid_from,valid_to,action"

SPREAD_FLAT = "flat"
SPREAD_EMPIRICAL = "empirical-shape"
VOLUME_FLAT = "flat"
VOLUME_EMPIRICAL = "empirical-shape"

# Synthetic book shape constants (tuned so the aggregated grid meets the
# generator contract: cutover spike >= 3x XBID, local elevated, r-ladder).
_BAS_XBID = 0.80            # EUR/MWh at the top of the book
_BAS_CUTOVER_MULT = 4.0
_BAS_LOCAL_MULT = 2.0
_BAS_LADDER_STEP = 0.18     # per volume bucket, multiplicative
_BAS_NOISE_SD = 0.06        # lognormal sd per minute
_BAS_WEEKEND_MULT = 1.20
_BAS_OFFPEAK_MULT = 1.10
_PERM_WIDEN_COEF = 0.055    # post-trade widening scale
_PERM_WIDEN_MINUTES = 3     # how long the widening persists
_CLUSTER_SPACING = 6        # minutes between trade clusters
_CANCEL_EVERY = 40          # emit a bookkeeping cancel row every n-th add

# One synthetic order per volume bucket; widths cover cumulative 600 MWh so
# even a 1000 MWh clip finds a priced cell in the open-ended last bucket.
_BOOK_WIDTHS = (
    1.0, 4.0, 5.0, 5.0, 5.0, 5.0, 5.0,
    10.0, 10.0, 10.0, 10.0, 10.0, 10.0, 10.0,
    25.0, 25.0, 25.0, 25.0,
    50.0, 50.0, 100.0, 100.0, 100.0,
)


@dataclass(frozen=True)
class LobFileHeader:
    schema_version: int
    delivery_start: datetime
    observation_start: datetime
    timezone: str = "UTC"

    def __post_init__(self):
        if self.observation_start >= self.delivery_start:
            raise ValueError("observation_start must precede delivery_start")
        if self.timezone != "UTC":
            raise ValueError("only UTC files are supported")


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    base_price: float = 47.22
    daily_volatility: float = 20.57
    spread_profile: str = SPREAD_EMPIRICAL
    volume_profile: str = VOLUME_EMPIRICAL
    xbid_cut_minutes: int = 60
    local_start_minutes: int = 30

    def __post_init__(self):
        if self.daily_volatility < 0:
            raise ValueError("daily_volatility must be nonnegative")
        if self.xbid_cut_minutes <= self.local_start_minutes:
            raise ValueError("xbid_cut_minutes must exceed local_start_minutes")
        if self.spread_profile not in (SPREAD_FLAT, SPREAD_EMPIRICAL):
            raise ValueError(f"unknown spread profile {self.spread_profile!r}")
        if self.volume_profile not in (VOLUME_FLAT, VOLUME_EMPIRICAL):
            raise ValueError(f"unknown volume profile {self.volume_profile!r}")


def _parse_timestamp(value: str, line: int) -> datetime:
    try:
        ts = datetime.fromisoformat(value)
    except ValueError as exc:
        raise ParseError(line, f"bad timestamp {value!r}: {exc}") from None
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts


def open_lob_csv(path) -> Tuple[LobFileHeader, Iterator[Tuple[int, OrderEvent]]]:
    """Single-pass streaming parse: returns the header and a row iterator of
    (line number, event).  Memory stays bounded by one row, which matters for
    real order-book dumps in the tens of gigabytes."""
    fh = open(path, "r", encoding="utf-8")

    meta: Dict[str, str] = {}
    line_no = 0
    try:
        for raw in fh:
            line_no += 1
            raw = raw.strip()
            if raw.startswith("#"):
                key, _, value = raw[1:].partition("=")
                meta[key.strip()] = value.strip()
                continue
            if raw != COLUMNS:
                raise ParseError(line_no, f"expected column header {COLUMNS!r}")
            break
        else:
            raise ParseError(line_no, "missing column header")
        if "schema_version" not in meta:
            raise ParseError(line_no, "missing #schema_version header")
        if int(meta["schema_version"]) != SCHEMA_VERSION:
            raise SchemaVersionMismatch(
                f"schema_version {meta['schema_version']} unsupported "
                f"(expected {SCHEMA_VERSION})"
            )
        try:
            header = LobFileHeader(
                schema_version=int(meta["schema_version"]),
                delivery_start=_parse_timestamp(meta.get("delivery_start", ""), line_no),
                observation_start=_parse_timestamp(meta.get("observation_start", ""), line_no),
                timezone=meta.get("timezone", "UTC"),
            )
        except ValueError as exc:
            raise ParseError(line_no, str(exc)) from None
    except Exception:
        fh.close()
        raise

    def rows() -> Iterator[Tuple[int, OrderEvent]]:
        with fh:
            for row_no, raw_row in enumerate(fh, start=line_no + 1):
                raw_row = raw_row.strip()
                if not raw_row:
                    continue
                parts = raw_row.split(",")
                if len(parts) != 6:
                    raise ParseError(row_no, f"expected 6 columns, got {len(parts)}")
                side, price_s, vol_s, vf_s, vt_s, action = parts
                try:
                    event = OrderEvent(
                        delivery_start=header.delivery_start,
                        side=side,
                        price=float(price_s),
                        volume=float(vol_s),
                        valid_from=int(vf_s),
                        valid_to=int(vt_s),
                        action=action,
                    )
                except ValueError as exc:
                    raise ParseError(row_no, str(exc)) from None
                yield row_no, event

    return header, rows()


def read_lob_csv(path) -> Tuple[LobFileHeader, List[OrderEvent]]:
    """Read and validate a LOB CSV file.

    Events come back sorted by ``valid_from`` (stable), and every ``cancel``
    row must duplicate the add record it annuls; an orphan cancel means the
    file is inconsistent and is rejected with its line number.
    """
    header, row_iter = open_lob_csv(path)
    events: List[Tuple[int, OrderEvent]] = list(row_iter)
    adds: Dict[tuple, int] = {}
    for _, e in events:
        if e.action == ACTION_ADD:
            key = (e.side, e.price, e.volume, e.valid_from, e.valid_to)
            adds[key] = adds.get(key, 0) + 1
    for line_no, e in events:
        if e.action == ACTION_CANCEL:
            key = (e.side, e.price, e.volume, e.valid_from, e.valid_to)
            if adds.get(key, 0) <= 0:
                raise ParseError(line_no, "cancel row without matching add")
            adds[key] -= 1
    ordered = sorted(events, key=lambda t: t[1].valid_from)
    return header, [e for _, e in ordered]


def write_lob_csv(path, header: LobFileHeader, events: Sequence[OrderEvent]) -> None:
    """Write the canonical, bit-exact CSV representation."""
    buf = io.StringIO()
    buf.write(f"#schema_version={header.schema_version}\n")
    buf.write(f"#delivery_start={header.delivery_start.isoformat()}\n")
    buf.write(f"#observation_start={header.observation_start.isoformat()}\n")
    buf.write(f"#timezone={header.timezone}\n")
    buf.write(COLUMNS + "\n")
    for e in events:
        buf.write(
            f"{e.side},{e.price:.2f},{e.volume:.1f},{e.valid_from},{e.valid_to},{e.action}\n"
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(buf.getvalue())


# ---------------------------------------------------------------------------
# Synthetic generation
# ---------------------------------------------------------------------------

def _rng_for(config: SynthConfig, delivery_start: datetime) -> np.random.Generator:
    key = (delivery_start.toordinal(), delivery_start.hour)
    return np.random.default_rng(np.random.SeedSequence(entropy=config.seed, spawn_key=key))


def _regime_mult(k: int, n: int, cut: int) -> float:
    if k in (cut, cut + 1):
        return _BAS_CUTOVER_MULT
    if k >= cut + 2:
        return _BAS_LOCAL_MULT
    return 1.0


def synth_lob(
    config: SynthConfig, delivery_start: datetime, arrival: datetime
) -> List[OrderEvent]:
    """Generate a deterministic LOB stream for one delivery hour.

    Event times are seconds since ``arrival`` (the observation start).  Books
    are rebuilt once per minute: one resting order per volume bucket and side,
    priced so the per-bucket spread is base level x regime multiplier x depth
    ladder x per-minute noise.  Trade clusters fire every few minutes at the
    end of a minute and widen the book for the following minutes, which is
    the permanent-impact signal the calibration recovers.
    """
    lead_minutes = math.floor((delivery_start - arrival).total_seconds() / 60.0)
    n = lead_minutes - config.local_start_minutes
    if n < 1:
        raise ValueError("arrival leaves no tradable minutes before the stop")
    rng = _rng_for(config, delivery_start)
    empirical_spread = config.spread_profile == SPREAD_EMPIRICAL
    empirical_volume = config.volume_profile == VOLUME_EMPIRICAL
    cut = n - config.xbid_cut_minutes

    sigma_minute = config.daily_volatility / math.sqrt(1440.0)
    mid_steps = rng.normal(0.0, 1.0, n) if sigma_minute > 0 else np.zeros(n)
    noise = (
        np.exp(rng.normal(0.0, _BAS_NOISE_SD, n)) if empirical_spread else np.ones(n)
    )
    day_factor = 1.0
    if empirical_spread:
        if is_weekend(delivery_start):
            day_factor *= _BAS_WEEKEND_MULT
        if not is_peak_hour(delivery_start):
            day_factor *= _BAS_OFFPEAK_MULT

    cluster_phase = int(rng.integers(0, _CLUSTER_SPACING))
    cluster_jitter = rng.integers(0, 3, n)
    vol_noise = np.exp(rng.normal(0.0, 0.35, n))
    big_trade = rng.random(n) < 0.2

    ladder = 1.0 + _BAS_LADDER_STEP * np.arange(len(_BOOK_WIDTHS))
    events: List[OrderEvent] = []
    widen_until = np.zeros(n + 2)  # additive widening active per minute index
    mid = config.base_price
    add_counter = 0

    for k in range(1, n + 1):
        mid += sigma_minute * float(mid_steps[k - 1])
        widen = float(widen_until[k - 1])
        base = _BAS_XBID * _regime_mult(k, n, cut) if empirical_spread else _BAS_XBID
        bas_top = base * day_factor * float(noise[k - 1]) + widen
        vf, vt = 60 * (k - 1), 60 * k - 1
        for r, width in enumerate(_BOOK_WIDTHS):
            half = 0.5 * bas_top * ladder[r]
            for side, price in ((BUY, mid - half), (SELL, mid + half)):
                events.append(
                    OrderEvent(
                        delivery_start=delivery_start,
                        side=side,
                        price=round(price, 2),
                        volume=width,
                        valid_from=vf,
                        valid_to=vt,
                        action=ACTION_ADD,
                    )
                )
                add_counter += 1
                if add_counter % _CANCEL_EVERY == 0:
                    events.append(
                        OrderEvent(
                            delivery_start=delivery_start,
                            side=side,
                            price=round(price, 2),
                            volume=width,
                            valid_from=vf,
                            valid_to=vt,
                            action=ACTION_CANCEL,
                        )
                    )

        # Clusters fire on a rotating phase; the first cutover minute always
        # trades so the post-cutover impact stratum has data every day.
        if (k - 1) % _CLUSTER_SPACING == cluster_phase or (k == cut and cut >= 1):
            profile = 1.0
            if empirical_volume:
                profile = 0.6 + 0.9 * k / n
                if k in (cut, cut + 1):
                    profile *= 0.25
                elif k >= cut + 2:
                    profile *= 1.3
            volume = 6.0 * profile * float(vol_noise[k - 1])
            if big_trade[k - 1]:
                volume *= 5.0
            volume = max(0.5, round(volume, 1))
            trade_s = 60 * (k - 1) + 55 + int(cluster_jitter[k - 1])
            side = BUY if rng.random() < 0.5 else SELL
            pieces = [volume]
            if volume >= 1.0 and rng.random() < 0.5:
                first = round(volume / 2, 1)
                pieces = [first, round(volume - first, 1)]
            offset = 0
            for piece in pieces:
                if piece <= 0:
                    continue
                events.append(
                    OrderEvent(
                        delivery_start=delivery_start,
                        side=side,
                        price=round(mid, 2),
                        volume=piece,
                        valid_from=trade_s + offset,
                        valid_to=trade_s + offset + 1,
                        action=ACTION_MATCH,
                    )
                )
                offset += 2  # stays inside the minute and within grouping range
            if empirical_spread:
                widening = _PERM_WIDEN_COEF * base * math.sqrt(volume)
                for j in range(k, min(k + _PERM_WIDEN_MINUTES, n)):
                    widen_until[j] += widening

    return events


# ---------------------------------------------------------------------------
# Grid export
# ---------------------------------------------------------------------------

def grid_to_json(grid: BucketGrid) -> dict:
    """Serialize a BucketGrid with cells keyed ``t/k/r/d``.

    Only populated entries are written; a cell key appears once per side for
    prices/volumes plus a side-less spread entry under d = "bas".
    """
    t_key = grid.delivery_start.isoformat() if grid.delivery_start else "unknown"
    cells: Dict[str, dict] = {}
    for k in range(1, grid.n_buckets + 1):
        for r in range(1, grid.n_volume_buckets + 1):
            for side in SIDES:
                d = SIDE_INDEX[side]
                price = grid.median_price[k - 1, r - 1, d]
                vol = grid.traded_volume[k - 1, r - 1, d]
                count = int(grid.order_count[k - 1, r - 1, d])
                if math.isnan(price) and vol == 0 and count == 0:
                    continue
                cells[f"{t_key}/{k}/{r}/{side}"] = {
                    "median_price": None if math.isnan(price) else float(price),
                    "traded_volume": float(vol),
                    "order_count": count,
                }
            if grid.has_bas(k, r):
                cells[f"{t_key}/{k}/{r}/bas"] = {
                    "median_bas": float(grid.median_bas[k - 1, r - 1]),
                    "mean_bas": float(grid.mean_bas[k - 1, r - 1]),
                    "crossed": bool(grid.crossed[k - 1, r - 1]),
                }
    return {
        "n_buckets": grid.n_buckets,
        "n_volume_buckets": grid.n_volume_buckets,
        "delivery_start": t_key,
        "cells": cells,
    }


def grid_from_json(payload: dict) -> BucketGrid:
    delivery = (
        None
        if payload["delivery_start"] == "unknown"
        else datetime.fromisoformat(payload["delivery_start"])
    )
    grid = BucketGrid(
        payload["n_buckets"], payload["n_volume_buckets"], delivery_start=delivery
    )
    for key, cell in payload["cells"].items():
        t_key, k_s, r_s, d = key.rsplit("/", 3)
        k, r = int(k_s), int(r_s)
        if d == "bas":
            grid.median_bas[k - 1, r - 1] = cell["median_bas"]
            grid.mean_bas[k - 1, r - 1] = cell["mean_bas"]
            grid.crossed[k - 1, r - 1] = cell["crossed"]
        else:
            di = SIDE_INDEX[d]
            if cell["median_price"] is not None:
                grid.median_price[k - 1, r - 1, di] = cell["median_price"]
            grid.traded_volume[k - 1, r - 1, di] = cell["traded_volume"]
            grid.order_count[k - 1, r - 1, di] = cell["order_count"]
    return grid
