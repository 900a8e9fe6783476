"""Aggregation-core tests: bucket partition, splitting, membership, grids.

The grid oracle here deliberately re-enumerates every second from scratch
(no incremental book state, no segment shortcuts) so it stays independent of
the production path it checks.
"""
import math
from datetime import datetime, timezone

import numpy as np
import pytest

from intraday_exec import lob
from intraday_exec.errors import ArrivalAfterCutoff, EmptyBook, MissingSide
from intraday_exec.lob import (
    BUY,
    SELL,
    OrderEvent,
    VolumeBucketScheme,
    aggregate,
    bas_for_bucket,
    cumulative_volume_split,
    time_bucket_membership,
)

T0 = datetime(2019, 3, 6, 12, 0, tzinfo=timezone.utc)


def order(side, price, volume, vf, vt, action="add"):
    return OrderEvent(T0, side, price, volume, vf, vt, action)


# ---------------------------------------------------------------------------
# OrderEvent invariants
# ---------------------------------------------------------------------------

def test_order_event_validation():
    with pytest.raises(ValueError):
        order(BUY, 50.0, 0.0, 0, 10)
    with pytest.raises(ValueError):
        order(BUY, 50.0, 1.0, 10, 10)
    with pytest.raises(ValueError):
        order(BUY, 3000.01, 1.0, 0, 10)
    with pytest.raises(ValueError):
        order(BUY, 50.001, 1.0, 0, 10)  # off price tick
    with pytest.raises(ValueError):
        order(BUY, 50.0, 1.05, 0, 10)  # off volume tick
    assert order(SELL, -500.0, 0.1, 0, 1).price == -500.0


# ---------------------------------------------------------------------------
# Volume bucket scheme
# ---------------------------------------------------------------------------

def test_scheme_has_23_buckets_with_expected_edges():
    s = VolumeBucketScheme()
    assert s.n_buckets == 23
    edges = s.edges_array()
    assert edges[0] == 0.0 and math.isinf(edges[-1])
    assert list(edges[1:8]) == [1.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0]
    assert edges[14] == 100.0 and edges[18] == 200.0 and edges[22] == 500.0
    # adjacent intervals share exactly one boundary: strictly increasing edges
    assert np.all(np.diff(edges[:-1]) > 0)


def test_partition_property_every_volume_in_exactly_one_bucket():
    s = VolumeBucketScheme()
    edges = s.edges_array()
    rng = np.random.default_rng(7)
    probes = np.concatenate([
        rng.uniform(0, 600, 500),
        edges[:-1],             # boundary points themselves
        edges[1:-1] - 1e-9,
        edges[1:-1] + 1e-9,
        [0.0, 1e-12, 5000.0],
    ])
    for v in probes:
        r = s.index_of(float(v))
        assert 1 <= r <= 23
        lo, hi = edges[r - 1], edges[r]
        if v == 0:
            assert r == 1
        else:
            assert lo < v <= hi or (r == 23 and v > lo)


def test_bucket_index_examples():
    s = VolumeBucketScheme()
    assert s.index_of(5.0) == 2       # 5 MW clip sits in (1, 5]
    assert s.index_of(1.7) == 2
    assert s.index_of(300.0) == 20
    assert s.index_of(1000.0) == 23


def test_midpoints():
    s = VolumeBucketScheme()
    assert s.midpoint(1) == 0.5
    assert s.midpoint(2) == 3.0
    assert s.midpoint(23) == 500.0


# ---------------------------------------------------------------------------
# time_bucket_membership
# ---------------------------------------------------------------------------

def test_membership_examples():
    o = order(BUY, 50.0, 1.0, 30, 90)
    assert time_bucket_membership(o, 1) is True
    assert time_bucket_membership(o, 2) is True
    late = order(BUY, 50.0, 1.0, 120, 130)
    assert time_bucket_membership(late, 1) is False


def test_membership_is_contiguous():
    rng = np.random.default_rng(11)
    for _ in range(200):
        vf = int(rng.integers(0, 600))
        vt = vf + int(rng.integers(1, 600))
        o = order(BUY, 50.0, 1.0, vf, vt)
        member = [k for k in range(1, 15) if time_bucket_membership(o, k)]
        assert member == list(range(min(member), max(member) + 1))


# ---------------------------------------------------------------------------
# cumulative_volume_split
# ---------------------------------------------------------------------------

def test_split_boundary_example():
    s = VolumeBucketScheme()
    sells = [order(SELL, 50.0, 0.6, 0, 59), order(SELL, 51.0, 0.8, 0, 59)]
    out = cumulative_volume_split(sells, SELL, s)
    r1 = {(o.price, round(a, 9)) for o, a in out[1]}
    assert r1 == {(50.0, 0.6), (51.0, 0.4)}
    assert len(out[2]) == 1 and out[2][0][1] == pytest.approx(0.4, abs=1e-12)


def test_split_500mwh_covers_buckets_1_to_22():
    s = VolumeBucketScheme()
    out = cumulative_volume_split([order(SELL, 50.0, 500.0, 0, 59)], SELL, s)
    assert sorted(out) == list(range(1, 23))
    total = sum(a for allocs in out.values() for _, a in allocs)
    assert total == pytest.approx(500.0, abs=1e-9)
    assert 23 not in out


def test_split_single_buy_all_in_first_bucket():
    s = VolumeBucketScheme()
    out = cumulative_volume_split([order(BUY, 49.0, 1.0, 0, 59)], BUY, s)
    assert list(out) == [1]
    assert out[1][0][1] == pytest.approx(1.0)


def test_split_conserves_volume_random_books():
    s = VolumeBucketScheme()
    rng = np.random.default_rng(3)
    for _ in range(50):
        n = int(rng.integers(1, 30))
        orders = [
            order(BUY, round(float(rng.uniform(40, 60)), 2),
                  round(float(rng.integers(1, 800)) / 10, 1), 0, 59)
            for _ in range(n)
        ]
        out = cumulative_volume_split(orders, BUY, s)
        total = sum(a for allocs in out.values() for _, a in allocs)
        assert total == pytest.approx(sum(o.volume for o in orders), abs=1e-9)


def test_split_empty_book_raises():
    with pytest.raises(EmptyBook):
        cumulative_volume_split([], SELL, VolumeBucketScheme())


# ---------------------------------------------------------------------------
# bas_for_bucket
# ---------------------------------------------------------------------------

def test_bas_examples():
    assert bas_for_bucket(50.0, 51.0) == pytest.approx(1.0)
    assert bas_for_bucket(47.22, 47.22) == 0.0
    assert bas_for_bucket(50.0, 52.5) == pytest.approx(2.5)
    with pytest.raises(MissingSide):
        bas_for_bucket(float("nan"), 51.0)
    with pytest.raises(MissingSide):
        bas_for_bucket(50.0, None)


# ---------------------------------------------------------------------------
# aggregate: brute-force per-second oracle
# ---------------------------------------------------------------------------

def brute_force_grid(events, delivery_s, arrival_s, scheme):
    """Literal per-second enumeration of median BAS per cell."""
    n = math.floor((delivery_s - arrival_s) / 60.0) - 30
    adds = [e for e in events if e.action == "add"]
    edges = scheme.edges_array()
    med = np.full((n, scheme.n_buckets), np.nan)
    for k in range(1, n + 1):
        per_r = {}
        for s in range(60 * (k - 1), 60 * k):
            abs_s = s + arrival_s
            actives = [e for e in adds if e.valid_from <= abs_s <= e.valid_to]
            prices = {}
            for side in (BUY, SELL):
                book = [e for e in actives if e.side == side]
                book.sort(key=lambda o: (-o.price if side == BUY else o.price,
                                         o.valid_from, o.volume))
                cum = 0.0
                acc = np.zeros(scheme.n_buckets)
                wacc = np.zeros(scheme.n_buckets)
                for o in book:
                    lo, hi = cum, cum + o.volume
                    for r in range(scheme.n_buckets):
                        ov = max(0.0, min(hi, edges[r + 1]) - max(lo, edges[r]))
                        acc[r] += ov * o.price
                        wacc[r] += ov
                    cum = hi
                prices[side] = [acc[r] / wacc[r] if wacc[r] > 1e-12 else None
                                for r in range(scheme.n_buckets)]
            for r in range(scheme.n_buckets):
                b, a = prices[BUY][r], prices[SELL][r]
                if b is not None and a is not None:
                    per_r.setdefault(r, []).append(a - b)
        for r, vals in per_r.items():
            med[k - 1, r] = float(np.median(vals))
    return med


def toy_book():
    # two minutes, both sides, one order change mid-minute
    return [
        order(BUY, 50.0, 2.0, 0, 119),
        order(BUY, 49.5, 4.0, 0, 119),
        order(SELL, 51.0, 1.5, 0, 119),
        order(SELL, 52.0, 6.0, 0, 119),
        order(SELL, 50.8, 1.0, 30, 95),   # improves best ask mid-minute
        order(BUY, 49.0, 10.0, 60, 119),
    ]


def test_aggregate_matches_brute_force_on_toy_book():
    scheme = VolumeBucketScheme()
    delivery = (2 + 30) * 60.0
    grid = aggregate(toy_book(), delivery, 0.0, scheme)
    oracle = brute_force_grid(toy_book(), delivery, 0.0, scheme)
    assert grid.n_buckets == 2
    np.testing.assert_allclose(grid.median_bas, oracle, rtol=0, atol=1e-12, equal_nan=True)


def test_aggregate_matches_brute_force_on_random_books():
    scheme = VolumeBucketScheme()
    rng = np.random.default_rng(17)
    for trial in range(8):
        n_minutes = int(rng.integers(1, 5))
        horizon = 60 * n_minutes
        events = []
        for _ in range(int(rng.integers(2, 20))):
            side = BUY if rng.random() < 0.5 else SELL
            vf = int(rng.integers(0, horizon - 1))
            vt = min(horizon + 10, vf + int(rng.integers(1, horizon)))
            base = 50.0 if side == BUY else 51.0
            events.append(order(
                side,
                round(base + float(rng.uniform(-1, 1)), 2),
                round(float(rng.integers(1, 80)) / 10, 1),
                vf, vt,
            ))
        delivery = (n_minutes + 30) * 60.0
        grid = aggregate(events, delivery, 0.0, scheme)
        oracle = brute_force_grid(events, delivery, 0.0, scheme)
        np.testing.assert_allclose(
            grid.median_bas, oracle, rtol=0, atol=1e-12, equal_nan=True,
            err_msg=f"trial {trial}",
        )


def test_aggregate_empty_input_gives_empty_grid():
    grid = aggregate([], (5 + 30) * 60.0, 0.0, VolumeBucketScheme(), delivery_start=T0)
    assert grid.n_buckets == 5
    assert np.all(np.isnan(grid.median_bas))
    assert grid.traded_volume.sum() == 0


def test_aggregate_horizon_from_lead_time():
    events = [order(BUY, 50.0, 1.0, 0, 59), order(SELL, 51.0, 1.0, 0, 59)]
    grid = aggregate(events, 300 * 60.0, 0.0, VolumeBucketScheme())
    assert grid.n_buckets == 270


def test_aggregate_rejects_arrival_within_cutoff():
    with pytest.raises(ArrivalAfterCutoff):
        aggregate([], 30 * 60.0, 0.0, VolumeBucketScheme(), delivery_start=T0)


def test_aggregate_is_deterministic():
    scheme = VolumeBucketScheme()
    delivery = (2 + 30) * 60.0
    g1 = aggregate(toy_book(), delivery, 0.0, scheme)
    g2 = aggregate(toy_book(), delivery, 0.0, scheme)
    np.testing.assert_array_equal(g1.median_bas, g2.median_bas)
    np.testing.assert_array_equal(g1.median_price, g2.median_price)
    np.testing.assert_array_equal(g1.order_count, g2.order_count)


def test_aggregate_respects_arrival_shift():
    # same physical stream, arrival one minute later: bucket 1 sees minute 2
    events = [
        order(BUY, 50.0, 1.0, 0, 59),
        order(SELL, 51.0, 1.0, 0, 59),
        order(BUY, 48.0, 1.0, 60, 119),
        order(SELL, 52.0, 1.0, 60, 119),
    ]
    delivery = (31 + 2) * 60.0
    g = aggregate(events, delivery, 60.0, VolumeBucketScheme())
    assert g.bas(1, 1) == pytest.approx(4.0)


def test_aggregate_counts_matches_as_traded_volume():
    events = [
        order(BUY, 50.0, 1.0, 0, 119),
        order(SELL, 51.0, 1.0, 0, 119),
        order(SELL, 51.0, 2.5, 70, 71, action="match"),
    ]
    g = aggregate(events, (2 + 30) * 60.0, 0.0, VolumeBucketScheme())
    assert g.traded_volume[1, 1, lob.SIDE_INDEX[SELL]] == pytest.approx(2.5)
    assert g.volume_per_minute()[1] == pytest.approx(2.5)


def test_crossed_book_flagged_not_rejected():
    events = [
        order(BUY, 52.0, 1.0, 0, 59),
        order(SELL, 51.0, 1.0, 0, 59),
    ]
    g = aggregate(events, (1 + 30) * 60.0, 0.0, VolumeBucketScheme())
    assert g.bas(1, 1) == pytest.approx(-1.0)
    assert g.crossed_cell_count == 1


def test_weekend_and_peak_flags():
    sat = datetime(2019, 3, 9, 12, 0, tzinfo=timezone.utc)
    g = aggregate([], (1 + 30) * 60.0, 0.0, VolumeBucketScheme(), delivery_start=sat)
    assert g.is_weekend and g.is_peak
    mon_night = datetime(2019, 3, 11, 3, 0, tzinfo=timezone.utc)
    g2 = aggregate([], (1 + 30) * 60.0, 0.0, VolumeBucketScheme(), delivery_start=mon_night)
    assert not g2.is_weekend and not g2.is_peak
