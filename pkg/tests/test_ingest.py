"""CSV round-trip, validation, and synthetic-stream shape tests."""
import json
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from intraday_exec import lob
from intraday_exec.errors import ParseError, SchemaVersionMismatch
from intraday_exec.ingest import (
    LobFileHeader,
    SynthConfig,
    grid_from_json,
    grid_to_json,
    read_lob_csv,
    synth_lob,
    write_lob_csv,
)
from intraday_exec.lob import BUY, SELL, OrderEvent, VolumeBucketScheme, aggregate

DELIVERY = datetime(2019, 3, 6, 12, 0, tzinfo=timezone.utc)
ARRIVAL = DELIVERY - timedelta(minutes=300)


def header():
    return LobFileHeader(1, DELIVERY, ARRIVAL)


def sample_events():
    return [
        OrderEvent(DELIVERY, BUY, 50.0, 1.0, 0, 59, "add"),
        OrderEvent(DELIVERY, SELL, 51.0, 2.5, 0, 119, "add"),
        OrderEvent(DELIVERY, SELL, 51.0, 2.5, 0, 119, "cancel"),
        OrderEvent(DELIVERY, BUY, 50.5, 0.5, 10, 11, "match"),
    ]


def test_round_trip_is_field_for_field_identical(tmp_path):
    path = tmp_path / "book.csv"
    write_lob_csv(path, header(), sample_events())
    h, events = read_lob_csv(path)
    assert h == header()
    assert events == sorted(sample_events(), key=lambda e: e.valid_from)


def test_well_formed_file_parses(tmp_path):
    path = tmp_path / "book.csv"
    path.write_text(
        "#schema_version=1\n"
        f"#delivery_start={DELIVERY.isoformat()}\n"
        f"#observation_start={ARRIVAL.isoformat()}\n"
        "#timezone=UTC\n"
        "side,price,volume,valid_from,valid_to,action\n"
        "buy,50.00,1.0,0,59,add\n"
        "sell,51.00,1.0,0,59,add\n"
        "sell,51.00,0.5,5,6,match\n"
    )
    h, events = read_lob_csv(path)
    assert len(events) == 3
    assert events[0].price == 50.0


def test_invalid_row_reports_line_number(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text(
        "#schema_version=1\n"
        f"#delivery_start={DELIVERY.isoformat()}\n"
        f"#observation_start={ARRIVAL.isoformat()}\n"
        "#timezone=UTC\n"
        "side,price,volume,valid_from,valid_to,action\n"
        "buy,50.00,1.0,90,30,add\n"
    )
    with pytest.raises(ParseError) as exc:
        read_lob_csv(path)
    assert exc.value.line == 6


def test_schema_version_mismatch(tmp_path):
    path = tmp_path / "v2.csv"
    path.write_text(
        "#schema_version=2\n"
        f"#delivery_start={DELIVERY.isoformat()}\n"
        f"#observation_start={ARRIVAL.isoformat()}\n"
        "#timezone=UTC\n"
        "side,price,volume,valid_from,valid_to,action\n"
    )
    with pytest.raises(SchemaVersionMismatch):
        read_lob_csv(path)


def test_orphan_cancel_rejected(tmp_path):
    path = tmp_path / "orphan.csv"
    write_lob_csv(path, header(), [
        OrderEvent(DELIVERY, BUY, 50.0, 1.0, 0, 59, "add"),
        OrderEvent(DELIVERY, BUY, 49.0, 1.0, 0, 59, "cancel"),
    ])
    with pytest.raises(ParseError):
        read_lob_csv(path)


def test_observation_must_precede_delivery():
    with pytest.raises(ValueError):
        LobFileHeader(1, DELIVERY, DELIVERY)


# ---------------------------------------------------------------------------
# Synthetic generator
# ---------------------------------------------------------------------------

def test_synth_is_deterministic():
    cfg = SynthConfig(seed=1)
    a = synth_lob(cfg, DELIVERY, ARRIVAL)
    b = synth_lob(cfg, DELIVERY, ARRIVAL)
    assert a == b
    c = synth_lob(SynthConfig(seed=2), DELIVERY, ARRIVAL)
    assert a != c


def test_synth_flat_zero_vol_gives_constant_best_levels():
    cfg = SynthConfig(seed=1, daily_volatility=0.0,
                      spread_profile="flat", volume_profile="flat")
    events = synth_lob(cfg, DELIVERY, ARRIVAL)
    grid = aggregate(events, 300 * 60.0, 0.0, VolumeBucketScheme(),
                     delivery_start=DELIVERY)
    best_buy = grid.median_price[:, 0, 0]
    best_sell = grid.median_price[:, 0, 1]
    assert np.all(best_buy == best_buy[0])
    assert np.all(best_sell == best_sell[0])


def test_synth_ticks_and_two_sided_books():
    events = synth_lob(SynthConfig(seed=3), DELIVERY, ARRIVAL)
    for e in events[:500]:
        assert abs(e.price * 100 - round(e.price * 100)) < 1e-6
        assert abs(e.volume * 10 - round(e.volume * 10)) < 1e-6
    grid = aggregate(events, 300 * 60.0, 0.0, VolumeBucketScheme(),
                     delivery_start=DELIVERY)
    assert not np.any(np.isnan(grid.median_price[:, 0, :]))


def synth_grid(seed=4, lead=300, **kwargs):
    cfg = SynthConfig(seed=seed, **kwargs)
    arrival = DELIVERY - timedelta(minutes=lead)
    events = synth_lob(cfg, DELIVERY, arrival)
    return aggregate(events, lead * 60.0, 0.0, VolumeBucketScheme(),
                     delivery_start=DELIVERY)


def test_synth_empirical_shape_cutover_spike():
    grid = synth_grid()
    n = grid.n_buckets
    cutover = [n - 60, n - 59]
    xbid = [k for k in range(1, n - 60)]
    cut_med = np.nanmedian([grid.bas(k, 1) for k in cutover])
    xbid_med = np.nanmedian([grid.bas(k, 1) for k in xbid])
    local_med = np.nanmedian([grid.bas(k, 1) for k in range(n - 57, n + 1)])
    assert cut_med / xbid_med >= 3.0
    assert local_med > xbid_med


def test_synth_xbid_regime_is_roughly_flat():
    grid = synth_grid(seed=5)
    n = grid.n_buckets
    xbid_vals = np.array([grid.bas(k, 1) for k in range(1, n - 60)])
    assert np.nanstd(xbid_vals) / np.nanmean(xbid_vals) < 0.25


def test_synth_bas_nondecreasing_in_volume_bucket():
    grid = synth_grid(seed=6)
    for k in (1, 50, grid.n_buckets - 60, grid.n_buckets):
        row = grid.median_bas[k - 1, :]
        populated = row[~np.isnan(row)]
        assert len(populated) == 23
        assert np.all(np.diff(populated) >= -1e-9)


def test_synth_emits_trades_for_volume_profile():
    grid = synth_grid(seed=7)
    assert grid.traded_volume.sum() > 0
    per_minute = grid.volume_per_minute()
    traded_idx = np.nonzero(per_minute)[0]
    assert len(traded_idx) >= 30


def test_grid_json_round_trip():
    grid = synth_grid(seed=8, lead=95)
    payload = json.loads(json.dumps(grid_to_json(grid)))
    back = grid_from_json(payload)
    np.testing.assert_allclose(back.median_bas, grid.median_bas, equal_nan=True)
    np.testing.assert_allclose(back.median_price, grid.median_price, equal_nan=True)
    np.testing.assert_array_equal(back.traded_volume, grid.traded_volume)
    np.testing.assert_array_equal(back.order_count, grid.order_count)
