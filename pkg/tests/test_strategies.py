"""Benchmark strategy tests: identities, tick arithmetic, conservation."""
import numpy as np
import pytest

from intraday_exec.errors import AllZeroVolume, InfeasibleTick, LengthMismatch
from intraday_exec.lob import BUY, SELL, BucketGrid
from intraday_exec.strategies import (
    TradeTrajectory,
    VolumeProfile,
    iobe,
    twap,
    volume_profile,
    volume_to_ticks,
    vwap,
    write_trajectory_csv,
)


def test_iobe_everything_in_first_bucket():
    t = iobe(100.0, 270, BUY)
    assert t.allocations[0] == pytest.approx(100.0)
    assert np.all(t.allocations[1:] == 0)
    assert t.inventory[1] == 0.0


def test_iobe_single_tick_sell():
    t = iobe(0.1, 1, SELL)
    assert t.allocations[0] == pytest.approx(-0.1)
    assert t.inventory[0] == pytest.approx(-0.1)
    assert t.inventory[-1] == 0.0


def test_twap_fig8_setup_is_one_per_bucket():
    t = twap(270.0, 270, BUY)
    assert np.all(t.allocations == 1.0)


def test_twap_residual_to_earliest_buckets():
    t = twap(1.0, 3, BUY)
    np.testing.assert_allclose(t.allocations, [0.4, 0.3, 0.3])


def test_twap_flatness_and_inventory_identity():
    rng = np.random.default_rng(2)
    for _ in range(30):
        n = int(rng.integers(1, 300))
        x = round(float(rng.integers(1, 5000)) / 10, 1)
        t = twap(x, n, BUY)
        assert t.volumes.max() - t.volumes.min() <= 0.1 + 1e-12
        inv = t.inventory
        np.testing.assert_allclose(inv[:-1] - t.allocations, inv[1:], atol=1e-9)
        assert inv[-1] == pytest.approx(0.0)
        # x_k stays within one tick of the ideal straight line
        ideal = (n - np.arange(1, n + 1)) * x / n
        assert np.max(np.abs(inv[1:] - ideal)) <= 0.1 + 1e-9


def test_volume_profile_factors():
    p = VolumeProfile(np.array([1.0, 2.0, 3.0]))
    np.testing.assert_allclose(p.factors(), [0.5, 1.0, 1.5])
    uniform = VolumeProfile(np.ones(7) * 4.2)
    np.testing.assert_allclose(uniform.factors(), 1.0)


def test_volume_profile_mean_factor_is_one():
    rng = np.random.default_rng(4)
    for _ in range(20):
        v = rng.uniform(0, 10, int(rng.integers(2, 50)))
        if not np.any(v > 0):
            continue
        assert VolumeProfile(v).factors().mean() == pytest.approx(1.0, abs=1e-12)


def test_volume_profile_from_grids():
    g1 = BucketGrid(3, 23)
    g2 = BucketGrid(3, 23)
    g1.traded_volume[0, 0, 0] = 2.0
    g1.traded_volume[2, 1, 1] = 4.0
    g2.traded_volume[1, 0, 0] = 6.0
    p = volume_profile([g1, g2])
    np.testing.assert_allclose(p.v_hat, [1.0, 3.0, 2.0])
    with pytest.raises(AllZeroVolume):
        volume_profile(BucketGrid(3, 23))


def test_profile_tail_slicing_for_later_arrivals():
    p = VolumeProfile(np.arange(1.0, 11.0))
    tail = p.slice_tail(4)
    np.testing.assert_allclose(tail.v_hat, [7.0, 8.0, 9.0, 10.0])
    with pytest.raises(LengthMismatch):
        p.slice_tail(11)


def test_vwap_uniform_profile_equals_twap():
    p = VolumeProfile(np.full(7, 3.7))
    for x in (1.0, 2.3, 100.0):
        np.testing.assert_array_equal(
            vwap(x, 7, p, BUY).ticks, twap(x, 7, BUY).ticks
        )


def test_vwap_proportional_example():
    p = VolumeProfile(np.array([0.5, 1.0, 1.5]))
    t = vwap(6.0, 3, p, BUY)
    np.testing.assert_allclose(t.allocations, [1.0, 2.0, 3.0])


def test_vwap_proportionality_before_rounding():
    v = np.array([0.5, 1.0, 1.5, 0.0, 2.0])
    f = VolumeProfile(v).factors()
    raw = 10.0 / 5 * f  # X/N * F_k
    for i in range(5):
        for j in range(5):
            if f[j] > 0:
                assert raw[i] / raw[j] == pytest.approx(f[i] / f[j])


def test_vwap_conserves_mass_on_random_profiles():
    rng = np.random.default_rng(8)
    for _ in range(40):
        n = int(rng.integers(1, 200))
        v = rng.uniform(0, 5, n)
        v[int(rng.integers(0, n))] = 1.0  # ensure one positive entry
        x = round(float(rng.integers(1, 3000)) / 10, 1)
        t = vwap(x, n, VolumeProfile(v), BUY)
        assert int(t.ticks.sum()) == volume_to_ticks(x)
        assert np.all(t.ticks >= 0)


def test_vwap_length_mismatch():
    with pytest.raises(LengthMismatch):
        vwap(1.0, 4, VolumeProfile(np.ones(3)), BUY)


def test_sign_purity():
    p = VolumeProfile(np.array([1.0, 3.0]))
    assert np.all(vwap(5.0, 2, p, BUY).allocations >= 0)
    assert np.all(vwap(5.0, 2, p, SELL).allocations <= 0)
    assert np.all(twap(5.0, 2, SELL).allocations <= 0)


def test_off_tick_volume_rejected():
    with pytest.raises(InfeasibleTick):
        twap(1.05, 3, BUY)


def test_trajectory_csv_export(tmp_path):
    t = twap(1.0, 3, SELL)
    path = tmp_path / "traj.csv"
    write_trajectory_csv(t, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "k,n_k,x_k"
    assert lines[1] == "1,-0.4,-0.6"
    assert lines[3] == "3,-0.3,0.0"
