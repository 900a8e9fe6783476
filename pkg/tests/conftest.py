"""Shared synthetic-market fixtures.

Building and calibrating synthetic days is the expensive part of the suite,
so one small training set and one fitted impact model are shared per session.
Hand-built constant impact models let cost-model tests pin exact values.
"""
import math
from datetime import datetime, timedelta, timezone

import pytest

from intraday_exec.impact import (
    REGIMES,
    AdditiveLogModel,
    CovariateTerm,
    ImpactModel,
    StratumModel,
    extract_permanent,
    extract_temporary,
    fit_impact_model,
)
from intraday_exec.ingest import SynthConfig, synth_lob
from intraday_exec.lob import VolumeBucketScheme, aggregate

BASE_DAY = datetime(2019, 3, 4, tzinfo=timezone.utc)  # a Monday


def _flat_term(domain):
    return CovariateTerm("linear", domain, slope=0.0, center=domain[0])


def build_model(
    mu_temp=0.5,
    sigma_temp=1e-12,
    mu_perm=1e-12,
    sigma_perm=1e-12,
    regime_mult=None,
    n_exponent=0.0,
):
    """Impact model with analytically known surfaces.

    mu(n, k) = level * regime multiplier * n^n_exponent, constant in k, so
    tests can compute expected costs by hand.  Tiny levels stand in for zero
    since the log link cannot represent an exact zero.
    """
    regime_mult = regime_mult or {}
    strata = {}
    levels = {"temporary": (mu_temp, sigma_temp), "permanent": (mu_perm, sigma_perm)}
    n_domain = (math.log(1e-3), math.log(1e4))
    for kind, (mu0, sg0) in levels.items():
        for regime in REGIMES:
            mult = regime_mult.get((kind, regime), regime_mult.get(regime, 1.0))
            mu = AdditiveLogModel(
                intercept=math.log(mu0 * mult),
                beta_weekend=0.0,
                beta_peak=0.0,
                k_term=_flat_term((1.0, 1000.0)),
                logn_term=CovariateTerm(
                    "linear", n_domain, slope=n_exponent, center=0.0
                ),
            )
            sigma = AdditiveLogModel(
                intercept=math.log(sg0 * mult),
                beta_weekend=0.0,
                beta_peak=0.0,
                k_term=_flat_term((1.0, 1000.0)),
                logn_term=_flat_term(n_domain),
            )
            strata[(kind, regime)] = StratumModel(
                mu=mu, sigma=sigma, n_obs=0, floored_mu=0, floored_sigma=0
            )
    return ImpactModel(strata=strata, n_buckets_training=270, epsilon_floor=0.01)


@pytest.fixture
def model_factory():
    return build_model


def make_day(seed, day_idx, hour=12, lead=300, **cfg):
    delivery = BASE_DAY + timedelta(days=day_idx, hours=hour)
    arrival = delivery - timedelta(minutes=lead)
    config = SynthConfig(seed=seed, **cfg)
    events = synth_lob(config, delivery, arrival)
    grid = aggregate(
        events, lead * 60.0, 0.0, VolumeBucketScheme(), delivery_start=delivery
    )
    return events, grid


@pytest.fixture(scope="session")
def training_days():
    return [make_day(7, i, hour=12 if i % 2 == 0 else 3) for i in range(12)]


@pytest.fixture(scope="session")
def fitted_model(training_days):
    obs = []
    for events, grid in training_days:
        obs.extend(extract_temporary(grid))
        obs.extend(extract_permanent(events, grid))
    return fit_impact_model(obs, 270)
