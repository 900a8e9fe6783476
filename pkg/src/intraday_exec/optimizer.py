"""Expected cost, cost variance, and GA-based trajectory optimization.

The cost of a trajectory splits into the price leg (total volume times the
arrival price), the temporary impact paid in every bucket, and the permanent
impact inherited from the previous bucket's trade.  Impact always worsens the
achieved price, so the impact legs enter with the unsigned volume: a seller
receives less, a buyer pays more.  The variance combines per-bucket price
variance (growing linearly in the bucket index), permanent- and temporary-
impact variances, all three treated as independent.

The mean-variance program

    min  impact costs + lambda * variance     s.t.  sum n_k = X,  n_k >= 0

is solved by a genetic algorithm over integer tick allocations.  Candidates
stay feasible by construction: crossover children are repaired by projection
(clip, rescale, cumulative-ceiling re-round) and mutations move ticks between
buckets.  The TWAP and VWAP schedules seed the initial population and elitism
never drops the incumbent, so the optimizer provably dominates both.  Small
instances get a final greedy single-tick-transfer polish, which makes the
tick-grid optimum exact where exhaustive search can verify it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import InfeasibleTick, NotFitted
from .impact import KIND_PERMANENT, KIND_TEMPORARY, DayMeta, ImpactModel
from .lob import BUY, SELL
from .strategies import (
    TICK,
    TradeTrajectory,
    VolumeProfile,
    twap,
    volume_to_ticks,
    vwap,
)


@dataclass(frozen=True)
class CostModelParams:
    """Price and risk parameters for the execution cost model."""

    y0: float
    sigma_price: float
    lam: float
    impact: ImpactModel

    def __post_init__(self):
        if self.sigma_price < 0:
            raise ValueError("sigma_price must be nonnegative")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")


@dataclass(frozen=True)
class GaConfig:
    population_size: int = 200
    max_stall_iterations: int = 650
    mutation_rate: float = 0.1
    crossover_rate: float = 0.8
    seed: int = 0
    elitism_count: int = 5
    generation_cap: int = 13000
    # relative objective decrease below this does not reset the stall counter
    stall_tolerance: float = 1e-7

    def __post_init__(self):
        if self.population_size < 10:
            raise ValueError("population_size must be at least 10")
        for rate in (self.mutation_rate, self.crossover_rate):
            if not 0.0 <= rate <= 1.0:
                raise ValueError("rates must lie in [0, 1]")
        if self.elitism_count < 1 or self.elitism_count >= self.population_size:
            raise ValueError("elitism_count must be in [1, population_size)")


class _CostTables:
    """Separable impact lookups over (bucket k, tick count).

    The additive log model factorizes as mu(n, k) = kf[k] * nf[regime(k), n],
    so cost evaluation over a population reduces to fancy indexing.  Tick
    index 0 maps to exactly zero impact and zero dispersion.
    """

    def __init__(self, params: CostModelParams, n_buckets: int, max_ticks: int,
                 meta: DayMeta):
        if not params.impact.strata:
            raise NotFitted("impact model has no fitted strata")
        self.params = params
        self.n_buckets = n_buckets
        ks = np.arange(1, n_buckets + 1)
        n_values = np.arange(max_ticks + 1) * TICK
        reg_t, kf_mu_t, kf_sg_t, nf_mu_t, nf_sg_t = params.impact.curves(
            KIND_TEMPORARY, ks, n_values, n_buckets, meta
        )
        reg_p, kf_mu_p, kf_sg_p, nf_mu_p, nf_sg_p = params.impact.curves(
            KIND_PERMANENT, ks, n_values, n_buckets, meta
        )
        self.reg_t, self.kf_mu_t, self.kf_sg_t = reg_t, kf_mu_t, kf_sg_t
        self.nf_mu_t, self.nf_sg_t = nf_mu_t, nf_sg_t
        self.reg_p, self.kf_mu_p, self.kf_sg_p = reg_p, kf_mu_p, kf_sg_p
        self.nf_mu_p, self.nf_sg_p = nf_mu_p, nf_sg_p
        self.price_var_weight = params.sigma_price**2 * ks  # n_k^2 sigma_k^2 k

    def impact_terms(self, ticks: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(expected impact cost, cost variance) per row of a tick matrix."""
        ticks = np.atleast_2d(ticks)
        vols = ticks * TICK
        mu_t = self.kf_mu_t[None, :] * self.nf_mu_t[self.reg_t[None, :], ticks]
        sg_t = self.kf_sg_t[None, :] * self.nf_sg_t[self.reg_t[None, :], ticks]
        sg_p = self.kf_sg_p[None, :] * self.nf_sg_p[self.reg_p[None, :], ticks]
        # permanent impact lags: bucket k pays mu_perm(n_{k-1}, k-1)
        mu_p_lag = (
            self.kf_mu_p[None, :-1]
            * self.nf_mu_p[self.reg_p[None, :-1], ticks[:, :-1]]
        )
        cost = (vols * mu_t).sum(axis=1)
        if self.n_buckets > 1:
            cost = cost + (vols[:, 1:] * mu_p_lag).sum(axis=1)
        sq = vols * vols
        variance = (
            (sq * self.price_var_weight[None, :]).sum(axis=1)
            + (sq * sg_p * sg_p).sum(axis=1)
            + (sq * sg_t * sg_t).sum(axis=1)
        )
        return cost, variance

    def objective(self, ticks: np.ndarray) -> np.ndarray:
        cost, variance = self.impact_terms(ticks)
        return cost + self.params.lam * variance


def _tables_for(traj: TradeTrajectory, params: CostModelParams, meta: DayMeta) -> _CostTables:
    return _CostTables(params, traj.n_buckets, int(traj.ticks.max(initial=0)), meta)


def expected_cost(traj: TradeTrajectory, params: CostModelParams, meta: DayMeta) -> float:
    """E(C): price leg plus expected temporary and permanent impact, EUR."""
    tables = _tables_for(traj, params, meta)
    cost, _ = tables.impact_terms(traj.ticks[None, :])
    price_leg = float(traj.allocations.sum()) * params.y0
    return price_leg + float(cost[0])


def cost_variance(traj: TradeTrajectory, params: CostModelParams, meta: DayMeta) -> float:
    """Var(C): price variance plus both impact variances, EUR^2."""
    tables = _tables_for(traj, params, meta)
    _, variance = tables.impact_terms(traj.ticks[None, :])
    return float(variance[0])


def objective(traj: TradeTrajectory, params: CostModelParams, meta: DayMeta) -> float:
    """Mean-variance objective: impact cost + lambda * variance.

    The price leg y0 * X is constant under the volume constraint and is
    excluded, so the objective is invariant to the price level.
    """
    tables = _tables_for(traj, params, meta)
    cost, variance = tables.impact_terms(traj.ticks[None, :])
    return float(cost[0] + params.lam * variance[0])


# ---------------------------------------------------------------------------
# Genetic algorithm
# ---------------------------------------------------------------------------

def _repair(raw: np.ndarray, total: int) -> np.ndarray:
    """Project candidate rows onto the feasible tick simplex.

    Negatives clip to zero, rows rescale to the exact total, and the
    cumulative-ceiling rule restores integrality without losing mass.
    """
    raw = np.maximum(np.atleast_2d(raw), 0.0)
    sums = raw.sum(axis=1, keepdims=True)
    flat = sums[:, 0] <= 0
    if np.any(flat):
        raw[flat] = 1.0
        sums = raw.sum(axis=1, keepdims=True)
    cum = np.ceil(np.cumsum(raw, axis=1) * (total / sums) - 1e-9).astype(np.int64)
    cum[:, -1] = total
    np.maximum.accumulate(cum, axis=1, out=cum)
    pad = np.zeros((len(cum), 1), dtype=np.int64)
    return np.diff(np.concatenate([pad, cum], axis=1), axis=1)


def _initial_population(
    total: int, n_buckets: int, size: int, rng: np.random.Generator,
    profile: Optional[VolumeProfile],
) -> np.ndarray:
    pop = np.empty((size, n_buckets), dtype=np.int64)
    seeds = [twap(total * TICK, n_buckets, BUY).ticks]
    if profile is not None:
        seeds.append(vwap(total * TICK, n_buckets, profile, BUY).ticks)
    for i, s in enumerate(seeds[:size]):
        pop[i] = s
    n_seeds = min(len(seeds), size)
    n_random = size - n_seeds
    if n_random > 0:
        weights = rng.dirichlet(np.ones(n_buckets), size=n_random)
        pop[n_seeds:] = _repair(weights * total, total)
    return pop


def _move_deltas(ticks: np.ndarray, tables: _CostTables, total: int):
    """Objective change of removing/adding one tick per bucket.

    Exploits the chain structure: bucket a's tick count enters its own
    temporary/variance terms, its own lagged-permanent term, and bucket
    a+1's permanent term.  Removal and addition deltas are exact for moves
    between non-adjacent buckets; adjacent pairs share terms and get
    re-evaluated directly by the caller.
    """
    t = ticks
    n = len(t)
    lam = tables.params.lam
    up = np.minimum(t + 1, total)

    def own_terms(tau):
        vols = tau * TICK
        mu_t = tables.kf_mu_t * tables.nf_mu_t[tables.reg_t, tau]
        sg_t = tables.kf_sg_t * tables.nf_sg_t[tables.reg_t, tau]
        sg_p = tables.kf_sg_p * tables.nf_sg_p[tables.reg_p, tau]
        own = vols * mu_t + lam * vols * vols * (
            tables.price_var_weight + sg_p * sg_p + sg_t * sg_t
        )
        # permanent cost this bucket pays for the previous bucket's trade
        own[1:] += vols[1:] * tables.kf_mu_p[:-1] * tables.nf_mu_p[
            tables.reg_p[:-1], t[:-1]
        ]
        return own

    base = own_terms(t)
    minus = own_terms(np.maximum(t - 1, 0))
    plus = own_terms(up)

    # effect of bucket a's count on the NEXT bucket's permanent term
    next_vol = np.zeros(n)
    next_vol[:-1] = t[1:] * TICK
    g = tables.kf_mu_p * tables.nf_mu_p[tables.reg_p, t]
    g_minus = tables.kf_mu_p * tables.nf_mu_p[tables.reg_p, np.maximum(t - 1, 0)]
    g_plus = tables.kf_mu_p * tables.nf_mu_p[tables.reg_p, up]

    d_rem = (minus - base) + next_vol * (g_minus - g)
    d_add = (plus - base) + next_vol * (g_plus - g)
    d_rem[t == 0] = np.inf
    d_add[t >= total] = np.inf
    return d_rem, d_add


def _polish(ticks: np.ndarray, tables: _CostTables, total: int) -> np.ndarray:
    """Greedy single-tick transfers until no move improves the objective.

    Candidate moves come from the marginal deltas (best few sources and
    destinations plus all adjacent pairs); every accepted move is verified
    against the full objective so the trajectory only strictly improves.
    """
    best = ticks.copy()
    best_obj = float(tables.objective(best[None, :])[0])
    n = len(best)
    if n == 1:
        return best
    max_steps = 10 * total + 100
    adj = np.arange(n - 1)
    for _ in range(max_steps):
        d_rem, d_add = _move_deltas(best, tables, total)
        # top-4 each guarantees the best non-adjacent pair survives the
        # adjacency exclusion (a move blocks at most three partner buckets)
        rem_top = np.argsort(d_rem, kind="stable")[:4]
        add_top = np.argsort(d_add, kind="stable")[:4]
        pairs = [
            (int(a), int(b))
            for a in rem_top
            for b in add_top
            if a != b and np.isfinite(d_rem[a]) and np.isfinite(d_add[b])
        ]
        pairs += [(int(a), int(a + 1)) for a in adj if best[a] > 0]
        pairs += [(int(a + 1), int(a)) for a in adj if best[a + 1] > 0]
        if not pairs:
            break
        cands = np.repeat(best[None, :], len(pairs), axis=0)
        idx = np.arange(len(pairs))
        src = np.array([p[0] for p in pairs])
        dst = np.array([p[1] for p in pairs])
        cands[idx, src] -= 1
        cands[idx, dst] += 1
        objs = tables.objective(cands)
        j = int(np.argmin(objs))
        if objs[j] >= best_obj - 1e-12:
            break
        best = cands[j]
        best_obj = float(objs[j])
    return best


def optimize_with_trace(
    x: float,
    n_buckets: int,
    direction: str,
    params: CostModelParams,
    ga: GaConfig,
    meta: DayMeta,
    profile: Optional[VolumeProfile] = None,
) -> Tuple[TradeTrajectory, dict]:
    """GA search over feasible tick allocations; returns trajectory + trace.

    Termination: the best objective has not improved for
    ``max_stall_iterations`` generations, or the absolute generation cap is
    reached.  Identical seeds give identical trajectories.
    """
    if x <= 0 or n_buckets < 1:
        raise ValueError("need positive volume and at least one bucket")
    total = volume_to_ticks(x)
    if not params.impact.strata:
        raise NotFitted("impact model has no fitted strata")
    if direction not in (BUY, SELL):
        raise ValueError(f"unknown direction {direction!r}")
    if profile is not None and len(profile) != n_buckets:
        profile = profile.slice_tail(n_buckets)

    rng = np.random.default_rng(np.random.SeedSequence(entropy=ga.seed))
    tables = _CostTables(params, n_buckets, total, meta)
    pop = _initial_population(total, n_buckets, ga.population_size, rng, profile)
    fitness = tables.objective(pop)

    order = np.argsort(fitness, kind="stable")
    pop, fitness = pop[order], fitness[order]
    best_obj = float(fitness[0])
    stall = 0
    history: List[float] = []
    generations = 0

    while generations < ga.generation_cap and stall < ga.max_stall_iterations:
        generations += 1
        size = ga.population_size
        elite = pop[: ga.elitism_count]

        # tournament selection, size 3
        draws = rng.integers(0, size, size=(size - ga.elitism_count, 3))
        winners = draws[np.arange(len(draws)), np.argmin(fitness[draws], axis=1)]
        children = pop[winners].copy()

        # uniform crossover with partner + projection repair
        cross = rng.random(len(children)) < ga.crossover_rate
        if np.any(cross):
            partners = pop[rng.integers(0, size, size=len(children))]
            mask = rng.random(children.shape) < 0.5
            mixed = np.where(mask, children, partners)
            children[cross] = _repair(mixed[cross].astype(float), total)

        # transfer mutation keeps the volume constraint intact: pick a random
        # nonzero source (argmax of uniforms over the support), a random
        # destination, and move a uniform number of its ticks
        mutate = np.nonzero(rng.random(len(children)) < ga.mutation_rate)[0]
        if len(mutate):
            sub = children[mutate]
            keys = rng.random(sub.shape)
            keys[sub == 0] = -1.0
            src = np.argmax(keys, axis=1)
            rows = np.arange(len(sub))
            held = sub[rows, src]
            dst = rng.integers(0, n_buckets, size=len(sub))
            amount = np.minimum(
                1 + (rng.random(len(sub)) * held).astype(np.int64), held
            )
            live = held > 0
            sub[rows[live], src[live]] -= amount[live]
            sub[rows[live], dst[live]] += amount[live]
            children[mutate] = sub

        pop = np.vstack([elite, children])
        fitness = tables.objective(pop)
        order = np.argsort(fitness, kind="stable")
        pop, fitness = pop[order], fitness[order]

        if fitness[0] < best_obj - max(1e-12, ga.stall_tolerance * abs(best_obj)):
            best_obj = float(fitness[0])
            stall = 0
        else:
            stall += 1
        history.append(float(fitness[0]))

    best = _polish(pop[0], tables, total)

    traj = TradeTrajectory(direction, x, best)
    trace = {
        "seed": ga.seed,
        "config": {
            "population_size": ga.population_size,
            "max_stall_iterations": ga.max_stall_iterations,
            "mutation_rate": ga.mutation_rate,
            "crossover_rate": ga.crossover_rate,
            "elitism_count": ga.elitism_count,
            "generation_cap": ga.generation_cap,
        },
        "generations": generations,
        "best_objective": float(tables.objective(best[None, :])[0]),
        "best_objective_per_generation": history,
        "final_ticks": [int(t) for t in best],
    }
    return traj, trace


def optimize(
    x: float,
    n_buckets: int,
    direction: str,
    params: CostModelParams,
    ga: GaConfig,
    meta: DayMeta,
    profile: Optional[VolumeProfile] = None,
) -> TradeTrajectory:
    traj, _ = optimize_with_trace(x, n_buckets, direction, params, ga, meta, profile)
    return traj


def exhaustive_tick_search(
    x: float,
    n_buckets: int,
    direction: str,
    params: CostModelParams,
    meta: DayMeta,
) -> Tuple[TradeTrajectory, float]:
    """Enumerate the whole 0.1-tick simplex; only viable for tiny instances.

    This is the reference the GA is validated against, kept separate from the
    GA path on purpose.
    """
    total = volume_to_ticks(x)
    tables = _CostTables(params, n_buckets, total, meta)

    def compositions(remaining: int, slots: int):
        if slots == 1:
            yield (remaining,)
            return
        for head in range(remaining + 1):
            for tail in compositions(remaining - head, slots - 1):
                yield (head,) + tail

    best = None
    batch: List[Tuple[int, ...]] = []

    def flush(best):
        if not batch:
            return best
        arr = np.array(batch, dtype=np.int64)
        objs = tables.objective(arr)
        idx = int(np.argmin(objs))
        if best is None or objs[idx] < best[1]:
            best = (arr[idx].copy(), float(objs[idx]))
        return best

    for comp in compositions(total, n_buckets):
        batch.append(comp)
        if len(batch) >= 4096:
            best = flush(best)
            batch.clear()
    best = flush(best)
    ticks, obj = best
    return TradeTrajectory(direction, x, ticks), obj
