"""Market-impact observation extraction and regime-partitioned calibration.

Two impact kinds are measured from the discretized book:

* temporary — the liquidity premium of walking the book, read directly off
  the per-(minute, depth-bucket) median spread surface;
* permanent — the persistent spread shift after trading, measured by
  comparing the book level shortly before a trade cluster with its level
  after the book has had time to re-form (trades grouped within 10 s, then a
  40 s delay, then a 20 s measurement window).

Both are modeled per trading regime (European coupling live / the two-minute
cutover after it stops / local-only trading) as additive models on the log
scale: intercept + smooth(minute bucket) + smooth(log volume) + weekend and
peak-hour dummies.  The cutover stratum replaces the minute smooth with a
linear term because two distinct minute values cannot support a spline.
Dispersion gets the same additive structure fitted to log absolute residuals
scaled by sqrt(pi/2), the consistency factor turning a half-normal mean into
a standard deviation.  Everything is penalized least squares with GCV-chosen
smoothing, so fits are deterministic and order-independent.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import InsufficientData, NotFitted, OutOfRange
from .lob import (
    ACTION_ADD,
    ACTION_MATCH,
    BUY,
    SELL,
    SIDE_INDEX,
    BucketGrid,
    OrderEvent,
    VolumeBucketScheme,
    _bucket_prices,
    _weighted_median,
)
from .splines import GCV_GRID, SplineModel, design_matrix, knot_vector, second_diff_penalty

logger = logging.getLogger(__name__)

REGIME_XBID = "XBID"
REGIME_CUTOVER = "cutover"
REGIME_LOCAL = "local"
REGIMES = (REGIME_XBID, REGIME_CUTOVER, REGIME_LOCAL)

KIND_TEMPORARY = "temporary"
KIND_PERMANENT = "permanent"
KINDS = (KIND_TEMPORARY, KIND_PERMANENT)

# Trade-cluster measurement windows, seconds.
CLUSTER_RADIUS_S = 10
POST_TRADE_DELAY_S = 40
POST_WINDOW_S = 20
PRE_WINDOW_S = 10

MODEL_FORMAT_VERSION = 1

_HALF_NORMAL = math.sqrt(math.pi / 2.0)


class DayMeta(NamedTuple):
    """Delivery-timestamp covariates entering the impact model."""

    weekend: bool
    peak: bool


@dataclass(frozen=True)
class ImpactObservation:
    kind: str
    k: int
    n: float
    weekend: bool
    peak: bool
    impact: float

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown impact kind {self.kind!r}")
        if self.n <= 0:
            raise ValueError("observation volume must be positive")
        if not math.isfinite(self.impact):
            raise ValueError("impact must be finite")


def classify_regime(k: int, n_buckets: int) -> str:
    """Trading regime of minute bucket k on an N-bucket horizon.

    XBID while k <= N-61, the two cutover buckets N-60 and N-59, local
    afterwards.  The bucket N-58 left unassigned by the boundary definitions
    is treated as local so the regimes partition 1..N.
    """
    if not 1 <= k <= n_buckets:
        raise OutOfRange(f"bucket {k} outside 1..{n_buckets}")
    if k <= n_buckets - 61:
        return REGIME_XBID
    if k in (n_buckets - 60, n_buckets - 59):
        return REGIME_CUTOVER
    return REGIME_LOCAL


# ---------------------------------------------------------------------------
# Observation extraction
# ---------------------------------------------------------------------------

def extract_temporary(
    grid: BucketGrid, scheme: Optional[VolumeBucketScheme] = None
) -> List[ImpactObservation]:
    """One observation per populated (k, r) cell of the spread surface.

    The regressor volume is the representative volume of the depth bucket
    (interval midpoint, lower edge for the open-ended last bucket) and the
    response is the cell's median spread.  Empty cells are skipped.
    """
    scheme = scheme or VolumeBucketScheme()
    meta = DayMeta(grid.is_weekend, grid.is_peak)
    out: List[ImpactObservation] = []
    for k in range(1, grid.n_buckets + 1):
        for r in range(1, grid.n_volume_buckets + 1):
            if not grid.has_bas(k, r):
                continue
            out.append(
                ImpactObservation(
                    kind=KIND_TEMPORARY,
                    k=k,
                    n=scheme.midpoint(r),
                    weekend=meta.weekend,
                    peak=meta.peak,
                    impact=grid.bas(k, r),
                )
            )
    return out


def _adds_by_window(events: Sequence[OrderEvent], arrival_s: float):
    """Pre-shifted add records sorted by start time, for window snapshots."""
    adds = []
    for seq, e in enumerate(events):
        if e.action != ACTION_ADD:
            continue
        adds.append(
            (e.valid_from - arrival_s, e.valid_to - arrival_s,
             e.price, e.volume, SIDE_INDEX[e.side], seq)
        )
    adds.sort(key=lambda a: a[0])
    starts = np.array([a[0] for a in adds]) if adds else np.empty(0)
    return adds, starts


def _window_bas(adds, starts, lo: float, hi: float, r: int, edges: np.ndarray) -> Optional[float]:
    """Median spread at depth bucket r over per-second snapshots in [lo, hi)."""
    first = 0
    last = int(np.searchsorted(starts, hi, side="left")) if len(starts) else 0
    candidates = [a for a in adds[first:last] if a[1] >= lo]
    if not candidates:
        return None
    cuts = {lo, hi}
    for a in candidates:
        if lo < a[0] < hi:
            cuts.add(a[0])
        if lo < a[1] + 1 < hi:
            cuts.add(a[1] + 1)
    bounds = sorted(cuts)
    vals: List[float] = []
    wts: List[int] = []
    for a0, a1 in zip(bounds[:-1], bounds[1:]):
        weight = int(a1 - a0)
        if weight <= 0:
            continue
        sides = {}
        for d, sign in ((0, -1.0), (1, 1.0)):
            seg = [
                (a[2], a[3], a[5])
                for a in candidates
                if a[0] <= a0 and a[1] >= a1 - 1 and a[4] == d
            ]
            seg.sort(key=lambda t: (sign * t[0], t[2]))
            vw, _ = _bucket_prices(
                np.array([p for p, _, _ in seg]),
                np.array([v for _, v, _ in seg]),
                edges,
            )
            sides[d] = vw[r - 1]
        if not (math.isnan(sides[0]) or math.isnan(sides[1])):
            vals.append(float(sides[1] - sides[0]))
            wts.append(weight)
    if not vals:
        return None
    return _weighted_median(vals, wts)


def extract_permanent(
    events: Sequence[OrderEvent],
    grid: BucketGrid,
    arrival_s: float = 0.0,
    scheme: Optional[VolumeBucketScheme] = None,
    counters: Optional[Dict[str, int]] = None,
) -> List[ImpactObservation]:
    """Post-trade spread shifts per trade cluster.

    Matches within 10 s of each other form one cluster.  The pre level is the
    median spread over the 10 s before the first trade, the post level the
    median over a 20 s window that starts 50 s after it (40 s delay for the
    book to re-form).  Both are measured at the depth bucket containing the
    cluster volume.  Clusters whose windows fall off the horizon are skipped
    and counted, not imputed.
    """
    scheme = scheme or VolumeBucketScheme()
    counters = counters if counters is not None else {}
    counters.setdefault("clusters", 0)
    counters.setdefault("skipped_window", 0)
    counters.setdefault("skipped_empty", 0)
    matches = sorted(
        (e for e in events if e.action == ACTION_MATCH),
        key=lambda e: (e.valid_from, e.volume),
    )
    if not matches:
        return []
    horizon = 60 * grid.n_buckets
    meta = DayMeta(grid.is_weekend, grid.is_peak)
    adds, starts = _adds_by_window(events, arrival_s)
    edges = scheme.edges_array()

    clusters: List[List[OrderEvent]] = [[matches[0]]]
    for m in matches[1:]:
        if m.valid_from - clusters[-1][-1].valid_from <= CLUSTER_RADIUS_S:
            clusters[-1].append(m)
        else:
            clusters.append([m])

    out: List[ImpactObservation] = []
    for cluster in clusters:
        counters["clusters"] += 1
        start = cluster[0].valid_from - arrival_s
        volume = sum(m.volume for m in cluster)
        if not 0 <= start < horizon:
            counters["skipped_window"] += 1
            continue
        post_lo = start + CLUSTER_RADIUS_S + POST_TRADE_DELAY_S
        post_hi = post_lo + POST_WINDOW_S
        pre_lo = max(0.0, start - PRE_WINDOW_S)
        if post_hi > horizon or pre_lo >= start:
            counters["skipped_window"] += 1
            continue
        r = scheme.index_of(volume)
        pre = _window_bas(adds, starts, pre_lo, start, r, edges)
        post = _window_bas(adds, starts, post_lo, post_hi, r, edges)
        if pre is None or post is None:
            counters["skipped_empty"] += 1
            continue
        out.append(
            ImpactObservation(
                kind=KIND_PERMANENT,
                k=int(start // 60) + 1,
                n=volume,
                weekend=meta.weekend,
                peak=meta.peak,
                impact=post - pre,
            )
        )
    if counters["skipped_window"] or counters["skipped_empty"]:
        logger.info(
            "permanent extraction skipped %d/%d clusters (window %d, empty %d)",
            counters["skipped_window"] + counters["skipped_empty"],
            counters["clusters"],
            counters["skipped_window"],
            counters["skipped_empty"],
        )
    return out


# ---------------------------------------------------------------------------
# Additive log-scale model
# ---------------------------------------------------------------------------

TERM_SPLINE = "spline"
TERM_LINEAR = "linear"


@dataclass
class CovariateTerm:
    """Smooth-or-linear term of one covariate, clamped to training range."""

    kind: str
    domain: Tuple[float, float]
    spline: Optional[SplineModel] = None
    slope: float = 0.0
    center: float = 0.0
    gamma: float = 0.0

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.clip(np.asarray(x, dtype=float), self.domain[0], self.domain[1])
        if self.kind == TERM_SPLINE:
            return self.spline(x)
        return self.slope * (x - self.center)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "domain": list(self.domain), "gamma": self.gamma}
        if self.kind == TERM_SPLINE:
            d["spline"] = self.spline.to_dict()
        else:
            d["slope"] = self.slope
            d["center"] = self.center
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CovariateTerm":
        return cls(
            kind=d["kind"],
            domain=(d["domain"][0], d["domain"][1]),
            spline=SplineModel.from_dict(d["spline"]) if d["kind"] == TERM_SPLINE else None,
            slope=d.get("slope", 0.0),
            center=d.get("center", 0.0),
            gamma=d.get("gamma", 0.0),
        )


@dataclass
class AdditiveLogModel:
    """intercept + beta_we * weekend + beta_h * peak + f(k) + g(log n)."""

    intercept: float
    beta_weekend: float
    beta_peak: float
    k_term: CovariateTerm
    logn_term: CovariateTerm

    def predictor(self, n, k, meta: DayMeta) -> np.ndarray:
        n = np.asarray(n, dtype=float)
        k = np.asarray(k, dtype=float)
        return (
            self.intercept
            + self.beta_weekend * float(meta.weekend)
            + self.beta_peak * float(meta.peak)
            + self.k_term(k)
            + self.logn_term(np.log(n))
        )

    def to_dict(self) -> dict:
        return {
            "intercept": self.intercept,
            "beta_weekend": self.beta_weekend,
            "beta_peak": self.beta_peak,
            "k_term": self.k_term.to_dict(),
            "logn_term": self.logn_term.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AdditiveLogModel":
        return cls(
            intercept=d["intercept"],
            beta_weekend=d["beta_weekend"],
            beta_peak=d["beta_peak"],
            k_term=CovariateTerm.from_dict(d["k_term"]),
            logn_term=CovariateTerm.from_dict(d["logn_term"]),
        )


@dataclass
class StratumModel:
    mu: AdditiveLogModel
    sigma: AdditiveLogModel
    n_obs: int
    floored_mu: int
    floored_sigma: int

    def to_dict(self) -> dict:
        return {
            "mu": self.mu.to_dict(),
            "sigma": self.sigma.to_dict(),
            "n_obs": self.n_obs,
            "floored_mu": self.floored_mu,
            "floored_sigma": self.floored_sigma,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StratumModel":
        return cls(
            mu=AdditiveLogModel.from_dict(d["mu"]),
            sigma=AdditiveLogModel.from_dict(d["sigma"]),
            n_obs=d["n_obs"],
            floored_mu=d["floored_mu"],
            floored_sigma=d["floored_sigma"],
        )


@dataclass(frozen=True)
class FitConfig:
    epsilon_floor: float = 0.01
    k_interior_knots: int = 10
    n_interior_knots: int = 8
    min_stratum_obs: int = 8
    gamma_grid: Tuple[float, ...] = GCV_GRID


@dataclass
class ImpactModel:
    """Fitted impact surfaces per (kind, regime) stratum.

    Immutable after fitting; safe for concurrent evaluation.  Evaluation at
    zero volume returns exactly (0, 0) since no trade means no cost and no
    cost variance; for positive volume the log link keeps both outputs
    strictly positive.
    """

    strata: Dict[Tuple[str, str], StratumModel]
    n_buckets_training: int
    epsilon_floor: float
    version: int = MODEL_FORMAT_VERSION

    def stratum(self, kind: str, regime: str) -> StratumModel:
        try:
            return self.strata[(kind, regime)]
        except KeyError:
            raise NotFitted(f"no stratum fitted for {kind}/{regime}") from None

    def evaluate(
        self, kind: str, n: float, k: int, n_buckets: int, meta: DayMeta
    ) -> Tuple[float, float]:
        if kind not in KINDS:
            raise ValueError(f"unknown impact kind {kind!r}")
        if n < 0:
            raise ValueError("volume must be nonnegative")
        if n == 0:
            return 0.0, 0.0
        regime = classify_regime(k, n_buckets)
        s = self.stratum(kind, regime)
        mu = math.exp(float(np.asarray(s.mu.predictor(n, k, meta)).reshape(-1)[0]))
        sigma = math.exp(float(np.asarray(s.sigma.predictor(n, k, meta)).reshape(-1)[0]))
        return mu, sigma

    def curves(
        self, kind: str, ks: np.ndarray, n_values: np.ndarray, n_buckets: int, meta: DayMeta
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Separable evaluation tables for vectorized cost computation.

        Returns (regime index per k, mu k-factor per k, sigma k-factor per k,
        mu n-factor per regime x n, sigma n-factor per regime x n) such that
        mu(n, k) = kf_mu[k] * nf_mu[regime[k], n] and likewise for sigma.
        The n-factor at n = 0 is exactly 0.
        """
        ks = np.asarray(ks)
        n_values = np.asarray(n_values, dtype=float)
        reg_idx = np.array(
            [REGIMES.index(classify_regime(int(k), n_buckets)) for k in ks]
        )
        kf_mu = np.empty(len(ks))
        kf_sigma = np.empty(len(ks))
        nf_mu = np.zeros((len(REGIMES), len(n_values)))
        nf_sigma = np.zeros((len(REGIMES), len(n_values)))
        positive = n_values > 0
        logn = np.log(n_values[positive])
        for ri, regime in enumerate(REGIMES):
            sel = reg_idx == ri
            if not np.any(sel):
                continue
            s = self.stratum(kind, regime)
            for model, kf, nf in (
                (s.mu, kf_mu, nf_mu),
                (s.sigma, kf_sigma, nf_sigma),
            ):
                base = (
                    model.intercept
                    + model.beta_weekend * float(meta.weekend)
                    + model.beta_peak * float(meta.peak)
                )
                kf[sel] = np.exp(base + model.k_term(ks[sel].astype(float)))
                nf[ri, positive] = np.exp(model.logn_term(logn))
        return reg_idx, kf_mu, kf_sigma, nf_mu, nf_sigma

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "n_buckets_training": self.n_buckets_training,
            "epsilon_floor": self.epsilon_floor,
            "strata": {
                f"{kind}/{regime}": s.to_dict()
                for (kind, regime), s in sorted(self.strata.items())
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ImpactModel":
        strata = {}
        for key, sd in d["strata"].items():
            kind, regime = key.split("/")
            strata[(kind, regime)] = StratumModel.from_dict(sd)
        return cls(
            strata=strata,
            n_buckets_training=d["n_buckets_training"],
            epsilon_floor=d["epsilon_floor"],
            version=d.get("version", MODEL_FORMAT_VERSION),
        )


def eval_impact(
    model: ImpactModel, kind: str, n: float, k: int, n_buckets: int, meta: DayMeta
) -> Tuple[float, float]:
    """(mu, sigma) of the impact distribution for trading n MWh in bucket k."""
    return model.evaluate(kind, n, k, n_buckets, meta)


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------

def _build_term_block(
    x: np.ndarray, interior: int, force_linear: bool
) -> Tuple[np.ndarray, Optional[np.ndarray], dict]:
    """Design block and penalty for one covariate.

    Spline blocks are constrained to sum to zero over the training sample
    (null-space reparameterization) so the intercept stays identifiable; the
    fallback is a centered linear column whenever a spline is unsupportable
    (fewer than four distinct values, as in the two-bucket cutover regime).
    """
    distinct = np.unique(x)
    lo, hi = float(distinct[0]), float(distinct[-1])
    if distinct.size == 1:
        # constant covariate carries no information; keep a zero-contribution
        # term so the model shape stays uniform
        info = {"kind": TERM_LINEAR, "domain": (lo, hi), "center": lo}
        return np.empty((len(x), 0)), None, info
    if force_linear or distinct.size < 4:
        center = float(np.mean(x))
        col = (x - center)[:, None]
        info = {"kind": TERM_LINEAR, "domain": (lo, hi), "center": center}
        return col, None, info
    n_interior = min(interior, distinct.size - 2)
    knots = knot_vector(lo, hi, n_interior)
    b = design_matrix(x, knots)
    ones = b.sum(axis=0)
    # orthonormal null-space basis of the sum-to-zero constraint
    _, _, vt = np.linalg.svd(ones[None, :])
    z = vt[1:].T
    bz = b @ z
    pen = z.T @ second_diff_penalty(b.shape[1]) @ z
    info = {
        "kind": TERM_SPLINE,
        "domain": (lo, hi),
        "knots": knots,
        "z": z,
        "n_interior": n_interior,
    }
    return bz, pen, info


def _fit_additive(
    k: np.ndarray,
    logn: np.ndarray,
    we: np.ndarray,
    pk: np.ndarray,
    y: np.ndarray,
    config: FitConfig,
    linear_k: bool,
) -> AdditiveLogModel:
    """Penalized LS of y on {1, we, pk, f(k), g(log n)} with GCV smoothing."""
    n_obs = len(y)
    cols = [np.ones((n_obs, 1))]
    dummy_slots = []
    for vec in (we, pk):
        if np.unique(vec).size > 1:
            cols.append(vec[:, None].astype(float))
            dummy_slots.append(True)
        else:
            dummy_slots.append(False)

    k_block, k_pen, k_info = _build_term_block(k, config.k_interior_knots, linear_k)
    n_block, n_pen, n_info = _build_term_block(logn, config.n_interior_knots, False)

    base_p = sum(c.shape[1] for c in cols)
    k_sl = slice(base_p, base_p + k_block.shape[1])
    n_sl = slice(k_sl.stop, k_sl.stop + n_block.shape[1])
    x_mat = np.hstack(cols + [k_block, n_block])
    p = x_mat.shape[1]

    xtx = x_mat.T @ x_mat
    xty = x_mat.T @ y
    yty = float(y @ y)

    pen_k_full = np.zeros((p, p))
    if k_pen is not None:
        pen_k_full[k_sl, k_sl] = k_pen
    pen_n_full = np.zeros((p, p))
    if n_pen is not None:
        pen_n_full[n_sl, n_sl] = n_pen

    grid_k = config.gamma_grid if k_pen is not None else (0.0,)
    grid_n = config.gamma_grid if n_pen is not None else (0.0,)

    best = None
    for gk in grid_k:
        for gn in grid_n:
            a = xtx + gk * pen_k_full + gn * pen_n_full
            try:
                beta = np.linalg.solve(a, xty)
                edf = float(np.trace(np.linalg.solve(a, xtx)))
            except np.linalg.LinAlgError:
                continue
            rss = max(yty - 2.0 * float(beta @ xty) + float(beta @ xtx @ beta), 0.0)
            denom = max(n_obs - edf, 1e-8)
            score = n_obs * rss / denom**2
            if best is None or score < best[0] - 1e-12:
                best = (score, gk, gn, beta)
    if best is None:
        raise np.linalg.LinAlgError("additive fit is singular for every gamma")
    _, gamma_k, gamma_n, beta = best

    pos = 1
    beta_we = float(beta[pos]) if dummy_slots[0] else 0.0
    pos += int(dummy_slots[0])
    beta_pk = float(beta[pos]) if dummy_slots[1] else 0.0

    def term_from(info: dict, coef: np.ndarray, gamma: float) -> CovariateTerm:
        if info["kind"] == TERM_LINEAR:
            return CovariateTerm(
                kind=TERM_LINEAR,
                domain=info["domain"],
                slope=float(coef[0]) if len(coef) else 0.0,
                center=info["center"],
                gamma=gamma,
            )
        full_coef = info["z"] @ coef
        knots = info["knots"]
        interior = knots[4:-4]
        spline = SplineModel(
            knots=np.asarray(interior, dtype=float),
            coefficients=np.asarray(full_coef, dtype=float),
            domain=info["domain"],
            smoothing=gamma,
        )
        return CovariateTerm(
            kind=TERM_SPLINE, domain=info["domain"], spline=spline, gamma=gamma
        )

    return AdditiveLogModel(
        intercept=float(beta[0]),
        beta_weekend=beta_we,
        beta_peak=beta_pk,
        k_term=term_from(k_info, beta[k_sl], gamma_k),
        logn_term=term_from(n_info, beta[n_sl], gamma_n),
    )


def fit_impact_model(
    observations: Sequence[ImpactObservation],
    n_buckets: int,
    config: FitConfig = FitConfig(),
) -> ImpactModel:
    """Two-stage fit of mu and sigma per (kind, regime) stratum.

    Stage 1 regresses log impact (nonpositive impacts floored at the
    configured epsilon) on the additive structure; stage 2 regresses the
    log of sqrt(pi/2) * |stage-1 residual| (floored the same way) to get the
    dispersion surface.  Observations are canonically sorted first, which
    makes the output independent of input order down to the last bit.
    """
    obs = sorted(
        observations,
        key=lambda o: (o.kind, o.k, o.n, o.impact, o.weekend, o.peak),
    )
    strata: Dict[Tuple[str, str], StratumModel] = {}
    for kind in KINDS:
        for regime in REGIMES:
            subset = [
                o
                for o in obs
                if o.kind == kind and classify_regime(o.k, n_buckets) == regime
            ]
            n_positive = sum(1 for o in subset if o.impact > 0)
            if n_positive < config.min_stratum_obs:
                raise InsufficientData(
                    f"{kind}/{regime}", n_positive, config.min_stratum_obs
                )
            k = np.array([o.k for o in subset], dtype=float)
            logn = np.log(np.array([o.n for o in subset]))
            we = np.array([o.weekend for o in subset], dtype=float)
            pk = np.array([o.peak for o in subset], dtype=float)
            impact = np.array([o.impact for o in subset])
            floored_mu = int(np.sum(impact <= 0))
            y = np.log(np.where(impact <= 0, config.epsilon_floor, impact))
            linear_k = regime == REGIME_CUTOVER
            mu_model = _fit_additive(k, logn, we, pk, y, config, linear_k)
            pred = (
                mu_model.intercept
                + mu_model.beta_weekend * we
                + mu_model.beta_peak * pk
                + mu_model.k_term(k)
                + mu_model.logn_term(logn)
            )
            abs_resid = np.abs(y - pred)
            floored_sigma = int(np.sum(abs_resid < config.epsilon_floor))
            s_resp = np.log(
                _HALF_NORMAL * np.maximum(abs_resid, config.epsilon_floor)
            )
            sigma_model = _fit_additive(k, logn, we, pk, s_resp, config, linear_k)
            strata[(kind, regime)] = StratumModel(
                mu=mu_model,
                sigma=sigma_model,
                n_obs=len(subset),
                floored_mu=floored_mu,
                floored_sigma=floored_sigma,
            )
            logger.info(
                "fitted %s/%s: n=%d floored_mu=%d gamma_k=%g gamma_n=%g",
                kind, regime, len(subset), floored_mu,
                mu_model.k_term.gamma, mu_model.logn_term.gamma,
            )
    return ImpactModel(
        strata=strata,
        n_buckets_training=n_buckets,
        epsilon_floor=config.epsilon_floor,
    )
