"""Penalized cubic B-splines with difference penalty and GCV smoothing.

The basis uses equally spaced knots extended past the data range (rather than
repeated boundary knots).  With equal spacing the Greville abscissae are
equally spaced too, so the second-order difference penalty on coefficients
has exactly the affine functions in its null space: straight-line responses
are reproduced unshrunken for every smoothing level, and gamma -> inf
collapses the fit onto the least-squares line.

The smoothing parameter is chosen by generalized cross validation

    GCV(gamma) = n * RSS(gamma) / (n - edf(gamma))^2,

minimized over a fixed log-spaced grid so fits are deterministic.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import BSpline

from .errors import DegenerateInput

DEGREE = 3
PENALTY_ORDER = 2

# 17 log-spaced candidates, 1e-4 .. 1e4.
GCV_GRID = tuple(float(g) for g in np.logspace(-4, 4, 17))


def knot_vector(lo: float, hi: float, n_interior: int) -> np.ndarray:
    """Full knot vector: equally spaced over [lo, hi], extended by DEGREE
    steps on each side.  Interior knot count n_interior >= 0."""
    if hi <= lo:
        raise DegenerateInput(f"degenerate domain [{lo}, {hi}]")
    n_seg = n_interior + 1
    h = (hi - lo) / n_seg
    return lo + h * np.arange(-DEGREE, n_seg + DEGREE + 1)


def design_matrix(x: np.ndarray, knots: np.ndarray) -> np.ndarray:
    """Dense B-spline design matrix over the base interval.

    x is clipped to [knots[DEGREE], knots[-DEGREE-1]]: callers clamp to the
    training domain anyway and the knot arithmetic can land the interval
    boundary one ulp inside the domain.
    """
    x = np.asarray(x, dtype=float)
    x = np.clip(x, knots[DEGREE], knots[-DEGREE - 1])
    return BSpline.design_matrix(x, knots, DEGREE).toarray()


def second_diff_penalty(n_basis: int) -> np.ndarray:
    """D2' D2 for the coefficient vector."""
    d = np.diff(np.eye(n_basis), n=PENALTY_ORDER, axis=0)
    return d.T @ d


@dataclass
class SplineModel:
    """Fitted penalized cubic spline on one covariate.

    ``knots`` holds the interior knot positions; the stored coefficient count
    is len(knots) + DEGREE + 1.  Evaluation clamps to the training domain:
    the optimizer probes volumes far beyond anything observed and unbounded
    spline extrapolation is unstable.
    """

    knots: np.ndarray
    coefficients: np.ndarray
    domain: Tuple[float, float]
    smoothing: float
    degree: int = DEGREE
    penalty_order: int = PENALTY_ORDER
    gcv_score: float = float("nan")

    def full_knots(self) -> np.ndarray:
        return knot_vector(self.domain[0], self.domain[1], len(self.knots))

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        clamped = np.clip(x, self.domain[0], self.domain[1])
        return design_matrix(clamped, self.full_knots()) @ self.coefficients

    def to_dict(self) -> dict:
        return {
            "knots": [float(v) for v in self.knots],
            "coefficients": [float(v) for v in self.coefficients],
            "domain": [float(self.domain[0]), float(self.domain[1])],
            "smoothing": float(self.smoothing),
            "degree": self.degree,
            "penalty_order": self.penalty_order,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SplineModel":
        return cls(
            knots=np.asarray(d["knots"], dtype=float),
            coefficients=np.asarray(d["coefficients"], dtype=float),
            domain=(d["domain"][0], d["domain"][1]),
            smoothing=d["smoothing"],
            degree=d.get("degree", DEGREE),
            penalty_order=d.get("penalty_order", PENALTY_ORDER),
        )


def _penalized_solve(
    btwb: np.ndarray, btwy: np.ndarray, penalty: np.ndarray, gamma: float
) -> np.ndarray:
    return np.linalg.solve(btwb + gamma * penalty, btwy)


def fit_pspline(
    x: Sequence[float],
    y: Sequence[float],
    weights: Optional[Sequence[float]] = None,
    n_interior_knots: int = 10,
    gamma: Optional[float] = None,
    gamma_grid: Sequence[float] = GCV_GRID,
) -> SplineModel:
    """Fit y ~ spline(x) by penalized least squares.

    Minimizes ||W^(1/2) (y - B c)||^2 + gamma * ||D2 c||^2.  If ``gamma`` is
    None it is selected by GCV over ``gamma_grid`` (ties -> smaller gamma).
    Raises DegenerateInput with fewer than four distinct x values, since a
    cubic smooth is meaningless below that.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be equal-length 1-d arrays")
    if not np.all(np.isfinite(x)) or not np.all(np.isfinite(y)):
        raise ValueError("x and y must be finite")
    distinct = np.unique(x)
    if distinct.size < 4:
        raise DegenerateInput(f"{distinct.size} distinct x values, need >= 4")
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")

    lo, hi = float(distinct[0]), float(distinct[-1])
    # cap segments at one per distinct value so the fit stays identifiable
    n_interior = min(n_interior_knots, distinct.size - 2)
    knots = knot_vector(lo, hi, n_interior)
    b = design_matrix(x, knots)
    penalty = second_diff_penalty(b.shape[1])
    btwb = b.T @ (w[:, None] * b)
    btwy = b.T @ (w * y)
    n_obs = float(len(y))

    def gcv(g: float) -> Tuple[float, np.ndarray]:
        c = _penalized_solve(btwb, btwy, penalty, g)
        resid = y - b @ c
        rss = float(np.sum(w * resid * resid))
        edf = float(np.trace(np.linalg.solve(btwb + g * penalty, btwb)))
        denom = max(n_obs - edf, 1e-8)
        return n_obs * rss / denom**2, c

    if gamma is not None:
        score, coeffs = gcv(float(gamma)) if gamma > 0 else (float("nan"), None)
        if coeffs is None:
            coeffs, *_ = np.linalg.lstsq(
                np.sqrt(w)[:, None] * b, np.sqrt(w) * y, rcond=None
            )
        chosen = float(gamma)
    else:
        best = None
        for g in gamma_grid:
            score, c = gcv(g)
            if best is None or score < best[0] - 1e-12:
                best = (score, g, c)
        score, chosen, coeffs = best

    interior = knots[DEGREE + 1 : -(DEGREE + 1)]
    return SplineModel(
        knots=np.asarray(interior, dtype=float),
        coefficients=np.asarray(coeffs, dtype=float),
        domain=(lo, hi),
        smoothing=chosen,
        gcv_score=score,
    )
