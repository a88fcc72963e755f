"""Synthetic right-censored cohorts with a known data-generating process.

Event times follow a Weibull proportional-hazards model,
``H(t | x) = (t / scale) ** shape * exp(eta(x))``; censoring times are
exponential and independent of the covariates, with the rate tuned by
bisection to hit a target censored fraction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import SurvivalDataset
from .errors import DataError

FORMS = ("linear", "nonlinear")


@dataclass(frozen=True)
class SynthSpec:
    n: int
    p: int
    beta_true: tuple[float, ...] = field(default=())
    shape: float = 1.5
    scale: float = 10.0
    censor_rate_target: float = 0.3
    missing_rate: float = 0.0
    seed: int = 0
    form: str = "linear"

    def __post_init__(self):
        beta = tuple(float(b) for b in self.beta_true) or (0.0,) * self.p
        object.__setattr__(self, "beta_true", beta)
        if self.n < 2 or self.p < 1:
            raise DataError("need n >= 2 and p >= 1")
        if len(beta) != self.p:
            raise DataError(f"beta_true has {len(beta)} entries for p={self.p}")
        if not 0 <= self.censor_rate_target < 1:
            raise DataError("censor_rate_target must lie in [0, 1)")
        if not 0 <= self.missing_rate < 1:
            raise DataError("missing_rate must lie in [0, 1)")
        if self.shape <= 0 or self.scale <= 0:
            raise DataError("Weibull shape and scale must be positive")
        if self.form not in FORMS:
            raise DataError(f"form must be one of {FORMS}")
        if self.form == "nonlinear" and self.p < 3:
            raise DataError("the nonlinear form needs p >= 3")


def linear_predictor(spec: SynthSpec, X: np.ndarray) -> np.ndarray:
    """True log relative hazard.

    ``linear``: ``X @ beta``. ``nonlinear``: ``b0*|x0| + b1*x1*x2 +
    sum_{j>=3} b_j*x_j`` (``b2`` unused).
    """
    beta = np.asarray(spec.beta_true)
    if spec.form == "linear":
        return X @ beta
    eta = beta[0] * np.abs(X[:, 0]) + beta[1] * X[:, 1] * X[:, 2]
    if spec.p > 3:
        eta = eta + X[:, 3:] @ beta[3:]
    return eta


def _calibrate_rate(event_times, unit_draws, target, tol=0.005, max_iter=200):
    if target == 0:
        return 0.0
    lo, hi = -30.0, 30.0
    best_rate, best_gap = None, np.inf
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        rate = np.exp(mid)
        frac = np.mean(unit_draws / rate < event_times)
        gap = frac - target
        if abs(gap) < best_gap:
            best_rate, best_gap = rate, abs(gap)
        if abs(gap) <= tol:
            break
        if gap < 0:
            lo = mid
        else:
            hi = mid
    if best_gap > 0.05:
        raise DataError(f"could not calibrate censoring to {target:.3f} (closest gap {best_gap:.3f})")
    return best_rate


def generate(spec: SynthSpec) -> SurvivalDataset:
    """Draw one cohort; identical specs (seed included) give identical data."""
    rng = np.random.default_rng(spec.seed)
    X = rng.standard_normal((spec.n, spec.p))
    eta = linear_predictor(spec, X)
    e_event = rng.standard_exponential(spec.n)
    e_censor = rng.standard_exponential(spec.n)
    miss_u = rng.random((spec.n, spec.p))

    T = spec.scale * (e_event * np.exp(-eta)) ** (1.0 / spec.shape)
    rate = _calibrate_rate(T, e_censor, spec.censor_rate_target)
    C = np.full(spec.n, np.inf) if rate == 0 else e_censor / rate
    events = (T <= C).astype(np.int64)
    times = np.minimum(T, C)
    if spec.missing_rate > 0:
        X = np.where(miss_u < spec.missing_rate, np.nan, X)
    return SurvivalDataset.from_arrays(X, times, events)


def true_risk(spec: SynthSpec, dataset: SurvivalDataset) -> np.ndarray:
    """The generating linear predictor evaluated on a complete cohort."""
    return linear_predictor(spec, dataset.features)
