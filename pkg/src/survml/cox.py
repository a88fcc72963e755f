"""Unpenalized Cox proportional hazards fitted by Newton-Raphson.

Ties use the Breslow approximation: every event at time t shares the risk
set {j : t_j >= t}.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import SurvivalDataset
from .errors import DataError, FitError, MonotoneLikelihoodError


@dataclass(frozen=True)
class RiskSets:
    """Subjects sorted by descending time with Breslow tie groups.

    ``group_last[q]`` / ``group_first[q]`` give, for sorted position q, the
    last / first sorted position sharing its time, so the risk set of
    position q is ``0 .. group_last[q]``.
    """

    order: np.ndarray
    events: np.ndarray
    group_first: np.ndarray
    group_last: np.ndarray

    @classmethod
    def build(cls, times, events) -> "RiskSets":
        times = np.asarray(times, dtype=float)
        order = np.argsort(-times, kind="mergesort")
        t = times[order]
        n = t.shape[0]
        new_group = np.ones(n, dtype=bool)
        new_group[1:] = t[1:] != t[:-1]
        starts = np.flatnonzero(new_group)
        ends = np.append(starts[1:] - 1, n - 1)
        sizes = ends - starts + 1
        group_first = np.repeat(starts, sizes)
        group_last = np.repeat(ends, sizes)
        ev = np.asarray(events, dtype=np.int64)[order]
        return cls(order, ev, group_first, group_last)


def breslow_terms(beta, X, risk: RiskSets, hessian: bool = True):
    """Log partial likelihood, its gradient and (optionally) Hessian at ``beta``."""
    Xs = np.asarray(X, dtype=float)[risk.order]
    eta = Xs @ beta
    shift = eta.max() if eta.size else 0.0
    w = np.exp(eta - shift)
    ev = risk.events == 1
    s0 = np.cumsum(w)[risk.group_last]
    s1 = np.cumsum(w[:, None] * Xs, axis=0)[risk.group_last]
    loglik = float(np.sum(eta[ev] - np.log(s0[ev]) - shift))
    mean_x = s1[ev] / s0[ev, None]
    grad = Xs[ev].sum(axis=0) - mean_x.sum(axis=0)
    if not hessian:
        return loglik, grad, None
    # sum over events of S2/S0 equals X' diag(w * c) X with c_j the running sum of 1/S0
    inv = np.where(ev, 1.0 / s0, 0.0)
    tail = np.cumsum(inv[::-1])[::-1]
    c = tail[risk.group_first]
    first = (Xs * (w * c)[:, None]).T @ Xs
    hess = -(first - mean_x.T @ mean_x)
    return loglik, grad, hess


def log_partial_likelihood(beta, X, times, events) -> float:
    risk = RiskSets.build(times, events)
    return breslow_terms(np.asarray(beta, dtype=float), X, risk, hessian=False)[0]


def score(beta, X, times, events) -> np.ndarray:
    risk = RiskSets.build(times, events)
    return breslow_terms(np.asarray(beta, dtype=float), X, risk, hessian=False)[1]


@dataclass(frozen=True)
class FitOptions:
    tol: float = 1e-8
    max_iter: int = 100
    max_halvings: int = 20
    divergence_bound: float = 20.0


@dataclass(frozen=True)
class CoxModel:
    beta: np.ndarray
    column_names: tuple[str, ...]
    log_partial_likelihood: float
    n_iterations: int
    converged: bool
    gradient_norm: float
    dropped_columns: tuple[str, ...] = field(default=())

    def predict_risk(self, X) -> np.ndarray:
        return linear_risk(self.beta, self.column_names, X)


def linear_risk(beta, column_names, X) -> np.ndarray:
    """Linear predictor ``X @ beta``; higher means an earlier expected event."""
    if isinstance(X, SurvivalDataset):
        if tuple(X.column_names) != tuple(column_names):
            raise DataError("prediction columns differ from the training columns")
        X = X.features
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != len(beta):
        raise DataError(f"expected {len(beta)} columns, got shape {X.shape}")
    return X @ beta


def aliased_columns(X) -> np.ndarray:
    """Mask of columns that are constant or exact copies of an earlier column."""
    X = np.asarray(X, dtype=float)
    drop = np.zeros(X.shape[1], dtype=bool)
    seen = set()
    for j in range(X.shape[1]):
        col = X[:, j]
        if np.ptp(col) == 0:
            drop[j] = True
            continue
        key = col.tobytes()
        if key in seen:
            drop[j] = True
        else:
            seen.add(key)
    return drop


def _check_complete(train: SurvivalDataset, min_events: int) -> None:
    if np.isnan(train.features).any():
        raise DataError("model fitting requires a complete (imputed) feature matrix")
    if train.n_events < min_events:
        raise DataError(f"need at least {min_events} events, found {train.n_events}")
    train.check_fittable()


def fit_cox(train: SurvivalDataset, options: FitOptions | None = None) -> CoxModel:
    """Maximize the Breslow log partial likelihood by damped Newton steps.

    Constant and duplicated columns are removed before fitting and keep a
    zero coefficient. Raises :class:`MonotoneLikelihoodError` as soon as a
    coefficient leaves ``[-divergence_bound, divergence_bound]``.
    """
    options = options or FitOptions()
    _check_complete(train, min_events=2)
    X = train.features
    drop = aliased_columns(X)
    keep = np.flatnonzero(~drop)
    names = tuple(train.column_names)
    dropped = tuple(names[j] for j in np.flatnonzero(drop))
    Xk = X[:, keep]
    risk = RiskSets.build(train.times, train.events)

    beta = np.zeros(keep.size)
    loglik, grad, hess = breslow_terms(beta, Xk, risk)
    converged = False
    it = 0
    gnorm = float(np.max(np.abs(grad))) if grad.size else 0.0
    while True:
        if gnorm <= options.tol:
            converged = True
            break
        if it >= options.max_iter:
            break
        it += 1
        try:
            step = np.linalg.solve(-hess, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(-hess, grad, rcond=None)[0]
        accepted = False
        for _ in range(options.max_halvings + 1):
            trial = beta + step
            t_loglik, t_grad, t_hess = breslow_terms(trial, Xk, risk)
            if np.isfinite(t_loglik) and t_loglik >= loglik:
                accepted = True
                break
            step = step / 2
        if not accepted:
            break
        beta, loglik, grad, hess = trial, t_loglik, t_grad, t_hess
        gnorm = float(np.max(np.abs(grad)))
        worst = int(np.argmax(np.abs(beta)))
        if abs(beta[worst]) > options.divergence_bound:
            raise MonotoneLikelihoodError(names[keep[worst]], float(beta[worst]))

    if not np.all(np.isfinite(beta)):
        raise FitError("Cox fit produced non-finite coefficients")
    full = np.zeros(X.shape[1])
    full[keep] = beta
    full.setflags(write=False)
    return CoxModel(full, names, loglik, it, converged, gnorm, dropped)


def predict_risk(model, X) -> np.ndarray:
    return model.predict_risk(X)
