"""Elastic-net penalized Cox regression by cyclic coordinate descent.

Minimizes

    -(1/n) logPL(beta) + lambda * (alpha * |beta|_1 + (1 - alpha)/2 * |beta|_2^2)

with the Breslow partial likelihood shared with :mod:`survml.cox`. Each
coordinate takes a soft-thresholded Newton step on its exact one-dimensional
quadratic model, halved until the penalized objective does not increase.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numba
import numpy as np

from .cox import RiskSets, _check_complete, breslow_terms, linear_risk
from .dataset import SurvivalDataset
from .errors import ConvergenceError, DataError

DEFAULT_ALPHAS = tuple(round(0.05 * i, 2) for i in range(21))
DEFAULT_LAMBDAS = tuple(round(0.05 * i, 2) for i in range(1, 7))


@dataclass(frozen=True)
class CoxnetGrid:
    alphas: tuple[float, ...] = DEFAULT_ALPHAS
    lambdas: tuple[float, ...] = DEFAULT_LAMBDAS

    def combinations(self) -> list[dict]:
        """Row-major (alpha outer, lambda inner) parameter dictionaries."""
        return [{"alpha": a, "lambda": l} for a, l in itertools.product(self.alphas, self.lambdas)]

    def __len__(self):
        return len(self.alphas) * len(self.lambdas)


def default_grid() -> CoxnetGrid:
    return CoxnetGrid()


@dataclass(frozen=True)
class CoxnetModel:
    beta: np.ndarray
    column_names: tuple[str, ...]
    alpha: float
    lam: float
    n_nonzero: int
    converged: bool
    n_cycles: int
    objective: float
    kkt_residual: float

    def predict_risk(self, X) -> np.ndarray:
        return linear_risk(self.beta, self.column_names, X)


@dataclass(frozen=True)
class CoxnetProblem:
    """Training data pre-sorted for repeated fits over a hyperparameter grid."""

    xt: np.ndarray  # p x n, rows are columns in descending-time order
    events: np.ndarray
    group_last: np.ndarray
    column_names: tuple[str, ...]
    risk: RiskSets
    X: np.ndarray

    @classmethod
    def from_dataset(cls, train: SurvivalDataset) -> "CoxnetProblem":
        _check_complete(train, min_events=1)
        risk = RiskSets.build(train.times, train.events)
        xt = np.ascontiguousarray(train.features[risk.order].T)
        return cls(xt, risk.events.astype(np.int64), risk.group_last.astype(np.int64),
                   tuple(train.column_names), risk, train.features)

    @property
    def n(self) -> int:
        return self.xt.shape[1]

    @property
    def p(self) -> int:
        return self.xt.shape[0]


@numba.njit(cache=True)
def _neg_loglik(eta, events, group_last):
    n = eta.shape[0]
    shift = eta.max()
    cs = np.empty(n)
    acc = 0.0
    for q in range(n):
        acc += np.exp(eta[q] - shift)
        cs[q] = acc
    total = 0.0
    for q in range(n):
        if events[q] == 1:
            total += eta[q] - shift - np.log(cs[group_last[q]])
    return -total


@numba.njit(cache=True)
def _coord_derivs(xj, eta, events, group_last):
    n = eta.shape[0]
    shift = eta.max()
    c0 = np.empty(n)
    c1 = np.empty(n)
    c2 = np.empty(n)
    a0 = 0.0
    a1 = 0.0
    a2 = 0.0
    for q in range(n):
        w = np.exp(eta[q] - shift)
        a0 += w
        a1 += w * xj[q]
        a2 += w * xj[q] * xj[q]
        c0[q] = a0
        c1[q] = a1
        c2[q] = a2
    grad = 0.0
    hess = 0.0
    for q in range(n):
        if events[q] == 1:
            g = group_last[q]
            m1 = c1[g] / c0[g]
            grad += xj[q] - m1
            hess += c2[g] / c0[g] - m1 * m1
    # derivatives of -logPL
    return -grad, hess


@numba.njit(cache=True)
def _penalty(b, alpha, lam):
    return lam * (alpha * abs(b) + 0.5 * (1.0 - alpha) * b * b)


@numba.njit(cache=True)
def _cd_kernel(xt, events, group_last, beta, alpha, lam, tol, max_cycles, max_halvings):
    p, n = xt.shape
    inv_n = 1.0 / n
    eta = np.zeros(n)
    for j in range(p):
        if beta[j] != 0.0:
            for q in range(n):
                eta[q] += beta[j] * xt[j, q]
    pen = 0.0
    for j in range(p):
        pen += _penalty(beta[j], alpha, lam)
    obj = _neg_loglik(eta, events, group_last) * inv_n + pen
    trace = np.empty(max_cycles + 1)
    trace[0] = obj
    trial = np.empty(n)
    cycles = 0
    converged = False
    while cycles < max_cycles:
        cycles += 1
        max_change = 0.0
        for j in range(p):
            xj = xt[j]
            g, h = _coord_derivs(xj, eta, events, group_last)
            g *= inv_n
            h *= inv_n
            b0 = beta[j]
            if alpha == 0.0:
                denom = h + lam
                if denom <= 1e-300:
                    continue
                b1 = (h * b0 - g) / denom
            else:
                denom = h + lam * (1.0 - alpha)
                if denom <= 1e-300:
                    continue
                z = h * b0 - g
                thr = lam * alpha
                if z > thr:
                    b1 = (z - thr) / denom
                elif z < -thr:
                    b1 = (z + thr) / denom
                else:
                    b1 = 0.0
            delta = b1 - b0
            if delta == 0.0:
                continue
            # penalty of the other coordinates; it does not move with beta[j]
            pen_rest = pen - _penalty(b0, alpha, lam)
            accepted = False
            for _ in range(max_halvings + 1):
                bt = b0 + delta
                for q in range(n):
                    trial[q] = eta[q] + delta * xj[q]
                t_pen = pen_rest + _penalty(bt, alpha, lam)
                t_obj = _neg_loglik(trial, events, group_last) * inv_n + t_pen
                if t_obj <= obj:
                    accepted = True
                    break
                delta *= 0.5
            if not accepted:
                continue
            beta[j] = b0 + delta
            for q in range(n):
                eta[q] = trial[q]
            obj = t_obj
            pen = t_pen
            if abs(delta) > max_change:
                max_change = abs(delta)
        trace[cycles] = obj
        if max_change < tol:
            converged = True
            break
    return beta, obj, cycles, converged, trace[: cycles + 1]


def penalized_objective(beta, problem: CoxnetProblem, alpha: float, lam: float) -> float:
    beta = np.asarray(beta, dtype=float)
    loglik = breslow_terms(beta, problem.X, problem.risk, hessian=False)[0]
    return -loglik / problem.n + lam * (alpha * np.abs(beta).sum() + 0.5 * (1 - alpha) * beta @ beta)


def kkt_residual(beta, problem: CoxnetProblem, alpha: float, lam: float) -> float:
    """Largest violation of the elastic-net optimality conditions."""
    beta = np.asarray(beta, dtype=float)
    grad = -breslow_terms(beta, problem.X, problem.risk, hessian=False)[1] / problem.n
    smooth = grad + lam * (1 - alpha) * beta
    nz = beta != 0
    resid = np.zeros_like(beta)
    resid[nz] = np.abs(smooth[nz] + lam * alpha * np.sign(beta[nz]))
    resid[~nz] = np.maximum(np.abs(smooth[~nz]) - lam * alpha, 0.0)
    return float(resid.max()) if resid.size else 0.0


def lambda_max(train, alpha: float = 1.0) -> float:
    """Smallest lambda at which beta = 0 satisfies the KKT conditions."""
    if alpha <= 0:
        return float("inf")
    problem = train if isinstance(train, CoxnetProblem) else CoxnetProblem.from_dataset(train)
    grad0 = breslow_terms(np.zeros(problem.p), problem.X, problem.risk, hessian=False)[1]
    return float(np.max(np.abs(grad0)) / problem.n / alpha)


def fit_coxnet(train, alpha: float, lam: float, tol: float = 1e-7, max_cycles: int = 10_000,
               beta_init=None, return_trace: bool = False):
    """Fit one (alpha, lambda) cell; ``train`` may be a dataset or a prepared problem."""
    if not 0 <= alpha <= 1:
        raise DataError(f"alpha must lie in [0, 1], got {alpha}")
    if not lam > 0:
        raise DataError(f"lambda must be positive, got {lam}")
    problem = train if isinstance(train, CoxnetProblem) else CoxnetProblem.from_dataset(train)
    beta = np.zeros(problem.p) if beta_init is None else np.array(beta_init, dtype=float)
    beta, obj, cycles, converged, trace = _cd_kernel(
        problem.xt, problem.events, problem.group_last, beta,
        float(alpha), float(lam), float(tol), int(max_cycles), 30,
    )
    if not converged:
        raise ConvergenceError(
            f"coordinate descent did not converge in {max_cycles} cycles (alpha={alpha}, lambda={lam})"
        )
    beta = np.array(beta)
    beta.setflags(write=False)
    model = CoxnetModel(
        beta=beta,
        column_names=problem.column_names,
        alpha=float(alpha),
        lam=float(lam),
        n_nonzero=int(np.count_nonzero(beta)),
        converged=converged,
        n_cycles=int(cycles),
        objective=float(obj),
        kkt_residual=kkt_residual(beta, problem, alpha, lam),
    )
    if return_trace:
        return model, np.array(trace)
    return model


def fit_coxnet_path(train, alpha: float, lambdas, **kwargs) -> list[CoxnetModel]:
    """Fit every lambda for one alpha, warm-starting from the next larger lambda.

    Models come back in the order of ``lambdas``.
    """
    problem = train if isinstance(train, CoxnetProblem) else CoxnetProblem.from_dataset(train)
    lambdas = list(lambdas)
    out: list = [None] * len(lambdas)
    beta = None
    for i in sorted(range(len(lambdas)), key=lambda i: -lambdas[i]):
        model = fit_coxnet(problem, alpha, lambdas[i], beta_init=beta, **kwargs)
        out[i] = model
        beta = model.beta
    return out


def predict_risk(model: CoxnetModel, X) -> np.ndarray:
    return model.predict_risk(X)
