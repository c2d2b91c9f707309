"""Parallel Gaussian HMM baseline: Baum-Welch, Viterbi, one-step forecasts.

One independent HMM per variable with a single Gaussian per state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .ndcompute import ParamStore

VAR_FLOOR = 1e-6
_LOG2PI = math.log(2 * math.pi)


@dataclass
class HmmParams:
    pi: np.ndarray
    A: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    loglik_history: list[float] = field(default_factory=list)

    @property
    def m(self) -> int:
        return self.pi.shape[0]

    def log_emissions(self, series) -> np.ndarray:
        x = np.asarray(series, dtype=np.float64)[:, None]
        return -0.5 * (_LOG2PI + np.log(self.variances) + (x - self.means) ** 2 / self.variances)

    def to_store(self) -> ParamStore:
        return ParamStore(
            [("pi", self.pi), ("A", self.A), ("means", self.means), ("variances", self.variances)]
        )

    @classmethod
    def from_store(cls, store: ParamStore) -> "HmmParams":
        return cls(store["pi"].copy(), store["A"].copy(), store["means"].copy(), store["variances"].copy())


def log_likelihood(params: HmmParams, series) -> float:
    _, ls = kernels.hmm_forward(params.log_emissions(series), params.A, params.pi)
    return float(ls.sum())


def _init_params(series: np.ndarray, m: int) -> HmmParams:
    qs = [(2 * k + 1) / (2 * m) for k in range(m)]
    means = np.quantile(series, qs)
    var = max(float(series.var()), VAR_FLOOR)
    return HmmParams(np.full(m, 1.0 / m), np.full((m, m), 1.0 / m), means, np.full(m, var))


def fit_em(series, m: int, max_iters: int = 200, tol: float = 1e-6, seed: int | None = None,
           restarts: int = 0) -> HmmParams:
    """Baum-Welch on a single series.

    Starts from quantile-placed means, uniform ``pi`` and ``A``; extra
    ``restarts`` perturb the means with a seeded RNG and keep the best
    final likelihood.  Stops once the relative log-likelihood gain drops
    below ``tol``.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.shape[0] <= m:
        raise ValueError("series must be longer than the number of states")
    starts = [_init_params(x, m)]
    if restarts:
        rng = np.random.default_rng(seed)
        for _ in range(restarts):
            p = _init_params(x, m)
            p.means = p.means + rng.normal(0, x.std() * 0.5, size=m)
            starts.append(p)
    best = None
    for p in starts:
        fitted = _baum_welch(x, p, max_iters, tol)
        if best is None or fitted.loglik_history[-1] > best.loglik_history[-1]:
            best = fitted
    return best


def _baum_welch(x: np.ndarray, p: HmmParams, max_iters: int, tol: float) -> HmmParams:
    m = p.m
    hist: list[float] = []
    for _ in range(max_iters):
        logB = p.log_emissions(x)
        alpha, ls = kernels.hmm_forward(logB, p.A, p.pi)
        beta = kernels.hmm_backward(logB, p.A, ls)
        ll = float(ls.sum())
        hist.append(ll)
        gamma = alpha * beta
        gamma /= gamma.sum(axis=1, keepdims=True)
        shift = logB.max(axis=1)
        B = np.exp(logB - shift[:, None])
        c = np.exp(ls - shift)
        # xi summed over time
        xi = (alpha[:-1].T @ (B[1:] * beta[1:] / c[1:, None])) * p.A
        A = xi / np.maximum(xi.sum(axis=1, keepdims=True), 1e-300)
        occ = gamma.sum(axis=0)
        means = (gamma * x[:, None]).sum(axis=0) / np.maximum(occ, 1e-300)
        var = (gamma * (x[:, None] - means) ** 2).sum(axis=0) / np.maximum(occ, 1e-300)
        p = HmmParams(gamma[0].copy(), A, means, np.maximum(var, VAR_FLOOR))
        if len(hist) > 1 and abs(hist[-1] - hist[-2]) <= tol * abs(hist[-2]):
            break
    p.loglik_history = hist + [log_likelihood(p, x)]
    return p


def viterbi(params: HmmParams, series) -> np.ndarray:
    """Most probable 0-based state path (log domain, ties to lower index)."""
    with np.errstate(divide="ignore"):
        return kernels.viterbi(params.log_emissions(series), np.log(params.A), np.log(params.pi))


def filter_probs(params: HmmParams, series) -> np.ndarray:
    alpha, _ = kernels.hmm_forward(params.log_emissions(series), params.A, params.pi)
    return alpha


def forecast_one_step(params: HmmParams, series) -> float:
    """``sum_u (alpha_t A)_u mean_u`` for the filtered distribution at the end."""
    alpha = filter_probs(params, series)
    return float((alpha[-1] @ params.A) @ params.means)


def forecast_path(params: HmmParams, series) -> np.ndarray:
    """One-step forecasts for every prefix: entry ``t`` predicts ``x[t+1]``."""
    alpha = filter_probs(params, series)
    return (alpha @ params.A) @ params.means


@dataclass
class ParallelHMM:
    models: list[HmmParams]

    @classmethod
    def fit(cls, X_train, m: int, max_iters: int = 200, tol: float = 1e-6, seed: int = 0,
            restarts: int = 0) -> "ParallelHMM":
        X_train = np.asarray(X_train)
        return cls([fit_em(X_train[:, i], m, max_iters, tol, seed, restarts)
                    for i in range(X_train.shape[1])])

    def decode(self, X) -> np.ndarray:
        return np.stack([viterbi(p, X[:, i]) for i, p in enumerate(self.models)], axis=1)

    def forecasts(self, X) -> np.ndarray:
        """Row ``t`` holds forecasts of ``X[t+1]`` (last row predicts past the end)."""
        return np.stack([forecast_path(p, X[:, i]) for i, p in enumerate(self.models)], axis=1)
