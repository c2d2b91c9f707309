"""Multi-head emission predictors and the single-head reference predictor.

A :class:`DenModel` maps a history window ``H_t`` (the last ``T0``
standardized observations) through a shared tanh trunk to ``m`` linear
heads; head ``s`` is the one-step forecast under hidden state ``s``.
:class:`BaselineModel` is the same trunk with one head and no notion of
state.  States and actions are 0-based throughout this module.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ndcompute as nd
from .ndcompute import Adam, ParamStore, Tape

__all__ = [
    "Standardizer",
    "history_windows",
    "DenModel",
    "BaselineModel",
    "predict_heads",
    "select_prediction",
    "head_errors",
    "new_candidate",
    "train_screened",
    "soft_update",
    "train_baseline",
]


@dataclass(frozen=True)
class Standardizer:
    """Per-variable affine standardization fitted on the training split."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X) -> "Standardizer":
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        std = X.std(axis=0)
        std = np.where(std > 1e-12, std, 1.0)
        return cls(X.mean(axis=0), std)

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.std

    def inverse(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=np.float64) * self.std + self.mean

    def column(self, i: int) -> "Standardizer":
        return Standardizer(self.mean[i : i + 1], self.std[i : i + 1])


def history_windows(z, T0: int) -> np.ndarray:
    """Row ``t`` is ``H_t = z[t-T0+1 .. t]`` (oldest first, zeros before 0)."""
    z = np.asarray(z, dtype=np.float64)
    padded = np.concatenate([np.zeros(T0 - 1), z])
    idx = np.arange(z.shape[0])[:, None] + np.arange(T0)[None, :]
    return padded[idx]


class DenModel:
    """Shared tanh trunk with ``m`` separate linear heads.

    Heads are stored as separate parameters ``head{s}.W``/``head{s}.b`` so
    an optimizer can leave unselected heads untouched.
    """

    def __init__(self, n_in: int, m: int, rng, hidden=(64, 64), zero_heads: bool = False):
        if m < 1:
            raise ValueError("need at least one head")
        self.n_in = int(n_in)
        self.m = int(m)
        self.hidden = tuple(int(h) for h in hidden)
        self.params = ParamStore()
        width = self.n_in
        self.trunk = []
        for k, h in enumerate(self.hidden):
            nd.add_dense(self.params, f"trunk{k}", width, h, rng)
            self.trunk.append(f"trunk{k}")
            width = h
        for s in range(self.m):
            nd.add_dense(self.params, f"head{s}", width, 1, rng)
            if zero_heads:
                self.params[f"head{s}.W"] = np.zeros((1, width))
                self.params[f"head{s}.b"] = np.zeros(1)

    def forward(self, tape: Tape, H, params: ParamStore | None = None) -> nd.Var:
        """Batch ``(B, n_in)`` -> head outputs ``(B, m)``."""
        p = self.params if params is None else params
        h = np.atleast_2d(np.asarray(H, dtype=np.float64))
        x = tape.constant(h)
        for name in self.trunk:
            x = nd.tanh(nd.dense(tape, p, x, name))
        heads = [nd.dense(tape, p, x, f"head{s}") for s in range(self.m)]
        return heads[0] if self.m == 1 else nd.concat(heads, axis=-1)

    def predict(self, H, params: ParamStore | None = None) -> np.ndarray:
        """Plain-numpy batch forward, ``(B, n_in)`` -> ``(B, m)``."""
        p = self.params if params is None else params
        x = np.atleast_2d(np.asarray(H, dtype=np.float64))
        if x.shape[-1] != self.n_in:
            raise ValueError(f"window width {x.shape[-1]} does not match model input {self.n_in}")
        for name in self.trunk:
            x = np.tanh(x @ p[f"{name}.W"].T + p[f"{name}.b"])
        W = np.concatenate([p[f"head{s}.W"] for s in range(self.m)], axis=0)
        b = np.concatenate([p[f"head{s}.b"] for s in range(self.m)])
        return x @ W.T + b

    def head_names(self, s: int) -> tuple[str, str]:
        return f"head{s}.W", f"head{s}.b"


class BaselineModel(DenModel):
    """Same trunk, one head, no states."""

    def __init__(self, n_in: int, rng, hidden=(64, 64)):
        super().__init__(n_in, 1, rng, hidden)

    def predict_one(self, H) -> np.ndarray:
        return self.predict(H)[:, 0]


def predict_heads(model: DenModel, h) -> np.ndarray:
    """Head outputs for a single window ``h``."""
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 1 or h.shape[0] != model.n_in:
        raise ValueError(f"window must have length {model.n_in}, got shape {h.shape}")
    return model.predict(h[None, :])[0]


def select_prediction(heads, action: int) -> float:
    heads = np.asarray(heads)
    if not 0 <= int(action) < heads.shape[-1]:
        raise ValueError(f"action {action} outside 0..{heads.shape[-1] - 1}")
    return float(heads[int(action)])


def head_errors(heads, truth) -> np.ndarray:
    """Squared error of every head; broadcasts over leading batch dims."""
    heads = np.asarray(heads, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    return (heads - truth[..., None]) ** 2 if truth.ndim else (heads - truth) ** 2


def selected_head_loss(model: DenModel, tape: Tape, H, actions, targets, params=None) -> nd.Var:
    out = model.forward(tape, H, params)
    rows = np.arange(len(actions))
    picked = out[rows, np.asarray(actions, dtype=np.int64)]
    return nd.mean(nd.square(nd.sub(picked, np.asarray(targets, dtype=np.float64))))


def new_candidate(model: DenModel, lr: float = 1e-3) -> Adam:
    """A fresh candidate copy of the model's parameters with its own Adam state."""
    return Adam(model.params.copy(), lr=lr, lazy=True)


def train_screened(model: DenModel, H, actions, targets, optimizer: Adam, steps: int = 1):
    """Fit the selected head of each sample on the candidate ``optimizer.params``.

    Only the head named by each sample's action receives gradient (heads
    absent from the batch are skipped by the lazy optimizer).  Returns
    ``(candidate params, last loss)``, or ``None`` for an empty batch.
    The model's own parameters are never touched.
    """
    if optimizer.params is model.params:
        raise ValueError("the optimizer must own a candidate copy, not the model parameters")
    actions = np.asarray(actions, dtype=np.int64)
    if actions.size == 0:
        return None
    H = np.atleast_2d(np.asarray(H, dtype=np.float64))
    loss_val = float("nan")
    for _ in range(steps):
        tape = Tape()
        loss = selected_head_loss(model, tape, H, actions, targets, optimizer.params)
        loss_val = float(loss.value)
        if not np.isfinite(loss_val):
            raise nd.TrainingError("non-finite emission loss")
        optimizer.step(tape.backward(loss))
    return optimizer.params, loss_val


def soft_update(model: DenModel, candidate: ParamStore, tau: float) -> None:
    """``theta <- tau * candidate + (1 - tau) * theta`` in place."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    model.params.lerp_(candidate, tau)


def train_baseline(
    model: BaselineModel,
    H,
    targets,
    rng,
    epochs: int = 60,
    batch: int = 256,
    lr: float = 1e-3,
) -> list[float]:
    """Minibatch MSE regression of the single head on every sample.

    Returns the full-batch loss after each epoch.
    """
    H = np.atleast_2d(np.asarray(H, dtype=np.float64))
    y = np.asarray(targets, dtype=np.float64)
    if y.size == 0:
        raise ValueError("baseline needs at least one sample")
    opt = Adam(model.params, lr=lr)
    zeros = np.zeros(y.shape[0], dtype=np.int64)
    history = []
    for _ in range(epochs):
        order = rng.permutation(y.shape[0])
        for start in range(0, y.shape[0], batch):
            idx = order[start : start + batch]
            tape = Tape()
            loss = selected_head_loss(model, tape, H[idx], zeros[idx], y[idx])
            opt.step(tape.backward(loss))
        history.append(float(np.mean((model.predict_one(H) - y) ** 2)))
    return history
