"""Categorical actor-critic trained with clipped PPO and GAE.

The update is written against two small protocols so stage one (one
categorical per step) and stage two (a product of per-variable
categoricals) share it:

* a policy exposes ``params`` and ``logp_entropy(tape, obs, actions)``
  returning per-sample log-probability and entropy ``Var`` objects;
* a value function exposes ``params`` and ``values(tape, obs)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from . import ndcompute as nd
from .ndcompute import Adam, ParamStore, Tape, TrainingError

__all__ = [
    "PpoConfig",
    "PolicyNet",
    "ValueNet",
    "EpisodeBuffer",
    "sample_action",
    "hard_decode",
    "entropy",
    "compute_gae",
    "ppo_update",
    "PpoStats",
]


@dataclass
class PpoConfig:
    gamma: float = 0.99
    lambda_gae: float = 0.95
    clip_eps: float = 0.2
    entropy_beta: float = 0.04
    ppo_epochs: int = 4
    minibatch: int = 256
    actor_lr: float = 3e-4
    critic_lr: float = 1e-3
    normalize_advantages: bool = True

    def __post_init__(self):
        if not (0.0 <= self.gamma <= 1.0 and 0.0 <= self.lambda_gae <= 1.0):
            raise ValueError("gamma and lambda_gae must lie in [0, 1]")
        if self.clip_eps <= 0.0:
            raise ValueError("clip_eps must be positive")
        if self.ppo_epochs < 1 or self.minibatch < 1:
            raise ValueError("ppo_epochs and minibatch must be >= 1")


def _mlp_layers(store: ParamStore, prefix: str, sizes: list[int], rng) -> list[str]:
    names = []
    for k in range(len(sizes) - 1):
        name = f"{prefix}{k}"
        nd.add_dense(store, name, sizes[k], sizes[k + 1], rng)
        names.append(name)
    return names


def _np_mlp(params: ParamStore, layers: list[str], x: np.ndarray) -> np.ndarray:
    for k, name in enumerate(layers):
        x = x @ params[f"{name}.W"].T + params[f"{name}.b"]
        if k < len(layers) - 1:
            x = np.tanh(x)
    return x


class PolicyNet:
    """MLP (tanh hidden layers) producing logits over ``m`` actions.

    A positive ``logit_cap`` squashes logits to ``cap * tanh(z / cap)`` so
    probabilities never saturate completely.
    """

    def __init__(self, n_in: int, m: int, rng, hidden=(64, 64), prefix: str = "pi", logit_cap: float = 0.0):
        self.n_in, self.m = int(n_in), int(m)
        self.logit_cap = float(logit_cap)
        self.params = ParamStore()
        self.layers = _mlp_layers(self.params, prefix, [self.n_in, *hidden, self.m], rng)
        # small final layer keeps the initial policy close to uniform
        self.params[f"{self.layers[-1]}.W"] *= 0.01

    def logits(self, tape: Tape, obs) -> nd.Var:
        z = nd.mlp(tape, self.params, np.atleast_2d(obs), self.layers)
        if self.logit_cap > 0:
            z = nd.mul(nd.tanh(nd.mul(z, 1.0 / self.logit_cap)), self.logit_cap)
        return z

    def probs(self, obs) -> np.ndarray:
        z = _np_mlp(self.params, self.layers, np.atleast_2d(obs))
        if self.logit_cap > 0:
            z = self.logit_cap * np.tanh(z / self.logit_cap)
        return nd.softmax_array(z)

    def logp_entropy(self, tape: Tape, obs, actions):
        lp = nd.log_softmax(self.logits(tape, obs))
        rows = np.arange(lp.value.shape[0])
        picked = lp[rows, np.asarray(actions, dtype=np.int64)]
        ent = nd.mul(nd.vsum(nd.mul(nd.exp(lp), lp), axis=-1), -1.0)
        return picked, ent

    def layer_arrays(self):
        out = []
        for name in self.layers:
            out += [self.params[f"{name}.W"], self.params[f"{name}.b"]]
        return out


class ValueNet:
    """MLP (tanh hidden layers) producing a scalar state value."""

    def __init__(self, n_in: int, rng, hidden=(64, 64), prefix: str = "v"):
        self.n_in = int(n_in)
        self.params = ParamStore()
        self.layers = _mlp_layers(self.params, prefix, [self.n_in, *hidden, 1], rng)

    def values(self, tape: Tape, obs) -> nd.Var:
        out = nd.mlp(tape, self.params, np.atleast_2d(obs), self.layers)
        return nd.reshape(out, (out.value.shape[0],))

    def predict(self, obs) -> np.ndarray:
        return _np_mlp(self.params, self.layers, np.atleast_2d(obs))[:, 0]


@dataclass
class EpisodeBuffer:
    """One trajectory.  ``bootstrap`` is ``V`` of the observation after the last step."""

    obs: np.ndarray
    actions: np.ndarray
    logp: np.ndarray
    values: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    bootstrap: float = 0.0

    def __post_init__(self):
        n = len(self.rewards)
        for name in ("obs", "actions", "logp", "values", "dones"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"buffer field {name!r} has length {len(getattr(self, name))}, expected {n}")
        if not np.all(np.isin(self.dones, (0, 1))):
            raise ValueError("done flags must be 0 or 1")

    def __len__(self) -> int:
        return len(self.rewards)


def sample_action(probs, rng) -> tuple[int, float]:
    """Categorical draw by inverse CDF; returns ``(action, log prob)``."""
    p = np.asarray(probs, dtype=np.float64)
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-6:
        raise ValueError("probabilities must be non-negative and sum to 1")
    u = rng.random()
    a = int(np.searchsorted(np.cumsum(p), u, side="right"))
    a = min(a, p.shape[0] - 1)
    while p[a] == 0.0 and a > 0:
        a -= 1
    with np.errstate(divide="ignore"):
        return a, float(np.log(p[a]))


def hard_decode(probs) -> np.ndarray | int:
    """Most probable action; ties go to the lowest index."""
    p = np.asarray(probs)
    a = np.argmax(p, axis=-1)
    return int(a) if p.ndim == 1 else a


def entropy(probs) -> np.ndarray | float:
    p = np.asarray(probs, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.sum(np.where(p > 0, p * np.log(p), 0.0), axis=-1)
    return float(h) if h.ndim == 0 else h


def compute_gae(buffer: EpisodeBuffer, gamma: float, lam: float, normalize: bool = False):
    """Generalized advantage estimates and value targets.

    Targets are ``A + V`` computed before any normalization of ``A``.
    """
    adv = kernels.gae(
        np.asarray(buffer.rewards, dtype=np.float64),
        np.asarray(buffer.values, dtype=np.float64),
        np.asarray(buffer.dones, dtype=np.float64),
        float(buffer.bootstrap),
        gamma,
        lam,
    )
    targets = adv + np.asarray(buffer.values, dtype=np.float64)
    if normalize and adv.shape[0] > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    return adv, targets


@dataclass
class PpoStats:
    policy_loss: float = 0.0
    value_loss: float = 0.0
    entropy: float = 0.0
    approx_kl: float = 0.0
    clip_fraction: float = 0.0
    first_ratios: np.ndarray = field(default_factory=lambda: np.zeros(0))


def surrogate_loss(tape: Tape, policy, obs, actions, old_logp, adv, clip_eps: float, beta: float):
    """Negative clipped surrogate minus entropy bonus; also returns ratios and entropies."""
    logp, ent = policy.logp_entropy(tape, obs, actions)
    ratio = nd.exp(nd.sub(logp, np.asarray(old_logp, dtype=np.float64)))
    unclipped = nd.mul(ratio, adv)
    clipped = nd.mul(nd.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps), adv)
    objective = nd.mean(nd.minimum(unclipped, clipped))
    loss = nd.sub(nd.mul(objective, -1.0), nd.mul(nd.mean(ent), beta))
    return loss, ratio.value, ent.value, logp.value


def ppo_update(
    buffer: EpisodeBuffer,
    policy,
    value,
    cfg: PpoConfig,
    actor_opt: Adam,
    critic_opt: Adam,
    rng,
    advantages=None,
    targets=None,
) -> PpoStats:
    """Clipped PPO on one buffer; Adam for both actor and critic.

    Raises :class:`TrainingError` if a loss turns non-finite.
    """
    if advantages is None or targets is None:
        advantages, targets = compute_gae(buffer, cfg.gamma, cfg.lambda_gae, cfg.normalize_advantages)
    n = len(buffer)
    obs = np.asarray(buffer.obs)
    actions = np.asarray(buffer.actions)
    old_logp = np.asarray(buffer.logp, dtype=np.float64)
    stats = PpoStats()
    pl, vl, en, kl, cf, count = 0.0, 0.0, 0.0, 0.0, 0.0, 0
    for epoch in range(cfg.ppo_epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.minibatch):
            idx = order[start : start + cfg.minibatch]
            tape = Tape()
            loss, ratio, ent, logp = surrogate_loss(
                tape, policy, obs[idx], actions[idx], old_logp[idx], advantages[idx],
                cfg.clip_eps, cfg.entropy_beta,
            )
            if not np.isfinite(loss.value):
                raise TrainingError("non-finite policy loss")
            if epoch == 0 and start == 0:
                stats.first_ratios = ratio.copy()
            actor_opt.step(tape.backward(loss))

            vtape = Tape()
            v = value.values(vtape, obs[idx])
            vloss = nd.mean(nd.square(nd.sub(v, targets[idx])))
            if not np.isfinite(vloss.value):
                raise TrainingError("non-finite value loss")
            critic_opt.step(vtape.backward(vloss))

            pl += float(loss.value)
            vl += float(vloss.value)
            en += float(np.mean(ent))
            kl += float(np.mean(old_logp[idx] - logp))
            cf += float(np.mean(np.abs(ratio - 1.0) > cfg.clip_eps))
            count += 1
    stats.policy_loss, stats.value_loss = pl / count, vl / count
    stats.entropy, stats.approx_kl, stats.clip_fraction = en / count, kl / count, cf / count
    return stats
