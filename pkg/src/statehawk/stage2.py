"""Cross-variable refinement of the stage-one state probabilities.

The refiner sees, for every variable, the frozen stage-one probabilities
``P_t``, its own last ``T2`` outputs and the last ``T2`` head-error rows.
A shared linear embedding feeds one residual graph-attention layer over
the complete variable graph; the output is
``softmax(mu * P_t + W_p h'_t)`` row by row.  Rewards are gains over
replaying the frozen stage-one hard decodes on the same segment.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import emission
from . import ndcompute as nd
from .ndcompute import Adam, ParamStore, Tape
from .policy_rl import EpisodeBuffer, PpoConfig, ValueNet, ppo_update
from .stage1 import (
    RewardConfig,
    ScreenConfig,
    SeriesView,
    Stage1Agent,
    confidence_score,
    decode,
    observed_errors,
    episodic_reward,
    immediate_reward,
    screen_samples,
    segment_errors,
    update_den,
)
from . import kernels

log = logging.getLogger(__name__)

__all__ = [
    "Stage2Config",
    "Stage2Policy",
    "confidence_adjust",
    "stage2_forward",
    "relative_reward",
    "unfreeze_check",
    "UnfreezeLatch",
    "train_stage2",
    "decode_stage2",
]


@dataclass
class Stage2Config:
    m: int = 2
    T2: int = 4
    T1: int = 4
    episode_len: int = 2000
    epochs: int = 50
    features: int = 32
    gat_heads: int = 4
    monitor_window: int = 200
    e_clip: float = 10.0
    obs_errors: str = "raw"
    tau: float = 0.01
    den_steps: int = 50
    proj_scale: float = 0.01
    hidden: tuple = (64, 64)
    reward: RewardConfig = field(default_factory=lambda: RewardConfig(lambda2=0.02))
    screen: ScreenConfig = field(default_factory=ScreenConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)


def confidence_adjust(P, mu):
    """Scale row ``i`` of ``P`` by ``mu[i]`` (no renormalization)."""
    P = np.asarray(P, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    if P.ndim < 2 or mu.shape != (P.shape[-2],):
        raise ValueError(f"mu of shape {mu.shape} does not match P of shape {P.shape}")
    return P * mu[:, None]


class Stage2Policy:
    """Confidence scaling, shared embedding, residual GAT and projection."""

    def __init__(self, n_vars: int, m: int, T2: int, rng, features: int = 32, heads: int = 4,
                 proj_scale: float = 0.01):
        self.n_vars, self.m, self.T2 = int(n_vars), int(m), int(T2)
        self.features, self.heads = int(features), int(heads)
        self.feat_in = m + 2 * T2 * m
        self.adjacency = np.ones((n_vars, n_vars))
        self.params = ParamStore()
        self.params.add("mu", np.ones(n_vars))
        nd.add_dense(self.params, "embed", self.feat_in, features, rng)
        nd.add_gat(self.params, "gat", features, heads, rng, "average")
        nd.add_dense(self.params, "proj", features, m, rng)
        self.params["proj.W"] *= proj_scale
        self.params["proj.b"] = np.zeros(m)

    @property
    def obs_width(self) -> int:
        return self.n_vars * self.feat_in

    def pack(self, P, P_hist, E_hist) -> np.ndarray:
        """Flatten one joint observation: per variable ``[P_i | P'_i hist | E'_i hist]``."""
        P = np.asarray(P, dtype=np.float64)
        P_hist = np.asarray(P_hist, dtype=np.float64)
        E_hist = np.asarray(E_hist, dtype=np.float64)
        N, m, T2 = self.n_vars, self.m, self.T2
        if P.shape != (N, m) or P_hist.shape != (T2, N, m) or E_hist.shape != (T2, N, m):
            raise ValueError("joint observation has the wrong shape")
        per_var = np.concatenate(
            [P, P_hist.transpose(1, 0, 2).reshape(N, T2 * m), E_hist.transpose(1, 0, 2).reshape(N, T2 * m)],
            axis=1,
        )
        return per_var.ravel()

    def logits(self, tape: Tape, obs) -> nd.Var:
        """Flat observations ``(B, obs_width)`` -> logits ``(B, N, m)``."""
        obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
        B = obs.shape[0]
        feats = obs.reshape(B, self.n_vars, self.feat_in)
        P = feats[:, :, : self.m]
        h = nd.dense(tape, self.params, tape.constant(feats), "embed")
        h = nd.gat_layer(tape, self.params, h, self.adjacency, self.heads, "gat", "average")
        mu = nd.reshape(tape.param(self.params, "mu"), (self.n_vars, 1))
        return nd.add(nd.mul(mu, P), nd.dense(tape, self.params, h, "proj"))

    def probs(self, obs) -> np.ndarray:
        return nd.softmax_array(self.logits(Tape(enabled=False), obs).value)

    def logp_entropy(self, tape: Tape, obs, actions):
        lp = nd.log_softmax(self.logits(tape, obs))
        B = lp.value.shape[0]
        actions = np.asarray(actions, dtype=np.int64).reshape(B, self.n_vars)
        bi = np.repeat(np.arange(B), self.n_vars)
        vi = np.tile(np.arange(self.n_vars), B)
        picked = nd.reshape(lp[bi, vi, actions.ravel()], (B, self.n_vars))
        logp = nd.vsum(picked, axis=1)
        ent = nd.mul(nd.vsum(nd.mul(nd.exp(lp), lp), axis=(1, 2)), -1.0)
        return logp, ent


def stage2_forward(policy: Stage2Policy, P, P_hist, E_hist) -> np.ndarray:
    """Refined probabilities ``(N, m)`` for one joint observation."""
    return policy.probs(policy.pack(P, P_hist, E_hist)[None, :])[0]


def relative_reward(r_stage2, r_stage1):
    return np.asarray(r_stage2) - np.asarray(r_stage1)


def unfreeze_check(gains, flag: bool, window: int) -> bool:
    """True when the latch is already set or the last ``window`` gains sum positive."""
    if flag:
        return True
    gains = np.asarray(gains, dtype=np.float64)
    if gains.shape[0] < window:
        return False
    return bool(gains[-window:].sum() > 0.0)


@dataclass
class UnfreezeLatch:
    flags: list

    @classmethod
    def create(cls, n: int, initial: bool = False) -> "UnfreezeLatch":
        return cls([initial] * n)

    def check(self, i: int, gains, window: int) -> bool:
        if unfreeze_check(gains, self.flags[i], window):
            self.flags[i] = True
        return self.flags[i]


# ---------------------------------------------------------------------------
# episodes
# ---------------------------------------------------------------------------


def _stage1_segment(agent: Stage1Agent, view: SeriesView, t0: int, n: int, T1: int, e_clip: float,
                    uniform: bool, obs_errors: str = "raw"):
    """Frozen stage-one greedy probabilities and hard actions on a segment."""
    errs = segment_errors(agent.den, view, t0, n, e_clip)
    if uniform:
        m = errs.shape[1]
        return np.full((n, m), 1.0 / m), np.zeros(n, dtype=np.int64), errs
    W = agent.policy.layer_arrays()
    _, probs, actions, _ = kernels.policy_rollout(view.H[t0 : t0 + n], observed_errors(errs[:n], obs_errors),
                                               np.zeros(n), *W, T1, True, agent.policy.logit_cap)
    return probs, actions, errs


def rollout_stage2(policy: Stage2Policy, P, errs, uniforms=None, greedy: bool = False):
    """Sequential joint rollout.

    ``P`` is ``(n, N, m)``; ``errs`` is ``(n, N, m)`` with row ``k`` the head
    errors at step ``k``.  Returns ``(obs, probs, actions, logp)``.
    """
    n, N, m = P.shape
    T2 = policy.T2
    P_hist = np.zeros((T2, N, m))
    E_hist = np.zeros((T2, N, m))
    obs = np.zeros((n, policy.obs_width))
    probs = np.zeros((n, N, m))
    actions = np.zeros((n, N), dtype=np.int64)
    logp = np.zeros(n)
    off = Tape(enabled=False)
    for k in range(n):
        E_hist = np.roll(E_hist, -1, axis=0)
        E_hist[-1] = errs[k]
        o = policy.pack(P[k], P_hist, E_hist)
        obs[k] = o
        p = nd.softmax_array(policy.logits(off, o[None, :]).value)[0]
        probs[k] = p
        if greedy:
            a = np.argmax(p, axis=1)
        else:
            cum = np.cumsum(p, axis=1)
            a = np.minimum((uniforms[k][:, None] >= cum).sum(axis=1), m - 1)
        actions[k] = a
        logp[k] = float(np.sum(np.log(p[np.arange(N), a])))
        P_hist = np.roll(P_hist, -1, axis=0)
        P_hist[-1] = p
    return obs, probs, actions, logp


def _per_variable_rewards(errs_i, base_err_i, actions_i, cfg: RewardConfig, e_clip: float):
    n = actions_i.shape[0]
    k = np.arange(n)
    eb = np.minimum(base_err_i, e_clip)
    c = kernels.run_lengths(actions_i)
    return immediate_reward(eb[:n], eb[1:], errs_i[k, actions_i], errs_i[k + 1, actions_i], c, cfg)


@dataclass
class Stage2State:
    policy: Stage2Policy
    value: ValueNet
    actor_opt: Adam
    critic_opt: Adam
    latch: UnfreezeLatch
    rng: np.random.Generator
    epoch: int = 0

    @classmethod
    def create(cls, n_vars: int, cfg: Stage2Config, init_rng, train_rng, latched: bool = False):
        pol = Stage2Policy(n_vars, cfg.m, cfg.T2, init_rng, cfg.features, cfg.gat_heads, cfg.proj_scale)
        val = ValueNet(pol.obs_width, init_rng, cfg.hidden)
        return cls(pol, val, Adam(pol.params, lr=cfg.ppo.actor_lr), Adam(val.params, lr=cfg.ppo.critic_lr),
                   UnfreezeLatch.create(n_vars, latched), train_rng)


def stage2_epoch(state: Stage2State, views: list[SeriesView], agents: list[Stage1Agent],
                 cfg: Stage2Config, uniform_stage1: bool = False) -> dict:
    rng = state.rng
    n = cfg.episode_len
    N = len(views)
    T = len(views[0])
    lo, hi = 1, T - n - 1
    if hi < lo:
        raise ValueError(f"series of length {T} is too short for episodes of {n} steps")
    t0 = int(rng.integers(lo, hi + 1))
    P = np.zeros((n, N, cfg.m))
    a1 = np.zeros((n, N), dtype=np.int64)
    errs = np.zeros((n + 1, N, cfg.m))
    for i in range(N):
        P[:, i], a1[:, i], errs[:, i] = _stage1_segment(agents[i], views[i], t0, n, cfg.T1, cfg.e_clip,
                                                        uniform_stage1, cfg.obs_errors)
    obs, probs, a2, logp = rollout_stage2(state.policy, P, errs[:n], rng.random((n, N)))

    gains = np.zeros((n, N))
    relative_er = np.zeros(N)
    unfroze = []
    den_losses = []
    screened = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for i in range(N):
            base = views[i].base_err[t0 : t0 + n + 1]
            r2 = _per_variable_rewards(errs[:, i], base, a2[:, i], cfg.reward, cfg.e_clip)
            r1 = _per_variable_rewards(errs[:, i], base, a1[:, i], cfg.reward, cfg.e_clip)
            gains[:, i] = relative_reward(r2, r1)
            er2, _ = episodic_reward(errs[:n, i], a2[:, i], cfg.reward, cfg.m)
            er1, _ = episodic_reward(errs[:n, i], a1[:, i], cfg.reward, cfg.m)
            relative_er[i] = er2 - er1
    gains_total = gains.copy()
    gains_total[-1] += relative_er

    for i in range(N):
        fire = state.latch.check(i, gains_total[:, i], cfg.monitor_window)
        unfroze.append(bool(fire))
        if fire:
            scores = confidence_score(errs[1:, i], a2[:, i])
            kept = screen_samples(a2[:, i], scores, cfg.screen)
            v = views[i]
            den_losses.append(update_den(agents[i], v.H[t0 : t0 + n][kept], a2[kept, i],
                                         v.z[t0 + 1 : t0 + n + 1][kept], cfg.den_steps, cfg.tau))
            screened.append(int(kept.size))
        else:
            screened.append(0)

    rewards = gains_total.sum(axis=1)
    dones = np.zeros(n)
    dones[-1] = 1.0
    buf = EpisodeBuffer(obs, a2, logp, state.value.predict(obs), rewards, dones, 0.0)
    stats = ppo_update(buf, state.policy, state.value, cfg.ppo, state.actor_opt, state.critic_opt, rng)
    state.epoch += 1
    return {
        "epoch": state.epoch,
        "var": -1,
        "mean_reward": float(rewards.mean()),
        "episodic_reward": float(relative_er.sum()),
        "screened_count": int(sum(screened)),
        "den_loss": float(np.nanmean(den_losses)) if den_losses else float("nan"),
        "policy_entropy": float(stats.entropy),
        "relative_gain": [float(g) for g in gains_total.sum(axis=0)],
        "unfroze": unfroze,
    }


def train_stage2(state: Stage2State, views, agents, cfg: Stage2Config, epochs: int | None = None,
                 uniform_stage1: bool = False, on_epoch=None) -> list[dict]:
    recs = []
    for _ in range(cfg.epochs if epochs is None else epochs):
        rec = stage2_epoch(state, views, agents, cfg, uniform_stage1)
        log.debug("stage2 %s", rec)
        recs.append(rec)
        if on_epoch is not None:
            on_epoch(rec)
    return recs


@dataclass
class Decoded2:
    start: int
    actions: np.ndarray  # (n, N)
    probs: np.ndarray
    forecast: np.ndarray  # (n, N), entry k forecasts z[start + k + 1]


def decode_stage2(state: Stage2State, agents: list[Stage1Agent], views: list[SeriesView], cfg: Stage2Config,
                  start: int = 1, uniform_stage1: bool = False) -> Decoded2:
    N = len(views)
    n = len(views[0]) - start
    P = np.zeros((n, N, cfg.m))
    errs = np.zeros((n, N, cfg.m))
    for i in range(N):
        if uniform_stage1:
            P[:, i] = 1.0 / cfg.m
            errs[:, i] = np.minimum(
                (agents[i].den.predict(views[i].H[start - 1 : start - 1 + n]) - views[i].z[start:, None]) ** 2,
                cfg.e_clip,
            )
        else:
            d = decode(agents[i].policy, agents[i].den, views[i], cfg.T1, cfg.e_clip, start, cfg.obs_errors)
            P[:, i], errs[:, i] = d.probs, d.errors
    _, probs, actions, _ = rollout_stage2(state.policy, P, errs, greedy=True)
    forecast = np.zeros((n, N))
    for i in range(N):
        heads = agents[i].den.predict(views[i].H[start:])
        forecast[:, i] = heads[np.arange(n), actions[:, i]]
    return Decoded2(start, actions, probs, forecast)
