"""Per-variable joint training of the emission heads and the state policy.

Each epoch samples a segment of one variable, rolls the policy over it,
scores every step with the immediate reward, adds the episodic reward to
the final step, screens the (window, action, next value) samples for the
emission update and runs one PPO update.  Actions and states are 0-based.

Time bookkeeping for a segment starting at ``t0`` with ``n`` steps: step
``k`` sits at time ``t = t0 + k``; its action estimates the state at
``t``; its observation carries head errors ``e_{t-T1+1..t}`` (the error
of each head when forecasting ``z_t`` from ``H_{t-1}``); its forecast is
``head_{a_t}(H_t)`` for ``z_{t+1}``.
"""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import emission, kernels
from .emission import BaselineModel, DenModel
from .ndcompute import Adam
from .policy_rl import EpisodeBuffer, PolicyNet, PpoConfig, ValueNet, compute_gae, ppo_update

log = logging.getLogger(__name__)

__all__ = [
    "RewardConfig",
    "ScreenConfig",
    "Stage1Config",
    "obs_width",
    "build_observation",
    "immediate_reward",
    "episodic_reward",
    "confidence_score",
    "screen_samples",
    "SeriesView",
    "Stage1Agent",
    "run_episode",
    "train_stage1",
    "decode",
]


@dataclass
class RewardConfig:
    lambda1: float = 4.0
    lambda2: float = 0.015
    lambda3: float = 2.0
    lambda4: float = 2.0
    alpha: float = 0.5
    rho_c: float = 8.0
    no_switch_penalty: bool = False
    no_baseline: bool = False
    no_state_separation: bool = False
    no_pairwise: bool = False
    no_episodic: bool = False

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.rho_c < 2:
            raise ValueError("rho_c must be >= 2")
        if min(self.lambda1, self.lambda2, self.lambda3, self.lambda4) < 0:
            raise ValueError("reward weights must be non-negative")


@dataclass
class ScreenConfig:
    k_sup: int = 32
    phi_h: int = 8
    phi_l: int = 2
    enabled: bool = True

    def __post_init__(self):
        if not self.phi_h > self.phi_l >= 1:
            raise ValueError("need phi_h > phi_l >= 1")
        if self.k_sup < 1:
            raise ValueError("k_sup must be >= 1")


@dataclass
class Stage1Config:
    m: int = 2
    T0: int = 1
    T1: int = 4
    episode_len: int = 2000
    epochs: int = 150
    e_clip: float = 10.0
    tau: float = 0.01
    den_lr: float = 1e-3
    den_steps: int = 50
    hidden: tuple = (64, 64)
    baseline_epochs: int = 60
    obs_errors: str = "raw"
    lr_anneal: bool = False
    logit_cap: float = 0.0
    reward: RewardConfig = field(default_factory=RewardConfig)
    screen: ScreenConfig = field(default_factory=ScreenConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)


def obs_width(T0: int, T1: int, m: int) -> int:
    return T0 + 2 * T1 * m


def build_observation(history, prob_history, error_history) -> np.ndarray:
    """Flatten ``[H (T0) | past probabilities (T1 x m) | recent errors (T1 x m)]``.

    Rows of the two matrices run oldest to newest; rows not yet available
    are expected to be zero.
    """
    h = np.asarray(history, dtype=np.float64).ravel()
    p = np.asarray(prob_history, dtype=np.float64)
    e = np.asarray(error_history, dtype=np.float64)
    if p.ndim != 2 or p.shape != e.shape:
        raise ValueError(f"probability history {p.shape} and error history {e.shape} must match")
    return np.concatenate([h, p.ravel(), e.ravel()])


# ---------------------------------------------------------------------------
# rewards
# ---------------------------------------------------------------------------


def switch_penalty(c, cfg: RewardConfig):
    """``lambda2 * max(0, rho_c - c) / (rho_c - 1)``; 0 when disabled."""
    if cfg.no_switch_penalty:
        return np.zeros_like(np.asarray(c, dtype=np.float64))
    c = np.asarray(c, dtype=np.float64)
    return cfg.lambda2 * np.maximum(0.0, cfg.rho_c - c) / (cfg.rho_c - 1.0)


def immediate_reward(e_base_t, e_base_t1, e_a_t, e_a_t1, c, cfg: RewardConfig):
    """Prediction gain over the reference predictor minus the switching penalty.

    Works elementwise on arrays; scalars in give a float out.
    """
    e_a_t = np.asarray(e_a_t, dtype=np.float64)
    e_a_t1 = np.asarray(e_a_t1, dtype=np.float64)
    if cfg.no_baseline:
        e_base_t = e_base_t1 = 0.0
    gain = cfg.lambda1 * (
        cfg.alpha * (np.asarray(e_base_t1) - e_a_t1) + (1.0 - cfg.alpha) * (np.asarray(e_base_t) - e_a_t)
    )
    r = gain - switch_penalty(c, cfg)
    return float(r) if np.ndim(r) == 0 else r


@dataclass
class EpisodicTerms:
    selected: np.ndarray
    unselected: np.ndarray
    separation: float
    pairwise: float
    undefined: list = field(default_factory=list)


def episodic_terms(errors, actions, m: int | None = None) -> EpisodicTerms:
    """Per-head mean error when selected and when not selected.

    A mean over an empty set is taken as 0 and its ``(head, kind)`` is
    listed in ``undefined``.
    """
    errors = np.asarray(errors, dtype=np.float64)
    actions = np.asarray(actions, dtype=np.int64)
    m = errors.shape[1] if m is None else m
    sel = np.zeros(m)
    unsel = np.zeros(m)
    undefined = []
    for s in range(m):
        mask = actions == s
        if mask.any():
            sel[s] = errors[mask, s].mean()
        else:
            undefined.append((s, "selected"))
        if (~mask).any():
            unsel[s] = errors[~mask, s].mean()
        else:
            undefined.append((s, "unselected"))
    return EpisodicTerms(sel, unsel, 0.0, 0.0, undefined)


def episodic_reward(errors, actions, cfg: RewardConfig, m: int | None = None):
    """Episode-level reward for head specialization and balance.

    Returns ``(reward, terms)``; ``terms.undefined`` is non-empty when a
    head was never (or always) selected.
    """
    t = episodic_terms(errors, actions, m)
    if t.undefined:
        warnings.warn(f"undefined conditional error means {t.undefined}; using 0", RuntimeWarning)
    m = t.selected.shape[0]
    delta = t.unselected - t.selected
    sep = float(np.sum(np.maximum(delta, 0.0) + cfg.lambda3 * np.minimum(delta, 0.0)))
    pair = float(0.5 * np.sum(np.abs(t.selected[:, None] - t.selected[None, :])))
    t.separation, t.pairwise = sep, pair
    if cfg.no_episodic:
        return 0.0, t
    r = -float(np.sum(t.selected)) / m
    if not cfg.no_state_separation:
        r += sep
    if not cfg.no_pairwise:
        r -= cfg.lambda4 * pair
    return r, t


def confidence_score(errors, action):
    """Best competing head's error minus the selected head's error.

    ``errors`` may be ``(m,)`` with a scalar action or ``(n, m)`` with an
    action per row.
    """
    e = np.asarray(errors, dtype=np.float64)
    if e.shape[-1] < 2:
        raise ValueError("confidence score needs at least two heads")
    a = np.asarray(action, dtype=np.int64)
    if e.ndim == 1:
        others = np.delete(e, int(a))
        return float(others.min() - e[int(a)])
    rows = np.arange(e.shape[0])
    chosen = e[rows, a]
    masked = e.copy()
    masked[rows, a] = np.inf
    return masked.min(axis=1) - chosen


def full_run_lengths(actions) -> np.ndarray:
    """Length of the maximal run of identical actions containing each index."""
    a = np.asarray(actions, dtype=np.int64)
    if a.size == 0:
        return np.zeros(0, dtype=np.int64)
    forward = kernels.run_lengths(a)
    out = np.empty_like(forward)
    ends = np.flatnonzero(np.r_[a[1:] != a[:-1], True])
    starts = np.r_[0, ends[:-1] + 1]
    for s, e in zip(starts, ends):
        out[s : e + 1] = forward[e]
    return out


def screen_samples(actions, scores, cfg: ScreenConfig) -> np.ndarray:
    """Indices of samples kept for the emission update (sorted)."""
    actions = np.asarray(actions, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    if actions.shape != scores.shape:
        raise ValueError("actions and scores must have equal length")
    if not cfg.enabled:
        return np.arange(actions.shape[0])
    keep = np.flatnonzero(scores >= 0)
    if keep.size == 0:
        order = np.argsort(-scores, kind="stable")
        keep = np.sort(order[: cfg.k_sup])
    runs = full_run_lengths(actions)[keep]
    for threshold in (cfg.phi_h, cfg.phi_l):
        chosen = keep[runs > threshold]
        if chosen.size:
            return chosen
    return keep


# ---------------------------------------------------------------------------
# environment
# ---------------------------------------------------------------------------


@dataclass
class SeriesView:
    """One standardized variable plus the frozen reference forecasts.

    ``base_err[t]`` is the reference predictor's squared error on ``z[t]``
    (0 at ``t = 0``).
    """

    z: np.ndarray
    H: np.ndarray
    base_err: np.ndarray

    @classmethod
    def build(cls, z, T0: int, baseline: BaselineModel | None) -> "SeriesView":
        z = np.asarray(z, dtype=np.float64)
        H = emission.history_windows(z, T0)
        base_err = np.zeros_like(z)
        if baseline is not None and z.shape[0] > 1:
            pred = baseline.predict_one(H[:-1])
            base_err[1:] = (pred - z[1:]) ** 2
        return cls(z, H, base_err)

    def __len__(self) -> int:
        return self.z.shape[0]


OBS_ERROR_MODES = ("raw", "sqrt", "log")


def observed_errors(errors, mode: str):
    """Error features as the policy sees them."""
    if mode == "raw":
        return errors
    if mode == "sqrt":
        return np.sqrt(errors)
    if mode == "log":
        return np.log1p(errors / 1e-3)
    raise ValueError(f"unknown error feature mode {mode!r}")


def segment_errors(den: DenModel, view: SeriesView, t0: int, n: int, e_clip: float) -> np.ndarray:
    """Head errors on ``z[t0 .. t0+n]``: row ``j`` is ``e_{t0+j}`` (clipped)."""
    preds = den.predict(view.H[t0 - 1 : t0 + n])
    truth = view.z[t0 : t0 + n + 1]
    return np.minimum((preds - truth[:, None]) ** 2, e_clip)


@dataclass
class Rollout:
    obs: np.ndarray
    probs: np.ndarray
    actions: np.ndarray
    logp: np.ndarray
    errors: np.ndarray  # n+1 rows: e_{t0} .. e_{t0+n}


def rollout(policy: PolicyNet, den: DenModel, view: SeriesView, t0: int, n: int, T1: int,
            e_clip: float, uniforms=None, greedy: bool = False, obs_errors: str = "raw") -> Rollout:
    errs = segment_errors(den, view, t0, n, e_clip)
    if uniforms is None:
        uniforms = np.zeros(n)
    W = policy.layer_arrays()
    if len(W) != 6:
        raise ValueError("the compiled rollout expects a policy with two hidden layers")
    obs, probs, actions, logp = kernels.policy_rollout(
        view.H[t0 : t0 + n], observed_errors(errs[:n], obs_errors), uniforms, *W, T1, greedy, policy.logit_cap
    )
    return Rollout(obs, probs, actions, logp, errs)


@dataclass
class EpisodeResult:
    buffer: EpisodeBuffer
    screened: np.ndarray  # indices into the episode
    windows: np.ndarray
    targets: np.ndarray
    episodic: float
    undefined: list
    rollout: Rollout
    t0: int


def step_rewards(ro: Rollout, view: SeriesView, t0: int, cfg: RewardConfig, e_clip: float) -> np.ndarray:
    n = ro.actions.shape[0]
    k = np.arange(n)
    a = ro.actions
    eb = np.minimum(view.base_err[t0 : t0 + n + 1], e_clip)
    c = kernels.run_lengths(a)
    return immediate_reward(eb[:n], eb[1:], ro.errors[k, a], ro.errors[k + 1, a], c, cfg)


def run_episode(view: SeriesView, den: DenModel, policy: PolicyNet, value: ValueNet,
                cfg: Stage1Config, rng, t0: int | None = None) -> EpisodeResult:
    n = cfg.episode_len
    lo, hi = max(cfg.T0, 1), len(view) - n - 1
    if hi < lo:
        raise ValueError(
            f"series of length {len(view)} is too short for episodes of {n} steps with T0={cfg.T0}"
        )
    if t0 is None:
        t0 = int(rng.integers(lo, hi + 1))
    ro = rollout(policy, den, view, t0, n, cfg.T1, cfg.e_clip, uniforms=rng.random(n),
                 obs_errors=cfg.obs_errors)
    rewards = step_rewards(ro, view, t0, cfg.reward, cfg.e_clip)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        r_er, terms = episodic_reward(ro.errors[:n], ro.actions, cfg.reward, cfg.m)
    rewards = rewards.copy()
    rewards[-1] += r_er
    dones = np.zeros(n)
    dones[-1] = 1.0
    buf = EpisodeBuffer(ro.obs, ro.actions, ro.logp, value.predict(ro.obs), rewards, dones, 0.0)
    scores = confidence_score(ro.errors[1:], ro.actions)
    kept = screen_samples(ro.actions, scores, cfg.screen)
    return EpisodeResult(
        buf, kept, view.H[t0 : t0 + n], view.z[t0 + 1 : t0 + n + 1], r_er, terms.undefined, ro, t0
    )


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@dataclass
class Stage1Agent:
    den: DenModel
    candidate: Adam
    policy: PolicyNet
    value: ValueNet
    actor_opt: Adam
    critic_opt: Adam
    rng: np.random.Generator
    epoch: int = 0

    @classmethod
    def create(cls, cfg: Stage1Config, init_rng, train_rng) -> "Stage1Agent":
        den = DenModel(cfg.T0, cfg.m, init_rng, cfg.hidden)
        policy = PolicyNet(obs_width(cfg.T0, cfg.T1, cfg.m), cfg.m, init_rng, cfg.hidden,
                           logit_cap=cfg.logit_cap)
        value = ValueNet(obs_width(cfg.T0, cfg.T1, cfg.m), init_rng, cfg.hidden)
        return cls(
            den,
            emission.new_candidate(den, cfg.den_lr),
            policy,
            value,
            Adam(policy.params, lr=cfg.ppo.actor_lr),
            Adam(value.params, lr=cfg.ppo.critic_lr),
            train_rng,
        )


def update_den(agent: Stage1Agent, windows, actions, targets, steps: int, tau: float) -> float:
    """Train the candidate on the screened samples, easing the DEN toward it after each step."""
    loss = float("nan")
    for _ in range(steps):
        out = emission.train_screened(agent.den, windows, actions, targets, agent.candidate, 1)
        if out is None:
            return loss
        cand, loss = out
        emission.soft_update(agent.den, cand, tau)
    return loss


def train_epoch(agent: Stage1Agent, view: SeriesView, cfg: Stage1Config, var: int,
                update_policy: bool = True) -> dict:
    ep = run_episode(view, agent.den, agent.policy, agent.value, cfg, agent.rng)
    kept = ep.screened
    den_loss = update_den(
        agent, ep.windows[kept], ep.buffer.actions[kept], ep.targets[kept], cfg.den_steps, cfg.tau
    )
    stats = None
    if update_policy:
        if cfg.lr_anneal:
            agent.actor_opt.lr = cfg.ppo.actor_lr * max(0.0, 1.0 - agent.epoch / cfg.epochs)
        stats = ppo_update(ep.buffer, agent.policy, agent.value, cfg.ppo, agent.actor_opt,
                           agent.critic_opt, agent.rng)
    agent.epoch += 1
    rec = {
        "epoch": agent.epoch,
        "var": var,
        "mean_reward": float(np.mean(ep.buffer.rewards)),
        "episodic_reward": float(ep.episodic),
        "screened_count": int(kept.size),
        "den_loss": den_loss,
        "policy_entropy": float(stats.entropy) if stats else float("nan"),
    }
    if ep.undefined:
        rec["undefined_means"] = [f"{s}:{k}" for s, k in ep.undefined]
    return rec


def train_stage1(views: list[SeriesView], agents: list[Stage1Agent], cfg: Stage1Config,
                 epochs: int | None = None, threads: int = 1, on_epoch=None) -> list[dict]:
    """Train every variable's agent for ``epochs`` more epochs.

    Variables are independent; with ``threads > 1`` they train in a
    thread pool.  ``on_epoch(var, record)`` is called after each epoch.
    """
    epochs = cfg.epochs if epochs is None else epochs

    def work(i: int) -> list[dict]:
        recs = []
        for _ in range(epochs):
            rec = train_epoch(agents[i], views[i], cfg, i)
            log.debug("stage1 %s", rec)
            recs.append(rec)
            if on_epoch is not None:
                on_epoch(i, rec)
        return recs

    if threads > 1 and len(views) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, range(len(views))))
    else:
        results = [work(i) for i in range(len(views))]
    return [r for rs in results for r in rs]


@dataclass
class Decoded:
    """Greedy decode of a whole series from ``t = start``.

    ``actions[k]`` estimates the state at ``start + k``; ``forecast[k]``
    is the forecast of ``z[start + k + 1]`` (the last entry has no target).
    """

    start: int
    actions: np.ndarray
    probs: np.ndarray
    forecast: np.ndarray
    errors: np.ndarray


def decode(policy: PolicyNet, den: DenModel, view: SeriesView, T1: int, e_clip: float,
           start: int = 1, obs_errors: str = "raw") -> Decoded:
    n = len(view) - start
    errs = np.minimum(
        np.r_[
            (den.predict(view.H[start - 1 : start - 1 + n]) - view.z[start : start + n, None]) ** 2
        ],
        e_clip,
    )
    W = policy.layer_arrays()
    _, probs, actions, _ = kernels.policy_rollout(
        view.H[start:], observed_errors(errs, obs_errors), np.zeros(n), *W, T1, True, policy.logit_cap
    )
    heads = den.predict(view.H[start:])
    forecast = heads[np.arange(n), actions]
    return Decoded(start, actions, probs, forecast, errs)
