"""Run configuration: one flat ``key = value`` file for a whole pipeline.

Key families (anything else is rejected):

* simulator keys as accepted by :func:`simgen.sim_config_from_kv`, or
  ``data.preset`` (``sim3``/``fast1``/``fast2``/``sim10``) with
  ``data.seed``, or ``data.path`` for a CSV dataset;
* ``data.split``, ``data.n_states``;
* ``stage1.<field>``, ``stage2.<field>``, ``reward.<field>``,
  ``screen.<field>``, ``ppo.<field>`` for the training dataclasses;
* ``run.seed``, ``run.stage1_only``, ``run.ablate``, ``run.threads``,
  ``run.checkpoint_every``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import simgen
from .policy_rl import PpoConfig
from .simgen import ConfigError, SimConfig
from .stage1 import OBS_ERROR_MODES, RewardConfig, ScreenConfig, Stage1Config
from .stage2 import Stage2Config

__all__ = ["ABLATIONS", "RunConfig", "parse_ablations", "load_run_config", "run_config_from_kv"]

# flag -> variant label used in reports
ABLATIONS = {
    "no_switch_penalty": "DRL-NASP",
    "no_screening": "DRL-NSSS",
    "no_baseline": "DRL-NBL",
    "no_state_separation": "DRL-NSSE",
    "no_pairwise": "DRL-NPDE",
    "no_episodic": "DRL-NER",
    "no_stage1_output": "DRL-NSO",
}
_REWARD_FLAGS = ("no_switch_penalty", "no_baseline", "no_state_separation", "no_pairwise", "no_episodic")

_STAGE1_KEYS = ("T0", "T1", "episode_len", "epochs", "e_clip", "tau", "den_lr", "den_steps", "hidden",
                "baseline_epochs", "obs_errors", "lr_anneal", "logit_cap")
_STAGE2_KEYS = ("T2", "episode_len", "epochs", "features", "gat_heads", "monitor_window", "tau",
                "den_steps", "proj_scale", "lambda2")
_RUN_KEYS = ("seed", "stage1_only", "ablate", "threads", "checkpoint_every")
_DATA_KEYS = ("preset", "seed", "path", "split", "n_states", "length")


def parse_ablations(text) -> tuple[str, ...]:
    """Comma-separated flags; variant labels (``DRL-NER``, ``ner``) are accepted too."""
    if text is None:
        return ()
    items = text if isinstance(text, (list, tuple)) else str(text).split(",")
    by_label = {v.lower(): k for k, v in ABLATIONS.items()}
    by_label.update({v.lower().removeprefix("drl-"): k for k, v in ABLATIONS.items()})
    out = []
    for raw in items:
        name = raw.strip()
        if not name:
            continue
        key = name if name in ABLATIONS else by_label.get(name.lower())
        if key is None:
            raise ConfigError(f"unknown ablation {name!r}; choose from {', '.join(ABLATIONS)}")
        if key not in out:
            out.append(key)
    return tuple(out)


def _parse_bool(key: str, val: str) -> bool:
    low = val.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {val!r}")


def _coerce(key: str, val: str, current):
    try:
        if isinstance(current, bool):
            return _parse_bool(key, val)
        if isinstance(current, int):
            return int(val)
        if isinstance(current, float):
            return float(val)
        if isinstance(current, tuple):
            return tuple(int(v) for v in val.split(","))
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {val!r}") from None
    return val


def _set_fields(obj, prefix: str, kv: dict[str, str], allowed=None):
    names = {f.name for f in dataclasses.fields(obj) if not dataclasses.is_dataclass(getattr(obj, f.name))}
    if allowed is not None:
        names &= set(allowed)
    updates = {}
    for key, val in kv.items():
        fname = key[len(prefix):]
        if fname not in names:
            raise ConfigError(f"unknown key {key!r}")
        updates[fname] = _coerce(key, val, getattr(obj, fname))
    try:
        return replace(obj, **updates)
    except ValueError as exc:
        raise ConfigError(f"{prefix.rstrip('.')}: {exc}") from None


@dataclass
class RunConfig:
    sim: SimConfig | None = None
    data_path: str | None = None
    split: float = 0.8
    n_states: int = 2
    seed: int = 0
    stage1_only: bool = False
    ablate: tuple = ()
    threads: int = 1
    checkpoint_every: int = 25
    stage1: Stage1Config = field(default_factory=Stage1Config)
    stage2: Stage2Config = field(default_factory=Stage2Config)
    source: dict = field(default_factory=dict)

    def __post_init__(self):
        if (self.sim is None) == (self.data_path is None):
            raise ConfigError("exactly one data source is required: simulator keys, data.preset or data.path")
        if not 0.0 < self.split < 1.0:
            raise ConfigError("data.split must lie in (0, 1)")
        if self.threads < 1 or self.checkpoint_every < 1:
            raise ConfigError("run.threads and run.checkpoint_every must be >= 1")
        if self.stage1.obs_errors not in OBS_ERROR_MODES:
            raise ConfigError(f"stage1.obs_errors must be one of {OBS_ERROR_MODES}")
        self.ablate = parse_ablations(self.ablate)

    @property
    def label(self) -> str:
        if self.ablate:
            return "+".join(ABLATIONS[a] for a in self.ablate)
        return "DRL-S1" if self.stage1_only else "full"

    def with_overrides(self, seed: int | None = None, stage1_only: bool | None = None,
                       ablate=None, threads: int | None = None) -> "RunConfig":
        kv = dict(self.source)
        if seed is not None:
            kv["run.seed"] = str(seed)
        if stage1_only is not None:
            kv["run.stage1_only"] = str(bool(stage1_only))
        if ablate is not None:
            merged = parse_ablations(kv.get("run.ablate")) + parse_ablations(ablate)
            kv["run.ablate"] = ",".join(dict.fromkeys(merged))
        if threads is not None:
            kv["run.threads"] = str(threads)
        return run_config_from_kv(kv)

    def with_key(self, key: str, value) -> "RunConfig":
        kv = dict(self.source)
        kv[key] = str(value)
        return run_config_from_kv(kv)


def _apply_ablations(s1: Stage1Config, s2: Stage2Config, flags) -> tuple[Stage1Config, Stage2Config]:
    rflags = {f: True for f in flags if f in _REWARD_FLAGS}
    s1 = replace(s1, reward=replace(s1.reward, **rflags))
    s2 = replace(s2, reward=replace(s2.reward, **rflags))
    if "no_screening" in flags:
        s1 = replace(s1, screen=replace(s1.screen, enabled=False))
        s2 = replace(s2, screen=replace(s2.screen, enabled=False))
    return s1, s2


def run_config_from_kv(kv: dict[str, str]) -> RunConfig:
    """Validate every key before building anything."""
    groups: dict[str, dict[str, str]] = {g: {} for g in ("sim", "data", "run", "stage1", "stage2",
                                                         "reward", "screen", "ppo")}
    for key, val in kv.items():
        head = key.split(".", 1)[0]
        if simgen.is_sim_key(key):
            groups["sim"][key] = val
        elif head in groups and head != "sim" and "." in key:
            groups[head][key] = val
        else:
            raise ConfigError(f"unknown key {key!r}")
    for key in groups["data"]:
        if key[5:] not in _DATA_KEYS:
            raise ConfigError(f"unknown key {key!r}")
    for key in groups["run"]:
        if key[4:] not in _RUN_KEYS:
            raise ConfigError(f"unknown key {key!r}")

    data = groups["data"]
    sources = [bool(groups["sim"]), "data.preset" in data, "data.path" in data]
    if sum(sources) != 1:
        raise ConfigError("exactly one data source is required: simulator keys, data.preset or data.path")
    try:
        sim = None
        if groups["sim"]:
            sim = simgen.sim_config_from_kv(groups["sim"])
        elif "data.preset" in data:
            length = int(data["data.length"]) if "data.length" in data else None
            sim = simgen.preset(data["data.preset"], seed=int(data.get("data.seed", "0")), length=length)
        split = float(data.get("data.split", "0.8"))
        n_states = int(data.get("data.n_states", str(sim.n_states if sim else 2)))
        run = groups["run"]
        seed = int(run.get("run.seed", "0"))
        threads = int(run.get("run.threads", "1"))
        every = int(run.get("run.checkpoint_every", "25"))
    except ValueError as exc:
        raise ConfigError(f"bad numeric value: {exc}") from None
    stage1_only = _parse_bool("run.stage1_only", run.get("run.stage1_only", "false"))
    ablate = parse_ablations(run.get("run.ablate"))

    reward = _set_fields(RewardConfig(), "reward.", groups["reward"],
                         [f.name for f in dataclasses.fields(RewardConfig) if not f.name.startswith("no_")])
    screen = _set_fields(ScreenConfig(), "screen.", groups["screen"], ("k_sup", "phi_h", "phi_l"))
    ppo = _set_fields(PpoConfig(), "ppo.", groups["ppo"])
    s1 = _set_fields(Stage1Config(m=n_states, reward=reward, screen=screen, ppo=ppo), "stage1.",
                     groups["stage1"], _STAGE1_KEYS)
    s2_raw = dict(groups["stage2"])
    lambda2 = float(s2_raw.pop("stage2.lambda2", "0.02"))
    s2 = _set_fields(
        Stage2Config(m=n_states, T1=s1.T1, e_clip=s1.e_clip, hidden=s1.hidden, obs_errors=s1.obs_errors,
                     reward=replace(reward, lambda2=lambda2), screen=screen, ppo=ppo),
        "stage2.", s2_raw, _STAGE2_KEYS,
    )
    s1, s2 = _apply_ablations(s1, s2, ablate)
    return RunConfig(
        sim=sim,
        data_path=data.get("data.path"),
        split=split,
        n_states=n_states,
        seed=seed,
        stage1_only=stage1_only,
        ablate=ablate,
        threads=threads,
        checkpoint_every=every,
        stage1=s1,
        stage2=s2,
        source=dict(kv),
    )


def load_run_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} not found")
    return run_config_from_kv(simgen.parse_kv(path.read_text(encoding="utf-8"), str(path)))
