import pytest

from statehawk.cli import bundled_configs, resolve_config_path
from statehawk.config import ABLATIONS, load_run_config, parse_ablations, run_config_from_kv
from statehawk.simgen import ConfigError

BASE = {"data.preset": "fast1", "data.length": "400"}


def test_bundled_configs_load():
    assert {"sim3", "fast1", "fast2", "sim10"} <= set(bundled_configs())
    for name in bundled_configs():
        cfg = load_run_config(resolve_config_path(name))
        assert cfg.sim is not None and cfg.label == "full"


def test_sim3_config_values():
    cfg = load_run_config(resolve_config_path("sim3"))
    assert (cfg.stage1.epochs, cfg.stage2.epochs, cfg.stage1.episode_len) == (150, 50, 2000)
    assert cfg.stage1.reward.lambda2 == 0.015 and cfg.stage2.reward.lambda2 == 0.02
    assert cfg.stage2.reward.lambda1 == 4 and cfg.stage1.screen.phi_h == 8


def test_unknown_keys_rejected():
    for bad in ("stage1.bogus", "reward.no_baseline", "run.nope", "data.foo", "stray", "stage2.hidden"):
        with pytest.raises(ConfigError, match="unknown key"):
            run_config_from_kv({**BASE, bad: "1"})


def test_exactly_one_data_source():
    with pytest.raises(ConfigError):
        run_config_from_kv({"run.seed": "1"})
    with pytest.raises(ConfigError):
        run_config_from_kv({**BASE, "data.path": "x.csv"})


def test_value_validation():
    for key, val in (("data.split", "1.5"), ("run.threads", "0"), ("stage1.obs_errors", "cube"),
                     ("reward.alpha", "2"), ("stage1.T1", "four"), ("run.stage1_only", "maybe")):
        with pytest.raises(ConfigError):
            run_config_from_kv({**BASE, key: val})


def test_missing_adjacency_is_an_error():
    kv = {"n_vars": "2", "n_states": "2", "length": "100", "var1.pattern": "1", "var2.pattern": "1"}
    with pytest.raises(ConfigError):
        run_config_from_kv(kv)


def test_training_keys_parse():
    cfg = run_config_from_kv({**BASE, "stage1.hidden": "16,8", "stage1.logit_cap": "3",
                              "stage1.obs_errors": "log", "ppo.entropy_beta": "0.01", "stage2.lambda2": "0.03"})
    assert cfg.stage1.hidden == (16, 8) and cfg.stage2.hidden == (16, 8)
    assert cfg.stage1.logit_cap == 3.0 and cfg.stage2.obs_errors == "log"
    assert cfg.stage1.ppo.entropy_beta == 0.01 and cfg.stage2.reward.lambda2 == 0.03
    assert cfg.stage1.reward.lambda2 == 0.015


def test_ablation_parsing():
    assert parse_ablations("DRL-NER, nsss") == ("no_episodic", "no_screening")
    assert parse_ablations(["no_pairwise", "no_pairwise"]) == ("no_pairwise",)
    assert parse_ablations(None) == ()
    with pytest.raises(ConfigError):
        parse_ablations("no_everything")
    assert set(ABLATIONS.values()) >= {"DRL-NSSS", "DRL-NER", "DRL-NSO"}


def test_ablations_reach_the_stage_configs():
    cfg = run_config_from_kv({**BASE, "run.ablate": "no_screening,no_episodic"})
    assert not cfg.stage1.screen.enabled and not cfg.stage2.screen.enabled
    assert cfg.stage1.reward.no_episodic and cfg.stage2.reward.no_episodic
    assert cfg.label == "DRL-NSSS+DRL-NER"


def test_with_overrides_and_with_key():
    cfg = run_config_from_kv(BASE)
    o = cfg.with_overrides(seed=4, stage1_only=True, ablate="ner", threads=2)
    assert (o.seed, o.stage1_only, o.threads, o.ablate) == (4, True, 2, ("no_episodic",))
    assert o.label == "DRL-NER"
    assert cfg.with_overrides().source == cfg.source
    assert cfg.with_overrides(stage1_only=True).label == "DRL-S1"
    assert cfg.with_key("reward.rho_c", 5).stage1.reward.rho_c == 5


def test_missing_file_and_name():
    with pytest.raises(ConfigError):
        load_run_config("/nonexistent/run.cfg")
    with pytest.raises(ConfigError, match="bundled"):
        resolve_config_path("no_such_config")
