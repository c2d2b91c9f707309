import numpy as np
import pytest

from statehawk import pipeline
from statehawk.config import run_config_from_kv

SMALL = {
    "data.preset": "fast1", "data.length": "400", "run.checkpoint_every": "1",
    "stage1.episode_len": "100", "stage1.epochs": "3", "stage1.hidden": "8,8", "stage1.baseline_epochs": "2",
    "stage1.den_steps": "2", "stage2.episode_len": "100", "stage2.epochs": "2", "stage2.features": "8",
    "stage2.gat_heads": "2", "stage2.den_steps": "2", "stage2.monitor_window": "20",
}


def small_cfg(**extra):
    return run_config_from_kv({**SMALL, **extra})


def _params(tr):
    out = [a.policy.params.flat() for a in tr.agents] + [a.den.params.flat() for a in tr.agents]
    return np.concatenate(out + [tr.stage2.policy.params.flat()])


def test_split_and_standardization():
    prep = pipeline.prepare_data(small_cfg())
    assert prep.n_train == 320
    assert np.allclose(prep.Z[:320].mean(axis=0), 0, atol=1e-12)
    with pytest.raises(ValueError):
        pipeline.prepare_data(small_cfg(**{"data.split": "0.001"}))


def test_full_run_is_deterministic_and_reports(tmp_path):
    a = pipeline.Trainer(small_cfg(), out=tmp_path / "a")
    a.run()
    b = pipeline.Trainer(small_cfg())
    b.run()
    assert np.array_equal(_params(a), _params(b))
    pred = pipeline.model_predictions(a)
    assert pred.states.shape == (400, 3) and pred.forecast.shape == (400, 3)
    rep = pipeline.evaluate(a.prep, pred, "test", 2)
    assert 0 <= rep.aggregate["accuracy"] <= 1 and rep.aggregate["mse"] >= 0
    assert len(rep.alignment) == 3
    lines = (tmp_path / "a" / "train_log.ndjson").read_text().splitlines()
    assert len(lines) == 3 * 3 + 2
    rows = pipeline.plot_rows(a.prep, pred, "test", rep.alignment)
    assert len(rows) == 80 * 3 and rows[0][4] in (1, 2) and rows[0][5] in (1, 2)


def test_interrupted_run_resumes_identically(tmp_path):
    full = pipeline.Trainer(small_cfg())
    full.run()
    part = pipeline.Trainer(small_cfg(), out=tmp_path)
    part.run(max_chunks=2)
    assert part.stage1_epochs == 2
    resumed = pipeline.Trainer.resume(tmp_path, small_cfg())
    assert resumed.stage1_epochs == 2 and resumed.stage2_epochs == 0
    resumed.run(max_chunks=2)
    assert resumed.stage1_epochs == 3 and resumed.stage2_epochs == 1
    resumed = pipeline.Trainer.resume(tmp_path)
    resumed.run()
    assert np.array_equal(_params(resumed), _params(full))


def test_resume_rejects_mismatched_config(tmp_path):
    tr = pipeline.Trainer(small_cfg(), out=tmp_path)
    tr.run(max_chunks=1)
    with pytest.raises(pipeline.CheckpointMismatch):
        pipeline.Trainer.resume(tmp_path, small_cfg(**{"run.seed": "9"}))
    with pytest.raises(pipeline.CheckpointMismatch):
        pipeline.Trainer.resume(tmp_path / "missing")


def test_resume_rejects_changed_architecture(tmp_path):
    tr = pipeline.Trainer(small_cfg(), out=tmp_path)
    tr.run(max_chunks=1)
    other = pipeline.Trainer(small_cfg(**{"stage1.hidden": "4,4"}), out=tmp_path)
    with pytest.raises(pipeline.CheckpointMismatch, match="layout"):
        other.load()


def test_stage1_only_and_baseline_predictions():
    tr = pipeline.Trainer(small_cfg(**{"run.stage1_only": "true"}))
    tr.run()
    assert tr.stage2_epochs == 0
    assert pipeline.model_predictions(tr).label == "DRL-S1"
    base = pipeline.baseline_predictions(tr)
    assert base.states is None
    rep = pipeline.evaluate(tr.prep, base, "train", 2)
    assert "accuracy" not in rep.aggregate


def test_no_stage1_output_ablation_runs():
    tr = pipeline.Trainer(small_cfg(**{"run.ablate": "no_stage1_output"}))
    assert all(tr.stage2.latch.flags)
    tr.run()
    assert pipeline.model_predictions(tr).label == "DRL-NSO"


def test_hmm_evaluation_shapes():
    prep = pipeline.prepare_data(small_cfg())
    model, pred = pipeline.evaluate_hmm(prep, 2)
    assert len(model.models) == 3 and pred.forecast.shape == (400, 3)
    rep = pipeline.evaluate(prep, pred, "test", 2)
    assert rep.label == "Parallel HMM" and rep.aggregate["mae"] > 0
