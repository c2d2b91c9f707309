import json
import subprocess
import sys

import numpy as np
import pytest

from statehawk import cli, simgen

from test_pipeline import SMALL


@pytest.fixture
def small_cfg_file(tmp_path):
    p = tmp_path / "small.cfg"
    p.write_text("".join(f"{k} = {v}\n" for k, v in SMALL.items()))
    return p


def test_simulate_writes_dataset(tmp_path, capsys):
    out = tmp_path / "d.csv"
    assert cli.main(["simulate", "--config", "sim3", "--seed", "3", "--out", str(out)]) == 0
    d = simgen.read_dataset(out, m=2)
    assert d.X.shape == (5000, 3)
    assert np.allclose(d.X, simgen.generate(simgen.preset("sim3", seed=3)).X, atol=1e-9)
    assert "wrote" in capsys.readouterr().out


def test_simulate_is_reproducible(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    cli.main(["simulate", "--config", "fast1", "--seed", "1", "--out", str(a)])
    cli.main(["simulate", "--config", "fast1", "--seed", "1", "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_train_eval_round_trip(tmp_path, small_cfg_file, capsys):
    run = tmp_path / "run"
    assert cli.main(["train", "--config", str(small_cfg_file), "--out", str(run)]) == 0
    out = capsys.readouterr().out
    assert "DL-F" in out and "full" in out
    assert (run / "checkpoints" / "progress.json").exists()
    # a second train call resumes and has nothing left to do
    assert cli.main(["train", "--config", str(small_cfg_file), "--out", str(run)]) == 0
    assert "resuming" in capsys.readouterr().out
    for model in ("full", "stage1", "baseline", "hmm"):
        assert cli.main(["eval", "--run", str(run), "--model", model]) == 0
    rows = [json.loads(l) for l in (run / "eval" / "report_full_test.ndjson").read_text().splitlines()]
    assert rows[-1]["var"] == "all" and "accuracy" in rows[-1]
    header = (run / "eval" / "plot_full_test.csv").read_text().splitlines()[0]
    assert header == "t,variable,truth,prediction,true_state,estimated_state"


def test_eval_rejects_dataset_with_other_width(tmp_path, small_cfg_file, capsys):
    run = tmp_path / "run"
    cli.main(["train", "--config", str(small_cfg_file), "--out", str(run), "--stage1-only"])
    data = tmp_path / "wide.csv"
    simgen.write_dataset(simgen.generate(simgen.preset("sim10", seed=0, length=400)), data)
    assert cli.main(["eval", "--run", str(run), "--data", str(data)]) == 2
    assert "variables" in capsys.readouterr().err


def test_train_with_changed_config_is_a_mismatch(tmp_path, small_cfg_file, capsys):
    run = tmp_path / "run"
    cli.main(["train", "--config", str(small_cfg_file), "--out", str(run), "--stage1-only"])
    assert cli.main(["train", "--config", str(small_cfg_file), "--out", str(run), "--seed", "5"]) == 2
    assert cli.main(["train", "--config", str(small_cfg_file), "--out", str(run), "--seed", "5",
                     "--fresh"]) == 0


def test_error_exit_codes(tmp_path, capsys):
    assert cli.main(["eval", "--run", str(tmp_path / "nothing")]) == 2
    assert cli.main(["simulate", "--config", "no_such"]) == 2
    assert cli.main(["repro", "bogus"]) == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["train", "--config", "sim3", "--ablate", "no_everything"])
    assert exc.value.code == 2


def test_repro_suite_exit_status(capsys):
    assert cli.main(["repro", "rewards"]) == 0
    assert capsys.readouterr().out.startswith("[PASS] criterion  5")


def test_sweep_rejects_unknown_parameter():
    with pytest.raises(SystemExit):
        cli.main(["sweep", "--config", "sim3", "--param", "gamma", "--values", "1"])


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "statehawk", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "simulate" in out.stdout
