import itertools
import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from statehawk import evalkit
from statehawk.config import load_run_config
from statehawk.cli import resolve_config_path


def test_alignment_examples():
    t = np.array([0, 0, 1, 1, 0])
    assert evalkit.align_states(t, t, 2).tolist() == [0, 1]
    perm = evalkit.align_states(1 - t, t, 2)
    assert perm.tolist() == [1, 0] and np.all(evalkit.apply_alignment(1 - t, perm) == t)
    truth = np.array([0, 1] * 10)
    perm = evalkit.align_states(np.zeros(20, int), truth, 2)
    assert np.mean(evalkit.apply_alignment(np.zeros(20, int), perm) == truth) == 0.5
    assert evalkit.align_states([0, 1], [0, 1], 2).tolist() == [0, 1]
    with pytest.raises(ValueError):
        evalkit.align_states([0], [0, 1], 2)


@given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 2)), min_size=1, max_size=60))
def test_alignment_is_exhaustive_optimum_and_never_hurts(pairs):
    p, t = np.array(pairs).T
    perm = evalkit.align_states(p, t, 3)
    got = np.mean(perm[p] == t)
    best = max(np.mean(np.array(q)[p] == t) for q in itertools.permutations(range(3)))
    assert got == best and got >= np.mean(p == t)


def test_alignment_large_m_uses_assignment(rng):
    truth = rng.integers(0, 8, 400)
    perm = rng.permutation(8)
    pred = np.argsort(perm)[truth]
    assert np.array_equal(evalkit.align_states(pred, truth, 8), perm)


def test_classification_examples():
    assert evalkit.classification_metrics([0, 1, 1], [0, 1, 1], 2) == (1.0, 1.0, 1.0, 1.0)
    acc, prec, rec, f1 = evalkit.classification_metrics([0, 1, 1, 1], [0, 0, 1, 1], 2)
    assert acc == 0.75 and prec == pytest.approx(5 / 6) and rec == pytest.approx(0.75)
    with pytest.warns(RuntimeWarning):
        acc, prec, rec, f1 = evalkit.classification_metrics([0, 0, 0, 0], [0, 1, 0, 0], 2, positive=1)
    assert (prec, rec, f1) == (0.0, 0.0, 0.0) and acc == 0.75


@given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 2)), min_size=3, max_size=40),
       st.permutations([0, 1, 2]))
def test_classification_relabel_invariant(pairs, perm):
    p, t = np.array(pairs).T
    perm = np.array(perm)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        a = evalkit.classification_metrics(p, t, 3)
        b = evalkit.classification_metrics(perm[p], perm[t], 3)
    assert np.allclose(a, b)


def test_regression_examples():
    assert evalkit.regression_metrics([1, 2], [1, 2]) == (0.0, 0.0)
    assert evalkit.regression_metrics([1, -1], [0, 0]) == (1.0, 1.0)
    assert evalkit.regression_metrics([3, 4], [0, 0]) == (3.5, 12.5)


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=50))
def test_mae_below_root_mse(errs):
    mae, mse = evalkit.regression_metrics(errs, np.zeros(len(errs)))
    assert mae <= math.sqrt(mse) * (1 + 1e-12) + 1e-12


def test_welch_examples():
    t, dof, p = evalkit.welch_t_test([1, 2, 3], [4, 5, 6])
    assert t == pytest.approx(-3.674, abs=1e-3) and dof == pytest.approx(4) and p == pytest.approx(0.0213, abs=1e-4)
    assert evalkit.welch_t_test([1, 2, 3], [1, 2, 3])[::2] == (0.0, 1.0)
    assert evalkit.welch_t_test([2, 2], [2, 2]) == (0.0, 2.0, 1.0)
    with pytest.raises(ValueError):
        evalkit.welch_t_test([1], [1, 2])


@given(st.lists(st.floats(-10, 10), min_size=2, max_size=12), st.lists(st.floats(-10, 10), min_size=2, max_size=12))
def test_welch_matches_reference_and_symmetry(a, b):
    a, b = np.array(a), np.array(b)
    if a.var() < 1e-6 or b.var() < 1e-6:
        return
    t, dof, p = evalkit.welch_t_test(a, b)
    ref = stats.ttest_ind(a, b, equal_var=False)
    assert t == pytest.approx(ref.statistic, rel=1e-9, abs=1e-12)
    assert abs(p - ref.pvalue) < 1e-8
    t2, _, p2 = evalkit.welch_t_test(b, a)
    assert t2 == pytest.approx(-t) and p2 == pytest.approx(p)


def test_welch_p_decreases_with_gap():
    base = np.array([0.0, 1.0, 2.0, 3.0])
    ps = [evalkit.welch_t_test(base, base + g)[2] for g in (0.5, 1.0, 2.0, 4.0)]
    assert all(x > y for x, y in zip(ps, ps[1:]))


def test_t_survival_reference_points():
    for t, dof in ((0.0, 3.0), (1.5, 2.5), (-2.0, 7.0), (10.0, 30.0)):
        assert abs(evalkit.student_t_sf(t, dof) - 2 * stats.t.sf(abs(t), dof)) < 1e-10


def test_integrate_states():
    s = np.zeros((10, 3), int)
    assert np.all(evalkit.integrate_states(s) == 0)
    s[5, 2] = 1
    out = evalkit.integrate_states(s)
    assert np.flatnonzero(out).tolist() == [5]
    assert np.array_equal(evalkit.integrate_states(out), out)


def test_build_report_pools_and_formats():
    pred_s = np.array([[0, 1], [1, 1], [1, 0]])
    true_s = np.array([[1, 0], [0, 0], [0, 0]])
    rep = evalkit.build_report("m", "test", pred_s, true_s, np.zeros((3, 2)), np.ones((3, 2)), 2)
    assert rep.alignment == [[1, 0], [1, 0]]
    assert rep.per_variable[0]["accuracy"] == 1.0 and rep.aggregate["accuracy"] == pytest.approx(5 / 6)
    assert rep.aggregate["mse"] == 1.0
    table = evalkit.format_table([rep])
    assert "83.33%" in table and "1.0000" in table
    assert '"label": "m"' in rep.to_json()
    no_states = evalkit.build_report("b", "test", None, None, np.zeros((3, 2)), np.ones((3, 2)), 2)
    assert "accuracy" not in no_states.aggregate and " -" in evalkit.format_table([no_states])


def test_sensitivity_sweep_with_fake_runner():
    base = load_run_config(resolve_config_path("fast1"))
    seen = []

    def runner(cfg):
        seen.append(cfg.stage2.reward.lambda2)
        return evalkit.MetricsReport("x", "test", aggregate={"mae": cfg.stage2.reward.lambda2, "mse": 0.0})

    rows = evalkit.sensitivity_sweep(base, "lambda2", [0, 0.01, 0.02, 0.03], runner)
    assert seen == [0, 0.01, 0.02, 0.03] and [r[2].label for r in rows][0] == "lambda2=0"
    assert len(evalkit.format_sweep_table(rows).splitlines()) == 5
    assert evalkit.sensitivity_sweep(base, "alpha", [], runner) == []
    with pytest.raises(ValueError):
        evalkit.sensitivity_sweep(base, "gamma", [1], runner)
