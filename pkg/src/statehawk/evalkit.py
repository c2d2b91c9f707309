"""Metrics: label alignment, classification/regression scores, Welch's t-test,
OR-integration of per-variable anomaly flags, and sensitivity sweeps."""

from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

__all__ = [
    "align_states",
    "apply_alignment",
    "classification_metrics",
    "regression_metrics",
    "welch_t_test",
    "student_t_sf",
    "integrate_states",
    "MetricsReport",
    "format_table",
    "sensitivity_sweep",
    "format_sweep_table",
]


def align_states(predicted, truth, m: int) -> np.ndarray:
    """Permutation ``perm`` maximizing agreement of ``perm[predicted]`` with truth.

    Labels are 0-based.  Exhaustive search for ``m <= 6`` with ties going
    to the lexicographically smallest permutation (identity first);
    Hungarian assignment above that.
    """
    predicted = np.asarray(predicted, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if predicted.shape != truth.shape:
        raise ValueError("predicted and truth differ in length")
    counts = np.zeros((m, m), dtype=np.int64)
    np.add.at(counts, (predicted, truth), 1)
    if m <= 6:
        best, best_perm = -1, None
        for perm in itertools.permutations(range(m)):
            score = sum(counts[k, perm[k]] for k in range(m))
            if score > best:
                best, best_perm = score, perm
        return np.array(best_perm, dtype=np.int64)
    from scipy.optimize import linear_sum_assignment

    rows, cols = linear_sum_assignment(-counts)
    perm = np.empty(m, dtype=np.int64)
    perm[rows] = cols
    return perm


def apply_alignment(predicted, perm) -> np.ndarray:
    return np.asarray(perm)[np.asarray(predicted, dtype=np.int64)]


def classification_metrics(predicted, truth, m: int, positive: int | None = None):
    """Accuracy, precision, recall, F1 on aligned 0-based labels.

    Macro averages over the ``m`` classes unless ``positive`` names the
    positive class of a binary problem.  A class with no true or no
    predicted members contributes 0 and triggers a warning.
    """
    predicted = np.asarray(predicted, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    acc = float(np.mean(predicted == truth)) if truth.size else 0.0
    classes = [positive] if positive is not None else range(m)
    precs, recs, f1s = [], [], []
    degenerate = False
    for k in classes:
        tp = int(np.sum((predicted == k) & (truth == k)))
        n_pred = int(np.sum(predicted == k))
        n_true = int(np.sum(truth == k))
        p = tp / n_pred if n_pred else 0.0
        r = tp / n_true if n_true else 0.0
        if not n_true or not n_pred:
            degenerate = True
        f = 2 * p * r / (p + r) if p + r > 0 else 0.0
        precs.append(p)
        recs.append(r)
        f1s.append(f)
    if degenerate:
        warnings.warn("a class is absent from truth or predictions; it scores 0", RuntimeWarning)
    return acc, float(np.mean(precs)), float(np.mean(recs)), float(np.mean(f1s))


def regression_metrics(predictions, truth) -> tuple[float, float]:
    err = np.asarray(predictions, dtype=np.float64) - np.asarray(truth, dtype=np.float64)
    return float(np.mean(np.abs(err))), float(np.mean(err * err))


# ---------------------------------------------------------------------------
# Welch's t-test
# ---------------------------------------------------------------------------


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = tiny if abs(d) < tiny else d
    d = 1.0 / d
    h = d
    for k in range(1, 10000):
        m2 = 2 * k
        aa = k * (b - k) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + k) * (qab + k) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            break
    return h


def regularized_beta(a: float, b: float, x: float) -> float:
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    lbeta = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
    front = math.exp(lbeta + a * math.log(x) + b * math.log1p(-x))
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_sf(t: float, dof: float) -> float:
    """Two-sided tail probability ``P(|T| >= |t|)`` for Student's t."""
    if not math.isfinite(t):
        return 0.0
    x = dof / (dof + t * t)
    return regularized_beta(dof / 2.0, 0.5, x)


def welch_t_test(a, b) -> tuple[float, float, float]:
    """Welch's unequal-variance t-test: ``(t, dof, two-sided p)``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise ValueError("each group needs at least 2 samples")
    va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    diff = a.mean() - b.mean()
    se2 = va + vb
    if se2 == 0.0:
        if diff == 0.0:
            return 0.0, float(a.size + b.size - 2), 1.0
        return math.copysign(math.inf, diff), float(a.size + b.size - 2), 0.0
    t = diff / math.sqrt(se2)
    dof = se2 * se2 / (va * va / (a.size - 1) + vb * vb / (b.size - 1))
    return float(t), float(dof), float(student_t_sf(t, dof))


def integrate_states(per_variable_states, anomalous_label: int = 1, normal_label: int = 0):
    """Per-time OR over variables: anomalous if any variable is anomalous."""
    s = np.asarray(per_variable_states)
    if s.ndim == 1:
        s = s[:, None]
    flag = np.any(s == anomalous_label, axis=1)
    return np.where(flag, anomalous_label, normal_label).astype(np.int64)


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


@dataclass
class MetricsReport:
    label: str
    split: str
    per_variable: list[dict] = field(default_factory=list)
    aggregate: dict = field(default_factory=dict)
    alignment: list[list[int]] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def build_report(
    label: str,
    split: str,
    pred_states,
    true_states,
    predictions,
    truth,
    m: int,
    alignment=None,
    positive: int | None = None,
) -> MetricsReport:
    """Metrics for T x N arrays.

    ``pred_states``/``true_states`` are 0-based (``true_states`` may be
    ``None``).  When ``alignment`` is ``None`` it is fitted per variable
    on the data given.  Aggregates pool every (t, i) pair.
    """
    predictions = np.asarray(predictions)
    truth = np.asarray(truth)
    N = predictions.shape[1]
    rep = MetricsReport(label, split)
    aligned_all, true_all = [], []
    perms = []
    for i in range(N):
        row = {"var": i}
        row["mae"], row["mse"] = regression_metrics(predictions[:, i], truth[:, i])
        if true_states is not None and pred_states is not None:
            if alignment is None:
                perm = align_states(pred_states[:, i], true_states[:, i], m)
            else:
                perm = np.asarray(alignment[i])
            perms.append([int(p) for p in perm])
            al = apply_alignment(pred_states[:, i], perm)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                acc, prec, rec, f1 = classification_metrics(al, true_states[:, i], m, positive)
            row.update(accuracy=acc, precision=prec, recall=rec, f1=f1)
            aligned_all.append(al)
            true_all.append(true_states[:, i])
        rep.per_variable.append(row)
    agg = {}
    agg["mae"], agg["mse"] = regression_metrics(predictions.ravel(), truth.ravel())
    if aligned_all:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            acc, prec, rec, f1 = classification_metrics(
                np.concatenate(aligned_all), np.concatenate(true_all), m, positive
            )
        agg.update(accuracy=acc, precision=prec, recall=rec, f1=f1)
    rep.aggregate = agg
    rep.alignment = perms
    return rep


_TABLE_COLS = ("accuracy", "precision", "recall", "f1", "mae", "mse")


def _cells(aggregate: dict) -> str:
    out = []
    for c in _TABLE_COLS:
        v = aggregate.get(c)
        if v is None:
            out.append(f"{'-':>11}")
        elif c in ("mae", "mse"):
            out.append(f"{v:>11.4f}")
        else:
            out.append(f"{100 * v:>10.2f}%")
    return "".join(out)


def format_table(reports: list[MetricsReport]) -> str:
    lines = [f"{'model':<18}{'split':<7}" + "".join(f"{c:>11}" for c in _TABLE_COLS)]
    for r in reports:
        lines.append(f"{r.label:<18}{r.split:<7}" + _cells(r.aggregate))
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# sensitivity sweeps
# ---------------------------------------------------------------------------

# sweepable reward weight -> run-config key; the penalty weight sweep moves the stage-two value
SWEEP_KEYS = {
    "lambda1": "reward.lambda1",
    "lambda2": "stage2.lambda2",
    "lambda3": "reward.lambda3",
    "lambda4": "reward.lambda4",
    "alpha": "reward.alpha",
    "rho_c": "reward.rho_c",
}


def sensitivity_sweep(base_config, name: str, values, runner=None, split: str = "test") -> list[tuple]:
    """Retrain and evaluate once per value; returns ``(name, value, MetricsReport)`` rows.

    ``runner(config) -> MetricsReport`` defaults to a full pipeline run
    evaluated on ``split``.
    """
    if name not in SWEEP_KEYS:
        raise ValueError(f"unknown sweep parameter {name!r}; choose from {', '.join(SWEEP_KEYS)}")
    if runner is None:
        from . import pipeline

        def runner(cfg):
            tr = pipeline.Trainer(cfg)
            tr.run()
            return pipeline.evaluate(tr.prep, pipeline.model_predictions(tr), split, cfg.n_states)

    rows = []
    for v in values:
        cfg = base_config.with_key(SWEEP_KEYS[name], v)
        rep = runner(cfg)
        rep.label = f"{name}={v}"
        rows.append((name, v, rep))
    return rows


def format_sweep_table(rows: list[tuple]) -> str:
    lines = [f"{'parameter':<11}{'value':>8}" + "".join(f"{c:>11}" for c in _TABLE_COLS)]
    for name, value, rep in rows:
        lines.append(f"{name:<11}{str(value):>8}" + _cells(rep.aggregate))
    return "\n".join(lines)
