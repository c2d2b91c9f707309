"""End-to-end orchestration: data, reference predictor, both stages, checkpoints, evaluation.

Randomness comes from named streams of the run seed, so a run is a pure
function of its config.  Training state (parameters, optimizer moments,
RNG positions, epoch counters) is checkpointed every
``checkpoint_every`` epochs; :meth:`Trainer.resume` continues a run
with the same subsequent random draws as an uninterrupted one.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import emission, evalkit, hmm_baseline, simgen
from .config import RunConfig, run_config_from_kv
from .emission import BaselineModel, Standardizer
from .ndcompute import ParamStore, load_checkpoint, save_checkpoint
from .simgen import Dataset, rng_stream
from .stage1 import SeriesView, Stage1Agent, decode, train_stage1
from .stage2 import Stage2State, decode_stage2, train_stage2

log = logging.getLogger(__name__)

__all__ = ["Prepared", "prepare_data", "Trainer", "Predictions", "evaluate", "evaluate_hmm",
           "baseline_predictions", "plot_rows"]


class CheckpointMismatch(ValueError):
    pass


# ---------------------------------------------------------------------------
# data
# ---------------------------------------------------------------------------


@dataclass
class Prepared:
    data: Dataset
    n_train: int
    std: Standardizer
    Z: np.ndarray

    @property
    def states(self) -> np.ndarray | None:
        return self.data.labels()


def load_dataset(cfg: RunConfig) -> Dataset:
    if cfg.sim is not None:
        return simgen.generate(cfg.sim)
    return simgen.read_dataset(cfg.data_path, m=cfg.n_states)


def prepare_data(cfg: RunConfig, data: Dataset | None = None) -> Prepared:
    """Contiguous train/test split; standardization fitted on the training part."""
    data = load_dataset(cfg) if data is None else data
    n_train = int(cfg.split * data.T)
    if n_train < 2 or data.T - n_train < 2:
        raise ValueError(f"split {cfg.split} leaves too few steps on one side of {data.T}")
    std = Standardizer.fit(data.X[:n_train])
    return Prepared(data, n_train, std, std.transform(data.X))


# ---------------------------------------------------------------------------
# RNG and optimizer state
# ---------------------------------------------------------------------------


def _rng_to_json(rng: np.random.Generator) -> dict:
    def conv(x):
        if isinstance(x, dict):
            return {k: conv(v) for k, v in x.items()}
        if isinstance(x, np.ndarray):
            return {"__array__": [int(v) for v in x], "dtype": str(x.dtype)}
        return x
    return conv(rng.bit_generator.state)


def _rng_from_json(state: dict) -> np.random.Generator:
    def conv(x):
        if isinstance(x, dict) and "__array__" in x:
            return np.array(x["__array__"], dtype=x["dtype"])
        if isinstance(x, dict):
            return {k: conv(v) for k, v in x.items()}
        return x
    state = conv(state)
    bg = getattr(np.random, state["bit_generator"])()
    bg.state = state
    return np.random.Generator(bg)


def _opt_stores(prefix: str, opt) -> dict[str, ParamStore]:
    return {f"{prefix}_m": opt.m, f"{prefix}_v": opt.v}


def _load_opt(prefix: str, opt, stores, step_count: int) -> None:
    opt.load_state(stores[f"{prefix}_m"], stores[f"{prefix}_v"], step_count)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


class Trainer:
    """Holds every trainable piece of one run."""

    def __init__(self, cfg: RunConfig, prepared: Prepared | None = None, out: str | Path | None = None):
        self.cfg = cfg
        self.prep = prepare_data(cfg) if prepared is None else prepared
        self.out = Path(out) if out is not None else None
        s1 = cfg.stage1
        N = self.prep.data.N
        seed = cfg.seed
        self.baselines = [BaselineModel(s1.T0, rng_stream(seed, "baseline", str(i)), s1.hidden) for i in range(N)]
        self.agents = [
            Stage1Agent.create(s1, rng_stream(seed, "stage1-init", str(i)), rng_stream(seed, "stage1-train", str(i)))
            for i in range(N)
        ]
        self.stage2 = Stage2State.create(
            N, cfg.stage2, rng_stream(seed, "stage2-init"), rng_stream(seed, "stage2-train"),
            latched="no_stage1_output" in cfg.ablate,
        )
        self.baseline_done = False
        self.stage2_epochs = 0
        self.train_views: list[SeriesView] = []
        self.full_views: list[SeriesView] = []
        self.log_records: list[dict] = []

    # -- pieces -------------------------------------------------------------

    @property
    def N(self) -> int:
        return self.prep.data.N

    @property
    def uniform_stage1(self) -> bool:
        return "no_stage1_output" in self.cfg.ablate

    def fit_baselines(self) -> None:
        s1 = self.cfg.stage1
        ntr = self.prep.n_train
        for i, b in enumerate(self.baselines):
            z = self.prep.Z[:ntr, i]
            H = emission.history_windows(z, s1.T0)
            hist = emission.train_baseline(
                b, H[:-1], z[1:], rng_stream(self.cfg.seed, "baseline-train", str(i)), epochs=s1.baseline_epochs
            )
            log.info("baseline var %d: final mse %.5f", i, hist[-1] if hist else float("nan"))
        self.baseline_done = True

    def build_views(self) -> None:
        T0 = self.cfg.stage1.T0
        ntr = self.prep.n_train
        Z = self.prep.Z
        self.train_views = [SeriesView.build(Z[:ntr, i], T0, b) for i, b in enumerate(self.baselines)]
        self.full_views = [SeriesView.build(Z[:, i], T0, b) for i, b in enumerate(self.baselines)]

    def _emit(self, rec: dict, stage: int) -> None:
        rec = {"stage": stage, **rec}
        self.log_records.append(rec)
        if self.out is not None:
            with open(self.out / "train_log.ndjson", "a", encoding="utf-8") as fh:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")

    @property
    def stage1_epochs(self) -> int:
        return min(a.epoch for a in self.agents)

    def _prepare_out(self) -> None:
        if self.out is not None:
            self.out.mkdir(parents=True, exist_ok=True)
            (self.out / "run.cfg").write_text(
                "".join(f"{k} = {v}\n" for k, v in self.cfg.source.items()), encoding="utf-8"
            )

    def run_baseline(self) -> None:
        self._prepare_out()
        if not self.baseline_done:
            self.fit_baselines()
            self.save()
        if not self.train_views:
            self.build_views()

    def run_stage1(self, max_chunks: int | None = None) -> int:
        """Stage-one epochs still due, in checkpointed chunks; returns chunks run."""
        self.run_baseline()
        cfg, chunks = self.cfg, 0
        while self.stage1_epochs < cfg.stage1.epochs and (max_chunks is None or chunks < max_chunks):
            n = min(cfg.checkpoint_every, cfg.stage1.epochs - self.stage1_epochs)
            train_stage1(self.train_views, self.agents, cfg.stage1, epochs=n, threads=cfg.threads,
                         on_epoch=lambda i, r: self._emit(r, 1))
            self.save()
            chunks += 1
        return chunks

    def run_stage2(self, max_chunks: int | None = None) -> int:
        self.run_baseline()
        cfg, chunks = self.cfg, 0
        while self.stage2_epochs < cfg.stage2.epochs and (max_chunks is None or chunks < max_chunks):
            n = min(cfg.checkpoint_every, cfg.stage2.epochs - self.stage2_epochs)
            recs = train_stage2(self.stage2, self.train_views, self.agents, cfg.stage2, epochs=n,
                                uniform_stage1=self.uniform_stage1, on_epoch=lambda r: self._emit(r, 2))
            self.stage2_epochs += len(recs)
            self.save()
            chunks += 1
        return chunks

    def run(self, max_chunks: int | None = None) -> None:
        """Train whatever remains; ``max_chunks`` bounds the checkpointed chunks run (for interruption tests)."""
        done = self.run_stage1(max_chunks)
        if self.cfg.stage1_only:
            return
        if max_chunks is not None:
            max_chunks -= done
            if max_chunks <= 0:
                return
        self.run_stage2(max_chunks)

    # -- persistence --------------------------------------------------------

    def save(self) -> None:
        if self.out is None:
            return
        ck = self.out / "checkpoints"
        ck.mkdir(parents=True, exist_ok=True)
        save_checkpoint(ck / "baseline.ckpt", {f"base{i}": b.params for i, b in enumerate(self.baselines)},
                        {"done": self.baseline_done})
        for i, a in enumerate(self.agents):
            stores = {"den": a.den.params, "policy": a.policy.params, "value": a.value.params,
                      "candidate": a.candidate.params}
            stores.update(_opt_stores("candidate", a.candidate))
            stores.update(_opt_stores("actor", a.actor_opt))
            stores.update(_opt_stores("critic", a.critic_opt))
            meta = {"epoch": a.epoch, "rng": _rng_to_json(a.rng),
                    "steps": [a.candidate.step_count, a.actor_opt.step_count, a.critic_opt.step_count]}
            save_checkpoint(ck / f"stage1_var{i}.ckpt", stores, meta)
        st = self.stage2
        stores = {"policy": st.policy.params, "value": st.value.params}
        stores.update(_opt_stores("actor", st.actor_opt))
        stores.update(_opt_stores("critic", st.critic_opt))
        meta = {"epoch": st.epoch, "rng": _rng_to_json(st.rng), "latch": [bool(f) for f in st.latch.flags],
                "steps": [st.actor_opt.step_count, st.critic_opt.step_count]}
        save_checkpoint(ck / "stage2.ckpt", stores, meta)
        progress = {
            "stage1_epochs": [a.epoch for a in self.agents],
            "stage2_epochs": self.stage2_epochs,
            "std_mean": self.prep.std.mean.tolist(),
            "std_std": self.prep.std.std.tolist(),
            "n_train": self.prep.n_train,
            "config": self.cfg.source,
        }
        tmp = ck / "progress.json.tmp"
        tmp.write_text(json.dumps(progress, sort_keys=True), encoding="utf-8")
        tmp.replace(ck / "progress.json")

    @classmethod
    def resume(cls, out: str | Path, cfg: RunConfig | None = None, prepared: Prepared | None = None) -> "Trainer":
        """Rebuild a trainer from ``out/checkpoints``.

        With ``cfg`` given, its keys must match the stored run config.
        """
        out = Path(out)
        ck = out / "checkpoints"
        try:
            progress = json.loads((ck / "progress.json").read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise CheckpointMismatch(f"no checkpoints under {out}") from None
        stored = run_config_from_kv(progress["config"])
        if cfg is not None and cfg.source != stored.source:
            raise CheckpointMismatch("config differs from the one stored with the checkpoints")
        cfg = stored
        tr = cls(cfg, prepared, out)
        if tr.prep.n_train != progress["n_train"]:
            raise CheckpointMismatch("dataset split differs from the checkpointed run")
        tr.prep = Prepared(tr.prep.data, tr.prep.n_train,
                           Standardizer(np.array(progress["std_mean"]), np.array(progress["std_std"])),
                           tr.prep.Z)
        tr.load()
        tr.stage2_epochs = int(progress["stage2_epochs"])
        return tr

    def load(self) -> None:
        ck = self.out / "checkpoints"
        stores, meta = load_checkpoint(ck / "baseline.ckpt")
        for i, b in enumerate(self.baselines):
            _assign(b.params, stores, f"base{i}")
        self.baseline_done = bool(meta.get("done"))
        for i, a in enumerate(self.agents):
            stores, meta = load_checkpoint(ck / f"stage1_var{i}.ckpt")
            for g, target in (("den", a.den.params), ("policy", a.policy.params),
                              ("value", a.value.params), ("candidate", a.candidate.params)):
                _assign(target, stores, g)
            steps = meta["steps"]
            _load_opt("candidate", a.candidate, stores, steps[0])
            _load_opt("actor", a.actor_opt, stores, steps[1])
            _load_opt("critic", a.critic_opt, stores, steps[2])
            a.epoch = int(meta["epoch"])
            a.rng = _rng_from_json(meta["rng"])
        stores, meta = load_checkpoint(ck / "stage2.ckpt")
        st = self.stage2
        _assign(st.policy.params, stores, "policy")
        _assign(st.value.params, stores, "value")
        _load_opt("actor", st.actor_opt, stores, meta["steps"][0])
        _load_opt("critic", st.critic_opt, stores, meta["steps"][1])
        st.epoch = int(meta["epoch"])
        st.rng = _rng_from_json(meta["rng"])
        st.latch.flags = [bool(f) for f in meta["latch"]]
        if self.baseline_done:
            self.build_views()


def _assign(target: ParamStore, stores: dict, group: str) -> None:
    if group not in stores:
        raise CheckpointMismatch(f"checkpoint lacks group {group!r}")
    src = stores[group]
    if src.shapes() != target.shapes():
        raise CheckpointMismatch(f"parameter layout of {group!r} does not match the config")
    target.assign(src)


# ---------------------------------------------------------------------------
# prediction and evaluation
# ---------------------------------------------------------------------------


@dataclass
class Predictions:
    """Row ``t`` of ``states`` estimates the state at ``t``; row ``t`` of
    ``forecast`` predicts ``X[t]`` in original units (row 0 is undefined)."""

    label: str
    states: np.ndarray | None
    forecast: np.ndarray


def _pad_front(a: np.ndarray, k: int) -> np.ndarray:
    return np.concatenate([np.repeat(a[:1], k, axis=0), a], axis=0)


def model_predictions(tr: Trainer, stage: int | None = None) -> Predictions:
    """Hard-decoded states and one-step forecasts over the whole series."""
    if not tr.full_views:
        tr.build_views()
    stage = (1 if tr.cfg.stage1_only else 2) if stage is None else stage
    N = tr.N
    if stage == 1:
        s1 = tr.cfg.stage1
        ds = [decode(tr.agents[i].policy, tr.agents[i].den, tr.full_views[i], s1.T1, s1.e_clip, 1,
                     s1.obs_errors) for i in range(N)]
        acts = np.stack([d.actions for d in ds], axis=1)
        fc = np.stack([d.forecast for d in ds], axis=1)
        label = "DRL-S1"
    else:
        d2 = decode_stage2(tr.stage2, tr.agents, tr.full_views, tr.cfg.stage2, 1, tr.uniform_stage1)
        acts, fc = d2.actions, d2.forecast
        label = tr.cfg.label
    # acts[k] is the state at k+1; fc[k] predicts z[k+2]
    states = _pad_front(acts, 1)
    z_fc = _pad_front(fc, 2)[: tr.prep.data.T]
    return Predictions(label, states, tr.prep.std.inverse(z_fc))


def baseline_predictions(tr: Trainer) -> Predictions:
    if not tr.full_views:
        tr.build_views()
    fc = np.stack([b.predict_one(v.H) for b, v in zip(tr.baselines, tr.full_views)], axis=1)
    return Predictions("DL-F", None, tr.prep.std.inverse(_pad_front(fc, 1)[: tr.prep.data.T]))


def _split_slice(prep: Prepared, split: str) -> slice:
    if split == "train":
        return slice(2, prep.n_train)
    if split == "test":
        return slice(prep.n_train, prep.data.T)
    raise ValueError(f"split must be 'train' or 'test', got {split!r}")


def evaluate(prep: Prepared, pred: Predictions, split: str = "test", m: int = 2,
             positive: int | None = None) -> evalkit.MetricsReport:
    """Metrics on one split; state alignment is always fitted on the training split."""
    sl = _split_slice(prep, split)
    S = prep.states
    alignment = None
    if pred.states is not None and S is not None:
        tr_sl = _split_slice(prep, "train")
        alignment = [evalkit.align_states(pred.states[tr_sl, i], S[tr_sl, i], m) for i in range(prep.data.N)]
    return evalkit.build_report(
        pred.label, split,
        None if pred.states is None else pred.states[sl],
        None if S is None or pred.states is None else S[sl],
        pred.forecast[sl], prep.data.X[sl], m, alignment, positive,
    )


def evaluate_hmm(prep: Prepared, m: int = 2, seed: int = 0, restarts: int = 0):
    """Fit the parallel HMM on the raw training split and score it like the other models."""
    X = prep.data.X
    model = hmm_baseline.ParallelHMM.fit(X[: prep.n_train], m, seed=seed, restarts=restarts)
    states = model.decode(X)
    fc = _pad_front(model.forecasts(X)[:-1], 1)
    return model, Predictions("Parallel HMM", states, fc)


def plot_rows(prep: Prepared, pred: Predictions, split: str = "test", alignment=None):
    """``(t, var, truth, prediction, true_state, estimated_state)`` rows, states 1-based."""
    sl = _split_slice(prep, split)
    S = prep.states
    rows = []
    for t in range(sl.start, sl.stop):
        for i in range(prep.data.N):
            est = ""
            if pred.states is not None:
                s = int(pred.states[t, i])
                if alignment is not None:
                    s = int(alignment[i][s])
                est = s + 1
            rows.append((t, prep.data.columns[i], float(prep.data.X[t, i]), float(pred.forecast[t, i]),
                         "" if S is None else int(S[t, i]) + 1, est))
    return rows
