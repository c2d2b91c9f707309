"""Command-line entry point: ``statehawk {simulate,train,eval,sweep,repro}``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

from . import evalkit, pipeline, simgen
from .config import ABLATIONS, RunConfig, load_run_config, parse_ablations, run_config_from_kv
from .simgen import ConfigError

log = logging.getLogger("statehawk")

CONFIG_DIR = Path(__file__).with_name("configs")


def _setup_logging() -> None:
    level = os.environ.get("STATEHAWK_LOG", "WARNING").upper()
    if level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
        level = "WARNING"
    logging.basicConfig(level=level, format="%(asctime)s %(name)s %(levelname)s %(message)s")


def resolve_config_path(name: str) -> Path:
    """A path, or the name of a bundled config (``sim3`` -> ``configs/sim3.cfg``)."""
    p = Path(name)
    if p.exists():
        return p
    bundled = CONFIG_DIR / (name if name.endswith(".cfg") else f"{name}.cfg")
    if bundled.exists():
        return bundled
    raise ConfigError(f"config {name!r} not found (bundled: {', '.join(bundled_configs())})")


def bundled_configs() -> list[str]:
    return sorted(p.stem for p in CONFIG_DIR.glob("*.cfg"))


def _load(args) -> RunConfig:
    cfg = load_run_config(resolve_config_path(args.config))
    return cfg.with_overrides(
        seed=getattr(args, "seed", None),
        stage1_only=True if getattr(args, "stage1_only", False) else None,
        ablate=getattr(args, "ablate", None),
        threads=getattr(args, "threads", None),
    )


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    kv = simgen.parse_kv(resolve_config_path(args.config).read_text(encoding="utf-8"), args.config)
    if args.seed is not None:
        if "data.preset" in kv:
            kv["data.seed"] = str(args.seed)
        else:
            kv["seed"] = str(args.seed)
    cfg = run_config_from_kv(kv)
    if cfg.sim is None:
        raise ConfigError("simulate needs simulator keys or data.preset in the config")
    d = simgen.generate(cfg.sim)
    out = Path(args.out or "dataset.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    simgen.write_dataset(d, out)
    print(simgen.occupancy_summary(d))
    print(f"wrote {out}")
    return 0


def cmd_train(args) -> int:
    cfg = _load(args)
    out = Path(args.out or "run")
    progress = out / "checkpoints" / "progress.json"
    if progress.exists() and not args.fresh:
        tr = pipeline.Trainer.resume(out, cfg)
        print(f"resuming {out}: stage one at epoch {tr.stage1_epochs}, stage two at epoch {tr.stage2_epochs}")
    else:
        if out.exists():
            (out / "train_log.ndjson").unlink(missing_ok=True)
        tr = pipeline.Trainer(cfg, out=out)
    stage = "stage one" if tr.stage1_epochs < cfg.stage1.epochs else "stage two"
    try:
        tr.run()
    except Exception as exc:
        raise RuntimeError(f"{stage} training failed: {exc}") from exc
    reports = [pipeline.evaluate(tr.prep, p, "test", cfg.n_states)
               for p in (pipeline.baseline_predictions(tr), pipeline.model_predictions(tr))]
    print(evalkit.format_table(reports))
    print(f"checkpoints in {out / 'checkpoints'}")
    return 0


def cmd_eval(args) -> int:
    run_dir = Path(args.run)
    tr = pipeline.Trainer.resume(run_dir)
    cfg = tr.cfg
    if args.data:
        data = simgen.read_dataset(args.data, m=cfg.n_states)
        if data.N != tr.N:
            raise pipeline.CheckpointMismatch(f"dataset has {data.N} variables, checkpoints have {tr.N}")
        prep = pipeline.prepare_data(cfg, data)
        tr.prep = pipeline.Prepared(data, prep.n_train, tr.prep.std, tr.prep.std.transform(data.X))
        tr.build_views()
    model = args.model
    if model == "baseline":
        pred = pipeline.baseline_predictions(tr)
    elif model == "hmm":
        _, pred = pipeline.evaluate_hmm(tr.prep, cfg.n_states, seed=cfg.seed)
    else:
        stage = 1 if model == "stage1" else None
        pred = pipeline.model_predictions(tr, stage)
    rep = pipeline.evaluate(tr.prep, pred, args.split, cfg.n_states, args.positive)
    out = Path(args.out or run_dir / "eval")
    out.mkdir(parents=True, exist_ok=True)
    tag = f"{model}_{args.split}"
    with open(out / f"report_{tag}.ndjson", "w", encoding="utf-8") as fh:
        for row in rep.per_variable:
            fh.write(json.dumps({"label": rep.label, "split": rep.split, **row}, sort_keys=True) + "\n")
        fh.write(json.dumps({"label": rep.label, "split": rep.split, "var": "all", **rep.aggregate},
                            sort_keys=True) + "\n")
    with open(out / f"plot_{tag}.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "variable", "truth", "prediction", "true_state", "estimated_state"])
        w.writerows(pipeline.plot_rows(tr.prep, pred, args.split, rep.alignment or None))
    print(evalkit.format_table([rep]))
    print(f"reports in {out}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _load(args)
    values = [float(v) for v in args.values.split(",") if v.strip()]
    rows = evalkit.sensitivity_sweep(cfg, args.param, values)
    print(evalkit.format_sweep_table(rows))
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", encoding="utf-8") as fh:
            for name, value, rep in rows:
                fh.write(json.dumps({"parameter": name, "value": value, **rep.aggregate}, sort_keys=True) + "\n")
    return 0


def cmd_repro(args) -> int:
    from . import repro

    results = repro.run_suite(args.suite, seed=args.seed or 0)
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="statehawk", description="State-aware forecasting with learned hard state decoding.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a simulated dataset")
    s.add_argument("--config", required=True, help="config file or bundled name (sim3, fast1, ...)")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", help="output CSV (default dataset.csv)")
    s.set_defaults(func=cmd_simulate)

    def training_flags(sp):
        sp.add_argument("--config", required=True, help="config file or bundled name")
        sp.add_argument("--seed", type=int, help="training seed")
        sp.add_argument("--stage1-only", action="store_true", help="skip stage two")
        sp.add_argument("--ablate", help=f"comma-separated: {', '.join(ABLATIONS)}")
        sp.add_argument("--threads", type=int, help="per-variable stage-one workers")

    t = sub.add_parser("train", help="train reference predictor, stage one and stage two")
    training_flags(t)
    t.add_argument("--out", help="run directory (default ./run)")
    t.add_argument("--fresh", action="store_true", help="ignore existing checkpoints")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a trained run")
    e.add_argument("--run", required=True, help="run directory written by train")
    e.add_argument("--data", help="dataset CSV (default: the run's own data)")
    e.add_argument("--split", choices=("train", "test"), default="test")
    e.add_argument("--model", choices=("full", "stage1", "baseline", "hmm"), default="full")
    e.add_argument("--positive", type=int, help="0-based anomalous state for binary metrics")
    e.add_argument("--out", help="output directory (default RUN/eval)")
    e.set_defaults(func=cmd_eval)

    w = sub.add_parser("sweep", help="sensitivity sweep over one reward weight")
    training_flags(w)
    w.add_argument("--param", required=True, choices=sorted(evalkit.SWEEP_KEYS))
    w.add_argument("--values", required=True, help="comma-separated values")
    w.add_argument("--out", help="NDJSON output path")
    w.set_defaults(func=cmd_sweep)

    r = sub.add_parser("repro", help="run an acceptance suite")
    r.add_argument("suite", help="sim3, ablations, hmm, fast1, rewards, screening, gae, gradcheck, "
                                 "hmm-oracles, simulator, welch, ppo, quick, all")
    r.add_argument("--seed", type=int)
    r.set_defaults(func=cmd_repro)
    return p


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "ablate", None):
        try:
            parse_ablations(args.ablate)
        except ConfigError as exc:
            parser.error(str(exc))
    try:
        return args.func(args)
    except (ConfigError, pipeline.CheckpointMismatch, simgen.DatasetParseError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
