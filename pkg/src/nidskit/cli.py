"""Command-line workbench driving the full workflow.

Subcommands mirror the pipeline stages: ``ingest`` validates and
summarizes a dataset, ``preprocess`` fits and saves a transform plan,
``select`` ranks features by information gain, ``train`` fits one model
end to end, ``evaluate`` scores a trained model (holdout) or re-fits it
per fold (cv), ``compare`` reproduces the raw-vs-preprocessed table over
all seven models, and ``gridsearch`` tunes hyperparameters by inner
cross-validation.

Every artifact is written atomically, every run logs its fully resolved
configuration, and a manifest records input hashes, the seed, and the
tool version so any output can be reproduced byte for byte (reported
wall times excepted; set ``eval.timing = off`` for byte-stable reports).

Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime error.
"""

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, figures
from .config import RunConfig, help_epilog
from .errors import DataError, NidsError, UsageError
from .evaluation import (ExperimentReport, GridSpec, ReportRow, compare_stages,
                         confusion_and_metrics, confusion_to_csv, cross_validate,
                         grid_search, grid_table_to_csv, holdout_split,
                         stratified_kfold, stratified_subsample)
from .kdd_data import CLASS_NAMES, Dataset, find_dataset, load_dataset, schema_table
from .model_io import atomic_write
from .pipeline import (MODEL_NAMES, fit_pipeline, load_pipeline, save_pipeline)
from .preprocess import apply_plan, fit_plan, save_plan
from .feature_select import rank_features, scores_to_csv

log = logging.getLogger("nidskit")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); usage errors are exit 1
        raise UsageError(message)


def _common_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", help="dataset file (overrides data.path and $NIDS_DATA_DIR)")
    p.add_argument("--config", help="run configuration file (key = value lines)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one configuration key (repeatable)")
    p.add_argument("--seed", type=int, help="shortcut for --set eval.seed=N")
    p.add_argument("--rows", type=int, help="shortcut for --set sample.rows=N")
    p.add_argument("--stratified", action=argparse.BooleanOptionalAction, default=None,
                   help="stratify the row subsample (default on)")
    p.add_argument("--out", help="output file or directory")


def build_parser() -> _Parser:
    parser = _Parser(prog="nidskit",
                     description="deterministic network-intrusion-detection workbench",
                     epilog=help_epilog(),
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"nidskit {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("ingest", help="validate a dataset and print its class distribution")
    p.add_argument("--schema", action="store_true", help="print the 41-column schema and exit")
    _common_options(p)

    p = sub.add_parser("preprocess", help="fit a preprocessing plan and save it")
    _common_options(p)

    p = sub.add_parser("select", help="rank features by information gain")
    _common_options(p)

    p = sub.add_parser("train", help="train one model end to end")
    p.add_argument("--model", required=True, choices=MODEL_NAMES)
    _common_options(p)

    p = sub.add_parser("evaluate", help="score a trained model (holdout) or re-fit per fold (cv)")
    p.add_argument("--model", required=True, help="trained model file from `train`")
    _common_options(p)

    p = sub.add_parser("compare", help="raw vs preprocessed stages over all models")
    p.add_argument("--models", default=",".join(MODEL_NAMES),
                   help="comma list of models (default: all seven)")
    _common_options(p)

    p = sub.add_parser("gridsearch", help="exhaustive hyperparameter search by inner CV")
    p.add_argument("--model", required=True, choices=MODEL_NAMES)
    p.add_argument("--axis", action="append", default=[], metavar="KEY=V1,V2",
                   help="one grid axis over a model field, e.g. encnn.sgd.learning_rate=0.1,0.01")
    p.add_argument("--metric", default="f1", choices=("accuracy", "precision", "recall", "f1"))
    p.add_argument("--cap", type=int, default=64, help="maximum combinations")
    _common_options(p)
    return parser


def _resolve_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        if not os.path.exists(args.config):
            raise UsageError(f"config file not found: {args.config}")
        cfg.load_file(args.config)
    for item in args.set:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        cfg.set(key.strip(), value, where="--set")
    if args.seed is not None:
        cfg.set("eval.seed", str(args.seed), where="--seed")
    if args.rows is not None:
        cfg.set("sample.rows", str(args.rows), where="--rows")
    if args.stratified is not None:
        cfg.set("sample.stratified", "true" if args.stratified else "false",
                where="--stratified")
    log.info("resolved configuration:")
    for line in cfg.resolved_lines():
        log.info("  %s", line)
    return cfg


def _data_path(args, cfg) -> Path:
    explicit = args.data or cfg["data.path"] or None
    path = find_dataset(explicit)
    if path is None:
        raise DataError("no dataset found: pass --data, set data.path, or export NIDS_DATA_DIR")
    return Path(path)


def _load_data(args, cfg) -> Dataset:
    path = _data_path(args, cfg)
    log.info("loading %s", path)
    ds = load_dataset(path)
    rows = cfg["sample.rows"]
    if rows and rows < len(ds):
        if cfg["sample.stratified"]:
            idx = stratified_subsample(ds.classes, rows, cfg["eval.seed"])
        else:
            idx = np.arange(rows)
        ds = ds.subset(idx)
        log.info("subsampled to %d rows (%s)", len(ds),
                 "stratified" if cfg["sample.stratified"] else "head")
    return ds


def _threads(cfg) -> int:
    return cfg["eval.threads"] or os.cpu_count() or 1


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(path, argv, cfg: RunConfig, inputs, outputs) -> None:
    manifest = {
        "tool": "nidskit",
        "version": __version__,
        "command": list(argv),
        "seed": cfg["eval.seed"],
        "config": dict(line.split(" = ", 1) for line in cfg.resolved_lines()),
        "inputs": {str(p): _sha256(p) for p in inputs if p and os.path.exists(p)},
        "outputs": {str(p): _sha256(p) for p in outputs if os.path.exists(p)},
    }
    atomic_write(path, json.dumps(manifest, indent=2, sort_keys=True).encode("utf-8") + b"\n")
    log.info("manifest written to %s", path)


def _out_dir(args, default=".") -> Path:
    out = Path(args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- subcommands -------------------------------------------------------------


def cmd_ingest(args, cfg, argv) -> int:
    if args.schema:
        print(schema_table())
        return 0
    ds = _load_data(args, cfg)
    dist = ds.class_distribution()
    print(f"dataset: {ds.source_path}")
    print(dist.table())
    return 0


def cmd_preprocess(args, cfg, argv) -> int:
    ds = _load_data(args, cfg)
    plan = fit_plan(ds, cfg.preprocess_config())
    out = Path(args.out or "plan.txt")
    save_plan(plan, out)
    enc = apply_plan(plan, ds)
    log.info("plan fitted on %d rows; %d encoded columns; %d out-of-fence cells",
             plan.n_rows, enc.n_features, enc.outlier_cells)
    print(f"plan written to {out} ({enc.n_features} encoded columns)")
    _write_manifest(str(out) + ".manifest.json", argv, cfg,
                    inputs=[ds.source_path, args.config], outputs=[out])
    return 0


def cmd_select(args, cfg, argv) -> int:
    ds = _load_data(args, cfg)
    stage = cfg.stage_config()
    plan = fit_plan(ds, stage.preprocess)
    enc = apply_plan(plan, ds)
    onehot = [j for j, n in enumerate(enc.column_names) if "=" in n]
    scores = rank_features(enc.values, enc.labels, stage.bins, discrete_columns=onehot)
    out = Path(args.out or "scores.csv")
    atomic_write(out, scores_to_csv(scores, enc.column_names).encode("utf-8"))
    fig_path = out.with_suffix(".png")
    figures.gain_bars(scores, enc.column_names, fig_path)
    print(f"gain ranking written to {out} (figure: {fig_path})")
    _write_manifest(str(out) + ".manifest.json", argv, cfg,
                    inputs=[ds.source_path, args.config], outputs=[out, fig_path])
    return 0


def cmd_train(args, cfg, argv) -> int:
    ds = _load_data(args, cfg)
    spec = cfg.model_spec(args.model)
    seed = cfg["eval.seed"]
    if cfg["eval.mode"] == "holdout":
        train_idx, test_idx = holdout_split(ds.classes, cfg["eval.train_fraction"], seed)
        log.info("holdout split: %d train / %d held out", train_idx.size, test_idx.size)
    else:
        train_idx = np.arange(len(ds))
        log.info("cv mode: training on all %d rows (evaluate re-fits per fold)", len(ds))
    pipe = fit_pipeline(spec, ds, train_idx, cfg.stage_config(), seed)
    out = Path(args.out or f"{args.model}.model")
    save_pipeline(pipe, out)
    outputs = [out]
    if args.model == "encnn" and pipe.model.last_report is not None:
        rep = pipe.model.last_report
        fig_path = out.with_suffix(".loss.png")
        figures.loss_curve(rep.epoch_losses, fig_path)
        outputs.append(fig_path)
        log.info("final training loss %.4f, train accuracy %.4f",
                 rep.epoch_losses[-1] if rep.epoch_losses else float("nan"),
                 rep.train_accuracy)
    print(f"model written to {out}")
    _write_manifest(str(out) + ".manifest.json", argv, cfg,
                    inputs=[ds.source_path, args.config], outputs=outputs)
    return 0


def cmd_evaluate(args, cfg, argv) -> int:
    ds = _load_data(args, cfg)
    pipe = load_pipeline(args.model)
    seed = cfg["eval.seed"]
    out = _out_dir(args)
    timing = cfg["eval.timing"] == "wall"
    outputs = []

    if cfg["eval.mode"] == "holdout":
        import time as _time
        t0 = _time.perf_counter()
        _, test_idx = holdout_split(ds.classes, cfg["eval.train_fraction"], seed)
        test = ds.subset(test_idx)
        pred = pipe.predict(test)
        cm, m = confusion_and_metrics(test.classes, pred, len(CLASS_NAMES))
        row = ReportRow(model=pipe.spec.name, stage="trained", accuracy=m.accuracy,
                        precision=m.precision, recall=m.recall, f1=m.f1,
                        acc_std=0.0, seconds=_time.perf_counter() - t0, confusion=cm)
        report = ExperimentReport(rows=[row],
                                  mode=f"holdout-{cfg['eval.train_fraction']:.2f}",
                                  seed=seed)
        cm_path = out / "confusion.csv"
        atomic_write(cm_path, confusion_to_csv(cm, CLASS_NAMES).encode("utf-8"))
        fig_path = out / "confusion.png"
        figures.confusion_heatmap(cm, CLASS_NAMES, fig_path,
                                  title=f"{pipe.spec.name} (held-out rows)")
        outputs.extend([cm_path, fig_path])
    else:
        plan = stratified_kfold(ds.classes, cfg["eval.folds"], seed)
        result = cross_validate(pipe.spec, ds, plan, pipe.stage, seed=seed,
                                n_classes=len(CLASS_NAMES), threads=_threads(cfg))
        row = ReportRow(model=pipe.spec.name, stage="cv", accuracy=result.mean["accuracy"],
                        precision=result.mean["precision"], recall=result.mean["recall"],
                        f1=result.mean["f1"], acc_std=result.std["accuracy"], seconds=0.0)
        report = ExperimentReport(rows=[row], mode=f"cv-{cfg['eval.folds']}", seed=seed)

    csv_path = out / "report.csv"
    txt_path = out / "report.txt"
    atomic_write(csv_path, report.to_csv(timing=timing).encode("utf-8"))
    atomic_write(txt_path, report.to_text().encode("utf-8"))
    outputs.extend([csv_path, txt_path])
    print(report.to_text(), end="")
    _write_manifest(out / "manifest.json", argv, cfg,
                    inputs=[ds.source_path, args.config, args.model], outputs=outputs)
    return 0


def cmd_compare(args, cfg, argv) -> int:
    ds = _load_data(args, cfg)
    names = [n.strip() for n in args.models.split(",") if n.strip()]
    specs = [cfg.model_spec(n) for n in names]
    report = compare_stages(specs, ds, cfg.stage_config(), seed=cfg["eval.seed"],
                            mode=cfg["eval.mode"],
                            train_fraction=cfg["eval.train_fraction"],
                            folds=cfg["eval.folds"], n_classes=len(CLASS_NAMES),
                            threads=_threads(cfg))
    out = _out_dir(args)
    timing = cfg["eval.timing"] == "wall"
    csv_path = out / "report.csv"
    txt_path = out / "report.txt"
    fig_path = out / "comparison.png"
    atomic_write(csv_path, report.to_csv(timing=timing).encode("utf-8"))
    atomic_write(txt_path, report.to_text().encode("utf-8"))
    figures.report_bars(report, fig_path)
    outputs = [csv_path, txt_path, fig_path]
    for row in report.rows:
        if row.confusion is not None:
            p = out / f"confusion_{row.model}_{row.stage}.csv"
            atomic_write(p, confusion_to_csv(row.confusion, CLASS_NAMES).encode("utf-8"))
            outputs.append(p)
    print(report.to_text(), end="")
    _write_manifest(out / "manifest.json", argv, cfg,
                    inputs=[ds.source_path, args.config], outputs=outputs)
    return 0


def _parse_axis_value(raw: str):
    raw = raw.strip()
    for cast in (int, float):
        try:
            return cast(raw)
        except ValueError:
            pass
    if raw.lower() in ("true", "false"):
        return raw.lower() == "true"
    return raw


def cmd_gridsearch(args, cfg, argv) -> int:
    if not args.axis:
        raise UsageError("gridsearch needs at least one --axis KEY=V1,V2")
    axes = {}
    for item in args.axis:
        if "=" not in item:
            raise UsageError(f"--axis expects KEY=V1,V2, got {item!r}")
        key, values = item.split("=", 1)
        axes[key.strip()] = [_parse_axis_value(v) for v in values.split(",") if v.strip()]
    ds = _load_data(args, cfg)
    grid = GridSpec(axes=axes, model=cfg.model_spec(args.model),
                    metric=args.metric, cap=args.cap)
    plan = stratified_kfold(ds.classes, cfg["eval.folds"], cfg["eval.seed"])
    best, table = grid_search(grid, ds, plan, cfg.stage_config(),
                              seed=cfg["eval.seed"], n_classes=len(CLASS_NAMES),
                              threads=_threads(cfg))
    out = _out_dir(args)
    grid_path = out / "grid.csv"
    best_path = out / "best.txt"
    atomic_write(grid_path, grid_table_to_csv(table).encode("utf-8"))
    best_lines = [f"{k} = {v}" for k, v in sorted(best.items())]
    atomic_write(best_path, ("\n".join(best_lines) + "\n").encode("utf-8"))
    print(f"best ({args.metric}): " + ", ".join(f"{k}={v}" for k, v in sorted(best.items())))
    _write_manifest(out / "manifest.json", argv, cfg,
                    inputs=[ds.source_path, args.config], outputs=[grid_path, best_path])
    return 0


_HANDLERS = {
    "ingest": cmd_ingest,
    "preprocess": cmd_preprocess,
    "select": cmd_select,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
    "gridsearch": cmd_gridsearch,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(level=logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            parser.print_help()
            return 1
        cfg = _resolve_config(args)
        return _HANDLERS[args.command](args, cfg, argv)
    except UsageError as exc:
        log.error("usage error: %s", exc)
        return 1
    except DataError as exc:
        log.error("data error: %s", exc)
        return 2
    except NidsError as exc:
        log.error("runtime error: %s", exc)
        return 3
    except Exception as exc:  # anything unexpected is a runtime failure
        log.exception("unexpected failure: %s", exc)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
