"""Splitting, metrics, cross-validation, grid search, and stage comparison.

Metrics reduce the C-way confusion matrix one-vs-rest per class:
recall TP/(TP+FN), precision TP/(TP+FP), F = 2PR/(P+R), accuracy
trace/total; macro values are unweighted class means and every 0/0
denominator yields 0.0 (with a warning naming the class).  Folds and
holdout splits are stratified and seeded; every fold/cell trains from a
seed derived from (seed, fold, cell), so results never depend on
execution order or thread count.
"""

import copy
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, LengthMismatchError, UsageError
from .kdd_data import Dataset
from .pipeline import (MODEL_LABELS, ModelSpec, StageConfig, FittedPipeline,
                       fit_model, fit_pipeline, raw_stage)
from .preprocess import apply_plan, fit_plan
from .rng import child_seed, stream


class CodeRangeError(DataError):
    pass


class KTooLargeError(DataError):
    pass


class DegenerateSplitError(DataError):
    pass


class CapExceededError(UsageError):
    pass


# --- confusion matrix and metrics -------------------------------------------

@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: float  # macro
    recall: float     # macro
    f1: float         # macro
    per_class: tuple  # ((precision, recall, f1) per class)


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    t = np.asarray(y_true, dtype=np.int64)
    p = np.asarray(y_pred, dtype=np.int64)
    if t.size != p.size:
        raise LengthMismatchError(f"{t.size} true labels vs {p.size} predictions")
    if t.size and (min(t.min(), p.min()) < 0 or max(t.max(), p.max()) >= n_classes):
        raise CodeRangeError(f"class codes must lie in [0, {n_classes})")
    cm = np.bincount(t * n_classes + p, minlength=n_classes * n_classes)
    return cm.reshape(n_classes, n_classes)


def metrics_from_confusion(cm: np.ndarray) -> Metrics:
    cm = np.asarray(cm, dtype=np.float64)
    n_classes = cm.shape[0]
    total = cm.sum()
    per_class = []
    zero_div = []
    for c in range(n_classes):
        tp = cm[c, c]
        fp = cm[:, c].sum() - tp
        fn = cm[c, :].sum() - tp
        prec = tp / (tp + fp) if tp + fp > 0 else 0.0
        rec = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1 = 2.0 * rec * prec / (rec + prec) if rec + prec > 0 else 0.0
        if (tp + fp == 0) or (tp + fn == 0) or (rec + prec == 0):
            zero_div.append(c)
        per_class.append((prec, rec, f1))
    if zero_div:
        warnings.warn(f"0/0 metric denominators for class(es) {zero_div}; reported as 0.0",
                      stacklevel=2)
    acc = float(np.trace(cm) / total) if total > 0 else 0.0
    arr = np.asarray(per_class)
    return Metrics(accuracy=acc,
                   precision=float(arr[:, 0].mean()),
                   recall=float(arr[:, 1].mean()),
                   f1=float(arr[:, 2].mean()),
                   per_class=tuple(map(tuple, per_class)))


def confusion_and_metrics(y_true, y_pred, n_classes: int):
    cm = confusion_matrix(y_true, y_pred, n_classes)
    return cm, metrics_from_confusion(cm)


def confusion_to_csv(cm: np.ndarray, class_names) -> str:
    names = list(class_names)
    lines = ["true\\pred," + ",".join(names)]
    for i, row in enumerate(np.asarray(cm)):
        lines.append(names[i] + "," + ",".join(str(int(v)) for v in row))
    return "\n".join(lines) + "\n"


# --- stratified splitting ----------------------------------------------------

@dataclass(frozen=True)
class FoldPlan:
    folds: tuple  # k disjoint index arrays covering all rows
    k: int
    n: int

    def train_test(self, i: int):
        test = self.folds[i]
        train = np.concatenate([f for j, f in enumerate(self.folds) if j != i])
        return np.sort(train), np.sort(test)


def stratified_kfold(labels, k: int = 10, seed: int = 0) -> FoldPlan:
    """Per class: seeded shuffle, then round-robin assignment to folds."""
    y = np.asarray(labels)
    if k < 2:
        raise DataError("k must be >= 2")
    if k > y.size:
        raise KTooLargeError(f"k={k} exceeds the {y.size} available rows")
    buckets = [[] for _ in range(k)]
    for c in np.unique(y):
        idx = np.nonzero(y == c)[0]
        idx = idx[stream(seed, "kfold", int(c)).permutation(idx.size)]
        for i, row in enumerate(idx):
            buckets[i % k].append(row)
    folds = tuple(np.sort(np.asarray(b, dtype=np.int64)) for b in buckets)
    return FoldPlan(folds=folds, k=k, n=y.size)


def holdout_split(labels, train_fraction: float = 0.8, seed: int = 0):
    """Stratified single split; a 1-sample class lands in train (warning)."""
    y = np.asarray(labels)
    if not 0.0 < train_fraction < 1.0:
        raise DataError("train_fraction must lie strictly between 0 and 1")
    train, test = [], []
    for c in np.unique(y):
        idx = np.nonzero(y == c)[0]
        idx = idx[stream(seed, "holdout", int(c)).permutation(idx.size)]
        if idx.size == 1:
            warnings.warn(f"class {c} has a single sample; assigning it to train",
                          stacklevel=2)
            train.extend(idx)
            continue
        n_train = int(round(train_fraction * idx.size))
        n_train = min(max(n_train, 1), idx.size - 1)
        if n_train < 1 or idx.size - n_train < 1:
            raise DegenerateSplitError(
                f"class {c} with {idx.size} samples cannot be split at {train_fraction}")
        train.extend(idx[:n_train])
        test.extend(idx[n_train:])
    return (np.sort(np.asarray(train, dtype=np.int64)),
            np.sort(np.asarray(test, dtype=np.int64)))


def stratified_subsample(labels, n_rows: int, seed: int) -> np.ndarray:
    """Seeded class-proportional subsample of at most n_rows indices."""
    y = np.asarray(labels)
    if n_rows >= y.size:
        return np.arange(y.size)
    keep = []
    classes = np.unique(y)
    shares = {int(c): (y == c).sum() / y.size for c in classes}
    for c in classes:
        idx = np.nonzero(y == c)[0]
        want = max(1, int(round(shares[int(c)] * n_rows)))
        idx = idx[stream(seed, "subsample", int(c)).permutation(idx.size)]
        keep.extend(idx[:min(want, idx.size)])
    return np.sort(np.asarray(keep, dtype=np.int64))


# --- cross-validation ---------------------------------------------------------

@dataclass
class CvResult:
    fold_metrics: list
    mean: dict   # accuracy/precision/recall/f1 -> mean over folds
    std: dict    # same keys -> population std over folds


def _aggregate(fold_metrics: list) -> CvResult:
    keys = ("accuracy", "precision", "recall", "f1")
    vals = {k: np.asarray([getattr(m, k) for m in fold_metrics]) for k in keys}
    return CvResult(fold_metrics=fold_metrics,
                    mean={k: float(v.mean()) for k, v in vals.items()},
                    std={k: float(v.std()) for k, v in vals.items()})


def cross_validate(spec: ModelSpec, data: Dataset, plan: FoldPlan,
                   stage: StageConfig, seed: int = 0, n_classes: int = 5,
                   fit_preprocess_per_fold: bool = True, threads: int = 1) -> CvResult:
    """Train/evaluate per fold; preprocessing fits on training folds only."""
    shared = None
    if not fit_preprocess_per_fold:
        # leaky variant kept for comparison: one encoding fitted on all rows
        pre = fit_plan(data, stage.preprocess)
        enc = apply_plan(pre, data)
        X, y = enc.values, enc.labels
        if stage.select_k is not None:
            from .feature_select import rank_features, select_top_k
            from .pipeline import _onehot_columns
            sel = select_top_k(
                rank_features(X, y, stage.bins, _onehot_columns(enc.column_names)),
                min(stage.select_k, X.shape[1]), stage.min_gain)
            X = X[:, list(sel.selected_indices)]
        shared = (X, y)

    def run_fold(i: int) -> Metrics:
        train_idx, test_idx = plan.train_test(i)
        fold_seed = child_seed(seed, "fold", i)
        try:
            if shared is None:
                pipe = fit_pipeline(spec, data, train_idx, stage, fold_seed)
                pred = pipe.predict(data.subset(test_idx))
            else:
                X, y = shared
                model = fit_model(spec, X[train_idx], y[train_idx], fold_seed)
                pred = _predict_model(spec, model, X[test_idx])
            truth = np.asarray(data.classes, dtype=np.int64)[test_idx]
            _, m = confusion_and_metrics(truth, pred, n_classes)
            return m
        except Exception as exc:
            exc.args = (f"fold {i}: {exc}",) + exc.args[1:]
            raise

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            fold_metrics = list(pool.map(run_fold, range(plan.k)))
    else:
        fold_metrics = [run_fold(i) for i in range(plan.k)]
    return _aggregate(fold_metrics)


def _predict_model(spec: ModelSpec, model, X: np.ndarray) -> np.ndarray:
    from . import baselines, encnn
    from .pipeline import to_grids
    if spec.name == "encnn":
        return encnn.predict(model, to_grids(X, model.config.grid_side))
    return baselines.predict_classifier(model, X)


# --- grid search ---------------------------------------------------------------

@dataclass
class GridSpec:
    axes: dict            # dotted ModelSpec field -> list of values
    model: ModelSpec = field(default_factory=ModelSpec)
    metric: str = "f1"
    cap: int = 64

    def combinations(self) -> list:
        names = list(self.axes)
        deduped = []
        for name in names:
            seen, vals = set(), []
            for v in self.axes[name]:
                key = repr(v)
                if key not in seen:
                    seen.add(key)
                    vals.append(v)
            deduped.append(vals)
        combos = [{}]
        for name, vals in zip(names, deduped):
            combos = [dict(c, **{name: v}) for c in combos for v in vals]
        return combos


def _apply_params(spec: ModelSpec, params: dict) -> ModelSpec:
    out = copy.deepcopy(spec)
    for dotted, value in params.items():
        obj = out
        parts = dotted.split(".")
        for part in parts[:-1]:
            if not hasattr(obj, part):
                raise UsageError(f"unknown grid axis {dotted!r} ({part!r} not found)")
            obj = getattr(obj, part)
        if not hasattr(obj, parts[-1]):
            raise UsageError(f"unknown grid axis {dotted!r} ({parts[-1]!r} not found)")
        setattr(obj, parts[-1], value)
    return out


def grid_search(grid: GridSpec, data: Dataset, plan: FoldPlan, stage: StageConfig,
                seed: int = 0, n_classes: int = 5, threads: int = 1):
    """Exhaustive inner-CV over the axes; returns (best params, score table).

    The best cell maximizes the selection metric; exact ties keep the
    earlier combination (axes in given order, values in given order).
    """
    if not grid.axes:
        raise UsageError("grid search needs at least one axis")
    combos = grid.combinations()
    if len(combos) > grid.cap:
        raise CapExceededError(f"{len(combos)} combinations exceed the cap of {grid.cap}")
    if grid.metric not in ("accuracy", "precision", "recall", "f1"):
        raise UsageError(f"unknown selection metric {grid.metric!r}")

    table = []
    best = None
    for cell, params in enumerate(combos):
        spec = _apply_params(grid.model, params)
        result = cross_validate(spec, data, plan, stage,
                                seed=child_seed(seed, "cell", cell),
                                n_classes=n_classes, threads=threads)
        table.append((params, result.mean))
        score = result.mean[grid.metric]
        if best is None or score > best[0]:
            best = (score, params)
    return best[1], table


def grid_table_to_csv(table: list, metric_keys=("accuracy", "precision", "recall", "f1")) -> str:
    axes = sorted({k for params, _ in table for k in params})
    header = axes + list(metric_keys)
    lines = [",".join(header)]
    for params, means in table:
        row = [repr(params.get(a, "")) for a in axes] + [repr(means[k]) for k in metric_keys]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


# --- stage comparison (the before/after-preprocessing report) -------------------

@dataclass
class ReportRow:
    model: str
    stage: str
    accuracy: float
    precision: float
    recall: float
    f1: float
    acc_std: float
    seconds: float
    confusion: np.ndarray | None = None


@dataclass
class ExperimentReport:
    rows: list
    mode: str   # e.g. "holdout-0.80" or "cv-10"
    seed: int

    def to_csv(self, timing: bool = True) -> str:
        lines = ["model,stage,accuracy,precision,recall,f1,acc_std,seconds"]
        for r in self.rows:
            secs = f"{r.seconds:.3f}" if timing else "0.000"
            lines.append(",".join([
                r.model, r.stage, repr(r.accuracy), repr(r.precision),
                repr(r.recall), repr(r.f1), repr(r.acc_std), secs]))
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        header = (f"{'model':<20} {'stage':<13} {'accuracy':>9} {'precision':>10} "
                  f"{'recall':>9} {'f1':>9} {'acc_std':>9}")
        lines = [f"evaluation mode: {self.mode} (seed {self.seed})", header,
                 "-" * len(header)]
        for r in self.rows:
            label = MODEL_LABELS.get(r.model, r.model)
            lines.append(f"{label:<20} {r.stage:<13} {r.accuracy:>9.4f} "
                         f"{r.precision:>10.4f} {r.recall:>9.4f} {r.f1:>9.4f} "
                         f"{r.acc_std:>9.4f}")
        return "\n".join(lines) + "\n"


def stage_pair(preprocessed: StageConfig):
    return (("raw", raw_stage()), ("preprocessed", preprocessed))


def compare_stages(specs: list, data: Dataset, preprocessed: StageConfig,
                   seed: int = 0, mode: str = "holdout", train_fraction: float = 0.8,
                   folds: int = 10, n_classes: int = 5, threads: int = 1) -> ExperimentReport:
    """Evaluate every model under both stages on identical splits."""
    labels = np.asarray(data.classes)
    if mode == "holdout":
        train_idx, test_idx = holdout_split(labels, train_fraction, seed)
        plan = None
        mode_name = f"holdout-{train_fraction:.2f}"
    elif mode == "cv":
        plan = stratified_kfold(labels, folds, seed)
        mode_name = f"cv-{folds}"
    else:
        raise UsageError(f"unknown evaluation mode {mode!r}")

    rows = []
    for spec in specs:
        for stage_name, stage in stage_pair(preprocessed):
            t0 = time.perf_counter()
            if mode == "holdout":
                pipe = fit_pipeline(spec, data, train_idx, stage,
                                    child_seed(seed, spec.name, stage_name))
                pred = pipe.predict(data.subset(test_idx))
                cm, m = confusion_and_metrics(labels[test_idx], pred, n_classes)
                acc_std = 0.0
            else:
                result = cross_validate(spec, data, plan, stage,
                                        seed=child_seed(seed, spec.name, stage_name),
                                        n_classes=n_classes, threads=threads)
                m = Metrics(accuracy=result.mean["accuracy"],
                            precision=result.mean["precision"],
                            recall=result.mean["recall"],
                            f1=result.mean["f1"], per_class=())
                cm = None
                acc_std = result.std["accuracy"]
            rows.append(ReportRow(model=spec.name, stage=stage_name,
                                  accuracy=m.accuracy, precision=m.precision,
                                  recall=m.recall, f1=m.f1, acc_std=acc_std,
                                  seconds=time.perf_counter() - t0, confusion=cm))
    return ExperimentReport(rows=rows, mode=mode_name, seed=seed)
