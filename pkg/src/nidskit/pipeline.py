"""Stage encoding and a uniform fit/predict wrapper over every model.

A *stage* is one preprocessing recipe: the ``raw`` stage one-hot encodes
and min-max scales only (outliers merely counted, no feature selection),
while the ``preprocessed`` stage adds fence clipping and information-gain
top-K selection.  ``fit_pipeline`` fits the stage's plan and selection on
the training rows only, trains the requested model (the CNN or any
baseline), and returns a self-contained object that encodes and predicts
new datasets and round-trips through one model file.
"""

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import baselines, encnn, model_io
from .baselines import BaselineConfig
from .encnn import EnCnnConfig
from .errors import DataError
from .feature_select import (DiscretizationSpec, SelectionResult,
                             rank_features, select_top_k)
from .kdd_data import Dataset
from .preprocess import (PreprocessConfig, PreprocessPlan, apply_plan,
                         fit_plan, plan_from_text, plan_to_text)
from .rng import child_seed

MODEL_NAMES = ("encnn",) + baselines.KINDS

MODEL_LABELS = dict(baselines.KIND_LABELS, encnn="EnCNN")

# select_k=110 keeps the selected width on an 11x11 grid (121 cells, 11
# of them zero padding) after one-hot encoding the benchmark schema
DEFAULT_SELECT_K = 110


@dataclass(frozen=True)
class StageConfig:
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    select_k: int | None = DEFAULT_SELECT_K
    min_gain: float = 0.0
    bins: DiscretizationSpec = field(default_factory=DiscretizationSpec)


def raw_stage() -> StageConfig:
    """One-hot + min-max only: outliers counted but untouched, no selection."""
    return StageConfig(preprocess=PreprocessConfig(scaling_mode="minmax",
                                                   outlier_action="flag"),
                       select_k=None)


@dataclass
class ModelSpec:
    name: str = "encnn"
    encnn: EnCnnConfig = field(default_factory=EnCnnConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)

    def __post_init__(self):
        if self.name not in MODEL_NAMES:
            raise ValueError(f"unknown model {self.name!r}; choose from {MODEL_NAMES}")


def _onehot_columns(column_names) -> list:
    return [j for j, name in enumerate(column_names) if "=" in name]


def grid_side_for(width: int) -> int:
    """Smallest grid side fitting ``width`` cells, floored at the CNN minimum of 8."""
    side = math.isqrt(width)
    if side * side < width:
        side += 1
    return max(8, side)


def to_grids(X: np.ndarray, side: int) -> np.ndarray:
    """Row-major embed each row on a zero-padded (1, side, side) grid."""
    if X.shape[1] > side * side:
        raise DataError(f"{X.shape[1]} features do not fit a {side}x{side} grid")
    out = np.zeros((X.shape[0], side * side), dtype=np.float64)
    out[:, :X.shape[1]] = X
    return out.reshape(X.shape[0], 1, side, side)


class FittedPipeline:
    """A fitted stage (plan + selection) plus a trained model."""

    def __init__(self, spec: ModelSpec, stage: StageConfig, plan: PreprocessPlan,
                 selection: SelectionResult | None, model, column_names: list):
        self.spec = spec
        self.stage = stage
        self.plan = plan
        self.selection = selection
        self.model = model
        self.column_names = column_names

    def encode(self, data: Dataset) -> np.ndarray:
        enc = apply_plan(self.plan, data)
        X = enc.values
        if self.selection is not None:
            X = X[:, list(self.selection.selected_indices)]
        return X

    def predict_matrix(self, X: np.ndarray) -> np.ndarray:
        if self.spec.name == "encnn":
            return encnn.predict(self.model, to_grids(X, self.model.config.grid_side))
        return baselines.predict_classifier(self.model, X)

    def predict(self, data: Dataset) -> np.ndarray:
        return self.predict_matrix(self.encode(data))


def fit_pipeline(spec: ModelSpec, data: Dataset, train_idx, stage: StageConfig,
                 seed: int) -> FittedPipeline:
    """Fit plan, selection, and model on the given training rows only."""
    train = data.subset(train_idx)
    plan = fit_plan(train, stage.preprocess)
    enc = apply_plan(plan, train)
    X, names = enc.values, enc.column_names

    selection = None
    if stage.select_k is not None:
        k = min(stage.select_k, X.shape[1])
        scores = rank_features(X, enc.labels, stage.bins,
                               discrete_columns=_onehot_columns(names))
        selection = select_top_k(scores, k, min_gain=stage.min_gain)
        X = X[:, list(selection.selected_indices)]

    model = fit_model(spec, X, enc.labels, seed)
    return FittedPipeline(spec, stage, plan, selection, model, names)


def fit_model(spec: ModelSpec, X: np.ndarray, y: np.ndarray, seed: int):
    """Train the requested model on an encoded matrix."""
    if spec.name == "encnn":
        side = max(spec.encnn.grid_side, grid_side_for(X.shape[1]))
        cfg = replace(spec.encnn, grid_side=side,
                      sgd=replace(spec.encnn.sgd, seed=child_seed(seed, "sgd")))
        model = encnn.build_model(cfg)
        grids = to_grids(X, side)
        encnn.train_model(model, grids, y)
        if cfg.svm_head:
            encnn.fit_svm_head(model, grids, y)
        return model
    return baselines.fit_classifier(spec.name, X, y, spec.baseline,
                                    seed=child_seed(seed, spec.name))


# --- persistence: one self-contained artifact per trained pipeline ----------

def save_pipeline(pipe: FittedPipeline, path) -> None:
    if pipe.spec.name == "encnn":
        model_bytes = encnn.model_to_bytes(pipe.model)
    else:
        model_bytes = baselines.classifier_to_bytes(pipe.model)
    config = {
        "model": pipe.spec.name,
        "stage": {
            "scaling_mode": pipe.stage.preprocess.scaling_mode,
            "iqr_k": pipe.stage.preprocess.iqr_k,
            "outlier_action": pipe.stage.preprocess.outlier_action,
            "select_k": pipe.stage.select_k,
            "min_gain": pipe.stage.min_gain,
            "bins": asdict(pipe.stage.bins),
        },
        "column_names": pipe.column_names,
        "selection": {
            "indices": list(pipe.selection.selected_indices),
            "grid_side": pipe.selection.grid_side,
        } if pipe.selection else None,
        "baseline_config": asdict(pipe.spec.baseline),
    }
    model_io.save(path, "pipeline", config,
                  [("model", model_bytes), ("plan", plan_to_text(pipe.plan).encode("utf-8"))])


def load_pipeline(path) -> FittedPipeline:
    kind, config, blocks = model_io.load(path)
    if kind != "pipeline":
        raise DataError(f"expected a pipeline container, found kind {kind!r}")
    named = dict(blocks)
    plan = plan_from_text(named["plan"].decode("utf-8"), source=f"{path}#plan")

    s = config["stage"]
    stage = StageConfig(
        preprocess=PreprocessConfig(scaling_mode=s["scaling_mode"], iqr_k=s["iqr_k"],
                                    outlier_action=s["outlier_action"]),
        select_k=s["select_k"], min_gain=s["min_gain"],
        bins=DiscretizationSpec(**s["bins"]))

    selection = None
    if config["selection"]:
        selection = SelectionResult(
            selected_indices=tuple(config["selection"]["indices"]),
            grid_side=config["selection"]["grid_side"])

    baseline_cfg = baselines.BaselineConfig(**config["baseline_config"])
    name = config["model"]
    if name == "encnn":
        model = encnn.model_from_bytes(named["model"])
        spec = ModelSpec(name="encnn", encnn=model.config, baseline=baseline_cfg)
    else:
        model = baselines.classifier_from_bytes(named["model"])
        spec = ModelSpec(name=name, baseline=model.config)
    return FittedPipeline(spec, stage, plan, selection, model, config["column_names"])
