"""Flat `key = value` run configuration.

One schema drives everything: the file parser, the `--set key=value`
CLI overrides, the defaults, and the `--help` key listing, so the three
can never drift apart.  Unknown keys are hard errors naming the line;
the fully resolved configuration is logged on every run and recorded in
the run manifest.
"""

from dataclasses import replace

from . import baselines, encnn, feature_select, nn, pipeline, preprocess
from .errors import UsageError

# key -> (type tag, default, help)
# tags: int, float, bool, str, ints, strs, or a tuple of string choices
SCHEMA = {
    "data.path": ("str", "", "dataset file (default: $NIDS_DATA_DIR discovery)"),
    "preprocess.scaling_mode": (("minmax", "zscore"), "minmax", "feature scaling"),
    "preprocess.iqr_k": ("float", 1.5, "fence multiplier for outlier handling"),
    "preprocess.outlier_action": (("clip", "flag"), "clip", "clip to fences or only count"),
    "select.k": ("int", pipeline.DEFAULT_SELECT_K, "top-K features (0 disables selection)"),
    "select.min_gain": ("float", 0.0, "minimum gain threshold before top-K"),
    "select.bins": ("int", 10, "discretization bin count"),
    "select.strategy": (("equal_frequency", "equal_width"), "equal_frequency",
                        "discretization strategy"),
    "encnn.stage_filters": ("ints", [16, 32, 64], "filters per conv stage"),
    "encnn.pooling_modes": ("strs", ["stochastic", "stochastic", "stochastic"],
                            "per-stage pooling: max or stochastic"),
    "encnn.dense_units": ("ints", [512, 512], "hidden dense layer widths"),
    "encnn.dropout_rate": ("float", 0.5, "dropout rate on dense blocks"),
    "encnn.class_count": ("int", 5, "output classes (5-way or 2 for normal-vs-attack)"),
    "encnn.svm_head": ("bool", True, "refine decisions with the linear-SVM head"),
    "encnn.svm_lambda": ("float", 1e-4, "head L2 strength"),
    "encnn.svm_epochs": ("int", 5, "head training epochs"),
    "encnn.learning_rate": ("float", 0.01, "SGD learning rate"),
    "encnn.momentum": ("float", 0.9, "SGD momentum"),
    "encnn.batch_size": ("int", 128, "SGD minibatch size"),
    "encnn.epochs": ("int", 10, "SGD epochs"),
    "baseline.logreg_lr": ("float", 0.5, "logistic regression learning rate"),
    "baseline.logreg_epochs": ("int", 30, "logistic regression epochs"),
    "baseline.logreg_l2": ("float", 1e-4, "logistic regression L2"),
    "baseline.logreg_batch": ("int", 256, "logistic regression batch size"),
    "baseline.tree_max_depth": ("int", 12, "decision tree depth limit"),
    "baseline.tree_min_leaf": ("int", 5, "minimum rows per leaf"),
    "baseline.forest_trees": ("int", 50, "forest size"),
    "baseline.forest_bootstrap": ("bool", True, "bootstrap rows per tree"),
    "baseline.forest_feature_subsample": ("bool", True, "sqrt(d) candidates per split"),
    "baseline.ada_rounds": ("int", 50, "boosting rounds"),
    "baseline.svm_lambda": ("float", 1e-4, "linear SVM L2 strength"),
    "baseline.svm_epochs": ("int", 5, "linear SVM epochs"),
    "baseline.voting_members": ("strs", ["logreg", "tree", "svm", "forest", "adaboost"],
                                "voting ensemble members"),
    "baseline.voting_mode": (("hard", "soft"), "hard", "majority or averaged scores"),
    "eval.mode": (("holdout", "cv"), "holdout", "evaluation protocol"),
    "eval.folds": ("int", 10, "cross-validation folds"),
    "eval.train_fraction": ("float", 0.8, "holdout train share"),
    "eval.seed": ("int", 0, "run seed; every random draw derives from it"),
    "eval.threads": ("int", 0, "worker threads (0 = machine cores)"),
    "eval.timing": (("wall", "off"), "wall",
                    "report wall time, or zeros for byte-reproducible reports"),
    "sample.rows": ("int", 0, "stratified subsample size (0 = all rows)"),
    "sample.stratified": ("bool", True, "stratify the subsample"),
}


def _parse_value(key: str, raw: str, where: str):
    tag = SCHEMA[key][0]
    raw = raw.strip()
    try:
        if isinstance(tag, tuple):
            if raw not in tag:
                raise ValueError(f"must be one of {tag}")
            return raw
        if tag == "int":
            return int(raw)
        if tag == "float":
            return float(raw)
        if tag == "bool":
            low = raw.lower()
            if low in ("true", "on", "yes", "1"):
                return True
            if low in ("false", "off", "no", "0"):
                return False
            raise ValueError("must be true/false")
        if tag == "ints":
            return [int(v) for v in raw.split(",") if v.strip() != ""]
        if tag == "strs":
            return [v.strip() for v in raw.split(",") if v.strip() != ""]
        return raw
    except ValueError as exc:
        raise UsageError(f"{where}: bad value for {key!r}: {exc}") from None


class RunConfig:
    """Resolved configuration: defaults, then file entries, then overrides."""

    def __init__(self):
        self.values = {k: (list(d) if isinstance(d, list) else d)
                       for k, (_, d, _) in SCHEMA.items()}

    def __getitem__(self, key: str):
        return self.values[key]

    def load_file(self, path) -> None:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise UsageError(f"{path}:{lineno}: expected 'key = value'")
                key, value = (s.strip() for s in line.split("=", 1))
                if key not in SCHEMA:
                    raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
                self.values[key] = _parse_value(key, value, f"{path}:{lineno}")

    def set(self, key: str, value: str, where: str = "--set") -> None:
        if key not in SCHEMA:
            raise UsageError(f"{where}: unknown key {key!r}")
        self.values[key] = _parse_value(key, value, where)

    def resolved_lines(self) -> list:
        out = []
        for key in sorted(self.values):
            v = self.values[key]
            if isinstance(v, list):
                v = ",".join(str(x) for x in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            out.append(f"{key} = {v}")
        return out

    # --- builders -------------------------------------------------------

    def preprocess_config(self) -> preprocess.PreprocessConfig:
        return preprocess.PreprocessConfig(
            scaling_mode=self["preprocess.scaling_mode"],
            iqr_k=self["preprocess.iqr_k"],
            outlier_action=self["preprocess.outlier_action"])

    def stage_config(self) -> pipeline.StageConfig:
        k = self["select.k"]
        return pipeline.StageConfig(
            preprocess=self.preprocess_config(),
            select_k=None if k == 0 else k,
            min_gain=self["select.min_gain"],
            bins=feature_select.DiscretizationSpec(
                bin_count=self["select.bins"], strategy=self["select.strategy"]))

    def sgd_config(self) -> nn.SgdConfig:
        return nn.SgdConfig(learning_rate=self["encnn.learning_rate"],
                            momentum=self["encnn.momentum"],
                            batch_size=self["encnn.batch_size"],
                            epochs=self["encnn.epochs"],
                            seed=self["eval.seed"])

    def encnn_config(self) -> encnn.EnCnnConfig:
        return encnn.EnCnnConfig(
            stage_filters=tuple(self["encnn.stage_filters"]),
            pooling_modes=tuple(self["encnn.pooling_modes"]),
            dense_units=tuple(self["encnn.dense_units"]),
            dropout_rate=self["encnn.dropout_rate"],
            class_count=self["encnn.class_count"],
            svm_head=self["encnn.svm_head"],
            svm_lambda=self["encnn.svm_lambda"],
            svm_epochs=self["encnn.svm_epochs"],
            sgd=self.sgd_config())

    def baseline_config(self) -> baselines.BaselineConfig:
        return baselines.BaselineConfig(
            logreg_lr=self["baseline.logreg_lr"],
            logreg_epochs=self["baseline.logreg_epochs"],
            logreg_l2=self["baseline.logreg_l2"],
            logreg_batch=self["baseline.logreg_batch"],
            tree_max_depth=self["baseline.tree_max_depth"],
            tree_min_leaf=self["baseline.tree_min_leaf"],
            forest_trees=self["baseline.forest_trees"],
            forest_bootstrap=self["baseline.forest_bootstrap"],
            forest_feature_subsample=self["baseline.forest_feature_subsample"],
            ada_rounds=self["baseline.ada_rounds"],
            svm_lambda=self["baseline.svm_lambda"],
            svm_epochs=self["baseline.svm_epochs"],
            voting_members=tuple(self["baseline.voting_members"]),
            voting_mode=self["baseline.voting_mode"])

    def model_spec(self, name: str) -> pipeline.ModelSpec:
        try:
            return pipeline.ModelSpec(name=name, encnn=self.encnn_config(),
                                      baseline=self.baseline_config())
        except ValueError as exc:
            raise UsageError(str(exc)) from None


def help_epilog() -> str:
    lines = ["configuration keys (file `key = value` lines or --set key=value):"]
    for key, (tag, default, text) in SCHEMA.items():
        if isinstance(default, list):
            default = ",".join(str(v) for v in default)
        if isinstance(default, bool):
            default = "true" if default else "false"
        choice = f" {{{','.join(tag)}}}" if isinstance(tag, tuple) else ""
        lines.append(f"  {key}{choice} = {default}")
        lines.append(f"      {text}")
    return "\n".join(lines)
