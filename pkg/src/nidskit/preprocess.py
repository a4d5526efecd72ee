"""Fit-then-apply tabular preprocessing.

``fit_plan`` learns everything from training rows only: per-numeric-column
statistics (median for imputation, interquartile fences for outlier
handling, min/max/mean/std for scaling) and per-symbolic-column sorted
vocabularies (for one-hot encoding) plus modes (for imputation).
``apply_plan`` then deterministically encodes any dataset with the same
schema into a dense numeric matrix:

    impute -> fence-handle outliers -> one-hot encode -> scale

Scaling statistics are computed after imputation and fence clipping, so
re-encoding the training rows reproduces the plan's min/max exactly and
min-max outputs of training columns always land in [0, 1].

Plans serialize to a commented ``column.stat = value`` text file so any
run can be audited and replayed.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .kdd_data import CATEGORICAL_NAMES, COLUMN_NAMES, NUMERIC_NAMES, Dataset

SCALING_MODES = ("minmax", "zscore")
OUTLIER_ACTIONS = ("clip", "flag")


class EmptyDatasetError(DataError):
    pass


class EmptyColumnError(DataError):
    pass


class SchemaMismatchError(DataError):
    pass


class PlanFormatError(DataError):
    """A plan file is malformed or from an unsupported version."""


@dataclass(frozen=True)
class PreprocessConfig:
    scaling_mode: str = "minmax"
    iqr_k: float = 1.5
    outlier_action: str = "clip"

    def __post_init__(self):
        if self.scaling_mode not in SCALING_MODES:
            raise ValueError(f"scaling_mode must be one of {SCALING_MODES}")
        if self.outlier_action not in OUTLIER_ACTIONS:
            raise ValueError(f"outlier_action must be one of {OUTLIER_ACTIONS}")
        if not self.iqr_k > 0:
            raise ValueError("iqr_k must be positive")


def quantile(column: np.ndarray, p: float) -> float:
    """Linear-interpolation quantile of the order statistics, h = (n-1)p."""
    x = np.sort(np.asarray(column, dtype=np.float64))
    if x.size == 0:
        raise EmptyColumnError("quantile of an empty column")
    h = (x.size - 1) * p
    lo = math.floor(h)
    hi = min(lo + 1, x.size - 1)
    return float(x[lo] + (h - lo) * (x[hi] - x[lo]))


def iqr_fences(column, k: float) -> tuple[float, float]:
    """(Q1 - k*IQR, Q3 + k*IQR) over the column; lower <= upper."""
    x = np.asarray(column, dtype=np.float64)
    if x.size == 0:
        raise EmptyColumnError("fences of an empty column")
    q1 = quantile(x, 0.25)
    q3 = quantile(x, 0.75)
    iqr = q3 - q1
    return q1 - k * iqr, q3 + k * iqr


@dataclass(frozen=True)
class ColumnStats:
    """Fitted statistics of one numeric column.

    min/max/mean/std describe the column after imputation and (when the
    plan clips) after fence clipping; they are the scaling parameters.
    median/q1/q3/fences come from the raw non-missing training values.
    """

    min: float
    max: float
    mean: float
    std: float
    median: float
    q1: float
    q3: float
    lo_fence: float
    hi_fence: float


@dataclass(frozen=True)
class CategoryStats:
    vocab: tuple
    mode: str


@dataclass
class PreprocessPlan:
    config: PreprocessConfig
    n_rows: int
    numeric: dict = field(default_factory=dict)      # name -> ColumnStats
    categorical: dict = field(default_factory=dict)  # name -> CategoryStats


def fit_plan(train: Dataset, config: PreprocessConfig) -> PreprocessPlan:
    """Learn imputation, fence, vocabulary, and scaling statistics."""
    if len(train) == 0:
        raise EmptyDatasetError("cannot fit a preprocessing plan on an empty dataset")
    plan = PreprocessPlan(config=config, n_rows=len(train))

    for j, name in enumerate(NUMERIC_NAMES):
        col = train.numeric[:, j]
        observed = col[~np.isnan(col)]
        if observed.size == 0:
            # a fully-missing training column carries no information;
            # treat it as constant zero
            observed = np.zeros(1)
        med = quantile(observed, 0.5)
        lo, hi = iqr_fences(observed, config.iqr_k)
        work = np.where(np.isnan(col), med, col)
        if config.outlier_action == "clip":
            work = np.clip(work, lo, hi)
        plan.numeric[name] = ColumnStats(
            min=float(work.min()), max=float(work.max()),
            mean=float(work.mean()), std=float(work.std()),
            median=med, q1=quantile(observed, 0.25), q3=quantile(observed, 0.75),
            lo_fence=lo, hi_fence=hi)

    for name in CATEGORICAL_NAMES:
        values = [v for v in train.categorical[name] if v != ""]
        if not values:
            plan.categorical[name] = CategoryStats(vocab=(), mode="")
            continue
        uniq, counts = np.unique(np.asarray(values, dtype=object), return_counts=True)
        mode = str(min(uniq[counts == counts.max()]))  # ties -> lexicographic
        plan.categorical[name] = CategoryStats(vocab=tuple(str(u) for u in uniq), mode=mode)

    return plan


@dataclass
class EncodedMatrix:
    """Dense numeric encoding of a dataset: n_rows x d_features."""

    values: np.ndarray
    labels: np.ndarray
    column_names: list
    outlier_cells: int = 0  # numeric cells outside the fitted fences

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]


def _scale(column: np.ndarray, stats: ColumnStats, mode: str) -> np.ndarray:
    if mode == "minmax":
        span = stats.max - stats.min
        if span == 0.0:
            return np.zeros_like(column)
        return (column - stats.min) / span
    if stats.std == 0.0:
        return np.zeros_like(column)
    return (column - stats.mean) / stats.std


def apply_plan(plan: PreprocessPlan, data: Dataset) -> EncodedMatrix:
    """Encode any same-schema dataset with a fitted plan.

    Missing numerics take the training median, missing symbols the
    training mode; out-of-fence numerics are clipped (action ``clip``) or
    only counted (action ``flag``); symbols one-hot encode against the
    training vocabulary with unseen values as an all-zero block.
    """
    missing = set(NUMERIC_NAMES) - set(plan.numeric) | set(CATEGORICAL_NAMES) - set(plan.categorical)
    if missing:
        raise SchemaMismatchError(f"plan lacks statistics for columns: {sorted(missing)}")

    n = len(data)
    blocks, names = [], []
    outliers = 0
    for file_col in COLUMN_NAMES:
        if file_col in CATEGORICAL_NAMES:
            stats = plan.categorical[file_col]
            arr = np.asarray(data.categorical[file_col], dtype=object)
            if n:
                arr = np.where(arr == "", stats.mode, arr)
            block = np.zeros((n, len(stats.vocab)), dtype=np.float64)
            if stats.vocab and n:
                vocab = np.asarray(stats.vocab, dtype=object)  # sorted by construction
                pos = np.searchsorted(vocab, arr)
                pos_c = np.minimum(pos, len(vocab) - 1)
                seen = vocab[pos_c] == arr  # unseen values stay an all-zero block
                block[np.nonzero(seen)[0], pos_c[seen]] = 1.0
            blocks.append(block)
            names.extend(f"{file_col}={v}" for v in stats.vocab)
        else:
            j = NUMERIC_NAMES.index(file_col)
            stats = plan.numeric[file_col]
            col = data.numeric[:, j]
            col = np.where(np.isnan(col), stats.median, col)
            out_mask = (col < stats.lo_fence) | (col > stats.hi_fence)
            outliers += int(out_mask.sum())
            if plan.config.outlier_action == "clip":
                col = np.clip(col, stats.lo_fence, stats.hi_fence)
            blocks.append(_scale(col, stats, plan.config.scaling_mode)[:, None])
            names.append(file_col)

    values = np.hstack(blocks) if blocks else np.empty((n, 0))
    return EncodedMatrix(values=values, labels=np.asarray(data.classes, dtype=np.int64),
                         column_names=names, outlier_cells=outliers)


# --- plan (de)serialization: flat `key = value` text, '#' comments ---

def plan_to_text(plan: PreprocessPlan) -> str:
    lines = [
        "# preprocessing plan (fitted on training rows only)",
        "format = 1",
        f"n_rows = {plan.n_rows}",
        f"scaling_mode = {plan.config.scaling_mode}",
        f"iqr_k = {plan.config.iqr_k!r}",
        f"outlier_action = {plan.config.outlier_action}",
    ]
    for name, s in plan.numeric.items():
        for stat in ("min", "max", "mean", "std", "median", "q1", "q3", "lo_fence", "hi_fence"):
            lines.append(f"{name}.{stat} = {getattr(s, stat)!r}")
    for name, s in plan.categorical.items():
        lines.append(f"{name}.vocab = {','.join(s.vocab)}")
        lines.append(f"{name}.mode = {s.mode}")
    return "\n".join(lines) + "\n"


def save_plan(plan: PreprocessPlan, path) -> None:
    from .model_io import atomic_write
    atomic_write(path, plan_to_text(plan).encode("utf-8"))


def plan_from_text(text: str, source: str = "<plan>") -> PreprocessPlan:
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise PlanFormatError(f"{source}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        entries[key.strip()] = value.strip()
    if entries.get("format") != "1":
        raise PlanFormatError(f"{source}: unsupported plan format {entries.get('format')!r}")
    try:
        config = PreprocessConfig(
            scaling_mode=entries["scaling_mode"],
            iqr_k=float(entries["iqr_k"]),
            outlier_action=entries["outlier_action"])
        plan = PreprocessPlan(config=config, n_rows=int(entries["n_rows"]))
        for name in NUMERIC_NAMES:
            plan.numeric[name] = ColumnStats(
                **{stat: float(entries[f"{name}.{stat}"])
                   for stat in ("min", "max", "mean", "std", "median",
                                "q1", "q3", "lo_fence", "hi_fence")})
        for name in CATEGORICAL_NAMES:
            vocab = tuple(v for v in entries[f"{name}.vocab"].split(",") if v)
            plan.categorical[name] = CategoryStats(vocab=vocab, mode=entries[f"{name}.mode"])
    except KeyError as exc:
        raise PlanFormatError(f"{source}: missing entry {exc}") from None
    return plan


def load_plan(path) -> PreprocessPlan:
    with open(path, "r", encoding="utf-8") as fh:
        return plan_from_text(fh.read(), source=str(path))
