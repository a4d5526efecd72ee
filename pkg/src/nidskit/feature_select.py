"""Filter-method feature ranking by information gain.

Each feature is scored by how many bits of class entropy it removes:
gain = H(class) - H(class | binned feature).  Continuous columns are
discretized first (equal-frequency by default; the bin count is
configurable), while one-hot or otherwise discrete columns use their
native values as bins.  The top-K features by gain are then selected and
laid out row-major on the smallest square grid that fits them, padding
the tail with zeros, which is the 2-D input format the convolutional
classifier consumes.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, EmptyInputError, LengthMismatchError


class KOutOfRangeError(DataError):
    pass


STRATEGIES = ("equal_frequency", "equal_width")


@dataclass(frozen=True)
class DiscretizationSpec:
    bin_count: int = 10
    strategy: str = "equal_frequency"

    def __post_init__(self):
        if self.bin_count < 1:
            raise ValueError("bin_count must be >= 1")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")


@dataclass(frozen=True)
class FeatureScore:
    feature_index: int
    gain_bits: float


@dataclass(frozen=True)
class SelectionResult:
    selected_indices: tuple  # ascending feature indices, len K
    grid_side: int           # s = ceil(sqrt(K))

    @property
    def k(self) -> int:
        return len(self.selected_indices)

    @property
    def pad_count(self) -> int:
        return self.grid_side**2 - self.k


def entropy(labels) -> float:
    """Shannon entropy of the label sequence, in bits."""
    y = np.asarray(labels)
    if y.size == 0:
        raise EmptyInputError("entropy of an empty label sequence")
    _, counts = np.unique(y, return_counts=True)
    p = counts / y.size
    return float(-(p * np.log2(p)).sum())


def bin_edges(feature: np.ndarray, spec: DiscretizationSpec) -> np.ndarray:
    """Strictly ascending interior cut points for the chosen strategy."""
    x = np.asarray(feature, dtype=np.float64)
    if x.size == 0:
        raise EmptyInputError("cannot discretize an empty column")
    if spec.strategy == "equal_frequency":
        probs = np.arange(1, spec.bin_count) / spec.bin_count
        edges = np.quantile(x, probs, method="linear") if probs.size else np.empty(0)
    else:
        lo, hi = float(x.min()), float(x.max())
        edges = np.linspace(lo, hi, spec.bin_count + 1)[1:-1]
    return np.unique(edges)


def discretize(feature: np.ndarray, spec: DiscretizationSpec) -> np.ndarray:
    """Assign each value the index of its bin (0-based)."""
    edges = bin_edges(feature, spec)
    return np.searchsorted(edges, np.asarray(feature, dtype=np.float64), side="right")


def _conditional_entropy(bins: np.ndarray, labels: np.ndarray) -> float:
    _, inv = np.unique(bins, return_inverse=True)
    _, y_inv = np.unique(labels, return_inverse=True)
    n_bins = int(inv.max()) + 1
    n_classes = int(y_inv.max()) + 1
    table = np.bincount(inv * n_classes + y_inv, minlength=n_bins * n_classes)
    table = table.reshape(n_bins, n_classes).astype(np.float64)
    n = labels.size
    h = 0.0
    for row in table:
        nv = row.sum()
        if nv == 0:
            continue
        p = row[row > 0] / nv
        h += (nv / n) * float(-(p * np.log2(p)).sum())
    return h


def info_gain(feature, labels, spec: DiscretizationSpec,
              feature_index: int = 0, discrete: bool = False) -> FeatureScore:
    """Entropy reduction the (binned) feature provides about the class.

    ``discrete`` skips binning and uses the native values directly, which
    is what one-hot and other already-discrete columns want.
    """
    x = np.asarray(feature, dtype=np.float64)
    y = np.asarray(labels)
    if x.size == 0 or y.size == 0:
        raise EmptyInputError("info gain needs non-empty feature and labels")
    if x.size != y.size:
        raise LengthMismatchError(f"feature has {x.size} rows, labels {y.size}")
    bins = x if discrete else discretize(x, spec)
    gain = entropy(y) - _conditional_entropy(bins, y)
    return FeatureScore(feature_index=feature_index, gain_bits=max(gain, 0.0))


def rank_features(matrix: np.ndarray, labels, spec: DiscretizationSpec,
                  discrete_columns=()) -> list[FeatureScore]:
    """Score every column of an encoded matrix (deterministic order)."""
    X = np.asarray(matrix, dtype=np.float64)
    discrete = set(discrete_columns)
    return [info_gain(X[:, j], labels, spec, feature_index=j, discrete=j in discrete)
            for j in range(X.shape[1])]


def select_top_k(scores, k: int, min_gain: float = 0.0) -> SelectionResult:
    """Keep the k highest-gain features (ties: lower index wins).

    ``min_gain`` drops features below the threshold before the top-K cut;
    if fewer than k survive, all survivors are kept.
    """
    scores = list(scores)
    if not 1 <= k <= len(scores):
        raise KOutOfRangeError(f"k must be in [1, {len(scores)}], got {k}")
    eligible = [s for s in scores if s.gain_bits >= min_gain] if min_gain > 0.0 else scores
    if not eligible:
        raise KOutOfRangeError(f"min_gain={min_gain} eliminates every feature")
    ranked = sorted(eligible, key=lambda s: (-s.gain_bits, s.feature_index))
    chosen = sorted(s.feature_index for s in ranked[:min(k, len(ranked))])
    side = math.isqrt(len(chosen))
    if side * side < len(chosen):
        side += 1
    return SelectionResult(selected_indices=tuple(chosen), grid_side=side)


def embed_grid(row, result: SelectionResult) -> np.ndarray:
    """Place a selected-feature vector row-major on the s x s grid."""
    v = np.asarray(row, dtype=np.float64).ravel()
    if v.size != result.k:
        raise LengthMismatchError(f"expected {result.k} values, got {v.size}")
    grid = np.zeros(result.grid_side**2, dtype=np.float64)
    grid[:v.size] = v
    return grid.reshape(result.grid_side, result.grid_side)


def embed_rows(matrix: np.ndarray, result: SelectionResult) -> np.ndarray:
    """Batched embed_grid: (n, K) -> (n, 1, s, s) single-channel stack."""
    X = np.asarray(matrix, dtype=np.float64)
    if X.shape[1] != result.k:
        raise LengthMismatchError(f"expected {result.k} columns, got {X.shape[1]}")
    s = result.grid_side
    out = np.zeros((X.shape[0], s * s), dtype=np.float64)
    out[:, :X.shape[1]] = X
    return out.reshape(X.shape[0], 1, s, s)


def scores_to_csv(scores, column_names=None) -> str:
    """CSV export, descending by gain (ties by index)."""
    lines = ["feature_index,feature_name,gain_bits"]
    for s in sorted(scores, key=lambda s: (-s.gain_bits, s.feature_index)):
        name = column_names[s.feature_index] if column_names else f"f{s.feature_index}"
        lines.append(f"{s.feature_index},{name},{s.gain_bits!r}")
    return "\n".join(lines) + "\n"
