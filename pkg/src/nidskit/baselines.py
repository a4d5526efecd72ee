"""Six classical classifiers behind one fit/predict contract.

All are implemented here directly on numpy: multinomial logistic
regression, a CART-style decision tree (Gini impurity, midpoint
thresholds), a bagged random forest with per-split feature subsampling,
multi-class AdaBoost over depth-1 stumps, a one-vs-rest linear SVM, and
a voting ensemble over the other five.  Fits are deterministic given the
seed; every prediction tie resolves to the lowest class code.
"""

from dataclasses import dataclass, field, asdict

import numpy as np

from . import model_io
from .errors import DataError
from .rng import child_seed, stream
from .svm import SingleClassError, fit_ovr_hinge, ovr_scores

KINDS = ("logreg", "tree", "svm", "forest", "adaboost", "voting")

KIND_LABELS = {
    "logreg": "Logistic Regression",
    "tree": "Decision Tree",
    "svm": "Linear SVM",
    "forest": "Random Forest",
    "adaboost": "AdaBoost",
    "voting": "Voting Ensemble",
}


class NonFiniteFeatureError(DataError):
    pass


class DimensionMismatchError(DataError):
    pass


@dataclass
class BaselineConfig:
    logreg_lr: float = 0.5
    logreg_epochs: int = 30
    logreg_l2: float = 1e-4
    logreg_batch: int = 256
    tree_max_depth: int = 12
    tree_min_leaf: int = 5
    forest_trees: int = 50
    forest_bootstrap: bool = True
    forest_feature_subsample: bool = True  # sqrt(d) candidates per split
    ada_rounds: int = 50
    svm_lambda: float = 1e-4
    svm_epochs: int = 5
    voting_members: tuple = ("logreg", "tree", "svm", "forest", "adaboost")
    voting_mode: str = "hard"  # or "soft": average member class scores

    def __post_init__(self):
        self.voting_members = tuple(self.voting_members)
        if any(m not in KINDS or m == "voting" for m in self.voting_members):
            raise ValueError("voting members must be non-voting classifier kinds")
        if self.voting_mode not in ("hard", "soft"):
            raise ValueError("voting_mode must be 'hard' or 'soft'")


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _argmax_lowest(scores: np.ndarray) -> np.ndarray:
    return scores.argmax(axis=1)  # argmax already takes the first (lowest) index


# --- multinomial logistic regression -------------------------------------

class _LogReg:
    def __init__(self, W, b):
        self.W = W
        self.b = b

    @classmethod
    def fit(cls, X, y, n_classes, config: BaselineConfig, seed):
        n, d = X.shape
        W = np.zeros((n_classes, d))
        b = np.zeros(n_classes)
        onehot = np.zeros((n, n_classes))
        onehot[np.arange(n), y] = 1.0
        for epoch in range(config.logreg_epochs):
            order = stream(seed, "logreg", epoch).permutation(n)
            for start in range(0, n, config.logreg_batch):
                rows = order[start:start + config.logreg_batch]
                p = _softmax_rows(X[rows] @ W.T + b)
                g = (p - onehot[rows]) / rows.size
                W -= config.logreg_lr * (g.T @ X[rows] + config.logreg_l2 * W)
                b -= config.logreg_lr * g.sum(axis=0)
        return cls(W, b)

    def scores(self, X):
        return _softmax_rows(X @ self.W.T + self.b)

    def predict(self, X):
        return _argmax_lowest(X @ self.W.T + self.b)

    def to_blocks(self, prefix=""):
        return [(prefix + "W", self.W), (prefix + "b", self.b)]

    @classmethod
    def from_blocks(cls, blocks, prefix=""):
        return cls(blocks[prefix + "W"], blocks[prefix + "b"])


# --- CART decision tree ----------------------------------------------------

class _Tree:
    """Array-encoded binary tree; feature == -1 marks a leaf."""

    def __init__(self, feature, threshold, left, right, leaf_class, leaf_dist):
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right
        self.leaf_class = leaf_class
        self.leaf_dist = leaf_dist

    @classmethod
    def fit(cls, X, y, n_classes, max_depth, min_leaf, *, sample_weight=None,
            feature_candidates=None, rng=None):
        n = X.shape[0]
        w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
        feature, threshold, left, right = [], [], [], []
        leaf_class, leaf_dist = [], []

        def add_node():
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            leaf_class.append(0)
            leaf_dist.append(np.zeros(n_classes))
            return len(feature) - 1

        stack = [(add_node(), np.arange(n), 0)]
        while stack:
            node, idx, depth = stack.pop()
            yw = np.zeros(n_classes)
            np.add.at(yw, y[idx], w[idx])
            leaf_dist[node] = yw / yw.sum() if yw.sum() > 0 else yw
            leaf_class[node] = int(yw.argmax())
            if depth >= max_depth or idx.size < 2 * min_leaf or (yw > 0).sum() <= 1:
                continue
            split = cls._best_split(X, y, w, idx, n_classes, min_leaf,
                                    feature_candidates, rng)
            if split is None:
                continue
            f, thr, left_mask = split
            feature[node] = f
            threshold[node] = thr
            li, ri = idx[left_mask], idx[~left_mask]
            lnode, rnode = add_node(), add_node()
            left[node], right[node] = lnode, rnode
            stack.append((rnode, ri, depth + 1))
            stack.append((lnode, li, depth + 1))

        return cls(np.asarray(feature, dtype=np.int64),
                   np.asarray(threshold, dtype=np.float64),
                   np.asarray(left, dtype=np.int64),
                   np.asarray(right, dtype=np.int64),
                   np.asarray(leaf_class, dtype=np.int64),
                   np.asarray(leaf_dist, dtype=np.float64))

    @staticmethod
    def _best_split(X, y, w, idx, n_classes, min_leaf, feature_candidates, rng):
        d = X.shape[1]
        if feature_candidates is not None and feature_candidates < d:
            feats = np.sort(rng.choice(d, size=feature_candidates, replace=False))
        else:
            feats = np.arange(d)
        n = idx.size
        onehot_w = np.zeros((n, n_classes))
        onehot_w[np.arange(n), y[idx]] = w[idx]
        total = onehot_w.sum(axis=0)
        total_w = total.sum()

        best = None  # (gain_proxy, feature, threshold, order, boundary)
        for f in feats:
            col = X[idx, f]
            order = np.argsort(col, kind="stable")
            xs = col[order]
            cum = onehot_w[order].cumsum(axis=0)
            # boundary i splits off the first i sorted rows; require a
            # strict value change and min_leaf rows on each side
            cand = np.nonzero(xs[:-1] < xs[1:])[0] + 1
            cand = cand[(cand >= min_leaf) & (cand <= n - min_leaf)]
            if cand.size == 0:
                continue
            lc = cum[cand - 1]
            lw = lc.sum(axis=1)
            rc = total - lc
            rw = total_w - lw
            # maximizing sum(lc^2)/lw + sum(rc^2)/rw minimizes the weighted
            # Gini of the split; zero-gain splits are allowed, as in CART
            score = (lc ** 2).sum(axis=1) / lw + (rc ** 2).sum(axis=1) / rw
            j = int(score.argmax())  # first max -> lowest threshold
            if best is None or score[j] > best[0]:
                i = int(cand[j])
                a, bval = xs[i - 1], xs[i]
                mid = 0.5 * (a + bval)
                thr = mid if a < mid < bval else a
                best = (float(score[j]), int(f), float(thr), order, i)
        if best is None:
            return None
        _, f, thr, order, i = best
        left_mask = np.zeros(n, dtype=bool)
        left_mask[order[:i]] = True
        return f, thr, left_mask

    def _route(self, X):
        node = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            feat = self.feature[node]
            internal = feat >= 0
            if not internal.any():
                return node
            rows = np.nonzero(internal)[0]
            cur = node[rows]
            goleft = X[rows, feat[rows]] <= self.threshold[cur]
            node[rows] = np.where(goleft, self.left[cur], self.right[cur])

    def predict(self, X):
        return self.leaf_class[self._route(X)]

    def scores(self, X):
        return self.leaf_dist[self._route(X)]

    def to_blocks(self, prefix=""):
        return [(prefix + "feature", self.feature), (prefix + "threshold", self.threshold),
                (prefix + "left", self.left), (prefix + "right", self.right),
                (prefix + "leaf_class", self.leaf_class), (prefix + "leaf_dist", self.leaf_dist)]

    @classmethod
    def from_blocks(cls, blocks, prefix=""):
        return cls(*(blocks[prefix + k] for k in
                     ("feature", "threshold", "left", "right", "leaf_class", "leaf_dist")))


# --- bagged forest ---------------------------------------------------------

class _Forest:
    def __init__(self, trees, n_classes):
        self.trees = trees
        self.n_classes = n_classes

    @classmethod
    def fit(cls, X, y, n_classes, config: BaselineConfig, seed):
        n, d = X.shape
        m = max(1, int(np.sqrt(d))) if config.forest_feature_subsample else None
        trees = []
        for t in range(config.forest_trees):
            rng = stream(seed, "tree", t)
            idx = rng.integers(0, n, size=n) if config.forest_bootstrap else np.arange(n)
            trees.append(_Tree.fit(X[idx], y[idx], n_classes,
                                   config.tree_max_depth, config.tree_min_leaf,
                                   feature_candidates=m, rng=rng))
        return cls(trees, n_classes)

    def _votes(self, X):
        votes = np.zeros((X.shape[0], self.n_classes))
        for tree in self.trees:
            votes[np.arange(X.shape[0]), tree.predict(X)] += 1.0
        return votes

    def predict(self, X):
        return _argmax_lowest(self._votes(X))

    def scores(self, X):
        return self._votes(X) / len(self.trees)

    def to_blocks(self, prefix=""):
        out = []
        for i, tree in enumerate(self.trees):
            out.extend(tree.to_blocks(f"{prefix}tree{i}."))
        return out

    @classmethod
    def from_blocks(cls, blocks, n_trees, n_classes, prefix=""):
        trees = [_Tree.from_blocks(blocks, f"{prefix}tree{i}.") for i in range(n_trees)]
        return cls(trees, n_classes)


# --- multi-class AdaBoost (stagewise-additive weighting) --------------------

class _AdaBoost:
    def __init__(self, stumps, alphas, n_classes, fallback_class=0):
        self.stumps = stumps
        self.alphas = alphas
        self.n_classes = n_classes
        self.fallback_class = fallback_class

    @classmethod
    def fit(cls, X, y, n_classes, config: BaselineConfig, seed):
        n = X.shape[0]
        w = np.full(n, 1.0 / n)
        stumps, alphas = [], []
        for _ in range(config.ada_rounds):
            stump = _Tree.fit(X, y, n_classes, max_depth=1, min_leaf=1, sample_weight=w)
            pred = stump.predict(X)
            miss = pred != y
            eps = float(w[miss].sum())
            if eps >= (n_classes - 1) / n_classes:
                break  # weak learner no better than chance: reject and stop
            eps = max(eps, 1e-16)
            alpha = np.log((1.0 - eps) / eps) + np.log(n_classes - 1.0)
            stumps.append(stump)
            alphas.append(alpha)
            if not miss.any():
                break  # perfect stump; reweighting would be a no-op
            w = w * np.exp(alpha * miss)
            w /= w.sum()
        counts = np.bincount(y, minlength=n_classes)
        return cls(stumps, np.asarray(alphas), n_classes, fallback_class=int(counts.argmax()))

    def scores(self, X):
        s = np.zeros((X.shape[0], self.n_classes))
        for stump, alpha in zip(self.stumps, self.alphas):
            s[np.arange(X.shape[0]), stump.predict(X)] += alpha
        if not self.stumps:
            s[:, self.fallback_class] = 1.0
        return s

    def predict(self, X):
        return _argmax_lowest(self.scores(X))

    def to_blocks(self, prefix=""):
        out = [(prefix + "alphas", self.alphas),
               (prefix + "fallback", np.asarray([self.fallback_class]))]
        for i, stump in enumerate(self.stumps):
            out.extend(stump.to_blocks(f"{prefix}stump{i}."))
        return out

    @classmethod
    def from_blocks(cls, blocks, n_stumps, n_classes, prefix=""):
        stumps = [_Tree.from_blocks(blocks, f"{prefix}stump{i}.") for i in range(n_stumps)]
        return cls(stumps, blocks[prefix + "alphas"], n_classes,
                   fallback_class=int(blocks[prefix + "fallback"][0]))


# --- one-vs-rest linear SVM --------------------------------------------------

class _LinearSvm:
    def __init__(self, W, b):
        self.W = W
        self.b = b

    @classmethod
    def fit(cls, X, y, n_classes, config: BaselineConfig, seed):
        W, b = fit_ovr_hinge(X, y, n_classes, lam=config.svm_lambda,
                             epochs=config.svm_epochs, seed=seed)
        return cls(W, b)

    def scores(self, X):
        return _softmax_rows(ovr_scores(X, self.W, self.b))

    def predict(self, X):
        return _argmax_lowest(ovr_scores(X, self.W, self.b))

    def to_blocks(self, prefix=""):
        return [(prefix + "W", self.W), (prefix + "b", self.b)]

    @classmethod
    def from_blocks(cls, blocks, prefix=""):
        return cls(blocks[prefix + "W"], blocks[prefix + "b"])


# --- voting ensemble ---------------------------------------------------------

class _Voting:
    def __init__(self, members, mode, n_classes):
        self.members = members  # list of TrainedClassifier
        self.mode = mode
        self.n_classes = n_classes

    @classmethod
    def fit(cls, X, y, n_classes, config: BaselineConfig, seed):
        members = [fit_classifier(kind, X, y, config, child_seed(seed, "member", i))
                   for i, kind in enumerate(config.voting_members)]
        return cls(members, config.voting_mode, n_classes)

    def predict(self, X):
        if self.mode == "soft":
            return _argmax_lowest(self.scores(X))
        votes = np.zeros((X.shape[0], self.n_classes))
        for member in self.members:
            votes[np.arange(X.shape[0]), predict_classifier(member, X)] += 1.0
        return _argmax_lowest(votes)

    def scores(self, X):
        s = np.zeros((X.shape[0], self.n_classes))
        for member in self.members:
            s += member.impl.scores(X)
        return s / len(self.members)


_IMPLS = {"logreg": _LogReg, "tree": _Tree, "svm": _LinearSvm,
          "forest": _Forest, "adaboost": _AdaBoost, "voting": _Voting}


@dataclass
class TrainedClassifier:
    kind: str
    n_classes: int
    n_features: int
    config: BaselineConfig
    impl: object = field(repr=False, default=None)


def fit_classifier(kind: str, X, y, config: BaselineConfig | None = None,
                   seed: int = 0) -> TrainedClassifier:
    """Deterministically fit one of the six classifiers."""
    if kind not in KINDS:
        raise ValueError(f"unknown classifier kind {kind!r}; choose from {KINDS}")
    config = config or BaselineConfig()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if not np.isfinite(X).all():
        raise NonFiniteFeatureError("features must be finite")
    classes = np.unique(y)
    if classes.size < 2:
        raise SingleClassError("training needs at least two classes present")
    n_classes = int(classes.max()) + 1

    if kind == "tree":
        impl = _Tree.fit(X, y, n_classes, config.tree_max_depth, config.tree_min_leaf)
    else:
        impl = _IMPLS[kind].fit(X, y, n_classes, config, seed)
    return TrainedClassifier(kind=kind, n_classes=n_classes, n_features=X.shape[1],
                             config=config, impl=impl)


def predict_classifier(model: TrainedClassifier, X) -> np.ndarray:
    """Class codes; every tie resolves to the lowest code."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[1] != model.n_features:
        raise DimensionMismatchError(
            f"model was fitted on {model.n_features} features, got {X.shape[1]}")
    return np.asarray(model.impl.predict(X), dtype=np.int64)


def predict_scores(model: TrainedClassifier, X) -> np.ndarray:
    """Per-class score matrix (probability-like, used for soft voting)."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[1] != model.n_features:
        raise DimensionMismatchError(
            f"model was fitted on {model.n_features} features, got {X.shape[1]}")
    return model.impl.scores(X)


# --- persistence (same container as the CNN, with a kind tag) ---------------

def classifier_to_bytes(model: TrainedClassifier) -> bytes:
    return model_io.serialize(model.kind, _config_dict(model), _model_blocks(model))


def classifier_from_bytes(data: bytes) -> TrainedClassifier:
    kind, cfg, blocks = model_io.deserialize(data)
    return _classifier_from(kind, cfg, blocks)


def save_classifier(model: TrainedClassifier, path) -> None:
    model_io.atomic_write(path, classifier_to_bytes(model))


def _config_dict(model: TrainedClassifier) -> dict:
    cfg = asdict(model.config)
    cfg["n_classes"] = model.n_classes
    cfg["n_features"] = model.n_features
    if model.kind == "forest":
        cfg["n_trees_fitted"] = len(model.impl.trees)
    if model.kind == "adaboost":
        cfg["n_rounds_fitted"] = len(model.impl.stumps)
    return cfg


def _model_blocks(model: TrainedClassifier) -> list:
    if model.kind == "voting":
        return [(f"member{i}", classifier_to_bytes(member))
                for i, member in enumerate(model.impl.members)]
    return model.impl.to_blocks()


def load_classifier(path) -> TrainedClassifier:
    kind, cfg, blocks = model_io.load(path)
    return _classifier_from(kind, cfg, blocks)


def _classifier_from(kind: str, cfg: dict, blocks: list) -> TrainedClassifier:
    if kind not in KINDS:
        raise DataError(f"not a classifier container: kind {kind!r}")
    n_classes = cfg.pop("n_classes")
    n_features = cfg.pop("n_features")
    n_trees = cfg.pop("n_trees_fitted", None)
    n_rounds = cfg.pop("n_rounds_fitted", None)
    config = BaselineConfig(**cfg)
    named = dict(blocks)
    if kind == "voting":
        members = []
        for i in range(len(config.voting_members)):
            mkind, mcfg, mblocks = model_io.deserialize(named[f"member{i}"])
            members.append(_classifier_from(mkind, mcfg, mblocks))
        impl = _Voting(members, config.voting_mode, n_classes)
    elif kind == "forest":
        impl = _Forest.from_blocks(named, n_trees, n_classes)
    elif kind == "adaboost":
        impl = _AdaBoost.from_blocks(named, n_rounds, n_classes)
    else:
        impl = _IMPLS[kind].from_blocks(named)
    return TrainedClassifier(kind=kind, n_classes=n_classes, n_features=n_features,
                             config=config, impl=impl)
