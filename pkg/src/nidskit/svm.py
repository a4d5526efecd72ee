"""Linear one-vs-rest SVM trained by stochastic subgradient descent.

Shared by the standalone SVM baseline and the CNN's refinement head.
Each class gets a binary hinge problem (+1 for the class, -1 for the
rest); the objective per class is

    lam/2 * ||w||^2 + mean_i max(0, 1 - t_i (w.x_i + b))

minimized by minibatch subgradient steps with a 1/sqrt(t) decayed rate.
Prediction is the argmax of the per-class margins (ties take the lowest
class code).
"""

import numpy as np

from .errors import DataError
from .rng import stream


class SingleClassError(DataError):
    """One-vs-rest training needs at least two classes present."""


def hinge_objective(X: np.ndarray, t: np.ndarray, w: np.ndarray, b: float,
                    lam: float) -> float:
    margins = 1.0 - t * (X @ w + b)
    return 0.5 * lam * float(w @ w) + float(np.maximum(margins, 0.0).mean())


def _fit_binary(X, t, lam, epochs, lr0, batch_size, rng):
    n, d = X.shape
    w = np.zeros(d)
    b = 0.0
    step = 0
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            batch = order[start:start + batch_size]
            xb, tb = X[batch], t[batch]
            viol = tb * (xb @ w + b) < 1.0
            gw = lam * w
            gb = 0.0
            if viol.any():
                gw = gw - (tb[viol, None] * xb[viol]).sum(axis=0) / batch.size
                gb = -float(tb[viol].sum()) / batch.size
            lr = lr0 / np.sqrt(step + 1.0)
            w = w - lr * gw
            b = b - lr * gb
            step += 1
    return w, b


def fit_ovr_hinge(X: np.ndarray, y: np.ndarray, n_classes: int,
                  lam: float = 1e-4, epochs: int = 5, lr0: float = 0.5,
                  batch_size: int = 64, seed: int = 0):
    """Train per-class (weights, bias); returns W (C, d) and b (C,)."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if np.unique(y).size < 2:
        raise SingleClassError("one-vs-rest training needs >= 2 classes present")
    d = X.shape[1]
    W = np.zeros((n_classes, d))
    b = np.zeros(n_classes)
    for c in range(n_classes):
        t = np.where(y == c, 1.0, -1.0)
        rng = stream(seed, "ovr", c)
        W[c], b[c] = _fit_binary(X, t, lam, epochs, lr0, batch_size, rng)
    return W, b


def ovr_scores(X: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    return X @ W.T + b


def predict_ovr(X: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    return ovr_scores(X, W, b).argmax(axis=1)
