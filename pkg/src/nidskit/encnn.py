"""The convolutional intrusion classifier (EnCNN).

Stack: three 3x3 "same" convolution stages with 16/32/64 filters, each
followed by ReLU and a 2x2 stride-2 pooling layer (max or stochastic,
per stage), then flatten, two 512-unit dense+ReLU+dropout blocks, a
C-way dense classifier, and softmax.  An optional refinement head fits
one-vs-rest linear SVMs on the 512-dim penultimate activations and, when
present, takes over the final class decision.

Training is plain minibatch SGD with momentum on the softmax
cross-entropy; every random draw (init, shuffling, dropout, pooling) is
a named stream of the run seed, so identical configs reproduce identical
parameters bit for bit.
"""

import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import model_io
from .errors import DataError, EmptyInputError, RunError
from .nn import (Conv2d, Dense, Dropout, Flatten, MaxPool2x2, Network, Relu,
                 SgdConfig, Softmax, StochasticPool2x2, sgd_step, softmax)
from .rng import child_seed, stream
from .svm import fit_ovr_hinge, ovr_scores

POOL_MODES = ("max", "stochastic")


class ShapeChainError(RunError):
    pass


class LabelRangeError(DataError):
    pass


class UntrainedModelError(RunError):
    pass


class MissingHeadError(RunError):
    pass


@dataclass
class EnCnnConfig:
    stage_filters: tuple = (16, 32, 64)
    pooling_modes: tuple = ("stochastic", "stochastic", "stochastic")
    dense_units: tuple = (512, 512)
    dropout_rate: float = 0.5
    class_count: int = 5
    grid_side: int = 11
    svm_head: bool = True
    svm_lambda: float = 1e-4
    svm_epochs: int = 5
    sgd: SgdConfig = field(default_factory=SgdConfig)

    def __post_init__(self):
        self.stage_filters = tuple(int(f) for f in self.stage_filters)
        self.pooling_modes = tuple(str(m) for m in self.pooling_modes)
        self.dense_units = tuple(int(u) for u in self.dense_units)
        if len(self.stage_filters) != 3 or any(f < 1 for f in self.stage_filters):
            raise ValueError("stage_filters must be three positive counts")
        if len(self.pooling_modes) != 3 or any(m not in POOL_MODES for m in self.pooling_modes):
            raise ValueError(f"pooling_modes must be three of {POOL_MODES}")
        if not 0 <= self.dropout_rate < 1:
            raise ValueError("dropout_rate must be in [0, 1)")
        if self.class_count < 2:
            raise ValueError("class_count must be >= 2")
        if isinstance(self.sgd, dict):
            self.sgd = SgdConfig(**self.sgd)


@dataclass
class SvmHead:
    weights: np.ndarray  # (C, penultimate_dim)
    bias: np.ndarray     # (C,)


@dataclass
class TrainMeta:
    seed: int
    epochs_run: int = 0
    final_loss: float = float("nan")


@dataclass
class TrainReport:
    epoch_losses: list
    wall_time_s: float
    train_accuracy: float


class EnCnnModel:
    def __init__(self, config: EnCnnConfig, network: Network):
        self.config = config
        self.network = network
        self.svm: SvmHead | None = None
        self.meta: TrainMeta | None = None
        self.last_report: TrainReport | None = None


def _pool_layer(mode: str):
    return MaxPool2x2() if mode == "max" else StochasticPool2x2()


def build_model(config: EnCnnConfig) -> EnCnnModel:
    """Assemble the layer stack, validate the shape chain, seed the weights."""
    layers = []
    in_channels = 1
    for filters, mode in zip(config.stage_filters, config.pooling_modes):
        layers.extend([Conv2d(in_channels, filters), Relu(), _pool_layer(mode)])
        in_channels = filters
    layers.append(Flatten())
    for units in config.dense_units:
        layers.extend([Dense(units), Relu(), Dropout(config.dropout_rate)])
    layers.append(Dense(config.class_count))
    layers.append(Softmax())

    shape = (1, config.grid_side, config.grid_side)
    shapes = []
    for layer in layers:
        shapes.append(shape)
        try:
            shape = layer.out_shape(shape)
        except RunError as exc:
            raise ShapeChainError(
                f"grid side {config.grid_side} cannot pass {type(layer).__name__}: {exc}") from None
    for i, layer in enumerate(layers):
        layer.init_params(stream(config.sgd.seed, "init", i), shapes[i])
    return EnCnnModel(config, Network(layers))


def _epoch_rngs(model: EnCnnModel, seed: int, epoch: int) -> dict:
    rngs = {}
    for i, layer in enumerate(model.network.body):
        if isinstance(layer, (Dropout, StochasticPool2x2)):
            rngs[i] = stream(seed, "layer", i, "epoch", epoch)
    return rngs


def _check_labels(y: np.ndarray, class_count: int) -> None:
    if y.size == 0:
        raise EmptyInputError("training needs at least one sample")
    if y.min() < 0 or y.max() >= class_count:
        raise LabelRangeError(f"labels must lie in [0, {class_count})")
    present = np.unique(y)
    if present.size < class_count:
        missing = sorted(set(range(class_count)) - set(present.tolist()))
        raise EmptyInputError(f"no training samples for class(es) {missing}")


def train_model(model: EnCnnModel, X: np.ndarray, y, sgd: SgdConfig | None = None) -> TrainReport:
    """Minibatch SGD in place; returns the per-epoch loss curve."""
    sgd = sgd or model.config.sgd
    y = np.asarray(y, dtype=np.int64)
    _check_labels(y, model.config.class_count)
    n = X.shape[0]
    t0 = time.perf_counter()
    epoch_losses = []
    for epoch in range(sgd.epochs):
        order = stream(sgd.seed, "shuffle", epoch).permutation(n)
        rngs = _epoch_rngs(model, sgd.seed, epoch)
        total = 0.0
        for start in range(0, n, sgd.batch_size):
            batch = order[start:start + sgd.batch_size]
            loss, _ = model.network.loss_and_grads(X[batch], y[batch], mode="train", rngs=rngs)
            total += loss * batch.size
            for p in model.network.parameters():
                p.value, p.velocity = sgd_step(
                    p.value, p.grad, p.velocity, sgd.learning_rate, sgd.momentum)
        epoch_losses.append(total / n)
    meta = model.meta or TrainMeta(seed=sgd.seed)
    meta.epochs_run += sgd.epochs
    meta.final_loss = epoch_losses[-1] if epoch_losses else meta.final_loss
    model.meta = meta
    acc = float((predict(model, X, use_head=False) == y).mean()) if sgd.epochs else float("nan")
    report = TrainReport(epoch_losses=epoch_losses,
                         wall_time_s=time.perf_counter() - t0,
                         train_accuracy=acc)
    model.last_report = report
    return report


def _last_dense_index(model: EnCnnModel) -> int:
    body = model.network.body
    return max(i for i, layer in enumerate(body) if isinstance(layer, Dense))


def penultimate_activations(model: EnCnnModel, X: np.ndarray,
                            batch_size: int = 2048) -> np.ndarray:
    """Deterministic activations feeding the final classifier layer."""
    stop = _last_dense_index(model)
    body = model.network.body
    chunks = []
    for start in range(0, X.shape[0], batch_size):
        h = X[start:start + batch_size]
        for layer in body[:stop]:
            h = layer.forward(h, mode="infer")
        chunks.append(h)
    return np.vstack(chunks)


def fit_svm_head(model: EnCnnModel, X: np.ndarray, y) -> SvmHead:
    """Fit the one-vs-rest hinge head on penultimate activations."""
    if model.meta is None or model.meta.epochs_run == 0:
        raise UntrainedModelError("fit the network before fitting the refinement head")
    y = np.asarray(y, dtype=np.int64)
    acts = penultimate_activations(model, X)
    W, b = fit_ovr_hinge(acts, y, model.config.class_count,
                         lam=model.config.svm_lambda, epochs=model.config.svm_epochs,
                         seed=child_seed(model.meta.seed, "svm-head"))
    model.svm = SvmHead(weights=W, bias=b)
    return model.svm


def predict(model: EnCnnModel, X: np.ndarray, batch_size: int = 2048,
            use_head: bool | None = None) -> np.ndarray:
    """Deterministic class codes; argmax ties resolve to the lowest code."""
    if use_head is None:
        use_head = model.config.svm_head
    if use_head:
        if model.svm is None:
            raise MissingHeadError("svm head enabled but not fitted")
        acts = penultimate_activations(model, X, batch_size)
        return ovr_scores(acts, model.svm.weights, model.svm.bias).argmax(axis=1)
    out = []
    for start in range(0, X.shape[0], batch_size):
        logits = model.network.forward_logits(X[start:start + batch_size], mode="infer")
        out.append(logits.argmax(axis=1))
    return np.concatenate(out) if out else np.empty(0, dtype=np.int64)


def predict_proba(model: EnCnnModel, X: np.ndarray, batch_size: int = 2048) -> np.ndarray:
    """Softmax class probabilities (ignores the head)."""
    out = []
    for start in range(0, X.shape[0], batch_size):
        logits = model.network.forward_logits(X[start:start + batch_size], mode="infer")
        out.append(softmax(logits))
    return np.vstack(out) if out else np.empty((0, model.config.class_count))


def model_to_bytes(model: EnCnnModel) -> bytes:
    config = asdict(model.config)
    config["meta"] = asdict(model.meta) if model.meta else None
    blocks = []
    for i, layer in enumerate(model.network.layers):
        for p in layer.params:
            blocks.append((f"layer{i}.{p.name}", p.value))
    if model.svm is not None:
        blocks.append(("svm.weights", model.svm.weights))
        blocks.append(("svm.bias", model.svm.bias))
    return model_io.serialize("encnn", config, blocks)


def save_model(model: EnCnnModel, path) -> None:
    model_io.atomic_write(path, model_to_bytes(model))


def load_model(path) -> EnCnnModel:
    return model_from_bytes_checked(model_io.load(path))


def model_from_bytes(data: bytes) -> EnCnnModel:
    return model_from_bytes_checked(model_io.deserialize(data))


def model_from_bytes_checked(parsed) -> EnCnnModel:
    kind, config, blocks = parsed
    if kind != "encnn":
        raise DataError(f"expected an encnn container, found kind {kind!r}")
    meta = config.pop("meta", None)
    model = build_model(EnCnnConfig(**config))
    named = dict(blocks)
    for i, layer in enumerate(model.network.layers):
        for p in layer.params:
            key = f"layer{i}.{p.name}"
            if key not in named:
                raise model_io.TruncationError(f"missing parameter block {key}")
            arr = named[key]
            if arr.shape != p.value.shape:
                raise DataError(f"block {key}: shape {arr.shape} != expected {p.value.shape}")
            p.value = arr.astype(np.float64, copy=True)
            p.grad = np.zeros_like(p.value)
            p.velocity = np.zeros_like(p.value)
    if "svm.weights" in named:
        model.svm = SvmHead(weights=named["svm.weights"].astype(np.float64),
                            bias=named["svm.bias"].astype(np.float64))
    if meta:
        model.meta = TrainMeta(**meta)
    return model
