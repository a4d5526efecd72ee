"""From-scratch dense-tensor network kernels.

Layers operate on float64 numpy arrays with an explicit batch axis:
images are (N, C, H, W), flat activations are (N, D).  Every layer is a
small class with ``forward(x, mode, rng)`` and ``backward(dout)``;
gradients are hand-derived, cached state lives on the layer, and all
randomness (init, dropout masks, pooling draws) comes from generators
handed in by the caller, so identical seeds give bit-identical runs.

Convolutions are 3x3, stride 1, zero-padded "same", evaluated by
flattening the 3x3 neighborhoods into columns and batching the filter
application as one matrix product per layer.  Pooling windows are 2x2
with stride 2; a trailing odd row/column is dropped.  The stochastic
pooling layer samples a window position with probability proportional to
its (non-negative) activation while training and outputs the
probability-weighted window mean at inference.
"""

from dataclasses import dataclass

import numpy as np

from .errors import RunError


class ShapeMismatchError(RunError):
    pass


class ShapeError(RunError):
    pass


class NegativeActivationError(RunError):
    pass


class TargetOutOfRangeError(RunError):
    pass


@dataclass
class SgdConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 128
    epochs: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or not 0 <= self.momentum < 1:
            raise ValueError("need learning_rate > 0 and momentum in [0, 1)")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("need batch_size >= 1 and epochs >= 0")


class Parameter:
    """A learnable array with its gradient and momentum-velocity buffers."""

    __slots__ = ("name", "value", "grad", "velocity")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = value
        self.grad = np.zeros_like(value)
        self.velocity = np.zeros_like(value)


def sgd_step(param: np.ndarray, grad: np.ndarray, velocity: np.ndarray,
             learning_rate: float, momentum: float):
    """Momentum update: v <- mu*v - lr*g; p <- p + v.  Returns (p, v)."""
    if param.shape != grad.shape or param.shape != velocity.shape:
        raise ShapeMismatchError("param, grad, and velocity shapes must match")
    velocity = momentum * velocity - learning_rate * grad
    return param + velocity, velocity


class Layer:
    params: list = []

    def out_shape(self, in_shape: tuple) -> tuple:
        return in_shape

    def init_params(self, rng, in_shape: tuple) -> None:
        pass

    def forward(self, x, mode="infer", rng=None):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError


def _he_uniform(rng, shape, fan_in):
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


def _im2col3x3(x: np.ndarray) -> np.ndarray:
    """(N, C, H, W) -> (N, C*9, H*W) of zero-padded 3x3 neighborhoods."""
    n, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(2, 3))
    # win: (N, C, H, W, 3, 3); bring the neighborhood next to the channel
    return np.ascontiguousarray(win.transpose(0, 1, 4, 5, 2, 3)).reshape(n, c * 9, h * w)


class Conv2d(Layer):
    """3x3 stride-1 same-padded convolution with per-filter bias."""

    def __init__(self, in_channels: int, filters: int):
        if filters < 1:
            raise ValueError("filters must be positive")
        self.in_channels = in_channels
        self.filters = filters
        self.weight = Parameter("weight", np.zeros((filters, in_channels, 3, 3)))
        self.bias = Parameter("bias", np.zeros(filters))
        self.params = [self.weight, self.bias]
        self._cols = None
        self._in_shape = None

    def out_shape(self, in_shape):
        c, h, w = in_shape
        if c != self.in_channels:
            raise ShapeMismatchError(f"expected {self.in_channels} input channels, got {c}")
        if h < 1 or w < 1:
            raise ShapeError("spatial dims must be >= 1")
        return (self.filters, h, w)

    def init_params(self, rng, in_shape):
        self.out_shape(in_shape)
        self.weight.value = _he_uniform(rng, self.weight.value.shape, self.in_channels * 9)
        self.bias.value = np.zeros(self.filters)

    def forward(self, x, mode="infer", rng=None):
        n, c, h, w = x.shape
        self.out_shape((c, h, w))
        self._in_shape = x.shape
        self._cols = _im2col3x3(x)
        w2 = self.weight.value.reshape(self.filters, c * 9)
        out = np.matmul(w2, self._cols)  # (N, F, H*W)
        out += self.bias.value[None, :, None]
        return out.reshape(n, self.filters, h, w)

    def backward(self, dout):
        n, f, h, w = dout.shape
        dm = dout.reshape(n, f, h * w)
        self.weight.grad = np.einsum("nfp,nkp->fk", dm, self._cols).reshape(self.weight.value.shape)
        self.bias.grad = dout.sum(axis=(0, 2, 3))
        # input gradient: same-padded correlation with spatially flipped,
        # channel-transposed kernels
        flipped = self.weight.value[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
        cols = _im2col3x3(dm.reshape(n, f, h, w))
        w2 = np.ascontiguousarray(flipped).reshape(self.in_channels, f * 9)
        dx = np.matmul(w2, cols).reshape(self._in_shape)
        return dx


class Relu(Layer):
    def forward(self, x, mode="infer", rng=None):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, dout):
        return np.where(self._mask, dout, 0.0)


def _pool_windows(x: np.ndarray):
    """(N, C, H, W) -> (N, C, H//2, W//2, 4) row-major 2x2 windows."""
    n, c, h, w = x.shape
    if h < 2 or w < 2:
        raise ShapeError(f"pooling needs height and width >= 2, got {h}x{w}")
    ho, wo = h // 2, w // 2
    v = x[:, :, :ho * 2, :wo * 2].reshape(n, c, ho, 2, wo, 2)
    return np.ascontiguousarray(v.transpose(0, 1, 2, 4, 3, 5)).reshape(n, c, ho, wo, 4)


def _unpool_windows(gwin: np.ndarray, in_shape):
    n, c, h, w = in_shape
    ho, wo = h // 2, w // 2
    dx = np.zeros(in_shape, dtype=gwin.dtype)
    g = gwin.reshape(n, c, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    dx[:, :, :ho * 2, :wo * 2] = g.reshape(n, c, ho * 2, wo * 2)
    return dx


class MaxPool2x2(Layer):
    """Window maximum; ties resolve to the first position in row-major order."""

    def out_shape(self, in_shape):
        c, h, w = in_shape
        if h < 2 or w < 2:
            raise ShapeError(f"pooling needs height and width >= 2, got {h}x{w}")
        return (c, h // 2, w // 2)

    def forward(self, x, mode="infer", rng=None):
        self._in_shape = x.shape
        win = _pool_windows(x)
        self._idx = win.argmax(axis=-1)
        return np.take_along_axis(win, self._idx[..., None], axis=-1)[..., 0]

    def backward(self, dout):
        gwin = np.zeros(dout.shape + (4,), dtype=dout.dtype)
        np.put_along_axis(gwin, self._idx[..., None], dout[..., None], axis=-1)
        return _unpool_windows(gwin, self._in_shape)


class StochasticPool2x2(Layer):
    """Activation-proportional stochastic pooling.

    Training samples one window position with p_i = a_i / sum(a) (uniform
    when the window sums to zero) and passes its value; inference outputs
    sum(p_i * a_i).  Inputs must be non-negative (post-ReLU).
    """

    def out_shape(self, in_shape):
        c, h, w = in_shape
        if h < 2 or w < 2:
            raise ShapeError(f"pooling needs height and width >= 2, got {h}x{w}")
        return (c, h // 2, w // 2)

    def _probs(self, win):
        if (win < 0).any():
            raise NegativeActivationError("stochastic pooling needs non-negative inputs")
        sums = win.sum(axis=-1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            p = np.where(sums > 0, win / np.where(sums > 0, sums, 1.0), 0.25)
        return p, sums[..., 0]

    def forward(self, x, mode="infer", rng=None):
        self._in_shape = x.shape
        win = _pool_windows(x)
        p, sums = self._probs(win)
        if mode == "train":
            if rng is None:
                raise RunError("stochastic pooling in train mode needs an rng")
            u = rng.random(size=win.shape[:-1])
            cum = np.cumsum(p, axis=-1)
            idx = np.minimum((u[..., None] >= cum).sum(axis=-1), 3)
            self._mode = "train"
            self._idx = idx
            return np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
        self._mode = "infer"
        self._win = win
        self._sums = sums
        self._out = (p * win).sum(axis=-1)
        return self._out

    def backward(self, dout):
        if self._mode == "train":
            gwin = np.zeros(dout.shape + (4,), dtype=dout.dtype)
            np.put_along_axis(gwin, self._idx[..., None], dout[..., None], axis=-1)
            return _unpool_windows(gwin, self._in_shape)
        # d/da_j of sum(a_i^2)/S  =  (2 a_j - out) / S, zero when S == 0
        safe = np.where(self._sums > 0, self._sums, 1.0)
        gwin = np.where(self._sums[..., None] > 0,
                        (2.0 * self._win - self._out[..., None]) / safe[..., None], 0.0)
        return _unpool_windows(gwin * dout[..., None], self._in_shape)


class Flatten(Layer):
    def out_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x, mode="infer", rng=None):
        self._in_shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._in_shape)


class Dense(Layer):
    """Affine map y = x W^T + b with W of shape (out_units, in_units)."""

    def __init__(self, out_units: int):
        if out_units < 1:
            raise ValueError("out_units must be positive")
        self.out_units = out_units
        self.weight = Parameter("weight", np.zeros((out_units, 0)))
        self.bias = Parameter("bias", np.zeros(out_units))
        self.params = [self.weight, self.bias]

    def out_shape(self, in_shape):
        if len(in_shape) != 1:
            raise ShapeMismatchError(f"dense layer expects flat input, got {in_shape}")
        return (self.out_units,)

    def init_params(self, rng, in_shape):
        (d,) = in_shape
        self.weight.value = _he_uniform(rng, (self.out_units, d), d)
        self.bias.value = np.zeros(self.out_units)
        self.weight.grad = np.zeros_like(self.weight.value)
        self.weight.velocity = np.zeros_like(self.weight.value)

    def forward(self, x, mode="infer", rng=None):
        if x.shape[1] != self.weight.value.shape[1]:
            raise ShapeMismatchError(
                f"dense layer expects {self.weight.value.shape[1]} inputs, got {x.shape[1]}")
        self._x = x
        return x @ self.weight.value.T + self.bias.value

    def backward(self, dout):
        self.weight.grad = dout.T @ self._x
        self.bias.grad = dout.sum(axis=0)
        return dout @ self.weight.value


class Dropout(Layer):
    def __init__(self, rate: float):
        if not 0 <= rate < 1:
            raise ValueError("dropout rate must be in [0, 1)")
        self.rate = rate

    def forward(self, x, mode="infer", rng=None):
        if mode != "train" or self.rate == 0.0:
            self._mask = None
            return x
        if rng is None:
            raise RunError("dropout in train mode needs an rng")
        # inverted scaling keeps activation expectations unchanged
        self._mask = (rng.random(size=x.shape) >= self.rate) / (1.0 - self.rate)
        return x * self._mask

    def backward(self, dout):
        return dout if self._mask is None else dout * self._mask


class Softmax(Layer):
    def forward(self, x, mode="infer", rng=None):
        return softmax(x)

    def backward(self, dout):  # pragma: no cover - loss is fused with the logits
        raise RunError("softmax layer is terminal; backpropagate from the fused loss")


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, target_class: int):
    """Stabilized softmax + negative log-likelihood of one sample.

    Returns (loss, gradient wrt logits); gradient is p - one_hot(target).
    """
    z = np.asarray(logits, dtype=np.float64).ravel()
    if not 0 <= target_class < z.size:
        raise TargetOutOfRangeError(f"target {target_class} outside [0, {z.size})")
    p = softmax(z)
    loss = -np.log(max(p[target_class], 1e-300))
    grad = p.copy()
    grad[target_class] -= 1.0
    return float(loss), grad


def softmax_cross_entropy_batch(logits: np.ndarray, targets: np.ndarray):
    """Mean loss over the batch and the per-sample logit gradients."""
    n, c = logits.shape
    t = np.asarray(targets)
    if t.min(initial=0) < 0 or t.max(initial=0) >= c:
        raise TargetOutOfRangeError(f"targets outside [0, {c})")
    p = softmax(logits)
    picked = np.maximum(p[np.arange(n), t], 1e-300)
    loss = float(-np.log(picked).mean())
    grad = p
    grad[np.arange(n), t] -= 1.0
    return loss, grad / n


class Network:
    """An ordered layer stack ending in Softmax, trained on fused softmax loss."""

    def __init__(self, layers: list):
        self.layers = layers

    @property
    def body(self) -> list:
        return [l for l in self.layers if not isinstance(l, Softmax)]

    def parameters(self) -> list:
        return [p for layer in self.layers for p in layer.params]

    def forward_logits(self, x, mode="infer", rngs=None):
        for i, layer in enumerate(self.body):
            rng = rngs.get(i) if rngs else None
            x = layer.forward(x, mode=mode, rng=rng)
        return x

    def backward_from_logits(self, dlogits):
        d = dlogits
        for layer in reversed(self.body):
            d = layer.backward(d)
        return d

    def loss_and_grads(self, x, targets, mode="infer", rngs=None):
        logits = self.forward_logits(x, mode=mode, rngs=rngs)
        loss, dlogits = softmax_cross_entropy_batch(logits, targets)
        self.backward_from_logits(dlogits)
        return loss, logits


def grad_check(network: Network, x: np.ndarray, targets: np.ndarray,
               epsilon: float = 1e-5) -> float:
    """Max relative disagreement between analytic and central-difference grads.

    The network must be in a deterministic configuration (dropout rate 0,
    pooling deterministic at the evaluation point).
    """
    network.loss_and_grads(x, targets, mode="infer")
    analytic = [p.grad.copy() for p in network.parameters()]

    worst = 0.0
    for p, ga in zip(network.parameters(), analytic):
        flat = p.value.ravel()
        gn = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            lo_plus = _loss_only(network, x, targets)
            flat[i] = orig - epsilon
            lo_minus = _loss_only(network, x, targets)
            flat[i] = orig
            gn[i] = (lo_plus - lo_minus) / (2.0 * epsilon)
        ga_flat = ga.ravel()
        denom = np.maximum(np.maximum(np.abs(ga_flat), np.abs(gn)), 1e-8)
        worst = max(worst, float((np.abs(ga_flat - gn) / denom).max()))
    return worst


def _loss_only(network: Network, x, targets) -> float:
    logits = network.forward_logits(x, mode="infer")
    loss, _ = softmax_cross_entropy_batch(logits, targets)
    return loss
