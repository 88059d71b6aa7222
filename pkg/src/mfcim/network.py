"""Networks mixing multiplication-free and conventional layers.

A multiplication-free neuron computes alpha * (x (+) w) + b per output
unit; the operator is nonlinear on signed inputs, so these layers carry
no extra activation.  Conventional dense/conv layers use the ordinary
affine transform with ReLU.

Training is plain minibatch SGD (optional momentum) with straight-
through surrogate gradients for the multiplication-free layers: the
forward pass evaluates the exact (hard sign) operator while the backward
pass uses the smoothed partials from mfcim.operator, with tanh standing
in for the differentiated sign factor and a narrow Gaussian for the
delta.  Passing smooth=True runs the tanh-smoothed forward instead,
paired with its exact analytic gradient; that mode exists so gradients
can be checked against finite differences of a differentiable loss.

Inference paths:
  * float: forward(x) with hard operators
  * fixed point: quantized_forward(...) quantizes weights per layer and
    activations per sample to sign+magnitude integers and evaluates the
    operator in exact integer arithmetic
  * macro-backed: the same fixed-point path with every bitplane count
    pushed through the ADC decode of a given array geometry, i.e. what
    the in-SRAM hardware produces plane by plane
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .datasets import Dataset
from .macro import ideal_decode
from .operator import SurrogateParams, _round_half_away, _sech2

__all__ = [
    "Layer", "MFDense", "DenseLayer", "ConvMF", "Conv", "MaxPool",
    "BatchNormLite", "Flatten", "Model", "TrainConfig", "TrainingDiverged",
    "build_model", "mlp_config", "train", "evaluate", "quantized_forward",
    "fold_batchnorm_lite",
]


class TrainingDiverged(RuntimeError):
    pass


def _sign(a):
    return np.where(a < 0, -1.0, 1.0)


# ---------------------------------------------------------------------------
# layers
# ---------------------------------------------------------------------------

class Layer:
    kind = "layer"

    def __init__(self):
        self.params = {}
        self.grads = {}

    def forward(self, x, smooth=False):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    def config(self) -> dict:
        return {"kind": self.kind}


class MFDense(Layer):
    """Fully connected multiplication-free layer: y_o = alpha_o*(x (+) w_o) + b_o.

    The correlation of a d-wide input has magnitude ~sqrt(d), so the
    trainable scale is stored as alpha = alpha_raw / sqrt(d); that keeps
    every parameter's gradient at the same order under a single SGD
    learning rate.  Use the alpha property / set_alpha for the semantic
    per-unit scale.
    """

    kind = "mf_dense"

    def __init__(self, in_dim, out_dim, rng, surrogate=SurrogateParams(),
                 alpha_init=1.0):
        super().__init__()
        self.in_dim, self.out_dim = in_dim, out_dim
        self.surrogate = surrogate
        self.alpha_scale = 1.0 / np.sqrt(in_dim)
        self.params = {
            "w": rng.normal(0.0, 1.0 / np.sqrt(in_dim), (out_dim, in_dim)),
            "alpha_raw": np.full(out_dim, float(alpha_init)),
            "b": np.zeros(out_dim),
        }

    @property
    def alpha(self):
        return self.params["alpha_raw"] * self.alpha_scale

    def set_alpha(self, value):
        self.params["alpha_raw"] = np.asarray(value, dtype=np.float64) \
            / self.alpha_scale

    def config(self):
        return {"kind": self.kind, "in_dim": self.in_dim, "out_dim": self.out_dim,
                "beta": self.surrogate.beta, "sigma": self.surrogate.sigma}

    def _correlate(self, x, smooth):
        w = self.params["w"]
        if smooth:
            sx, sw = np.tanh(self.surrogate.beta * x), np.tanh(self.surrogate.beta * w)
        else:
            sx, sw = _sign(x), _sign(w)
        return sx @ np.abs(w).T + np.abs(x) @ sw.T

    def forward(self, x, smooth=False):
        if x.shape[1] != self.in_dim:
            raise ValueError(f"expected {self.in_dim} features, got {x.shape[1]}")
        z = self._correlate(x, smooth)
        self._x, self._z, self._smooth = x, z, smooth
        return z * self.alpha + self.params["b"]

    def backward(self, grad):
        x, z = self._x, self._z
        w, alpha = self.params["w"], self.alpha
        beta, sigma = self.surrogate.beta, self.surrogate.sigma
        self.grads["alpha_raw"] = np.sum(grad * z, axis=0) * self.alpha_scale
        self.grads["b"] = np.sum(grad, axis=0)
        ga = grad * alpha
        if self._smooth:
            # exact gradient of the tanh-smoothed operator
            tx, tw = np.tanh(beta * x), np.tanh(beta * w)
            self.grads["w"] = (_sign(w) * (ga.T @ tx)
                               + beta * _sech2(beta * w) * (ga.T @ np.abs(x)))
            dx = beta * _sech2(beta * x) * (ga @ np.abs(w)) + _sign(x) * (ga @ tw)
        else:
            # straight-through surrogate: tanh for the differentiated sign
            # factor, Gaussian for the delta
            gx = np.exp(-np.square(x) / (2 * sigma * sigma)) / (sigma * np.sqrt(2 * np.pi))
            gw = np.exp(-np.square(w) / (2 * sigma * sigma)) / (sigma * np.sqrt(2 * np.pi))
            self.grads["w"] = np.tanh(beta * w) * (ga.T @ _sign(x)) \
                + 2.0 * gw * (ga.T @ np.abs(x))
            dx = np.tanh(beta * x) * (ga @ _sign(w)) + 2.0 * gx * (ga @ np.abs(w))
        return dx


class DenseLayer(Layer):
    """Conventional affine layer with optional ReLU."""

    kind = "dense"

    def __init__(self, in_dim, out_dim, rng, relu=True):
        super().__init__()
        self.in_dim, self.out_dim, self.relu = in_dim, out_dim, relu
        self.params = {
            "w": rng.normal(0.0, np.sqrt(2.0 / in_dim), (out_dim, in_dim)),
            "b": np.zeros(out_dim),
        }

    def config(self):
        return {"kind": self.kind, "in_dim": self.in_dim, "out_dim": self.out_dim,
                "relu": self.relu}

    def forward(self, x, smooth=False):
        y = x @ self.params["w"].T + self.params["b"]
        self._x = x
        if self.relu:
            self._mask = y > 0
            y = y * self._mask
        return y

    def backward(self, grad):
        if self.relu:
            grad = grad * self._mask
        self.grads["w"] = grad.T @ self._x
        self.grads["b"] = np.sum(grad, axis=0)
        return grad @ self.params["w"]


def _im2col(x, k, stride):
    b, c, h, w = x.shape
    oh = (h - k) // stride + 1
    ow = (w - k) // stride + 1
    cols = np.empty((b, oh, ow, c, k, k), dtype=x.dtype)
    for i in range(k):
        for j in range(k):
            cols[:, :, :, :, i, j] = x[:, :, i:i + stride * oh:stride,
                                       j:j + stride * ow:stride].transpose(0, 2, 3, 1)
    return cols.reshape(b, oh, ow, c * k * k), (oh, ow)


def _col2im(grad_cols, x_shape, k, stride):
    b, c, h, w = x_shape
    oh = (h - k) // stride + 1
    ow = (w - k) // stride + 1
    g = grad_cols.reshape(b, oh, ow, c, k, k)
    out = np.zeros(x_shape, dtype=grad_cols.dtype)
    for i in range(k):
        for j in range(k):
            out[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += \
                g[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return out


class _ConvBase(Layer):
    def __init__(self, in_ch, out_ch, kernel, stride):
        super().__init__()
        self.in_ch, self.out_ch = in_ch, out_ch
        self.kernel, self.stride = kernel, stride

    def config(self):
        return {"kind": self.kind, "in_ch": self.in_ch, "out_ch": self.out_ch,
                "kernel": self.kernel, "stride": self.stride}


class ConvMF(_ConvBase):
    """Convolution through the multiplication-free operator (no padding)."""

    kind = "conv_mf"

    def __init__(self, in_ch, out_ch, kernel, rng, stride=1,
                 surrogate=SurrogateParams(), alpha_init=1.0):
        super().__init__(in_ch, out_ch, kernel, stride)
        self.surrogate = surrogate
        fan = in_ch * kernel * kernel
        self.alpha_scale = 1.0 / np.sqrt(fan)
        self.params = {
            "w": rng.normal(0.0, 1.0 / np.sqrt(fan), (out_ch, fan)),
            "alpha_raw": np.full(out_ch, float(alpha_init)),
            "b": np.zeros(out_ch),
        }

    @property
    def alpha(self):
        return self.params["alpha_raw"] * self.alpha_scale

    def set_alpha(self, value):
        self.params["alpha_raw"] = np.asarray(value, dtype=np.float64) \
            / self.alpha_scale

    def forward(self, x, smooth=False):
        cols, (oh, ow) = _im2col(x, self.kernel, self.stride)
        flat = cols.reshape(-1, cols.shape[-1])
        w = self.params["w"]
        if smooth:
            sx, sw = np.tanh(self.surrogate.beta * flat), np.tanh(self.surrogate.beta * w)
        else:
            sx, sw = _sign(flat), _sign(w)
        z = sx @ np.abs(w).T + np.abs(flat) @ sw.T
        self._flat, self._z, self._smooth = flat, z, smooth
        self._x_shape, self._oh, self._ow = x.shape, oh, ow
        y = z * self.alpha + self.params["b"]
        return y.reshape(x.shape[0], oh, ow, self.out_ch).transpose(0, 3, 1, 2)

    def backward(self, grad):
        grad = grad.transpose(0, 2, 3, 1).reshape(-1, self.out_ch)
        x, z = self._flat, self._z
        w, alpha = self.params["w"], self.alpha
        beta, sigma = self.surrogate.beta, self.surrogate.sigma
        self.grads["alpha_raw"] = np.sum(grad * z, axis=0) * self.alpha_scale
        self.grads["b"] = np.sum(grad, axis=0)
        ga = grad * alpha
        if self._smooth:
            tx, tw = np.tanh(beta * x), np.tanh(beta * w)
            self.grads["w"] = (_sign(w) * (ga.T @ tx)
                               + beta * _sech2(beta * w) * (ga.T @ np.abs(x)))
            dcols = beta * _sech2(beta * x) * (ga @ np.abs(w)) + _sign(x) * (ga @ tw)
        else:
            gx = np.exp(-np.square(x) / (2 * sigma * sigma)) / (sigma * np.sqrt(2 * np.pi))
            gw = np.exp(-np.square(w) / (2 * sigma * sigma)) / (sigma * np.sqrt(2 * np.pi))
            self.grads["w"] = np.tanh(beta * w) * (ga.T @ _sign(x)) \
                + 2.0 * gw * (ga.T @ np.abs(x))
            dcols = 2.0 * gx * (ga @ np.abs(w)) + np.tanh(beta * x) * (ga @ _sign(w))
        return _col2im(dcols, self._x_shape, self.kernel, self.stride)


class Conv(_ConvBase):
    """Conventional convolution + ReLU (no padding)."""

    kind = "conv"

    def __init__(self, in_ch, out_ch, kernel, rng, stride=1, relu=True):
        super().__init__(in_ch, out_ch, kernel, stride)
        self.relu = relu
        fan = in_ch * kernel * kernel
        self.params = {
            "w": rng.normal(0.0, np.sqrt(2.0 / fan), (out_ch, fan)),
            "b": np.zeros(out_ch),
        }

    def config(self):
        c = super().config()
        c["relu"] = self.relu
        return c

    def forward(self, x, smooth=False):
        cols, (oh, ow) = _im2col(x, self.kernel, self.stride)
        flat = cols.reshape(-1, cols.shape[-1])
        y = flat @ self.params["w"].T + self.params["b"]
        self._flat, self._x_shape = flat, x.shape
        if self.relu:
            self._mask = y > 0
            y = y * self._mask
        return y.reshape(x.shape[0], oh, ow, self.out_ch).transpose(0, 3, 1, 2)

    def backward(self, grad):
        grad = grad.transpose(0, 2, 3, 1).reshape(-1, self.out_ch)
        if self.relu:
            grad = grad * self._mask
        self.grads["w"] = grad.T @ self._flat
        self.grads["b"] = np.sum(grad, axis=0)
        return _col2im(grad @ self.params["w"], self._x_shape, self.kernel,
                       self.stride)


class MaxPool(Layer):
    """Non-overlapping max pooling (window == stride)."""

    kind = "maxpool"

    def __init__(self, size=2):
        super().__init__()
        self.size = size

    def config(self):
        return {"kind": self.kind, "size": self.size}

    def forward(self, x, smooth=False):
        b, c, h, w = x.shape
        s = self.size
        if h % s or w % s:
            raise ValueError(f"spatial dims {h}x{w} not divisible by pool {s}")
        view = x.reshape(b, c, h // s, s, w // s, s)
        out = view.max(axis=(3, 5))
        self._mask = (view == out[:, :, :, None, :, None])
        self._x_shape = x.shape
        return out

    def backward(self, grad):
        s = self.size
        g = grad[:, :, :, None, :, None] * self._mask
        return g.reshape(self._x_shape)


class BatchNormLite(Layer):
    """Per-channel trainable affine (no running statistics)."""

    kind = "batchnorm_lite"

    def __init__(self, channels):
        super().__init__()
        self.channels = channels
        self.params = {"gamma": np.ones(channels), "beta": np.zeros(channels)}

    def config(self):
        return {"kind": self.kind, "channels": self.channels}

    def _bshape(self, x):
        return (1, -1) if x.ndim == 2 else (1, -1, 1, 1)

    def forward(self, x, smooth=False):
        self._x = x
        shp = self._bshape(x)
        return x * self.params["gamma"].reshape(shp) + self.params["beta"].reshape(shp)

    def backward(self, grad):
        axes = 0 if grad.ndim == 2 else (0, 2, 3)
        self.grads["gamma"] = np.sum(grad * self._x, axis=axes)
        self.grads["beta"] = np.sum(grad, axis=axes)
        return grad * self.params["gamma"].reshape(self._bshape(grad))


class Flatten(Layer):
    kind = "flatten"

    def forward(self, x, smooth=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._shape)


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------

_LAYER_BUILDERS = {
    "mf_dense": lambda c, rng: MFDense(c["in_dim"], c["out_dim"], rng,
                                       SurrogateParams(c.get("beta", 10.0),
                                                       c.get("sigma", 0.1))),
    "dense": lambda c, rng: DenseLayer(c["in_dim"], c["out_dim"], rng,
                                       relu=c.get("relu", True)),
    "conv_mf": lambda c, rng: ConvMF(c["in_ch"], c["out_ch"], c["kernel"], rng,
                                     stride=c.get("stride", 1)),
    "conv": lambda c, rng: Conv(c["in_ch"], c["out_ch"], c["kernel"], rng,
                                stride=c.get("stride", 1),
                                relu=c.get("relu", True)),
    "maxpool": lambda c, rng: MaxPool(c.get("size", 2)),
    "batchnorm_lite": lambda c, rng: BatchNormLite(c["channels"]),
    "flatten": lambda c, rng: Flatten(),
}


class Model:
    def __init__(self, layers):
        self.layers = list(layers)

    def forward(self, x, smooth=False):
        for layer in self.layers:
            x = layer.forward(x, smooth=smooth)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def config(self):
        return [layer.config() for layer in self.layers]

    def parameters(self):
        for i, layer in enumerate(self.layers):
            for name, value in layer.params.items():
                yield f"{i}.{name}", layer, name, value


def build_model(configs, seed=0) -> Model:
    rng = np.random.default_rng(seed)
    layers = []
    for c in configs:
        kind = c["kind"]
        if kind not in _LAYER_BUILDERS:
            raise ValueError(f"unknown layer kind {kind!r}")
        layers.append(_LAYER_BUILDERS[kind](c, rng))
    return Model(layers)


def mlp_config(in_dim=784, hidden=256, classes=10, mf=True, beta=10.0,
               sigma=0.1):
    """Reference MLP: one hidden layer, conventional output layer."""
    if mf:
        first = {"kind": "mf_dense", "in_dim": in_dim, "out_dim": hidden,
                 "beta": beta, "sigma": sigma}
    else:
        first = {"kind": "dense", "in_dim": in_dim, "out_dim": hidden}
    return [first, {"kind": "dense", "in_dim": hidden, "out_dim": classes,
                    "relu": False}]


def fold_batchnorm_lite(model: Model) -> Model:
    """Fold each affine batchnorm into the preceding mf layer's alpha/b."""
    out = []
    for layer in model.layers:
        if (isinstance(layer, BatchNormLite) and out
                and isinstance(out[-1], (MFDense, ConvMF))):
            prev = out[-1]
            gamma, beta = layer.params["gamma"], layer.params["beta"]
            prev.params["alpha_raw"] = prev.params["alpha_raw"] * gamma
            prev.params["b"] = prev.params["b"] * gamma + beta
        else:
            out.append(layer)
    return Model(out)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    epochs: int = 5
    batch_size: int = 128
    lr: float = 0.01
    momentum: float = 0.9
    seed: int = 0
    lr_schedule: tuple | None = None   # per-epoch rates, overrides lr
    smooth_forward: bool = False   # True: differentiable forward for FD checks
    verbose: bool = False

    def epoch_lr(self, epoch: int) -> float:
        if self.lr_schedule is None:
            return self.lr
        return self.lr_schedule[min(epoch, len(self.lr_schedule) - 1)]


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits, labels):
    p = _softmax(logits)
    n = logits.shape[0]
    loss = -np.mean(np.log(p[np.arange(n), labels] + 1e-300))
    grad = p
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


def train(model: Model, x_train, y_train, cfg: TrainConfig,
          x_test=None, y_test=None):
    """Minibatch SGD; deterministic for a fixed seed and config.

    Returns the per-epoch history: loss, train accuracy and (when a test
    split is supplied) test accuracy.  A non-finite loss aborts with
    TrainingDiverged.
    """
    rng = np.random.default_rng(cfg.seed)
    velocity = {key: np.zeros_like(val) for key, _, _, val in model.parameters()}
    n = x_train.shape[0]
    history = []
    for epoch in range(cfg.epochs):
        lr = cfg.epoch_lr(epoch)
        order = rng.permutation(n)
        epoch_loss = 0.0
        batches = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            logits = model.forward(x_train[idx], smooth=cfg.smooth_forward)
            loss, grad = cross_entropy(logits, y_train[idx])
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch} batch {batches} "
                    f"(lr={lr}); lower the learning rate")
            epoch_loss += loss
            batches += 1
            model.backward(grad)
            for key, layer, name, value in model.parameters():
                v = velocity[key]
                v *= cfg.momentum
                v += layer.grads[name]
                value -= lr * v
        entry = {
            "epoch": epoch,
            "loss": epoch_loss / max(batches, 1),
            "train_acc": accuracy(model, x_train, y_train),
        }
        if x_test is not None:
            entry["test_acc"] = accuracy(model, x_test, y_test)
        if cfg.verbose:
            print("  " + "  ".join(f"{k}={v:.4f}" if isinstance(v, float) else
                                   f"{k}={v}" for k, v in entry.items()))
        history.append(entry)
    return history


def accuracy(model: Model, x, y, batch_size=1024) -> float:
    hits = 0
    for start in range(0, x.shape[0], batch_size):
        logits = model.forward(x[start:start + batch_size])
        hits += int(np.sum(np.argmax(logits, axis=1) == y[start:start + batch_size]))
    return hits / x.shape[0]


# ---------------------------------------------------------------------------
# fixed-point / macro-backed inference
# ---------------------------------------------------------------------------

def _quantize_rows(x, m_bits):
    """Per-sample symmetric quantization: returns (ints, scales)."""
    peak = np.max(np.abs(x), axis=1)
    scale = np.where(peak > 0, peak / (2 ** m_bits - 1), 1.0)
    ints = _round_half_away(x / scale[:, None]).astype(np.int64)
    return ints, scale


def _bitplanes(ints, m_bits):
    """(m_bits, ...) uint8 planes of |ints|, LSB first."""
    mags = np.abs(ints)
    return ((mags[None, ...] >> np.arange(m_bits).reshape(
        (m_bits,) + (1,) * ints.ndim)) & 1).astype(np.int64)


def _mf_fixed_dense(x_int, x_scale, layer: MFDense, m_bits, decode,
                    weight_lsb_skip=0):
    """Integer evaluation of an mf dense layer, one ADC decode per
    bitplane count per column chunk.

    decode(counts) -> decoded counts; identity reproduces the exact
    functional fixed-point value, ideal_decode reproduces the macro.
    weight_lsb_skip drops that many low-significance weight bitplanes,
    the runtime precision-scaling knob.
    """
    w = layer.params["w"]
    peak = np.max(np.abs(w))
    w_scale = peak / (2 ** m_bits - 1) if peak > 0 else 1.0
    w_int = _round_half_away(w / w_scale).astype(np.int64)
    if weight_lsb_skip > 0:
        mags = (np.abs(w_int) >> weight_lsb_skip) << weight_lsb_skip
        w_int = np.where(w_int < 0, -mags, mags)

    step_x = (x_int >= 0).astype(np.int64)
    step_w = (w_int >= 0).astype(np.int64)
    planes_x = _bitplanes(x_int, m_bits)
    planes_w = _bitplanes(w_int, m_bits)

    n_in = x_int.shape[1]
    chunk = decode.columns or n_in
    a_sum = np.zeros((x_int.shape[0], w.shape[0]), dtype=np.int64)
    b_sum = np.zeros_like(a_sum)
    r_sum = np.zeros(x_int.shape[0], dtype=np.int64)
    sum_abs_w = np.abs(w_int).sum(axis=1)

    for lo in range(0, n_in, chunk):
        hi = min(lo + chunk, n_in)
        sx, sw = step_x[:, lo:hi], step_w[:, lo:hi]
        for p in range(m_bits):
            weight = 1 << p
            a_sum += weight * decode(sx @ planes_w[p][:, lo:hi].T)
            b_sum += weight * decode(planes_x[p][:, lo:hi] @ sw.T)
            r_sum += weight * decode(planes_x[p][:, lo:hi].sum(axis=1))
    z = w_scale * (2 * a_sum - sum_abs_w[None, :]) \
        + x_scale[:, None] * (2 * b_sum - r_sum[:, None])
    return z * layer.alpha + layer.params["b"]


def _dense_fixed(x_int, x_scale, layer: DenseLayer, m_bits):
    w = layer.params["w"]
    peak = np.max(np.abs(w))
    w_scale = peak / (2 ** m_bits - 1) if peak > 0 else 1.0
    w_int = _round_half_away(w / w_scale).astype(np.int64)
    y = (x_int @ w_int.T) * (x_scale[:, None] * w_scale) + layer.params["b"]
    if layer.relu:
        y = np.maximum(y, 0.0)
    return y


class _AdcDecode:
    """Bitplane-count decode through a given array geometry."""

    def __init__(self, columns_per_half, adc_bits):
        self.columns = columns_per_half
        self.adc_bits = adc_bits

    def __call__(self, counts):
        return ideal_decode(counts, self.columns, self.adc_bits)


class _ExactDecode:
    """Functional fixed-point reference: counts pass through unchanged.

    Carries the same chunking as the ADC path so both walks are
    arithmetically identical when the ADC is lossless.
    """

    def __init__(self, columns_per_half=None):
        self.columns = columns_per_half

    def __call__(self, counts):
        return counts


def quantized_forward(model: Model, x, m_bits=7, adc=None, weight_lsb_skip=0):
    """Fixed-point inference; adc=(columns_per_half, adc_bits) routes every
    bitplane count through the SA-ADC decode, adc=None is the exact
    functional path."""
    if adc is not None:
        decode = _AdcDecode(*adc)
    else:
        decode = _ExactDecode()
    x_int, x_scale = _quantize_rows(x, m_bits)
    y = x
    for layer in model.layers:
        if isinstance(layer, MFDense):
            y = _mf_fixed_dense(x_int, x_scale, layer, m_bits, decode,
                                weight_lsb_skip)
        elif isinstance(layer, DenseLayer):
            y = _dense_fixed(x_int, x_scale, layer, m_bits)
        elif isinstance(layer, BatchNormLite):
            y = (x_int * x_scale[:, None]) * layer.params["gamma"] \
                + layer.params["beta"]
        elif isinstance(layer, Flatten):
            continue
        else:
            raise NotImplementedError(
                f"fixed-point path supports dense models only, got {layer.kind}")
        x_int, x_scale = _quantize_rows(y, m_bits)
    return y


def evaluate(model: Model, data, quantization=None, adc=None,
             batch_size=512, center=True, weight_lsb_skip=0) -> float:
    """Top-1 accuracy; optionally through the fixed-point/macro path.

    data is a Dataset or an (images, labels) pair of arrays; images are
    scaled to [0,1] and mean-shifted by 0.5 so operand signs are
    informative.
    """
    if isinstance(data, Dataset):
        x = data.normalized().reshape(len(data), -1)
        y = data.labels
    else:
        x, y = data
        x = x.reshape(x.shape[0], -1)
    if x.shape[0] == 0:
        raise ValueError("empty dataset")
    if center:
        x = x - 0.5
    hits = 0
    for start in range(0, x.shape[0], batch_size):
        xb = x[start:start + batch_size]
        if quantization is None:
            logits = model.forward(xb)
        else:
            logits = quantized_forward(model, xb, m_bits=quantization, adc=adc,
                                       weight_lsb_skip=weight_lsb_skip)
        hits += int(np.sum(np.argmax(logits, axis=1) == y[start:start + batch_size]))
    return hits / x.shape[0]
