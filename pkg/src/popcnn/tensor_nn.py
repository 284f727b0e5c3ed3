"""Minimal network engine: strided valid convolution, ReLU, dense, MSE.

Tensors are float64 numpy arrays shaped ``(batch, channels, height, width)``.
Convolution is cross-correlation (no kernel flip) with valid padding and
dense channel connectivity. ``conv_oracle`` is an independent pure-Python
reference used to check ``conv_forward``.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from . import kernels

WEIGHTS_MAGIC = b"POPW"
WEIGHTS_VERSION = 1
_CONV_KIND = 1
_DENSE_KIND = 2


@dataclass
class ConvLayer:
    kernels: np.ndarray  # (out_channels, in_channels, kh, kw)
    biases: np.ndarray  # (out_channels,)
    stride: tuple[int, int] = (1, 1)

    def __post_init__(self):
        self.kernels = np.ascontiguousarray(self.kernels, dtype=np.float64)
        self.biases = np.ascontiguousarray(self.biases, dtype=np.float64)
        self.stride = (int(self.stride[0]), int(self.stride[1]))
        if self.kernels.ndim != 4:
            raise ValueError(f"kernels must be 4-D, got shape {self.kernels.shape}")
        if min(self.kernels.shape[2:]) < 1:
            raise ValueError("kernel height and width must be >= 1")
        if self.biases.shape != (self.kernels.shape[0],):
            raise ValueError(
                f"biases shape {self.biases.shape} does not match "
                f"{self.kernels.shape[0]} output channels"
            )
        if min(self.stride) < 1:
            raise ValueError(f"stride must be positive, got {self.stride}")

    def output_shape(self, height: int, width: int) -> tuple[int, int]:
        kh, kw = self.kernels.shape[2:]
        sh, sw = self.stride
        return (height - kh) // sh + 1, (width - kw) // sw + 1

    def parameters(self) -> list[np.ndarray]:
        return [self.kernels, self.biases]


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)

    def __post_init__(self):
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        self.bias = np.ascontiguousarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2:
            raise ValueError(f"weights must be 2-D, got shape {self.weights.shape}")
        if self.bias.shape != (self.weights.shape[0],):
            raise ValueError(
                f"bias shape {self.bias.shape} does not match {self.weights.shape[0]} outputs"
            )

    def parameters(self) -> list[np.ndarray]:
        return [self.weights, self.bias]


@dataclass
class ConvGrads:
    kernels: np.ndarray
    biases: np.ndarray
    input: np.ndarray | None


@dataclass
class DenseGrads:
    weights: np.ndarray
    bias: np.ndarray
    input: np.ndarray


def _check_conv_input(x, layer: ConvLayer) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 4:
        raise ValueError(f"input must be (batch, channels, height, width), got {x.shape}")
    out_c, in_c, kh, kw = layer.kernels.shape
    if x.shape[1] != in_c:
        raise ValueError(f"input has {x.shape[1]} channels, kernel expects {in_c}")
    if kh > x.shape[2] or kw > x.shape[3]:
        raise ValueError(
            f"kernel {kh}x{kw} larger than input {x.shape[2]}x{x.shape[3]}"
        )
    return x


def conv_forward(x, layer: ConvLayer) -> np.ndarray:
    """Pre-activation of a strided valid convolution.

    Output spatial size is ``(H - kh) // sh + 1`` by ``(W - kw) // sw + 1``.
    """
    x = _check_conv_input(x, layer)
    sh, sw = layer.stride
    return kernels.conv2d_forward(x, layer.kernels, layer.biases, sh, sw)


def conv_oracle(x, layer: ConvLayer) -> np.ndarray:
    """Quadruple-loop reference for :func:`conv_forward`.

    Plain Python floats and explicit window indexing; shares no code with the
    fast path. Only suitable for small inputs.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4:
        raise ValueError(f"input must be (batch, channels, height, width), got {x.shape}")
    kern = layer.kernels
    n_out, n_in, kh, kw = kern.shape
    batch, channels, height, width = x.shape
    if channels != n_in:
        raise ValueError(f"input has {channels} channels, kernel expects {n_in}")
    if kh > height or kw > width:
        raise ValueError(f"kernel {kh}x{kw} larger than input {height}x{width}")
    sh, sw = layer.stride
    oh = (height - kh) // sh + 1
    ow = (width - kw) // sw + 1
    xs = x.tolist()
    ks = kern.tolist()
    out = np.zeros((batch, n_out, oh, ow))
    for b in range(batch):
        for o in range(n_out):
            for r in range(oh):
                for q in range(ow):
                    total = float(layer.biases[o])
                    for c in range(n_in):
                        for i in range(kh):
                            row = xs[b][c][r * sh + i]
                            krow = ks[o][c][i]
                            for j in range(kw):
                                total += row[q * sw + j] * krow[j]
                    out[b, o, r, q] = total
    return out


def conv_backward(x, layer: ConvLayer, upstream, need_input_grad: bool = True) -> ConvGrads:
    x = _check_conv_input(x, layer)
    upstream = np.ascontiguousarray(upstream, dtype=np.float64)
    expected = (x.shape[0], layer.kernels.shape[0], *layer.output_shape(*x.shape[2:]))
    if upstream.shape != expected:
        raise ValueError(f"upstream gradient shape {upstream.shape}, expected {expected}")
    sh, sw = layer.stride
    dk, db, dx = kernels.conv2d_backward(
        x, layer.kernels, upstream, sh, sw, need_input_grad
    )
    return ConvGrads(dk, db, dx)


def relu_forward(x) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x, upstream) -> np.ndarray:
    x = np.asarray(x)
    upstream = np.asarray(upstream)
    if x.shape != upstream.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {upstream.shape}")
    # subgradient 0 at exactly 0
    return np.where(x > 0.0, upstream, 0.0)


def dense_forward(x, layer: DenseLayer) -> np.ndarray:
    """``W x + b`` for a flat vector or a ``(batch, in)`` matrix.

    Any trailing dimensions of a batched input are flattened.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    flat = x.reshape(1, -1) if single else x.reshape(x.shape[0], -1)
    if flat.shape[1] != layer.weights.shape[1]:
        raise ValueError(
            f"dense input length {flat.shape[1]}, layer expects {layer.weights.shape[1]}"
        )
    y = flat @ layer.weights.T + layer.bias
    return y[0] if single else y


def dense_backward(x, layer: DenseLayer, upstream) -> DenseGrads:
    x = np.asarray(x, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    single = x.ndim == 1
    flat = x.reshape(1, -1) if single else x.reshape(x.shape[0], -1)
    g = upstream.reshape(flat.shape[0], -1)
    if flat.shape[1] != layer.weights.shape[1] or g.shape[1] != layer.weights.shape[0]:
        raise ValueError(
            f"dense shapes: input {flat.shape}, upstream {g.shape}, weights {layer.weights.shape}"
        )
    dw = g.T @ flat
    db = g.sum(axis=0)
    dx = (g @ layer.weights).reshape(x.shape)
    return DenseGrads(dw, db, dx)


def mse_loss(pred, target):
    """Squared error and its derivative; elementwise for arrays."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if not (np.all(np.isfinite(pred)) and np.all(np.isfinite(target))):
        raise ValueError("mse_loss received non-finite input")
    diff = pred - target
    if diff.ndim == 0:
        return float(diff * diff), float(2.0 * diff)
    return diff * diff, 2.0 * diff


def batch_mse(pred, target) -> tuple[float, np.ndarray]:
    """Mean squared error over a batch and its gradient w.r.t. each prediction."""
    losses, dpred = mse_loss(pred, target)
    n = losses.size
    return float(losses.mean()), dpred / n


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    s = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=shape)


def gradient_check(network, x, y, epsilon: float = 1e-5) -> float:
    """Largest relative gap between analytic and central-difference gradients.

    ``network`` needs ``parameters()`` returning the live parameter arrays and
    ``loss_and_grads(x, y)`` returning ``(loss, grads)`` with grads in the same
    order. Relative error is ``|a - n| / max(|a|, |n|, 1e-12)``.
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise ValueError(f"epsilon {epsilon} outside [1e-7, 1e-3]")
    _, analytic = network.loss_and_grads(x, y)
    worst = 0.0
    for param, grad in zip(network.parameters(), analytic):
        flat = param.reshape(-1)
        gflat = np.asarray(grad).reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + epsilon
            plus, _ = network.loss_and_grads(x, y)
            flat[idx] = orig - epsilon
            minus, _ = network.loss_and_grads(x, y)
            flat[idx] = orig
            numeric = (plus - minus) / (2.0 * epsilon)
            a = float(gflat[idx])
            denom = max(abs(a), abs(numeric), 1e-12)
            worst = max(worst, abs(a - numeric) / denom)
    return worst


def save_layers(path, layers, input_shape: tuple[int, int]) -> None:
    """Write layers in the POPW binary format.

    Header (little-endian int64 after the magic): version, input height,
    input width, layer count, then per layer a kind code and its shape ints
    (conv: out, in, kh, kw, sh, sw; dense: out, in). Parameters follow as
    float64 in declaration order, each layer's weights before its bias.
    """
    ints = [WEIGHTS_VERSION, int(input_shape[0]), int(input_shape[1]), len(layers)]
    for layer in layers:
        if isinstance(layer, ConvLayer):
            ints += [_CONV_KIND, *layer.kernels.shape, *layer.stride]
        elif isinstance(layer, DenseLayer):
            ints += [_DENSE_KIND, *layer.weights.shape]
        else:
            raise TypeError(f"cannot serialize {type(layer).__name__}")
    with open(path, "wb") as fh:
        fh.write(WEIGHTS_MAGIC)
        fh.write(struct.pack(f"<{len(ints)}q", *ints))
        for layer in layers:
            for p in layer.parameters():
                fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def load_layers(path):
    """Inverse of :func:`save_layers`; returns ``(layers, input_shape)``."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != WEIGHTS_MAGIC:
        raise ValueError(f"{path}: not a POPW weight file")
    pos = 4

    def take(count):
        nonlocal pos
        end = pos + 8 * count
        if end > len(data):
            raise ValueError(f"{path}: truncated weight file")
        vals = struct.unpack(f"<{count}q", data[pos:end])
        pos = end
        return vals

    version, height, width, n_layers = take(4)
    if version != WEIGHTS_VERSION:
        raise ValueError(f"{path}: unsupported format version {version}")
    specs = []
    for _ in range(n_layers):
        (kind,) = take(1)
        if kind == _CONV_KIND:
            specs.append((kind, take(6)))
        elif kind == _DENSE_KIND:
            specs.append((kind, take(2)))
        else:
            raise ValueError(f"{path}: unknown layer kind {kind}")

    def floats(shape):
        nonlocal pos
        count = int(np.prod(shape))
        end = pos + 8 * count
        if end > len(data):
            raise ValueError(f"{path}: truncated weight file")
        arr = np.frombuffer(data[pos:end], dtype="<f8").astype(np.float64).reshape(shape)
        pos = end
        return arr

    layers = []
    for kind, dims in specs:
        if kind == _CONV_KIND:
            o, i, kh, kw, sh, sw = dims
            layers.append(ConvLayer(floats((o, i, kh, kw)), floats((o,)), (sh, sw)))
        else:
            o, i = dims
            layers.append(DenseLayer(floats((o, i)), floats((o,))))
    if pos != len(data):
        raise ValueError(f"{path}: {len(data) - pos} trailing bytes")
    return layers, (height, width)
