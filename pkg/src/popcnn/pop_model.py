"""The pleasantness network: conv(sensors x 4) -> ReLU -> conv(1 x 4) -> ReLU -> dense(1).

The first kernel spans every sensor row, so its feature maps have height 1;
both convolutions share the same horizontal stride in place of pooling.
With 16 sensors, width 250 and stride 2 the feature maps are 124 and 61
columns wide.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .tensor_nn import (
    ConvLayer,
    DenseLayer,
    batch_mse,
    conv_backward,
    conv_forward,
    dense_backward,
    dense_forward,
    glorot_uniform,
    load_layers,
    relu_backward,
    relu_forward,
    save_layers,
)

KERNEL_WIDTH = 4


@dataclass(frozen=True)
class PopConfig:
    sensors: int = 16
    width: int = 250
    filters1: int = 8
    filters2: int = 16
    stride_w: int = 2
    seed: int = 0

    def feature_widths(self) -> tuple[int, int]:
        w1 = (self.width - KERNEL_WIDTH) // self.stride_w + 1
        w2 = (w1 - KERNEL_WIDTH) // self.stride_w + 1
        return w1, w2

    def validate(self) -> None:
        if self.sensors < 1:
            raise ConfigError(f"sensors must be >= 1, got {self.sensors}")
        if self.filters1 < 1 or self.filters2 < 1:
            raise ConfigError("filter counts must be >= 1")
        if self.stride_w < 1:
            raise ConfigError(f"stride_w must be >= 1, got {self.stride_w}")
        if self.width < 8:
            raise ConfigError(f"width must be >= 8, got {self.width}")
        w1 = (self.width - KERNEL_WIDTH) // self.stride_w + 1
        if w1 < KERNEL_WIDTH:
            raise ConfigError(
                f"width {self.width} at stride {self.stride_w} leaves {w1} columns "
                f"after the first convolution, fewer than the second kernel's {KERNEL_WIDTH}"
            )


class PopNetwork:
    def __init__(self, conv1: ConvLayer, conv2: ConvLayer, head: DenseLayer,
                 input_shape: tuple[int, int]):
        self.conv1 = conv1
        self.conv2 = conv2
        self.head = head
        self.input_shape = (int(input_shape[0]), int(input_shape[1]))
        h, w = self.input_shape
        oh1, w1 = conv1.output_shape(h, w)
        oh2, w2 = conv2.output_shape(oh1, w1)
        if oh1 < 1 or w1 < 1 or oh2 < 1 or w2 < 1:
            raise ConfigError(f"input {h}x{w} too small for the convolution stack")
        if conv2.kernels.shape[1] != conv1.kernels.shape[0]:
            raise ConfigError("conv2 input channels do not match conv1 filters")
        if head.weights.shape != (1, conv2.kernels.shape[0] * oh2 * w2):
            raise ConfigError(
                f"head weights {head.weights.shape} do not match flattened "
                f"features {conv2.kernels.shape[0] * oh2 * w2}"
            )

    @property
    def layers(self):
        return [self.conv1, self.conv2, self.head]

    def feature_widths(self) -> tuple[int, int]:
        oh1, w1 = self.conv1.output_shape(*self.input_shape)
        _, w2 = self.conv2.output_shape(oh1, w1)
        return w1, w2

    def parameters(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.parameters()]

    def decay_mask(self) -> list[bool]:
        """True for weight arrays, False for biases."""
        return [True, False] * len(self.layers)

    def _as_batch(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 2:
            x = x[None, None]
        elif x.ndim == 3:
            x = x[:, None]
        if x.ndim != 4 or x.shape[1] != 1 or x.shape[2:] != self.input_shape:
            raise ValueError(
                f"input shape {x.shape[-2:]} does not match network input "
                f"(sensors={self.input_shape[0]}, width={self.input_shape[1]})"
            )
        return x

    def forward(self, x):
        """Predictions for a batch plus the activations needed for backprop."""
        x = self._as_batch(x)
        z1 = conv_forward(x, self.conv1)
        a1 = relu_forward(z1)
        z2 = conv_forward(a1, self.conv2)
        a2 = relu_forward(z2)
        pred = dense_forward(a2, self.head)[:, 0]
        return pred, (x, z1, a1, z2, a2)

    def backward(self, cache, dpred) -> list[np.ndarray]:
        x, z1, a1, z2, a2 = cache
        g_head = dense_backward(a2, self.head, np.asarray(dpred).reshape(-1, 1))
        g2 = conv_backward(a1, self.conv2, relu_backward(z2, g_head.input))
        g1 = conv_backward(x, self.conv1, relu_backward(z1, g2.input), need_input_grad=False)
        return [g1.kernels, g1.biases, g2.kernels, g2.biases, g_head.weights, g_head.bias]

    def loss_and_grads(self, x, y):
        """Mean squared error over the batch and gradients of every parameter."""
        pred, cache = self.forward(x)
        loss, dpred = batch_mse(pred, np.asarray(y, dtype=np.float64).reshape(-1))
        return loss, self.backward(cache, dpred)

    def predict_batch(self, x) -> np.ndarray:
        return self.forward(x)[0]

    def save(self, path) -> None:
        save_layers(path, self.layers, self.input_shape)

    @classmethod
    def load(cls, path) -> "PopNetwork":
        layers, input_shape = load_layers(path)
        if len(layers) != 3 or not (
            isinstance(layers[0], ConvLayer)
            and isinstance(layers[1], ConvLayer)
            and isinstance(layers[2], DenseLayer)
        ):
            raise ValueError(f"{path}: expected conv, conv, dense layers")
        return cls(*layers, input_shape=input_shape)


def build(config: PopConfig = PopConfig()) -> PopNetwork:
    config.validate()
    rng = np.random.default_rng(config.seed)
    m, kw, s = config.sensors, KERNEL_WIDTH, config.stride_w
    w1, w2 = config.feature_widths()
    f1, f2 = config.filters1, config.filters2
    conv1 = ConvLayer(
        glorot_uniform(rng, (f1, 1, m, kw), fan_in=m * kw, fan_out=f1 * m * kw),
        np.zeros(f1),
        (1, s),
    )
    conv2 = ConvLayer(
        glorot_uniform(rng, (f2, f1, 1, kw), fan_in=f1 * kw, fan_out=f2 * kw),
        np.zeros(f2),
        (1, s),
    )
    n_feat = f2 * w2
    head = DenseLayer(glorot_uniform(rng, (1, n_feat), fan_in=n_feat, fan_out=1), np.zeros(1))
    return PopNetwork(conv1, conv2, head, (m, config.width))


def predict(network: PopNetwork, matrix) -> float:
    """Scalar pleasantness for one normalized sensor matrix; > 0 means pleasant."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.shape != network.input_shape:
        raise ValueError(
            f"matrix shape {matrix.shape} does not match network input {network.input_shape}"
        )
    return float(network.predict_batch(matrix[None, None])[0])


def predict_odor(network: PopNetwork, matrices) -> float:
    """Median prediction over the repeats of one odor."""
    matrices = list(matrices)
    if not matrices:
        raise ValueError("predict_odor needs at least one repeat")
    preds = network.predict_batch(np.stack([np.asarray(m, dtype=np.float64) for m in matrices]))
    return float(np.median(preds))
