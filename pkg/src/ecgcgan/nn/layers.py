"""Stateful layer wrappers around :mod:`ecgcgan.nn.functional`.

Each layer caches what its backward pass needs during ``forward`` and
accumulates parameter gradients into ``Tensor.grad`` during ``backward``.
"""

from __future__ import annotations

from typing import Iterator

import numpy as np

from . import functional as F


class Tensor:
    """A parameter array paired with its gradient buffer."""

    __slots__ = ("data", "grad")

    def __init__(self, data, grad=None):
        self.data = np.asarray(data)
        self.grad = grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype)
        else:
            self.grad += g

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype})"


class Layer:
    kind = "layer"

    def parameters(self) -> dict[str, Tensor]:
        return {}

    def buffers(self) -> dict[str, np.ndarray]:
        return {}

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def astype(self, dtype) -> None:
        for p in self.parameters().values():
            p.data = p.data.astype(dtype)
            p.grad = None
        for name, b in self.buffers().items():
            setattr(self, name, b.astype(dtype))

    def out_length(self, length: int) -> int:
        return length

    def kink_inputs(self) -> list[np.ndarray]:
        """Cached inputs whose sign marks a point where the layer is not differentiable."""
        return []


def _normal(rng: np.random.Generator | None, shape, std: float) -> np.ndarray:
    if rng is None:
        return np.zeros(shape)
    return rng.normal(0.0, std, size=shape)


class Conv1d(Layer):
    kind = "conv1d"

    def __init__(self, in_channels, out_channels, kernel=3, stride=1, padding=1, rng=None, init_std=0.02):
        self.kernel, self.stride, self.padding = kernel, stride, padding
        self.weight = Tensor(_normal(rng, (kernel, in_channels, out_channels), init_std))
        self.bias = Tensor(np.zeros(out_channels))
        self._cache = None

    def parameters(self):
        return {"weight": self.weight, "bias": self.bias}

    def forward(self, x, training=False):
        out, self._cache = F.conv1d_forward(x, self.weight.data, self.bias.data, self.stride, self.padding)
        return out

    def backward(self, grad):
        gx, gw, gb = F.conv1d_backward(grad, self._cache, self.weight.data, self.stride, self.padding)
        self.weight.accumulate(gw)
        self.bias.accumulate(gb)
        return gx

    def out_length(self, length):
        return F.conv_output_length(length, self.kernel, self.stride, self.padding)


class ConvTranspose1d(Layer):
    kind = "conv1d_transpose"

    def __init__(
        self, in_channels, out_channels, kernel=3, stride=2, padding=1, output_padding=1, rng=None, init_std=0.02
    ):
        self.kernel, self.stride, self.padding, self.output_padding = kernel, stride, padding, output_padding
        self.weight = Tensor(_normal(rng, (kernel, in_channels, out_channels), init_std))
        self.bias = Tensor(np.zeros(out_channels))
        self._cache = None

    def parameters(self):
        return {"weight": self.weight, "bias": self.bias}

    def forward(self, x, training=False):
        out, self._cache = F.conv1d_transpose_forward(
            x, self.weight.data, self.bias.data, self.stride, self.padding, self.output_padding
        )
        return out

    def backward(self, grad):
        gx, gw, gb = F.conv1d_transpose_backward(grad, self._cache, self.weight.data, self.stride, self.padding)
        self.weight.accumulate(gw)
        self.bias.accumulate(gb)
        return gx

    def out_length(self, length):
        return F.conv_transpose_output_length(length, self.kernel, self.stride, self.padding, self.output_padding)


class BatchNorm(Layer):
    kind = "batchnorm"

    def __init__(self, channels, momentum=0.9, eps=1e-5):
        self.momentum, self.eps = momentum, eps
        self.gamma = Tensor(np.ones(channels))
        self.beta = Tensor(np.zeros(channels))
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        # cleared while a frozen network is used as a loss for the other one
        self.update_stats = True
        self._cache = None

    def parameters(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def buffers(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def forward(self, x, training=False):
        out, self._cache = F.batchnorm_forward(
            x,
            self.gamma.data,
            self.beta.data,
            self.running_mean,
            self.running_var,
            training,
            self.momentum,
            self.eps,
            self.update_stats,
        )
        return out

    def backward(self, grad):
        gx, gg, gb = F.batchnorm_backward(grad, self._cache, self.gamma.data)
        self.gamma.accumulate(gg)
        self.beta.accumulate(gb)
        return gx


class LeakyReLU(Layer):
    kind = "leaky_relu"

    def __init__(self, slope=0.2):
        if not 0.0 < slope < 1.0:
            raise ValueError(f"leaky relu slope must lie in (0, 1), got {slope}")
        self.slope = slope
        self._x = None

    def forward(self, x, training=False):
        self._x = x
        return F.leaky_relu(x, self.slope)

    def backward(self, grad):
        if self._x is None:
            raise RuntimeError("leaky relu backward called without a forward cache")
        return F.leaky_relu_backward(grad, self._x, self.slope)

    def kink_inputs(self):
        return [] if self._x is None else [self._x]


class Dense(Layer):
    kind = "dense"

    def __init__(self, in_features, out_features, rng=None, init_std=0.02):
        self.weight = Tensor(_normal(rng, (in_features, out_features), init_std))
        self.bias = Tensor(np.zeros(out_features))
        self._x = None

    def parameters(self):
        return {"weight": self.weight, "bias": self.bias}

    def forward(self, x, training=False):
        out = F.dense_forward(x, self.weight.data, self.bias.data)
        self._x = x
        return out

    def backward(self, grad):
        gx, gw, gb = F.dense_backward(grad, self._x, self.weight.data)
        self.weight.accumulate(gw)
        self.bias.accumulate(gb)
        return gx


class Flatten(Layer):
    kind = "flatten"

    def __init__(self):
        self._shape = None

    def forward(self, x, training=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._shape)


class Sigmoid(Layer):
    kind = "sigmoid"

    def __init__(self):
        self._y = None

    def forward(self, x, training=False):
        self._y = F.sigmoid(x)
        return self._y

    def backward(self, grad):
        return grad * self._y * (1.0 - self._y)


class Softmax(Layer):
    kind = "softmax"

    def __init__(self):
        self._y = None

    def forward(self, x, training=False):
        self._y = F.softmax(x, axis=-1)
        return self._y

    def backward(self, grad):
        return F.softmax_backward(grad, self._y, axis=-1)


class Sequential(Layer):
    kind = "sequential"

    def __init__(self, layers):
        self.layers = list(layers)

    def __iter__(self) -> Iterator[Layer]:
        return iter(self.layers)

    def __len__(self):
        return len(self.layers)

    def named_layers(self):
        return [(f"{i}.{layer.kind}", layer) for i, layer in enumerate(self.layers)]

    def kink_inputs(self):
        return [k for layer in self.layers for k in layer.kink_inputs()]

    def parameters(self):
        return {
            f"{lname}.{pname}": p
            for lname, layer in self.named_layers()
            for pname, p in layer.parameters().items()
        }

    def buffers(self):
        return {
            f"{lname}.{bname}": b
            for lname, layer in self.named_layers()
            for bname, b in layer.buffers().items()
        }

    def forward(self, x, training=False):
        for layer in self.layers:
            x = layer.forward(x, training)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def astype(self, dtype):
        for layer in self.layers:
            layer.astype(dtype)

    def out_length(self, length):
        for layer in self.layers:
            length = layer.out_length(length)
        return length
