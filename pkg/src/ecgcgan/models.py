"""Conditional generator and dual-headed discriminator for 280-sample beats."""

from __future__ import annotations

import math

import numpy as np

from .nn import (
    BatchNorm,
    Conv1d,
    ConvTranspose1d,
    Dense,
    Flatten,
    LeakyReLU,
    Sequential,
    Sigmoid,
    Softmax,
)

BEAT_LENGTH = 280
N_CLASSES = 4

GEN_ENCODER_WIDTHS = (32, 32, 64, 64, 128, 128)
GEN_ENCODER_STRIDES = (1, 2, 1, 2, 1, 2)
GEN_DECODER_WIDTHS = (128, 64, 32)

DISC_CONV_WIDTHS = (16, 16, 32, 32, 128, 128, 256, 256)
DISC_CONV_STRIDES = (1, 2, 1, 2, 1, 2, 1, 2)
DISC_DENSE_WIDTHS = (64, 32)


class LabelError(ValueError):
    pass


def one_hot(labels, n_classes: int = N_CLASSES) -> np.ndarray:
    labels = np.asarray(labels, dtype=int)
    out = np.zeros((labels.size, n_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def check_one_hot(y: np.ndarray, n_classes: int = N_CLASSES) -> np.ndarray:
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if y.shape[1] != n_classes:
        raise LabelError(f"label must have {n_classes} entries, got {y.shape[1]}")
    if not np.all((y == 0) | (y == 1)) or not np.all(y.sum(axis=1) == 1):
        raise LabelError("label is not a valid one-hot vector")
    return y


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Discrete Gaussian, radius ``ceil(3 * sigma)``, normalized to sum 1."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    radius = math.ceil(3 * sigma)
    t = np.arange(-radius, radius + 1, dtype=float)
    k = np.exp(-0.5 * (t / sigma) ** 2)
    return k / k.sum()


def gaussian_smooth(v: np.ndarray, sigma: float) -> np.ndarray:
    """Smooth along the last axis with reflective boundaries."""
    k = gaussian_kernel(sigma)
    r = len(k) // 2
    v = np.asarray(v, dtype=float)
    pad = [(0, 0)] * (v.ndim - 1) + [(r, r)]
    vp = np.pad(v, pad, mode="reflect")
    windows = np.lib.stride_tricks.sliding_window_view(vp, len(k), axis=-1)
    return windows @ k


def make_noise(rng, n: int | None = None, sigma: float = 4.0, length: int = BEAT_LENGTH) -> np.ndarray:
    """Uniform [0, 1] noise smoothed by a Gaussian and clipped back to [0, 1].

    ``rng`` is a seed or a ``numpy.random.Generator``. Returns shape
    ``(length,)`` when ``n`` is None, else ``(n, length)``.
    """
    rng = np.random.default_rng(rng)
    raw = rng.random((1 if n is None else n, length))
    z = np.clip(gaussian_smooth(raw, sigma), 0.0, 1.0)
    return z[0] if n is None else z


def _scaled(widths, width: float) -> list[int]:
    return [max(1, int(round(w * width))) for w in widths]


def _batch(x: np.ndarray, length: int) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x))
    if x.shape[-1] != length:
        raise ValueError(f"signal must have {length} samples, got {x.shape[-1]}")
    return x


class GeneratorModel:
    """Encoder/decoder that maps (beat, noise, label) to a synthetic beat.

    The input is assembled channels-last as ``[x, z, y0..y3]`` with the
    one-hot label broadcast along the length axis. Six stride-1/stride-2
    convolutions downsample 280 -> 35, three transposed convolutions bring it
    back to 280, and a kernel-3 convolution to one channel plus sigmoid
    produces the output.
    """

    kind = "generator"

    def __init__(self, width: float = 1.0, slope: float = 0.2, seed: int = 0,
                 bn_momentum: float = 0.9, bn_eps: float = 1e-5, length: int = BEAT_LENGTH):
        self.config = {
            "width": width, "slope": slope, "bn_momentum": bn_momentum,
            "bn_eps": bn_eps, "length": length,
        }
        self.seed = seed
        rng = np.random.default_rng(seed)
        layers = []
        in_ch = 2 + N_CLASSES
        for w, s in zip(_scaled(GEN_ENCODER_WIDTHS, width), GEN_ENCODER_STRIDES):
            layers += [Conv1d(in_ch, w, 3, s, 1, rng), BatchNorm(w, bn_momentum, bn_eps), LeakyReLU(slope)]
            in_ch = w
        for w in _scaled(GEN_DECODER_WIDTHS, width):
            layers += [ConvTranspose1d(in_ch, w, 3, 2, 1, 1, rng), BatchNorm(w, bn_momentum, bn_eps), LeakyReLU(slope)]
            in_ch = w
        layers += [Conv1d(in_ch, 1, 3, 1, 1, rng), Sigmoid()]
        self.net = Sequential(layers)
        self.length = length
        if self.net.out_length(length) != length:
            raise ValueError(f"generator does not round-trip length {length}")

    @property
    def dtype(self):
        return next(iter(self.parameters().values())).data.dtype

    def parameters(self):
        return self.net.parameters()

    def buffers(self):
        return self.net.buffers()

    def zero_grad(self):
        for p in self.parameters().values():
            p.zero_grad()

    def astype(self, dtype):
        self.net.astype(dtype)
        return self

    def length_trace(self) -> list[int]:
        """Sequence length after every resampling convolution."""
        trace, length = [self.length], self.length
        for layer in self.net:
            if isinstance(layer, (Conv1d, ConvTranspose1d)):
                new = layer.out_length(length)
                if new != length:
                    trace.append(new)
                length = new
        return trace

    def assemble(self, x, y, z) -> np.ndarray:
        x = _batch(x, self.length)
        z = _batch(z, self.length)
        y = check_one_hot(y)
        if not (len(x) == len(y) == len(z)):
            raise ValueError("x, y and z must have the same batch size")
        labels = np.broadcast_to(y[:, None, :], (len(x), self.length, N_CLASSES))
        return np.concatenate([x[..., None], z[..., None], labels], axis=2).astype(self.dtype, copy=False)

    def forward(self, x, y, z, training: bool = False) -> np.ndarray:
        return self.net.forward(self.assemble(x, y, z), training)[..., 0]

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        return self.net.backward(grad_out[..., None])

    def __call__(self, x, y, z) -> np.ndarray:
        return self.forward(x, y, z, training=False)


class _DiscriminatorNet:
    """Shared trunk plus the class and realness heads, as one differentiable unit."""

    def __init__(self, trunk: Sequential, class_head: Sequential, real_head: Sequential):
        self.trunk, self.class_head, self.real_head = trunk, class_head, real_head

    def _parts(self):
        return (("trunk", self.trunk), ("class_head", self.class_head), ("real_head", self.real_head))

    def parameters(self):
        return {f"{n}.{k}": p for n, part in self._parts() for k, p in part.parameters().items()}

    def buffers(self):
        return {f"{n}.{k}": b for n, part in self._parts() for k, b in part.buffers().items()}

    def astype(self, dtype):
        for _, part in self._parts():
            part.astype(dtype)

    def kink_inputs(self):
        return [k for _, part in self._parts() for k in part.kink_inputs()]

    def forward(self, inp, training=False):
        h = self.trunk.forward(inp, training)
        return self.class_head.forward(h, training), self.real_head.forward(h, training)[:, 0]

    def backward(self, grads):
        g_probs, g_real = grads
        gh = self.class_head.backward(g_probs) + self.real_head.backward(np.asarray(g_real)[:, None])
        return self.trunk.backward(gh)


class DiscriminatorModel:
    """Eight-convolution trunk, two dense layers, and two output heads.

    ``condition_on_label`` adds the one-hot label as four constant input
    channels. It is off by default: a class head that can read the label
    would be scored on information it is not supposed to have at test time.
    """

    kind = "discriminator"

    def __init__(self, width: float = 1.0, slope: float = 0.2, seed: int = 0,
                 condition_on_label: bool = False, bn_momentum: float = 0.9,
                 bn_eps: float = 1e-5, length: int = BEAT_LENGTH):
        self.config = {
            "width": width, "slope": slope, "condition_on_label": condition_on_label,
            "bn_momentum": bn_momentum, "bn_eps": bn_eps, "length": length,
        }
        self.seed = seed
        self.length = length
        self.condition_on_label = condition_on_label
        rng = np.random.default_rng(seed)
        layers = []
        in_ch = 1 + (N_CLASSES if condition_on_label else 0)
        conv_len = length
        for w, s in zip(_scaled(DISC_CONV_WIDTHS, width), DISC_CONV_STRIDES):
            conv = Conv1d(in_ch, w, 3, s, 1, rng)
            conv_len = conv.out_length(conv_len)
            layers += [conv, BatchNorm(w, bn_momentum, bn_eps), LeakyReLU(slope)]
            in_ch = w
        layers.append(Flatten())
        features = conv_len * in_ch
        for w in _scaled(DISC_DENSE_WIDTHS, width):
            layers += [Dense(features, w, rng), LeakyReLU(slope)]
            features = w
        self.flat_length = conv_len
        self.net = _DiscriminatorNet(
            Sequential(layers),
            Sequential([Dense(features, N_CLASSES, rng), Softmax()]),
            Sequential([Dense(features, 1, rng), Sigmoid()]),
        )

    @property
    def dtype(self):
        return next(iter(self.parameters().values())).data.dtype

    def parameters(self):
        return self.net.parameters()

    def buffers(self):
        return self.net.buffers()

    def zero_grad(self):
        for p in self.parameters().values():
            p.zero_grad()

    def astype(self, dtype):
        self.net.astype(dtype)
        return self

    def set_stat_updates(self, enabled: bool) -> None:
        for layer in self.net.trunk:
            if isinstance(layer, BatchNorm):
                layer.update_stats = enabled

    def length_trace(self) -> list[int]:
        trace, length = [self.length], self.length
        for layer in self.net.trunk:
            if isinstance(layer, Conv1d):
                new = layer.out_length(length)
                if new != length:
                    trace.append(new)
                length = new
        return trace

    def assemble(self, s, y=None) -> np.ndarray:
        s = _batch(s, self.length)
        channels = [s[..., None]]
        if self.condition_on_label:
            if y is None:
                raise LabelError("this discriminator is label-conditioned; a label is required")
            y = check_one_hot(y)
            if len(y) != len(s):
                raise ValueError("signal and label batch sizes differ")
            channels.append(np.broadcast_to(y[:, None, :], (len(s), self.length, N_CLASSES)))
        elif y is not None:
            check_one_hot(y)
        return np.concatenate(channels, axis=2).astype(self.dtype, copy=False)

    def forward(self, s, y=None, training: bool = False):
        """Return ``(class_probs [batch, 4], realness [batch])``."""
        return self.net.forward(self.assemble(s, y), training)

    def backward(self, grad_probs, grad_realness) -> np.ndarray:
        """Backpropagate both heads; returns the gradient w.r.t. the signal channel."""
        return self.net.backward((grad_probs, grad_realness))[..., 0]

    def __call__(self, s, y=None):
        return self.forward(s, y, training=False)
