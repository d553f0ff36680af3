"""Stateless forward/backward kernels for the 1D layer primitives.

All activations are channels-last: ``[batch, length, channels]`` for sequence
tensors and ``[batch, features]`` for dense tensors. Convolution weights are
laid out ``[kernel, in_channels, out_channels]``.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np


class ShapeError(ValueError):
    """Raised when an input does not match the shape a kernel expects."""


class ConvCache(NamedTuple):
    cols: np.ndarray  # [batch, out_length, kernel, in_channels]
    in_length: int


def conv_output_length(length: int, kernel: int, stride: int, padding: int) -> int:
    return (length + 2 * padding - kernel) // stride + 1


def conv_transpose_output_length(
    length: int, kernel: int, stride: int, padding: int, output_padding: int = 0
) -> int:
    return stride * (length - 1) + kernel - 2 * padding + output_padding


def _check_sequence(x: np.ndarray, in_channels: int, what: str) -> None:
    if x.ndim != 3:
        raise ShapeError(f"{what}: expected [batch, length, channels], got rank {x.ndim}")
    if x.shape[2] != in_channels:
        raise ShapeError(
            f"{what}: channel dimension is {x.shape[2]}, weights expect {in_channels}"
        )


def conv1d_forward(
    x: np.ndarray, weight: np.ndarray, bias: np.ndarray, stride: int = 1, padding: int = 0
) -> tuple[np.ndarray, ConvCache]:
    """Cross-correlation (no kernel flip) plus bias, via im2col."""
    kernel, in_ch, out_ch = weight.shape
    _check_sequence(x, in_ch, "conv1d")
    batch, length, _ = x.shape
    out_len = conv_output_length(length, kernel, stride, padding)
    if out_len < 1:
        raise ShapeError(
            f"conv1d: length {length} too short for kernel {kernel}, padding {padding}"
        )
    xp = np.pad(x, ((0, 0), (padding, padding), (0, 0))) if padding else x
    span = stride * (out_len - 1) + 1
    cols = np.stack([xp[:, k : k + span : stride, :] for k in range(kernel)], axis=2)
    out = cols.reshape(batch * out_len, kernel * in_ch) @ weight.reshape(kernel * in_ch, out_ch)
    out = out.reshape(batch, out_len, out_ch) + bias
    return out, ConvCache(cols, length)


def conv1d_backward(
    grad_out: np.ndarray,
    cache: ConvCache | None,
    weight: np.ndarray,
    stride: int = 1,
    padding: int = 0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(grad_input, grad_weight, grad_bias)``."""
    if cache is None:
        raise RuntimeError("conv1d backward called without a forward cache")
    kernel, in_ch, out_ch = weight.shape
    batch, out_len = cache.cols.shape[:2]
    if grad_out.shape != (batch, out_len, out_ch):
        raise ShapeError(
            f"conv1d backward: grad_out shape {grad_out.shape} != forward output "
            f"{(batch, out_len, out_ch)}"
        )
    g2 = grad_out.reshape(batch * out_len, out_ch)
    grad_w = (cache.cols.reshape(batch * out_len, kernel * in_ch).T @ g2).reshape(weight.shape)
    grad_b = g2.sum(axis=0)
    gcols = (g2 @ weight.reshape(kernel * in_ch, out_ch).T).reshape(batch, out_len, kernel, in_ch)
    gxp = np.zeros((batch, cache.in_length + 2 * padding, in_ch), dtype=grad_out.dtype)
    span = stride * (out_len - 1) + 1
    for k in range(kernel):
        gxp[:, k : k + span : stride, :] += gcols[:, :, k, :]
    return gxp[:, padding : padding + cache.in_length, :], grad_w, grad_b


def conv1d_transpose_forward(
    x: np.ndarray,
    weight: np.ndarray,
    bias: np.ndarray,
    stride: int = 1,
    padding: int = 0,
    output_padding: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Transposed convolution: the adjoint of :func:`conv1d_forward` plus bias.

    Input position ``i`` and tap ``k`` scatter into output position
    ``i * stride + k - padding``. Returns ``(output, cached_input)``.
    """
    kernel, in_ch, out_ch = weight.shape
    _check_sequence(x, in_ch, "conv1d_transpose")
    batch, length, _ = x.shape
    out_len = conv_transpose_output_length(length, kernel, stride, padding, output_padding)
    if out_len <= 0:
        raise ShapeError(f"conv1d_transpose: non-positive output length {out_len}")
    w2 = weight.transpose(1, 0, 2).reshape(in_ch, kernel * out_ch)
    y = (x.reshape(batch * length, in_ch) @ w2).reshape(batch, length, kernel, out_ch)
    span = stride * (length - 1) + 1
    full = np.zeros((batch, max(span + kernel - 1, padding + out_len), out_ch), dtype=y.dtype)
    for k in range(kernel):
        full[:, k : k + span : stride, :] += y[:, :, k, :]
    return full[:, padding : padding + out_len, :] + bias, x


def conv1d_transpose_backward(
    grad_out: np.ndarray,
    cached_input: np.ndarray | None,
    weight: np.ndarray,
    stride: int = 1,
    padding: int = 0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if cached_input is None:
        raise RuntimeError("conv1d_transpose backward called without a forward cache")
    kernel, in_ch, out_ch = weight.shape
    batch, length, _ = cached_input.shape
    out_len = grad_out.shape[1]
    span = stride * (length - 1) + 1
    gfull = np.zeros((batch, max(span + kernel - 1, padding + out_len), out_ch), dtype=grad_out.dtype)
    gfull[:, padding : padding + out_len, :] = grad_out
    gy = np.stack([gfull[:, k : k + span : stride, :] for k in range(kernel)], axis=2)
    gy2 = gy.reshape(batch * length, kernel * out_ch)
    w2 = weight.transpose(1, 0, 2).reshape(in_ch, kernel * out_ch)
    grad_w = (cached_input.reshape(batch * length, in_ch).T @ gy2)
    grad_w = grad_w.reshape(in_ch, kernel, out_ch).transpose(1, 0, 2)
    grad_x = (gy2 @ w2.T).reshape(batch, length, in_ch)
    grad_b = grad_out.sum(axis=(0, 1))
    return grad_x, grad_w, grad_b


class BatchNormCache(NamedTuple):
    xhat: np.ndarray
    inv_std: np.ndarray
    count: int


def batchnorm_forward(
    x: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.9,
    eps: float = 1e-5,
    update_stats: bool = True,
) -> tuple[np.ndarray, BatchNormCache]:
    """Per-channel normalization over every axis except the last.

    In training mode the running statistics are updated in place as
    ``running = momentum * running + (1 - momentum) * batch_stat`` (biased
    batch variance), unless ``update_stats`` is false.
    """
    if x.shape[-1] != gamma.shape[0]:
        raise ShapeError(f"batchnorm: {x.shape[-1]} channels, parameters have {gamma.shape[0]}")
    axes = tuple(range(x.ndim - 1))
    count = int(np.prod(x.shape[:-1]))
    if training:
        if x.shape[0] < 2:
            raise ValueError("batchnorm: training mode needs a batch of at least 2")
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        if update_stats:
            running_mean *= momentum
            running_mean += (1.0 - momentum) * mean
            running_var *= momentum
            running_var += (1.0 - momentum) * var
    else:
        mean, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean) * inv_std
    return gamma * xhat + beta, BatchNormCache(xhat, inv_std, count if training else 0)


def batchnorm_backward(
    grad_out: np.ndarray, cache: BatchNormCache | None, gamma: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if cache is None:
        raise RuntimeError("batchnorm backward called without a forward cache")
    axes = tuple(range(grad_out.ndim - 1))
    grad_gamma = (grad_out * cache.xhat).sum(axis=axes)
    grad_beta = grad_out.sum(axis=axes)
    dxhat = grad_out * gamma
    if cache.count == 0:  # inference mode: statistics are constants
        return dxhat * cache.inv_std, grad_gamma, grad_beta
    n = cache.count
    grad_x = (cache.inv_std / n) * (
        n * dxhat - dxhat.sum(axis=axes) - cache.xhat * (dxhat * cache.xhat).sum(axis=axes)
    )
    return grad_x, grad_gamma, grad_beta


def leaky_relu(x: np.ndarray, slope: float = 0.2) -> np.ndarray:
    return np.where(x >= 0, x, slope * x)


def leaky_relu_backward(grad_out: np.ndarray, x: np.ndarray, slope: float = 0.2) -> np.ndarray:
    return np.where(x >= 0, grad_out, slope * grad_out)


def dense_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    if x.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise ShapeError(
            f"dense: input features {x.shape[-1] if x.ndim else None} != weight rows {weight.shape[0]}"
        )
    return x @ weight + bias


def dense_backward(
    grad_out: np.ndarray, x: np.ndarray | None, weight: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if x is None:
        raise RuntimeError("dense backward called without a forward cache")
    return grad_out @ weight.T, x.T @ grad_out, grad_out.sum(axis=0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def softmax_backward(grad_out: np.ndarray, probs: np.ndarray, axis: int = -1) -> np.ndarray:
    return probs * (grad_out - (grad_out * probs).sum(axis=axis, keepdims=True))
