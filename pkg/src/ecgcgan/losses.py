"""Least-squares adversarial, categorical cross-entropy and L2 reconstruction losses.

Each loss has a ``*_grad`` companion returning the gradient of the batch
mean with respect to its network-output arguments.
"""

from __future__ import annotations

import numpy as np

PROB_FLOOR = 1e-12


def adversarial_loss_d(d_real, d_fake) -> float:
    """Discriminator least-squares loss with targets real -> 1, fake -> 0."""
    d_real, d_fake = np.asarray(d_real, float), np.asarray(d_fake, float)
    return float(np.mean((d_real - 1.0) ** 2) + np.mean(d_fake**2))


def adversarial_loss_d_grad(d_real, d_fake):
    return 2.0 * (d_real - 1.0) / d_real.size, 2.0 * d_fake / d_fake.size


def adversarial_loss_g(d_fake) -> float:
    d_fake = np.asarray(d_fake, float)
    return float(np.mean((d_fake - 1.0) ** 2))


def adversarial_loss_g_grad(d_fake):
    return 2.0 * (d_fake - 1.0) / d_fake.size


def class_loss(probs, y_true) -> float:
    """Mean categorical cross-entropy; probabilities are floored at 1e-12."""
    probs, y_true = np.atleast_2d(probs), np.atleast_2d(y_true)
    return float(-np.mean(np.sum(y_true * np.log(np.maximum(probs, PROB_FLOOR)), axis=1)))


def class_loss_grad(probs, y_true):
    return -y_true / np.maximum(probs, PROB_FLOOR) * (probs >= PROB_FLOOR) / probs.shape[0]


def reconstruction_loss(g_out, x) -> float:
    """Mean over the batch of the per-beat mean squared difference."""
    g_out, x = np.atleast_2d(g_out), np.atleast_2d(x)
    if g_out.shape != x.shape:
        raise ValueError(f"shape mismatch {g_out.shape} vs {x.shape}")
    return float(np.mean((g_out - x) ** 2))


def reconstruction_loss_grad(g_out, x):
    return 2.0 * (g_out - x) / g_out.size
