"""Adversarial objectives for GAN, CGAN and WGAN-GP training."""
from __future__ import annotations

from typing import Callable

import numpy as np

from .autodiff import Tensor, as_tensor, enable_grad, grad

Critic = Callable[[Tensor], Tensor]

DEFAULT_GP_LAMBDA = 10.0


def bce_with_logits(logits, target: float) -> Tensor:
    """Mean of ``-[t log s(z) + (1 - t) log s(-z)]``, written as ``softplus(z) - t z``."""
    z = as_tensor(logits)
    return (z.softplus() - float(target) * z).mean()


def gan_d_loss(d_logits_real, d_logits_fake) -> Tensor:
    return bce_with_logits(d_logits_real, 1.0) + bce_with_logits(d_logits_fake, 0.0)


def gan_g_loss(d_logits_fake) -> Tensor:
    """Non-saturating generator loss, ``-log D(G(z))``."""
    return bce_with_logits(d_logits_fake, 1.0)


# Conditioning enters through the network inputs; the loss formula is unchanged.
cgan_d_loss = gan_d_loss
cgan_g_loss = gan_g_loss


def interpolate(x_real, x_fake, eps) -> np.ndarray:
    """Per-sample ``eps * real + (1 - eps) * fake``; ``eps`` has one entry per row."""
    real = as_tensor(x_real).data
    fake = as_tensor(x_fake).data
    eps = np.asarray(eps, dtype=np.float64).reshape(-1, 1)
    if eps.shape[0] != real.shape[0] or np.any(eps < 0.0) or np.any(eps > 1.0):
        raise ValueError("eps must hold one value in [0, 1] per sample")
    return eps * real + (1.0 - eps) * fake


def gradient_penalty(critic: Critic, x_hat) -> Tensor:
    """``mean((||grad_x D(x)||_2 - 1)^2)`` at the rows of ``x_hat``.

    The input gradient is kept as a graph node so the penalty can be
    differentiated with respect to the critic parameters.
    """
    # the input gradient needs a graph even when the caller is in no_grad mode
    with enable_grad():
        x_hat = Tensor(as_tensor(x_hat).data, requires_grad=True)
        scores = critic(x_hat)
        (g,) = grad(scores.sum(), [x_hat], create_graph=True)
    return ((g.norm() - 1.0) ** 2).mean()


def wgan_gp_d_loss(critic: Critic, x_real, x_fake, eps, gp_lambda: float = DEFAULT_GP_LAMBDA) -> Tensor:
    if gp_lambda <= 0:
        raise ValueError("gp_lambda must be positive")
    x_hat = interpolate(x_real, x_fake, eps)
    wasserstein = critic(as_tensor(x_fake)).mean() - critic(as_tensor(x_real)).mean()
    return wasserstein + gp_lambda * gradient_penalty(critic, x_hat)


def wgan_g_loss(critic: Critic, x_fake) -> Tensor:
    return -critic(as_tensor(x_fake)).mean()
