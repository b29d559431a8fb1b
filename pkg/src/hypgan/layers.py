"""Network layers: euclidean and hyperbolic linear maps, boundary maps,
activations and dropout.

Each layer declares the space it consumes and produces (``"euclidean"`` or
``"ball"``) so a network builder can check that consecutive layers agree.
"""
from __future__ import annotations

import math

from .autodiff import Tensor, as_tensor
from .poincare import (
    Curvature,
    as_curvature,
    exp_map_zero,
    log_map_zero,
    mobius_bias_add,
    mobius_matvec,
    project_to_ball,
)
from .rng import Rng

EUCLIDEAN = "euclidean"
BALL = "ball"


def euclidean_linear_forward(weight: Tensor, bias: Tensor, x) -> Tensor:
    x = as_tensor(x)
    if x.shape[-1] != weight.shape[1]:
        raise ValueError(f"input width {x.shape[-1]} does not match weight {weight.shape}")
    return x @ weight.T + bias


def hyperbolic_linear_forward(weight: Tensor, bias: Tensor, v, c) -> Tensor:
    """Mobius matvec followed by Mobius translation by ``exp0(bias)``."""
    c = as_curvature(c)
    bias_point = exp_map_zero(bias.reshape(1, -1), c)
    return mobius_bias_add(mobius_matvec(weight, v, c), bias_point, c)


def hyperbolic_leaky_relu(v, slope: float, c) -> Tensor:
    """LeakyReLU on raw ball coordinates (no log/exp round trip)."""
    return project_to_ball(as_tensor(v).leaky_relu(slope), c)


def dropout_forward(x, rate: float, rng: Rng | None, training: bool) -> Tensor:
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    x = as_tensor(x)
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    mask = rng.keep_mask(x.shape, rate) / (1.0 - rate)
    return x * Tensor(mask)


class Layer:
    in_space = EUCLIDEAN
    out_space = EUCLIDEAN

    def forward(self, x: Tensor, training: bool = False, rng: Rng | None = None) -> Tensor:
        raise NotImplementedError

    def __call__(self, x, training=False, rng=None):
        return self.forward(as_tensor(x), training=training, rng=rng)

    def parameters(self) -> dict[str, Tensor]:
        return {}

    def __repr__(self):
        return type(self).__name__


class _Linear(Layer):
    def __init__(self, in_features: int, out_features: int, rng: Rng):
        self.in_features = int(in_features)
        self.out_features = int(out_features)
        bound = 1.0 / math.sqrt(self.in_features)
        self.weight = Tensor(rng.uniform((self.out_features, self.in_features), -bound, bound), requires_grad=True)
        self.bias = Tensor(rng.uniform((self.out_features,), -bound, bound), requires_grad=True)

    def parameters(self):
        return {"weight": self.weight, "bias": self.bias}


class EuclideanLinear(_Linear):
    def forward(self, x, training=False, rng=None):
        return euclidean_linear_forward(self.weight, self.bias, x)

    def __repr__(self):
        return f"EuclideanLinear({self.in_features}->{self.out_features})"


class HyperbolicLinear(_Linear):
    in_space = BALL
    out_space = BALL

    def __init__(self, in_features, out_features, c, rng):
        super().__init__(in_features, out_features, rng)
        self.c = as_curvature(c)

    def forward(self, x, training=False, rng=None):
        return hyperbolic_linear_forward(self.weight, self.bias, x, self.c)

    def __repr__(self):
        return f"HyperbolicLinear({self.in_features}->{self.out_features}, c={self.c.c:g})"


class ExpMapBoundary(Layer):
    in_space = EUCLIDEAN
    out_space = BALL

    def __init__(self, c):
        self.c = as_curvature(c)

    def forward(self, x, training=False, rng=None):
        return exp_map_zero(x, self.c)

    def __repr__(self):
        return f"ExpMap(c={self.c.c:g})"


class LogMapBoundary(Layer):
    in_space = BALL
    out_space = EUCLIDEAN

    def __init__(self, c):
        self.c = as_curvature(c)

    def forward(self, x, training=False, rng=None):
        return log_map_zero(x, self.c)

    def __repr__(self):
        return f"LogMap(c={self.c.c:g})"


class LeakyReLU(Layer):
    def __init__(self, slope: float = 0.2):
        self.slope = slope

    def forward(self, x, training=False, rng=None):
        return x.leaky_relu(self.slope)


class HyperbolicLeakyReLU(Layer):
    in_space = BALL
    out_space = BALL

    def __init__(self, slope: float, c):
        self.slope = slope
        self.c = as_curvature(c)

    def forward(self, x, training=False, rng=None):
        return hyperbolic_leaky_relu(x, self.slope, self.c)


class Tanh(Layer):
    def forward(self, x, training=False, rng=None):
        return x.tanh()


class Dropout(Layer):
    def __init__(self, rate: float = 0.1):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate

    def forward(self, x, training=False, rng=None):
        return dropout_forward(x, self.rate, rng, training)

    def __repr__(self):
        return f"Dropout({self.rate})"


__all__ = [
    "EUCLIDEAN",
    "BALL",
    "Curvature",
    "Layer",
    "EuclideanLinear",
    "HyperbolicLinear",
    "ExpMapBoundary",
    "LogMapBoundary",
    "LeakyReLU",
    "HyperbolicLeakyReLU",
    "Tanh",
    "Dropout",
    "euclidean_linear_forward",
    "hyperbolic_linear_forward",
    "hyperbolic_leaky_relu",
    "dropout_forward",
]
