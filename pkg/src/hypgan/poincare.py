"""Poincare-ball operations, batched over rows and differentiable.

All functions take ``(N, n)`` tensors whose rows are points (or tangent
vectors) and a :class:`Curvature`. Results that are ball points are
projected back inside the ball with a small relative margin.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .autodiff import TINY_NORM, DomainError, Tensor, as_tensor

# atanh arguments are clamped here to keep the map finite near the boundary.
ATANH_LIMIT = 1.0 - 1e-10


@dataclass(frozen=True)
class Curvature:
    """Positive curvature parameter ``c``; the ball has radius ``1/sqrt(c)``."""

    c: float
    boundary_margin: float = 1e-5

    def __post_init__(self):
        c = float(self.c)
        if not math.isfinite(c) or c <= 0.0:
            raise ValueError(f"curvature must be a positive finite number, got {self.c!r}")
        if not 0.0 < self.boundary_margin < 1.0:
            raise ValueError("boundary_margin must lie in (0, 1)")
        object.__setattr__(self, "c", c)

    @property
    def sqrt_c(self) -> float:
        return math.sqrt(self.c)

    @property
    def radius(self) -> float:
        return 1.0 / self.sqrt_c

    @property
    def max_norm(self) -> float:
        return (1.0 - self.boundary_margin) / self.sqrt_c


def as_curvature(c) -> Curvature:
    return c if isinstance(c, Curvature) else Curvature(float(c))


def _sq(x: Tensor) -> Tensor:
    return (x * x).sum(axis=-1, keepdims=True)


def _safe_norm(x: Tensor) -> Tensor:
    return x.norm().clamp(lo=TINY_NORM)


def in_ball(u, c) -> np.ndarray:
    """Boolean per row: ``c * ||u||^2 < 1``."""
    c = as_curvature(c)
    data = as_tensor(u).data
    return c.c * (data * data).sum(axis=-1) < 1.0


def project_to_ball(u, c) -> Tensor:
    """Radially pull rows with norm >= (1 - margin) * r back to that norm."""
    c = as_curvature(c)
    u = as_tensor(u)
    n = u.norm()
    # equals 1 for interior rows, max_norm / ||u|| otherwise
    scale = c.max_norm / n.clamp(lo=c.max_norm)
    return u * scale


def conformal_factor(u, c) -> Tensor:
    """``2 / (1 - c ||u||^2)`` per row, shape (N, 1)."""
    c = as_curvature(c)
    u = as_tensor(u)
    if not np.all(in_ball(u, c)):
        raise DomainError("conformal factor requested for a point on or outside the ball")
    return 2.0 / (1.0 - c.c * _sq(u))


def mobius_add(u, v, c) -> Tensor:
    c = as_curvature(c)
    u, v = as_tensor(u), as_tensor(v)
    if u.shape[-1] != v.shape[-1]:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    cc = c.c
    uv = (u * v).sum(axis=-1, keepdims=True)
    u2, v2 = _sq(u), _sq(v)
    num = (1.0 + 2.0 * cc * uv + cc * v2) * u + (1.0 - cc * u2) * v
    den = 1.0 + 2.0 * cc * uv + cc * cc * u2 * v2
    if np.any(den.data <= TINY_NORM):
        raise DomainError("degenerate Mobius addition; operands at the ball boundary")
    return project_to_ball(num / den, c)


def exp_map_zero(x, c) -> Tensor:
    c = as_curvature(c)
    x = as_tensor(x)
    scaled = c.sqrt_c * _safe_norm(x)
    return project_to_ball(scaled.tanh() / scaled * x, c)


def log_map_zero(v, c) -> Tensor:
    c = as_curvature(c)
    v = as_tensor(v)
    scaled = c.sqrt_c * _safe_norm(v)
    return scaled.clamp(hi=ATANH_LIMIT).atanh() / scaled * v


def exp_map(u, x, c) -> Tensor:
    """Exponential map at base point ``u`` applied to tangent rows ``x``."""
    c = as_curvature(c)
    u, x = as_tensor(u), as_tensor(x)
    n = _safe_norm(x)
    lam = conformal_factor(u, c)
    step = (c.sqrt_c * lam * n * 0.5).tanh() / (c.sqrt_c * n) * x
    return mobius_add(u, project_to_ball(step, c), c)


def log_map(u, v, c) -> Tensor:
    """Logarithmic map at base point ``u``; inverse of :func:`exp_map`."""
    c = as_curvature(c)
    u, v = as_tensor(u), as_tensor(v)
    w = mobius_add(-u, v, c)
    n = _safe_norm(w)
    lam = conformal_factor(u, c)
    return 2.0 / (c.sqrt_c * lam) * (c.sqrt_c * n).clamp(hi=ATANH_LIMIT).atanh() / n * w


def mobius_scalar_mul(k: float, v, c) -> Tensor:
    return exp_map_zero(float(k) * log_map_zero(v, c), c)


def mobius_matvec(m, v, c) -> Tensor:
    """``exp0(M log0(v))`` for each row of ``v``; ``m`` has shape (out, in)."""
    m, v = as_tensor(m), as_tensor(v)
    if m.shape[1] != v.shape[-1]:
        raise ValueError(f"matvec shape mismatch: {m.shape} with rows of width {v.shape[-1]}")
    return exp_map_zero(log_map_zero(v, c) @ m.T, c)


def mobius_bias_add(v, b, c) -> Tensor:
    """Translate ``v`` by the ball point ``b``; same as Mobius addition."""
    return mobius_add(v, b, c)


def mobius_fn(f: Callable[[Tensor], Tensor], v, c) -> Tensor:
    """Lift a euclidean map to the ball through the origin's tangent space."""
    return exp_map_zero(f(log_map_zero(v, c)), c)


def hyperbolic_distance(u, v, c) -> Tensor:
    c = as_curvature(c)
    w = mobius_add(-as_tensor(u), v, c)
    return 2.0 / c.sqrt_c * (c.sqrt_c * w.norm()).clamp(hi=ATANH_LIMIT).atanh()
