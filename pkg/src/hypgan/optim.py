from __future__ import annotations

import numpy as np

from .autodiff import NonFiniteError, Tensor


class Adam:
    """Bias-corrected Adam over a named parameter dict.

    Parameters are updated in place. A step whose gradients contain NaN/Inf
    is rejected before anything is modified.
    """

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-3, betas=(0.5, 0.999), eps: float = 1e-8):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        b1, b2 = betas
        if not (0.0 <= b1 < 1.0 and 0.0 <= b2 < 1.0):
            raise ValueError("betas must lie in [0, 1)")
        self.params = dict(params)
        self.lr = float(lr)
        self.betas = (float(b1), float(b2))
        self.eps = float(eps)
        self.t = 0
        self.m = {k: np.zeros(p.shape) for k, p in self.params.items()}
        self.v = {k: np.zeros(p.shape) for k, p in self.params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self, grads: dict[str, np.ndarray] | None = None) -> None:
        if grads is None:
            grads = {k: (p.grad.data if p.grad is not None else np.zeros(p.shape)) for k, p in self.params.items()}
        for k, g in grads.items():
            if k not in self.params:
                raise KeyError(f"gradient for unknown parameter {k!r}")
            if np.shape(g) != self.params[k].shape:
                raise ValueError(f"gradient shape {np.shape(g)} does not match parameter {k!r}")
            if not np.isfinite(g).all():
                raise NonFiniteError(f"non-finite gradient for {k!r}; step rejected")
        b1, b2 = self.betas
        self.t += 1
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for k, g in grads.items():
            g = np.asarray(g, dtype=np.float64)
            m, v = self.m[k], self.v[k]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            denom = np.sqrt(v / c2)
            denom += self.eps
            p = self.params[k]
            # a fresh array, so tensors captured by an earlier graph keep their values
            p.data = p.data - (self.lr / c1) * m / denom

    def state_dict(self) -> dict:
        return {
            "t": self.t,
            "lr": self.lr,
            "betas": list(self.betas),
            "eps": self.eps,
            "m": {k: a.copy() for k, a in self.m.items()},
            "v": {k: a.copy() for k, a in self.v.items()},
        }

    def load_state_dict(self, state: dict) -> None:
        self.t = int(state["t"])
        self.lr = float(state["lr"])
        self.betas = tuple(float(b) for b in state["betas"])
        self.eps = float(state["eps"])
        for name in ("m", "v"):
            src = state[name]
            if set(src) != set(self.params):
                raise KeyError(f"optimizer state '{name}' does not match parameters")
            setattr(self, name, {k: np.array(src[k], dtype=np.float64) for k in self.params})
