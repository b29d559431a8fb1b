"""Reverse-mode automatic differentiation over dense float64 arrays.

Every operation evaluates eagerly and, when gradient recording is on and an
operand requires a gradient, remembers its parents together with a backward
rule. Backward rules are themselves written with :class:`Tensor` operations,
so running them with recording enabled (``create_graph=True``) yields
gradients that can be differentiated again. The WGAN-GP penalty relies on
this.
"""
from __future__ import annotations

import contextlib
import threading
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "NonFiniteError",
    "GraphError",
    "DomainError",
    "as_tensor",
    "no_grad",
    "enable_grad",
    "is_grad_enabled",
    "grad",
    "concat",
    "TINY_NORM",
]

# Lower bound used wherever a formula divides by a vector norm.
TINY_NORM = 1e-15


class NonFiniteError(FloatingPointError):
    """An operation produced NaN or Inf."""


class DomainError(ValueError):
    """An operand lies outside the domain of a primitive (e.g. atanh(1))."""


class GraphError(RuntimeError):
    """Misuse of the recorded graph (non-scalar root, unreachable input, ...)."""


_mode = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_mode, "enabled", True)


@contextlib.contextmanager
def _grad_mode(enabled: bool):
    prev = is_grad_enabled()
    _mode.enabled = enabled
    try:
        yield
    finally:
        _mode.enabled = prev


def no_grad():
    """Context manager that disables graph recording in the current thread."""
    return _grad_mode(False)


def enable_grad():
    return _grad_mode(True)


def as_tensor(value) -> "Tensor":
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _check_finite(data: np.ndarray, op: str) -> None:
    if not np.isfinite(data).all():
        raise NonFiniteError(f"{op} produced non-finite values")


class Tensor:
    """A float64 array that may carry a node of the autodiff graph."""

    __slots__ = ("data", "requires_grad", "grad", "op", "_parents", "_backward", "_second_order")
    __array_priority__ = 100.0

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        _check_finite(arr, "Tensor")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Tensor | None = None
        self.op = "leaf"
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self._second_order = True

    @classmethod
    def _node(
        cls,
        data: np.ndarray,
        parents: Sequence["Tensor"],
        backward: Callable,
        op: str,
        second_order: bool = True,
    ) -> "Tensor":
        _check_finite(data, op)
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.op = op
        out._second_order = second_order
        if is_grad_enabled() and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward = None
        return out

    # -- basic properties -------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def T(self) -> "Tensor":
        return self.transpose()

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        out = Tensor.__new__(Tensor)
        out.data = self.data
        out.requires_grad = False
        out.grad = None
        out.op = "leaf"
        out._parents = ()
        out._backward = None
        out._second_order = True
        return out

    def requires_grad_(self, flag: bool = True) -> "Tensor":
        self.requires_grad = flag
        return self

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({np.array2string(self.data, precision=6)}{flag})"

    def __len__(self) -> int:
        return len(self.data)

    # -- arithmetic -------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        a_shape, b_shape = self.shape, other.shape

        def backward(g):
            return _unbroadcast(g, a_shape), _unbroadcast(g, b_shape)

        return Tensor._node(self.data + other.data, (self, other), backward, "add")

    __radd__ = __add__

    def __sub__(self, other):
        other = as_tensor(other)
        a_shape, b_shape = self.shape, other.shape

        def backward(g):
            return _unbroadcast(g, a_shape), _unbroadcast(-g, b_shape)

        return Tensor._node(self.data - other.data, (self, other), backward, "sub")

    def __rsub__(self, other):
        return as_tensor(other) - self

    def __mul__(self, other):
        other = as_tensor(other)
        a, b = self, other

        def backward(g):
            return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)

        return Tensor._node(self.data * other.data, (a, b), backward, "mul")

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        a, b = self, other
        if np.any(b.data == 0.0):
            raise NonFiniteError("division by zero")

        def backward(g):
            return _unbroadcast(g / b, a.shape), _unbroadcast(-g * a / (b * b), b.shape)

        return Tensor._node(self.data / other.data, (a, b), backward, "div")

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __neg__(self):
        return Tensor._node(-self.data, (self,), lambda g: (-g,), "neg")

    def __pow__(self, p: float):
        if isinstance(p, Tensor):
            raise TypeError("only constant exponents are supported")
        p = float(p)
        a = self

        def backward(g):
            if p == 1.0:
                return (g,)
            return (g * p * a ** (p - 1.0),)

        return Tensor._node(self.data**p, (a,), backward, "pow")

    def __matmul__(self, other):
        other = as_tensor(other)
        a, b = self, other
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

        def backward(g):
            return g @ b.T, a.T @ g

        with np.errstate(over="ignore", invalid="ignore"):  # caught by the finiteness check
            out = a.data @ b.data
        return Tensor._node(out, (a, b), backward, "matmul")

    def __rmatmul__(self, other):
        return as_tensor(other) @ self

    # -- shape ops ----------------------------------------------------------

    def transpose(self) -> "Tensor":
        return Tensor._node(self.data.T, (self,), lambda g: (g.transpose(),), "transpose")

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        src = self.shape
        return Tensor._node(self.data.reshape(shape), (self,), lambda g: (g.reshape(src),), "reshape")

    def broadcast_to(self, shape) -> "Tensor":
        shape = tuple(shape)
        src = self.shape
        data = np.broadcast_to(self.data, shape).copy()
        return Tensor._node(data, (self,), lambda g: (_unbroadcast(g, src),), "broadcast")

    def __getitem__(self, index) -> "Tensor":
        src = self.shape

        def backward(g):
            return (_scatter(g, index, src),)

        return Tensor._node(np.array(self.data[index]), (self,), backward, "getitem")

    # -- reductions ---------------------------------------------------------

    def sum(self, axis: int | None = None, keepdims: bool = False) -> "Tensor":
        src = self.shape

        def backward(g):
            if axis is not None and not keepdims:
                g = g.reshape(_keepdims_shape(src, axis))
            return (g.broadcast_to(src),)

        return Tensor._node(np.array(self.data.sum(axis=axis, keepdims=keepdims)), (self,), backward, "sum")

    def mean(self, axis: int | None = None, keepdims: bool = False) -> "Tensor":
        n = self.data.size if axis is None else self.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def norm(self) -> "Tensor":
        """Euclidean norm of each row (last axis), keeping that axis."""
        x = self
        out_data = np.sqrt((x.data * x.data).sum(axis=-1, keepdims=True))

        def backward(g):
            return (g * x / out.clamp(lo=TINY_NORM),)

        out = Tensor._node(out_data, (x,), backward, "norm")
        return out

    # -- elementwise nonlinearities -----------------------------------------

    def tanh(self) -> "Tensor":
        def backward(g):
            return (g * (1.0 - out * out),)

        out = Tensor._node(np.tanh(self.data), (self,), backward, "tanh")
        return out

    def atanh(self) -> "Tensor":
        if np.any(np.abs(self.data) >= 1.0):
            raise DomainError("atanh argument with |a| >= 1; point is not inside the ball")
        a = self

        def backward(g):
            return (g / (1.0 - a * a),)

        return Tensor._node(np.arctanh(self.data), (a,), backward, "atanh")

    def exp(self) -> "Tensor":
        def backward(g):
            return (g * out,)

        with np.errstate(over="ignore"):  # overflow is reported as NonFiniteError
            value = np.exp(self.data)
        out = Tensor._node(value, (self,), backward, "exp")
        return out

    def log(self) -> "Tensor":
        if np.any(self.data <= 0.0):
            raise DomainError("log of a non-positive value")
        a = self
        return Tensor._node(np.log(self.data), (a,), lambda g: (g / a,), "log")

    def sqrt(self) -> "Tensor":
        if np.any(self.data < 0.0):
            raise DomainError("sqrt of a negative value")

        def backward(g):
            return (g * 0.5 / out,)

        out = Tensor._node(np.sqrt(self.data), (self,), backward, "sqrt")
        return out

    def sigmoid(self) -> "Tensor":
        def backward(g):
            return (g * out * (1.0 - out),)

        data = np.empty_like(self.data)
        pos = self.data >= 0
        data[pos] = 1.0 / (1.0 + np.exp(-self.data[pos]))
        e = np.exp(self.data[~pos])
        data[~pos] = e / (1.0 + e)
        out = Tensor._node(data, (self,), backward, "sigmoid")
        return out

    def softplus(self) -> "Tensor":
        """log(1 + exp(x)), evaluated without overflow."""
        a = self
        return Tensor._node(np.logaddexp(0.0, self.data), (a,), lambda g: (g * a.sigmoid(),), "softplus")

    def leaky_relu(self, slope: float = 0.2) -> "Tensor":
        # subgradient 1 at the kink
        mask = Tensor(np.where(self.data >= 0.0, 1.0, slope))
        return Tensor._node(np.where(self.data >= 0.0, self.data, slope * self.data), (self,), lambda g: (g * mask,), "leaky_relu")

    def clamp(self, lo: float | None = None, hi: float | None = None) -> "Tensor":
        data = np.clip(self.data, lo, hi)
        keep = np.ones(self.shape, dtype=bool)
        if lo is not None:
            keep &= self.data >= lo
        if hi is not None:
            keep &= self.data <= hi
        mask = Tensor(keep.astype(np.float64))
        return Tensor._node(data, (self,), lambda g: (g * mask,), "clamp")

    def log_softmax(self) -> "Tensor":
        """Row-wise log-softmax over the last axis."""
        shifted = self.data - self.data.max(axis=-1, keepdims=True)
        data = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))

        def backward(g):
            return (g - out.exp() * g.sum(axis=-1, keepdims=True),)

        out = Tensor._node(data, (self,), backward, "log_softmax")
        return out

    # -- graph entry points -------------------------------------------------

    def backward(self, retain_graph: bool = False) -> None:
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every reachable leaf."""
        order = _topological(self)
        leaves = [n for n in order if n.is_leaf and n.requires_grad]
        grads = _run_backward(self, order, create_graph=False)
        for leaf in leaves:
            g = grads.get(id(leaf))
            if g is None:
                continue
            leaf.grad = g if leaf.grad is None else Tensor(leaf.grad.data + g.data)
        if not retain_graph:
            _release(order)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    """Concatenate along ``axis`` (features by default)."""
    tensors = [as_tensor(t) for t in tensors]
    axis = axis % tensors[0].ndim
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        outs = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(int(lo), int(hi))
            outs.append(g[tuple(idx)])
        return tuple(outs)

    data = np.concatenate([t.data for t in tensors], axis=axis)
    return Tensor._node(data, tensors, backward, "concat")


def _keepdims_shape(shape, axis):
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    axes = {a % len(shape) for a in axes}
    return tuple(1 if i in axes else s for i, s in enumerate(shape))


def _unbroadcast(g: Tensor, shape: tuple[int, ...]) -> Tensor:
    if g.shape == tuple(shape):
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _scatter(g: Tensor, index, shape) -> Tensor:
    """Place ``g`` at ``index`` inside a zero array of ``shape``."""
    data = np.zeros(shape)
    np.add.at(data, index, g.data)
    return Tensor._node(data, (g,), lambda h: (h[index],), "scatter")


def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    return order


def _run_backward(root: Tensor, order: list[Tensor], create_graph: bool) -> dict[int, Tensor]:
    if root.size != 1:
        raise GraphError(f"backward root must be scalar, got shape {root.shape}")
    grads: dict[int, Tensor] = {id(root): Tensor(np.ones(root.shape))}
    with _grad_mode(create_graph):
        for node in reversed(order):
            g = grads.get(id(node))
            if g is None or node._backward is None:
                continue
            if create_graph and not node._second_order:
                raise GraphError(f"operation '{node.op}' has no differentiable backward rule")
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                prev = grads.get(id(parent))
                grads[id(parent)] = pg if prev is None else prev + pg
    return grads


def _release(order: Iterable[Tensor]) -> None:
    for node in order:
        if node._backward is not None:
            node._backward = None
            node._parents = ()


def grad(
    root: Tensor,
    wrt: Sequence[Tensor],
    create_graph: bool = False,
    retain_graph: bool | None = None,
) -> list[Tensor]:
    """Gradients of scalar ``root`` with respect to each tensor in ``wrt``.

    With ``create_graph=True`` the returned gradients are graph nodes that can
    be differentiated again. An input that requires a gradient but does not
    influence ``root`` gets a zero gradient; an input that does not require a
    gradient can never be reached and raises :class:`GraphError`.
    """
    if isinstance(wrt, Tensor):
        wrt = [wrt]
    for w in wrt:
        if not w.requires_grad:
            raise GraphError("gradient requested for a tensor that is not part of any graph")
    if retain_graph is None:
        retain_graph = create_graph
    order = _topological(root)
    grads = _run_backward(root, order, create_graph)
    out = []
    for w in wrt:
        g = grads.get(id(w))
        out.append(Tensor(np.zeros(w.shape)) if g is None else g)
    if not retain_graph:
        _release(order)
    return out
