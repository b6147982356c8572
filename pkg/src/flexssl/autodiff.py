"""Reverse-mode automatic differentiation on dense float64 numpy arrays.

A Tensor wraps an ndarray and, when gradients are enabled, remembers the
operation that produced it as a backward closure. Calling backward() on a
scalar root walks the graph in reverse topological order and accumulates
gradients into every tensor that requires them. ParamStore keeps named
learnable tensors together with their Adam moment buffers, and
finite_diff_check compares analytic gradients against central differences.
"""
from __future__ import annotations

import contextlib
import threading
from typing import Callable, Iterable, Sequence

import numpy as np

Array = np.ndarray

# Graph construction is toggled per thread so parallel runs cannot switch
# each other's gradient recording off.
_state = threading.local()


def _grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block. Use for evaluation passes."""
    prev = _grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


class Tensor:
    """A float64 array plus the bookkeeping needed for reverse-mode autodiff."""

    __slots__ = ("values", "grad", "requires_grad", "_parents", "_backward")

    # Keep numpy from absorbing Tensor operands into object arrays; binary
    # ops with an ndarray on the left then defer to the reflected methods.
    __array_ufunc__ = None

    def __init__(self, values, requires_grad: bool = False):
        self.values = np.asarray(values, dtype=np.float64)
        self.grad: Array | None = None
        self.requires_grad = bool(requires_grad) and _grad_enabled()
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[Array], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    def item(self) -> float:
        if self.values.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.values.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Arithmetic operators broadcast like numpy; gradients are summed back
    # down to each operand's shape.
    def __add__(self, other):
        return _binary(self, other, np.add, lambda a, b, g: (g, g))

    def __radd__(self, other):
        return _binary(_lift(other), self, np.add, lambda a, b, g: (g, g))

    def __sub__(self, other):
        return _binary(self, other, np.subtract, lambda a, b, g: (g, -g))

    def __rsub__(self, other):
        return _binary(_lift(other), self, np.subtract, lambda a, b, g: (g, -g))

    def __mul__(self, other):
        return _binary(self, other, np.multiply,
                       lambda a, b, g: (g * b.values, g * a.values))

    def __rmul__(self, other):
        return _binary(_lift(other), self, np.multiply,
                       lambda a, b, g: (g * b.values, g * a.values))

    def __neg__(self):
        return self * -1.0

    def sum(self, axis: int | None = None, keepdims: bool = False) -> "Tensor":
        """Sum of entries, over all axes or a single one."""
        a = self
        out_vals = a.values.sum(axis=axis, keepdims=keepdims)

        def bwd(g: Array) -> None:
            grad = np.asarray(g, dtype=np.float64)
            if axis is not None and not keepdims:
                grad = np.expand_dims(grad, axis)
            _accumulate(a, np.broadcast_to(grad, a.values.shape))

        return _node(out_vals, (a,), bwd)

    def mean(self, axis: int | None = None, keepdims: bool = False) -> "Tensor":
        """Arithmetic mean, over all axes or a single one."""
        a = self
        count = a.values.size if axis is None else a.values.shape[axis]
        if count == 0:
            raise ValueError(f"mean over zero elements, shape {a.shape} axis {axis}")
        out_vals = a.values.mean(axis=axis, keepdims=keepdims)

        def bwd(g: Array) -> None:
            grad = np.asarray(g, dtype=np.float64) / count
            if axis is not None and not keepdims:
                grad = np.expand_dims(grad, axis)
            _accumulate(a, np.broadcast_to(grad, a.values.shape))

        return _node(out_vals, (a,), bwd)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(values: Array, parents: tuple[Tensor, ...], bwd: Callable[[Array], None]) -> Tensor:
    out = Tensor(values)
    if _grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = bwd
    return out


def _accumulate(t: Tensor, g: Array) -> None:
    if not t.requires_grad:
        return
    g = _unbroadcast(np.asarray(g, dtype=np.float64), t.values.shape)
    if t.grad is None:
        t.grad = g.copy()
    else:
        t.grad += g


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Sum a broadcast gradient back down to the target shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _binary(a, b, fwd, grads) -> Tensor:
    a, b = _lift(a), _lift(b)
    out_vals = fwd(a.values, b.values)

    def bwd(g: Array) -> None:
        ga, gb = grads(a, b, g)
        _accumulate(a, ga)
        _accumulate(b, gb)

    return _node(out_vals, (a, b), bwd)


def square(a: Tensor) -> Tensor:
    """Elementwise square."""
    a = _lift(a)

    def bwd(g: Array) -> None:
        _accumulate(a, g * 2.0 * a.values)

    return _node(np.square(a.values), (a,), bwd)


def log(a: Tensor) -> Tensor:
    """Elementwise natural log. Rejects non-positive inputs."""
    a = _lift(a)
    if np.any(a.values <= 0.0):
        worst = float(a.values.min())
        raise ValueError(f"log requires strictly positive inputs, found {worst}")

    def bwd(g: Array) -> None:
        _accumulate(a, g / a.values)

    return _node(np.log(a.values), (a,), bwd)


def exp(a: Tensor) -> Tensor:
    """Elementwise exponential."""
    a = _lift(a)
    out_vals = np.exp(a.values)

    def bwd(g: Array) -> None:
        _accumulate(a, g * out_vals)

    return _node(out_vals, (a,), bwd)


def relu(a: Tensor) -> Tensor:
    """Elementwise max(x, 0); gradient is zero at x <= 0."""
    a = _lift(a)

    def bwd(g: Array) -> None:
        _accumulate(a, g * (a.values > 0.0))

    return _node(np.maximum(a.values, 0.0), (a,), bwd)


def sigmoid(a: Tensor) -> Tensor:
    """Elementwise logistic function, computed stably for large |x|."""
    a = _lift(a)
    x = a.values
    out_vals = np.empty_like(x)
    pos = x >= 0.0
    out_vals[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out_vals[~pos] = ex / (1.0 + ex)

    def bwd(g: Array) -> None:
        _accumulate(a, g * out_vals * (1.0 - out_vals))

    return _node(out_vals, (a,), bwd)


def tanh(a: Tensor) -> Tensor:
    """Elementwise hyperbolic tangent."""
    a = _lift(a)
    out_vals = np.tanh(a.values)

    def bwd(g: Array) -> None:
        _accumulate(a, g * (1.0 - out_vals * out_vals))

    return _node(out_vals, (a,), bwd)


def clip(a: Tensor, lo: float | None, hi: float | None) -> Tensor:
    """Clamp values into [lo, hi]. Gradient passes only through unclipped entries."""
    a = _lift(a)
    if lo is None and hi is None:
        raise ValueError("clip needs at least one bound")
    if lo is not None and hi is not None and lo >= hi:
        raise ValueError(f"clip bounds must satisfy lo < hi, got {lo} and {hi}")
    out_vals = np.clip(a.values, lo, hi)
    inside = np.ones_like(a.values, dtype=bool)
    if lo is not None:
        inside &= a.values > lo
    if hi is not None:
        inside &= a.values < hi

    def bwd(g: Array) -> None:
        _accumulate(a, g * inside)

    return _node(out_vals, (a,), bwd)


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of two same-shape tensors. No broadcasting."""
    a, b = _lift(a), _lift(b)
    if a.shape != b.shape:
        raise ValueError(f"hadamard needs equal shapes, got {a.shape} and {b.shape}")

    def bwd(g: Array) -> None:
        _accumulate(a, g * b.values)
        _accumulate(b, g * a.values)

    return _node(a.values * b.values, (a, b), bwd)


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate 2-D tensors along columns. All parts must share a row count."""
    parts = [_lift(p) for p in parts]
    if not parts:
        raise ValueError("concat_cols needs at least one part")
    rows = parts[0].shape[0]
    for p in parts:
        if p.ndim != 2:
            raise ValueError(f"concat_cols needs 2-D parts, got shape {p.shape}")
        if p.shape[0] != rows:
            raise ValueError(f"concat_cols row mismatch: {rows} vs {p.shape[0]}")
    widths = [p.shape[1] for p in parts]
    offsets = np.cumsum([0] + widths)

    def bwd(g: Array) -> None:
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            _accumulate(p, g[:, lo:hi])

    return _node(np.concatenate([p.values for p in parts], axis=1), tuple(parts), bwd)


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Row-wise affine map x @ w + b for x (n, d), w (d, m), b (m,)."""
    x, w, b = _lift(x), _lift(w), _lift(b)
    if x.ndim != 2 or w.ndim != 2:
        raise ValueError(f"affine needs 2-D x and w, got {x.shape} and {w.shape}")
    if x.shape[1] != w.shape[0]:
        raise ValueError(f"affine shape mismatch: x is {x.shape}, w is {w.shape}")
    if b.shape != (w.shape[1],):
        raise ValueError(f"affine bias shape {b.shape} does not match w {w.shape}")

    def bwd(g: Array) -> None:
        _accumulate(x, g @ w.values.T)
        _accumulate(w, x.values.T @ g)
        _accumulate(b, g.sum(axis=0))

    return _node(x.values @ w.values + b.values, (x, w, b), bwd)


def softmax_rows(a: Tensor) -> Tensor:
    """Row-wise softmax of a 2-D tensor, shifted by the row max for stability."""
    a = _lift(a)
    if a.ndim != 2:
        raise ValueError(f"softmax_rows needs a 2-D tensor, got shape {a.shape}")
    shifted = a.values - a.values.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out_vals = e / e.sum(axis=1, keepdims=True)

    def bwd(g: Array) -> None:
        dot = (g * out_vals).sum(axis=1, keepdims=True)
        _accumulate(a, out_vals * (g - dot))

    return _node(out_vals, (a,), bwd)


def backward(root: Tensor) -> None:
    """Accumulate d(root)/d(leaf) into .grad over the graph below a scalar root."""
    if root.values.size != 1:
        raise ValueError(f"backward needs a scalar root, got shape {root.shape}")
    if not root.requires_grad:
        raise ValueError("backward called on a tensor that requires no gradient")

    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    _accumulate(root, np.ones_like(root.values))
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


class ParamStore:
    """Named learnable tensors plus Adam first/second moment state."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._m: dict[str, Array] = {}
        self._v: dict[str, Array] = {}
        self.t = 0

    def add(self, name: str, values) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(values, requires_grad=True)
        self._params[name] = t
        self._m[name] = np.zeros_like(t.values)
        self._v[name] = np.zeros_like(t.values)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self) -> Iterable[tuple[str, Tensor]]:
        return self._params.items()

    def tensors(self) -> list[Tensor]:
        return list(self._params.values())

    def n_scalars(self) -> int:
        return sum(t.values.size for t in self._params.values())

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None


def adam_step(store: ParamStore, lr: float,
              betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8) -> None:
    """One Adam update with bias correction over every parameter in the store.

    Parameters with no accumulated gradient are treated as having zero
    gradient. All gradients are cleared afterwards.
    """
    b1, b2 = betas
    if lr <= 0.0:
        raise ValueError(f"lr must be positive, got {lr}")
    if not (0.0 <= b1 < 1.0 and 0.0 <= b2 < 1.0):
        raise ValueError(f"betas must lie in [0, 1), got {betas}")
    if eps <= 0.0:
        raise ValueError(f"eps must be positive, got {eps}")

    store.t += 1
    t = store.t
    for name, p in store.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.values)
        m = store._m[name]
        v = store._v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        p.values -= lr * m_hat / (np.sqrt(v_hat) + eps)
        p.grad = None


def finite_diff_check(objective: Callable[[ParamStore], Tensor],
                      store: ParamStore, h: float = 1e-5) -> float:
    """Worst relative error between analytic and central-difference gradients.

    The objective must map the store to a scalar Tensor and must be a pure
    function of the parameter values. Relative error for one coordinate is
    |analytic - numeric| / max(1, |numeric|).
    """
    store.zero_grad()
    root = objective(store)
    backward(root)
    analytic = {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.values))
                for name, p in store.items()}
    store.zero_grad()

    worst = 0.0
    for name, p in store.items():
        flat = p.values.reshape(-1)
        aflat = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            with no_grad():
                f_plus = objective(store).item()
            flat[i] = orig - h
            with no_grad():
                f_minus = objective(store).item()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            err = abs(aflat[i] - numeric) / max(1.0, abs(numeric))
            worst = max(worst, err)
    return worst
