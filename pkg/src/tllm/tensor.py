"""Dense tensors over numpy with reverse-mode automatic differentiation.

A Tensor wraps a float32/float64 ndarray. Operations build a computation
graph; calling backward() on a scalar walks the recorded graph once in
reverse topological order and accumulates gradients into every
participating tensor. Leaves created with requires_grad=False (frozen
parameters, constants) never receive a gradient.

Values are immutable once produced by an op. The optimizer and the
finite-difference checker mutate leaf .data between graph builds, which is
outside any recorded graph.
"""
from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from .errors import ConfigError, NonFiniteError, ShapeError

_FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))
_default_dtype = np.dtype(np.float32)
_grad_enabled = True


def default_dtype() -> np.dtype:
    return _default_dtype


def set_default_dtype(dtype) -> None:
    """Set the dtype used for newly created tensors (float32 or float64)."""
    global _default_dtype
    dt = np.dtype(dtype)
    if dt not in _FLOAT_DTYPES:
        raise ConfigError(f"unsupported tensor dtype {dt}; use float32 or float64")
    _default_dtype = dt


@contextmanager
def using_dtype(dtype):
    """Temporarily switch the default tensor dtype."""
    global _default_dtype
    old = _default_dtype
    set_default_dtype(dtype)
    try:
        yield
    finally:
        _default_dtype = old


@contextmanager
def no_grad():
    """Disable graph recording inside the block (pure inference)."""
    global _grad_enabled
    old = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = old


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back down to `shape`."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        dt = np.dtype(dtype) if dtype is not None else _default_dtype
        if dt not in _FLOAT_DTYPES:
            raise ConfigError(f"unsupported tensor dtype {dt}; use float32 or float64")
        self.data = np.asarray(data, dtype=dt)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents: tuple = ()
        self._backward = None

    @classmethod
    def _node(cls, data: np.ndarray, parents: tuple, backward) -> "Tensor":
        t = cls.__new__(cls)
        t.data = data
        t.grad = None
        t.name = None
        if _grad_enabled and any(p.requires_grad for p in parents):
            t.requires_grad = True
            t._parents = parents
            t._backward = backward
        else:
            t.requires_grad = False
            t._parents = ()
            t._backward = None
        return t

    # -- introspection -------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{tag})"

    # -- graph ----------------------------------------------------------

    def detach(self) -> "Tensor":
        """A view of the same values that blocks gradient flow."""
        t = Tensor.__new__(Tensor)
        t.data = self.data
        t.grad = None
        t.requires_grad = False
        t.name = None
        t._parents = ()
        t._backward = None
        return t

    def _accum(self, g: np.ndarray) -> None:
        if self.requires_grad:
            if self.grad is None:
                self.grad = np.zeros_like(self.data)
            self.grad += g

    def backward(self) -> None:
        """Reverse-mode pass from a scalar output.

        Visits every recorded node exactly once; frozen leaves accumulate
        nothing.
        """
        if self.data.size != 1:
            raise ShapeError(f"backward requires a scalar output, got shape {self.data.shape}")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- arithmetic -----------------------------------------------------

    def _wrap(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            return other
        return Tensor(other, dtype=self.data.dtype)

    def __add__(self, other):
        return add(self, self._wrap(other))

    def __radd__(self, other):
        return add(self._wrap(other), self)

    def __sub__(self, other):
        return sub(self, self._wrap(other))

    def __rsub__(self, other):
        return sub(self._wrap(other), self)

    def __mul__(self, other):
        return mul(self, self._wrap(other))

    def __rmul__(self, other):
        return mul(self._wrap(other), self)

    def __truediv__(self, other):
        return div(self, self._wrap(other))

    def __rtruediv__(self, other):
        return div(self._wrap(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, self._wrap(other))

    def __pow__(self, p):
        return powc(self, p)

    def __getitem__(self, idx):
        return take(self, idx)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def swapaxes(self, a: int, b: int):
        return swapaxes(self, a, b)


def add(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data + b.data

    def backward(g):
        a._accum(_unbroadcast(g, a.data.shape))
        b._accum(_unbroadcast(g, b.data.shape))

    return Tensor._node(out_data, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data - b.data

    def backward(g):
        a._accum(_unbroadcast(g, a.data.shape))
        b._accum(_unbroadcast(-g, b.data.shape))

    return Tensor._node(out_data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data * b.data

    def backward(g):
        a._accum(_unbroadcast(g * b.data, a.data.shape))
        b._accum(_unbroadcast(g * a.data, b.data.shape))

    return Tensor._node(out_data, (a, b), backward)


def div(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data / b.data

    def backward(g):
        a._accum(_unbroadcast(g / b.data, a.data.shape))
        b._accum(_unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return Tensor._node(out_data, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    return Tensor._node(-a.data, (a,), lambda g: a._accum(-g))


def powc(a: Tensor, p) -> Tensor:
    p = float(p)
    out_data = a.data ** p

    def backward(g):
        a._accum(g * p * a.data ** (p - 1.0))

    return Tensor._node(out_data, (a,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {a.data.shape} @ {b.data.shape}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.data.shape} @ {b.data.shape}")
    out_data = np.matmul(a.data, b.data)

    def backward(g):
        ga = np.matmul(g, b.data.swapaxes(-1, -2))
        gb = np.matmul(a.data.swapaxes(-1, -2), g)
        a._accum(_unbroadcast(ga, a.data.shape))
        b._accum(_unbroadcast(gb, b.data.shape))

    return Tensor._node(out_data, (a, b), backward)


def texp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)

    def backward(g):
        a._accum(g * out_data)

    return Tensor._node(out_data, (a,), backward)


def tsqrt(a: Tensor) -> Tensor:
    out_data = np.sqrt(a.data)

    def backward(g):
        a._accum(g * 0.5 / out_data)

    return Tensor._node(out_data, (a,), backward)


def tabs(a: Tensor) -> Tensor:
    # subgradient at 0 is 0
    out_data = np.abs(a.data)

    def backward(g):
        a._accum(g * np.sign(a.data))

    return Tensor._node(out_data, (a,), backward)


def tanh(a: Tensor) -> Tensor:
    out_data = np.tanh(a.data)

    def backward(g):
        a._accum(g * (1.0 - out_data * out_data))

    return Tensor._node(out_data, (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    out_data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                        np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    out_data = out_data.astype(x.dtype, copy=False)

    def backward(g):
        a._accum(g * out_data * (1.0 - out_data))

    return Tensor._node(out_data, (a,), backward)


_GELU_C = 0.7978845608028654  # sqrt(2/pi)


def gelu(a: Tensor) -> Tensor:
    """GELU, tanh approximation (GPT-2 convention)."""
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x ** 3)
    t = np.tanh(inner)
    out_data = 0.5 * x * (1.0 + t)

    def backward(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * x * x)
        local = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner
        a._accum(g * local)

    return Tensor._node(out_data, (a,), backward)


def clip_min(a: Tensor, lo: float) -> Tensor:
    """Elementwise max(a, lo); clipped elements get zero gradient."""
    keep = a.data > lo
    out_data = np.where(keep, a.data, lo).astype(a.data.dtype, copy=False)

    def backward(g):
        a._accum(g * keep)

    return Tensor._node(out_data, (a,), backward)


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        gg = g
        if not keepdims and axis is not None:
            gg = np.expand_dims(g, axis)
        a._accum(np.broadcast_to(gg, a.data.shape).copy())

    return Tensor._node(np.asarray(out_data), (a,), backward)


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out_data = a.data.mean(axis=axis, keepdims=keepdims)
    n = a.data.size / max(np.asarray(out_data).size, 1)

    def backward(g):
        gg = g
        if not keepdims and axis is not None:
            gg = np.expand_dims(g, axis)
        a._accum(np.broadcast_to(gg, a.data.shape) / n)

    return Tensor._node(np.asarray(out_data), (a,), backward)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax along `axis` (max-subtracted)."""
    x = a.data
    m = x.max(axis=axis, keepdims=True)
    e = np.exp(x - m)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * out_data).sum(axis=axis, keepdims=True)
        a._accum(out_data * (g - dot))

    return Tensor._node(out_data, (a,), backward)


def reshape(a: Tensor, shape: tuple) -> Tensor:
    out_data = a.data.reshape(shape)

    def backward(g):
        a._accum(g.reshape(a.data.shape))

    return Tensor._node(out_data, (a,), backward)


def swapaxes(a: Tensor, ax1: int, ax2: int) -> Tensor:
    out_data = a.data.swapaxes(ax1, ax2)

    def backward(g):
        a._accum(g.swapaxes(ax1, ax2))

    return Tensor._node(np.ascontiguousarray(out_data), (a,), backward)


def take(a: Tensor, idx) -> Tensor:
    """Basic (slice/int/Ellipsis) indexing on the tape."""
    out_data = a.data[idx]

    def backward(g):
        full = np.zeros_like(a.data)
        full[idx] += g
        a._accum(full)

    return Tensor._node(np.ascontiguousarray(out_data), (a,), backward)


def concat(tensors: list, axis: int = -1) -> Tensor:
    tensors = list(tensors)
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            t._accum(piece)

    return Tensor._node(out_data, tuple(tensors), backward)


def check_finite(a: Tensor, name: str = "tensor") -> Tensor:
    """Raise NonFiniteError naming `name` if a holds NaN/Inf; else pass through."""
    if not np.all(np.isfinite(a.data)):
        bad = "nan" if np.any(np.isnan(a.data)) else "inf"
        raise NonFiniteError(f"{name} contains {bad} values")
    return a


class ParameterSet:
    """Ordered name -> Tensor registry: the unit of checkpointing and optimization."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, t: Tensor) -> Tensor:
        if name in self._params:
            raise ConfigError(f"duplicate parameter name {name!r}")
        t.name = name
        self._params[name] = t
        return t

    def items(self):
        return self._params.items()

    def names(self):
        return list(self._params.keys())

    def trainable(self) -> list[tuple[str, Tensor]]:
        return [(n, t) for n, t in self._params.items() if t.requires_grad]

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def total_count(self) -> int:
        return sum(t.data.size for t in self._params.values())

    def trainable_count(self) -> int:
        return sum(t.data.size for _, t in self.trainable())

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def state(self) -> dict[str, np.ndarray]:
        return {n: t.data.copy() for n, t in self._params.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for n, t in self._params.items():
            if n not in state:
                raise ConfigError(f"missing parameter {n!r} in state")
            arr = state[n]
            if tuple(arr.shape) != tuple(t.data.shape):
                raise ShapeError(f"parameter {n!r}: stored shape {arr.shape} != model shape {t.data.shape}")
            t.data = arr.astype(t.data.dtype, copy=True)
