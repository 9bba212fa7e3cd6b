"""Tape-based reverse-mode differentiation over dense numpy arrays.

A :class:`Tensor` either floats free (``tape is None``; ops just compute
values) or belongs to a :class:`Tape`, in which case every op applied to it
is appended to the tape. Because nodes are appended only after their inputs
exist, tape order is a topological order and the backward pass simply walks
it in reverse.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .errors import ShapeError, UnknownHandleError


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g.reshape(shape)


def _sigmoid(a):
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    return out


def _matmul_bwd(g, out, a, b):
    if b.ndim == 1:
        return np.outer(g, b), a.T @ g
    if a.ndim == 1:
        return b @ g, np.outer(a, g)
    return g @ b.T, a.T @ g


def _take_rows_bwd(g, out, a, *, idx):
    ga = np.zeros_like(a)
    np.add.at(ga, idx, g)
    return (ga,)


def _take_flat_bwd(g, out, a, *, idx):
    ga = np.zeros(a.size)
    np.add.at(ga, idx, g)
    return (ga.reshape(a.shape),)


def _masked_softmax(a, *, mask, axis=-1):
    z = np.where(mask, a, -np.inf)
    zmax = np.max(z, axis=axis, keepdims=True)
    zmax = np.where(np.isfinite(zmax), zmax, 0.0)
    e = np.where(mask, np.exp(z - zmax), 0.0)
    s = e.sum(axis=axis, keepdims=True)
    return e / np.where(s > 0, s, 1.0)


def _log_softmax(a, *, axis=-1):
    m = np.max(a, axis=axis, keepdims=True)
    s = a - m
    return s - np.log(np.exp(s).sum(axis=axis, keepdims=True))


def _rsqrt_pos(a):
    out = np.zeros_like(a)
    pos = a > 0
    out[pos] = 1.0 / np.sqrt(a[pos])
    return out


def _sum_bwd(g, out, a, *, axis=None, keepdims=False):
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return (np.broadcast_to(g, a.shape).copy(),)


def _concat_bwd(g, out, *xs, axis=0):
    sizes = np.cumsum([x.shape[axis] for x in xs])[:-1]
    return tuple(np.split(g, sizes, axis=axis))


def _scatter_rows(a, *, idx, n):
    out = np.zeros((n,) + a.shape[1:])
    out[idx] = a
    return out


# name -> (forward(*inputs, **kw), backward(g, out, *inputs, **kw) -> tuple)
OPS: dict[str, tuple[Callable, Callable]] = {
    "add": (np.add, lambda g, o, a, b: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))),
    "sub": (np.subtract, lambda g, o, a, b: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape))),
    "mul": (np.multiply, lambda g, o, a, b: (_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape))),
    "div": (np.divide, lambda g, o, a, b: (_unbroadcast(g / b, a.shape), _unbroadcast(-g * a / (b * b), b.shape))),
    "neg": (np.negative, lambda g, o, a: (-g,)),
    "matmul": (np.matmul, _matmul_bwd),
    "transpose": (np.transpose, lambda g, o, a: (g.T,)),
    "exp": (np.exp, lambda g, o, a: (g * o,)),
    "log": (np.log, lambda g, o, a: (g / a,)),
    "sqrt": (np.sqrt, lambda g, o, a: (g * 0.5 / o,)),
    "relu": (lambda a: np.maximum(a, 0.0), lambda g, o, a: (g * (a > 0),)),
    "clip": (
        lambda a, lo=-np.inf, hi=np.inf: np.clip(a, lo, hi),
        lambda g, o, a, lo=-np.inf, hi=np.inf: (g * ((a > lo) & (a < hi)),),
    ),
    "sigmoid": (_sigmoid, lambda g, o, a: (g * o * (1.0 - o),)),
    "log_sigmoid": (lambda a: -np.logaddexp(0.0, -a), lambda g, o, a: (g * (1.0 - _sigmoid(a)),)),
    "rsqrt_pos": (_rsqrt_pos, lambda g, o, a: (g * -0.5 * o * o * o,)),
    "sum": (lambda a, axis=None, keepdims=False: np.sum(a, axis=axis, keepdims=keepdims), _sum_bwd),
    "concat": (lambda *xs, axis=0: np.concatenate(xs, axis=axis), _concat_bwd),
    "take_rows": (lambda a, idx: a[idx], _take_rows_bwd),
    "take_flat": (lambda a, idx: a.reshape(-1)[idx], _take_flat_bwd),
    "scatter_rows": (_scatter_rows, lambda g, o, a, idx, n: (g[idx],)),
    "reshape": (lambda a, shape: np.reshape(a, shape), lambda g, o, a, shape: (g.reshape(a.shape),)),
    "masked_softmax": (
        _masked_softmax,
        lambda g, o, a, mask, axis=-1: (o * (g - np.sum(g * o, axis=axis, keepdims=True)),),
    ),
    "log_softmax": (
        _log_softmax,
        lambda g, o, a, axis=-1: (g - np.exp(o) * np.sum(g, axis=axis, keepdims=True),),
    ),
}


@dataclass
class Node:
    op: str  # "param", "const", or a key of OPS
    inputs: tuple[int, ...]
    value: np.ndarray
    kwargs: dict[str, Any] = field(default_factory=dict)
    requires_grad: bool = False
    name: str | None = None


class Tape:
    """Ordered record of primitive ops; see module docstring."""

    def __init__(self):
        self.nodes: list[Node] = []
        self.params: dict[str, int] = {}
        self.visits = 0

    def __len__(self) -> int:
        return len(self.nodes)

    def _push(self, node: Node) -> "Tensor":
        self.nodes.append(node)
        return Tensor(node.value, self, len(self.nodes) - 1)

    def param(self, name: str, value) -> "Tensor":
        if name in self.params:
            raise ValueError(f"parameter {name!r} already on tape")
        t = self._push(Node("param", (), np.array(value, dtype=np.float64), requires_grad=True, name=name))
        self.params[name] = t.index
        return t

    def constant(self, value, name: str | None = None) -> "Tensor":
        return self._push(Node("const", (), np.asarray(value, dtype=np.float64), name=name))

    def record(self, op: str, inputs: Sequence["Tensor"], value: np.ndarray, kwargs: dict) -> "Tensor":
        idx = tuple(t.index for t in inputs)
        rg = any(self.nodes[i].requires_grad for i in idx)
        return self._push(Node(op, idx, value, kwargs, rg))

    def replay(self) -> list[int]:
        """Recompute every op node from recorded inputs.

        Returns the indices whose recomputed value differs bitwise from the
        recorded one (empty when the tape is consistent).
        """
        values: list[np.ndarray] = []
        bad = []
        for i, node in enumerate(self.nodes):
            if node.op in ("param", "const"):
                values.append(node.value)
                continue
            fwd = OPS[node.op][0]
            out = np.asarray(fwd(*(values[j] for j in node.inputs), **node.kwargs), dtype=np.float64)
            if out.shape != node.value.shape or not np.array_equal(out, node.value, equal_nan=True):
                bad.append(i)
            values.append(out)
        return bad

    def first_nonfinite(self) -> str | None:
        for i, node in enumerate(self.nodes):
            if not np.all(np.isfinite(node.value)):
                label = node.name or node.op
                return f"node {i} ({label}, shape {node.value.shape})"
        return None

    def backward(self, loss: "Tensor") -> list[np.ndarray | None]:
        """Reverse sweep from ``loss``; returns per-node adjoints."""
        if loss.tape is not self:
            raise UnknownHandleError("loss handle does not belong to this tape")
        if loss.value.size != 1:
            raise ShapeError(f"loss must be scalar, got shape {loss.value.shape}")
        adj: list[np.ndarray | None] = [None] * len(self.nodes)
        adj[loss.index] = np.ones_like(loss.value)
        self.visits = 0
        for i in range(loss.index, -1, -1):
            g = adj[i]
            node = self.nodes[i]
            if g is None or not node.requires_grad or not node.inputs:
                continue
            self.visits += 1
            bwd = OPS[node.op][1]
            ins = [self.nodes[j].value for j in node.inputs]
            grads = bwd(g, node.value, *ins, **node.kwargs)
            for j, gj in zip(node.inputs, grads):
                if gj is None or not self.nodes[j].requires_grad:
                    continue
                adj[j] = gj if adj[j] is None else adj[j] + gj
        return adj


class Tensor:
    __slots__ = ("value", "tape", "index")
    __array_ufunc__ = None  # make numpy defer to our reflected operators

    def __init__(self, value, tape: Tape | None = None, index: int = -1):
        self.value = np.asarray(value, dtype=np.float64)
        self.tape = tape
        self.index = index

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def T(self):
        return apply("transpose", self)

    def numpy(self) -> np.ndarray:
        return self.value

    def __repr__(self):
        where = f"tape#{self.index}" if self.tape is not None else "free"
        return f"Tensor(shape={self.shape}, {where})"

    def __add__(self, o):
        return apply("add", self, o)

    def __radd__(self, o):
        return apply("add", o, self)

    def __sub__(self, o):
        return apply("sub", self, o)

    def __rsub__(self, o):
        return apply("sub", o, self)

    def __mul__(self, o):
        return apply("mul", self, o)

    def __rmul__(self, o):
        return apply("mul", o, self)

    def __truediv__(self, o):
        return apply("div", self, o)

    def __rtruediv__(self, o):
        return apply("div", o, self)

    def __neg__(self):
        return apply("neg", self)

    def __matmul__(self, o):
        return apply("matmul", self, o)

    def __rmatmul__(self, o):
        return apply("matmul", o, self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def apply(op: str, *inputs, **kwargs) -> Tensor:
    ts = [as_tensor(x) for x in inputs]
    tapes = {id(t.tape): t.tape for t in ts if t.tape is not None}
    if len(tapes) > 1:
        raise ValueError("cannot mix tensors from different tapes")
    out = np.asarray(OPS[op][0](*(t.value for t in ts), **kwargs), dtype=np.float64)
    if not tapes:
        return Tensor(out)
    tape = next(iter(tapes.values()))
    ts = [t if t.tape is tape else tape.constant(t.value) for t in ts]
    return tape.record(op, ts, out, kwargs)


def grad(tape: Tape, loss: Tensor, wrt: Iterable[str | Tensor] | None = None) -> dict[str, np.ndarray]:
    """Gradient of scalar ``loss`` with respect to recorded parameters.

    ``wrt`` selects parameters by name or handle; default is every parameter
    on the tape. Parameters that do not influence the loss get zeros.
    """
    if wrt is None:
        names = list(tape.params)
    else:
        names = []
        for p in wrt:
            if isinstance(p, Tensor):
                hit = [n for n, i in tape.params.items() if p.tape is tape and i == p.index]
                if not hit:
                    raise UnknownHandleError("tensor is not a parameter on this tape")
                names.append(hit[0])
            elif p in tape.params:
                names.append(p)
            else:
                raise UnknownHandleError(f"unknown parameter {p!r}")
    adj = tape.backward(loss)
    out = {}
    for n in names:
        i = tape.params[n]
        g = adj[i]
        out[n] = np.zeros_like(tape.nodes[i].value) if g is None else g
    return out


# Convenience wrappers -------------------------------------------------------

def exp(x):
    return apply("exp", x)


def log(x):
    return apply("log", x)


def sqrt(x):
    return apply("sqrt", x)


def relu(x):
    return apply("relu", x)


def clip(x, lo=-np.inf, hi=np.inf):
    return apply("clip", x, lo=float(lo), hi=float(hi))


def sigmoid(x):
    return apply("sigmoid", x)


def log_sigmoid(x):
    return apply("log_sigmoid", x)


def rsqrt_pos(x):
    """``x ** -0.5`` where ``x > 0``, else 0 (gradient 0 there too)."""
    return apply("rsqrt_pos", x)


def sum_(x, axis=None, keepdims=False):
    return apply("sum", x, axis=axis, keepdims=keepdims)


def mean(x, axis=None):
    t = as_tensor(x)
    count = t.value.size if axis is None else t.value.shape[axis]
    return sum_(t, axis=axis) * (1.0 / count)


def concat(xs: Sequence, axis: int = 0):
    return apply("concat", *xs, axis=axis)


def take_rows(x, idx):
    return apply("take_rows", x, idx=np.asarray(idx, dtype=np.intp))


def take_flat(x, idx):
    return apply("take_flat", x, idx=np.asarray(idx, dtype=np.intp))


def scatter_rows(x, idx, n: int):
    return apply("scatter_rows", x, idx=np.asarray(idx, dtype=np.intp), n=int(n))


def reshape(x, shape):
    return apply("reshape", x, shape=tuple(shape))


def masked_softmax(x, mask, axis: int = -1):
    return apply("masked_softmax", x, mask=np.asarray(mask, dtype=bool), axis=axis)


def log_softmax(x, axis: int = -1):
    return apply("log_softmax", x, axis=axis)


def value(x) -> np.ndarray:
    return x.value if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
