"""Reverse-mode automatic differentiation over dense float64 matrices.

Every value is a 2-D ``Tensor`` recorded on a ``Tape`` in creation order,
which is a valid topological order. ``backward`` walks the tape in reverse
and accumulates adjoints.

    >>> tape = Tape()
    >>> w = tape.param(np.array([[1.0, 2.0]]))
    >>> loss = sum_all(mul(w, w))
    >>> backward(tape, loss)[w]
    array([[2., 4.]])
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

EPS_NORM = 1e-12
EPS_LOG = 1e-12


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class DomainError(ValueError):
    """An input lies outside an operation's domain."""


class ContractError(ValueError):
    """A call violates an API precondition."""


class Tensor:
    """A node on a tape: a cached forward value plus a backward rule."""

    __slots__ = ("value", "tape", "index", "parents", "grad_fn", "requires_grad")

    def __init__(
        self,
        value: np.ndarray,
        tape: "Tape",
        parents: tuple["Tensor", ...] = (),
        grad_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None,
        requires_grad: bool = False,
    ):
        self.value = value
        self.tape = tape
        self.parents = parents
        self.grad_fn = grad_fn
        self.requires_grad = requires_grad
        self.index = tape._record(self)

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    @property
    def rows(self) -> int:
        return self.value.shape[0]

    @property
    def cols(self) -> int:
        return self.value.shape[1]

    def __repr__(self) -> str:
        return f"Tensor(#{self.index}, shape={self.shape})"

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other: "Tensor | float") -> "Tensor":
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    @property
    def T(self) -> "Tensor":
        return transpose(self)


@dataclass
class Tape:
    """Ordered record of every tensor created during one forward pass."""

    nodes: list[Tensor] = field(default_factory=list)

    def _record(self, t: Tensor) -> int:
        self.nodes.append(t)
        return len(self.nodes) - 1

    def param(self, value) -> Tensor:
        return Tensor(_as_matrix(value), self, requires_grad=True)

    def constant(self, value) -> Tensor:
        return Tensor(_as_matrix(value), self)

    def __len__(self) -> int:
        return len(self.nodes)


def _as_matrix(value) -> np.ndarray:
    arr = np.array(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise ShapeError(f"expected a matrix, got {arr.ndim}-d array")
    return arr


def _node(value: np.ndarray, parents: tuple[Tensor, ...], grad_fn) -> Tensor:
    tape = parents[0].tape
    for p in parents[1:]:
        if p.tape is not tape:
            raise ContractError("operands belong to different tapes")
    needs = any(p.requires_grad for p in parents)
    return Tensor(value, tape, parents if needs else (), grad_fn if needs else None, needs)


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


# --- primitives -------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.cols != b.rows:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
    av, bv = a.value, b.value
    return _node(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    return _node(a.value + b.value, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    return _node(a.value - b.value, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")
    av, bv = a.value, b.value
    return _node(av * bv, (a, b), lambda g: (g * bv, g * av))


def scale(a: Tensor, c: float) -> Tensor:
    return _node(a.value * c, (a,), lambda g: (g * c,))


def relu(a: Tensor) -> Tensor:
    mask = a.value > 0
    return _node(np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,))


def sigmoid(a: Tensor) -> Tensor:
    x = a.value
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return _node(out, (a,), lambda g: (g * out * (1.0 - out),))


def log_safe(a: Tensor) -> Tensor:
    """``log(max(x, 1e-12))``; the clamped region has zero gradient."""
    x = a.value
    live = x > EPS_LOG
    clamped = np.where(live, x, EPS_LOG)
    return _node(np.log(clamped), (a,), lambda g: (np.where(live, g / clamped, 0.0),))


def elementwise(a: Tensor, kind: str, other: Tensor | None = None, c: float = 1.0) -> Tensor:
    """Dispatch by name: add, sub, mul, relu, sigmoid, log_safe, scale."""
    binary = {"add": add, "sub": sub, "mul": mul}
    unary = {"relu": relu, "sigmoid": sigmoid, "log_safe": log_safe}
    if kind in binary:
        if other is None:
            raise ContractError(f"{kind} needs a second operand")
        return binary[kind](a, other)
    if kind in unary:
        return unary[kind](a)
    if kind == "scale":
        return scale(a, c)
    raise ContractError(f"unknown elementwise kind {kind!r}")


def transpose(a: Tensor) -> Tensor:
    return _node(a.value.T.copy(), (a,), lambda g: (g.T,))


def sum_all(a: Tensor) -> Tensor:
    shape = a.shape
    return _node(np.array([[a.value.sum()]]), (a,), lambda g: (np.full(shape, g[0, 0]),))


def mean_all(a: Tensor) -> Tensor:
    return scale(sum_all(a), 1.0 / a.value.size)


def row_l2_normalize(a: Tensor) -> Tensor:
    """Divide each row by ``max(||row||, 1e-12)``."""
    x = a.value
    norms = np.sqrt((x * x).sum(axis=1, keepdims=True))
    live = norms > EPS_NORM
    denom = np.where(live, norms, EPS_NORM)
    y = x / denom

    def grad(g):
        # live rows: (g - y <y, g>) / n ; clamped rows: g / eps
        proj = np.where(live, (g * y).sum(axis=1, keepdims=True), 0.0)
        return ((g - y * proj) / denom,)

    return _node(y, (a,), grad)


def row_sum_normalize(a: Tensor) -> Tensor:
    """Row-stochastic normalization ``D^-1 A`` for nonnegative ``A``."""
    x = a.value
    if (x < 0).any():
        raise DomainError("row_sum_normalize: negative entry")
    sums = x.sum(axis=1, keepdims=True)
    live = sums > EPS_NORM
    denom = np.where(live, sums, EPS_NORM)
    y = x / denom

    def grad(g):
        proj = np.where(live, (g * y).sum(axis=1, keepdims=True), 0.0)
        return ((g - proj) / denom,)

    return _node(y, (a,), grad)


# --- reverse pass -----------------------------------------------------------


def backward(tape: Tape, loss: Tensor) -> dict[Tensor, np.ndarray]:
    """Populate adjoints for every parameter reachable from ``loss``.

    Returns a map from each ``requires_grad`` leaf on the tape to its
    gradient; leaves that do not influence ``loss`` get zeros.
    """
    if loss.shape != (1, 1):
        raise ContractError(f"loss must be 1x1, got {loss.shape}")
    if loss.tape is not tape:
        raise ContractError("loss is not on this tape")
    adj: dict[int, np.ndarray] = {loss.index: np.ones((1, 1))}
    for node in reversed(tape.nodes[: loss.index + 1]):
        g = adj.get(node.index)
        if g is None or node.grad_fn is None:
            continue
        for parent, pg in zip(node.parents, node.grad_fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            if parent.index in adj:
                adj[parent.index] = adj[parent.index] + pg
            else:
                adj[parent.index] = pg
    return {
        n: adj.get(n.index, np.zeros(n.shape))
        for n in tape.nodes
        if n.requires_grad and n.grad_fn is None
    }


# --- optimizer --------------------------------------------------------------


@dataclass
class AdamState:
    """First and second moment buffers keyed by parameter name."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    t: int | None = None,
) -> dict[str, np.ndarray]:
    """Bias-corrected Adam update. Returns new parameter arrays and advances ``state``."""
    t = state.t + 1 if t is None else t
    if t < 1:
        raise ContractError("adam step count must be >= 1")
    out = {}
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        if g.shape != p.shape:
            raise ShapeError(f"adam: grad {g.shape} vs param {name} {p.shape}")
        m = beta1 * state.m.get(name, np.zeros_like(p)) + (1 - beta1) * g
        v = beta2 * state.v.get(name, np.zeros_like(p)) + (1 - beta2) * g * g
        state.m[name], state.v[name] = m, v
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        out[name] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
    state.t = t
    return out
