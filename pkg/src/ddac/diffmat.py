"""Dense-matrix reverse-mode differentiation.

Every value is a 2-D float64 array. Operations record a :class:`Node` on a
:class:`Tape` in execution order, so the tape is topologically sorted by
construction and :meth:`Tape.backward` is a single reverse sweep.

The tape is define-by-run: build a fresh one per training step.
"""

from __future__ import annotations

import weakref
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

__all__ = [
    "ShapeError",
    "DomainError",
    "NonFiniteError",
    "Tape",
    "Node",
    "as_matrix",
    "matmul",
    "transpose",
    "add",
    "sub",
    "mul",
    "scale",
    "add_scalar",
    "square",
    "reciprocal",
    "relu",
    "softmax_rows",
    "row_sum",
    "col_sum",
    "total_sum",
    "mean",
    "sqfrob",
    "pairwise_sqdist",
    "log",
    "broadcast_row",
    "broadcast_col",
    "spmm",
    "grad_check",
    "grad_check_params",
]


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class DomainError(ValueError):
    """An operand lies outside the mathematical domain of an operation."""


class NonFiniteError(FloatingPointError):
    """An operation produced NaN or Inf."""


def as_matrix(value) -> np.ndarray:
    """Coerce scalars, vectors and nested lists to a 2-D float64 array.

    Vectors become a single row.
    """
    arr = np.array(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise ShapeError(f"expected at most 2 dimensions, got shape {arr.shape}")
    return np.ascontiguousarray(arr)


class Node:
    """A matrix value on a tape, with an optional gradient accumulator."""

    __slots__ = ("value", "_tape", "parents", "backward_fn", "grad", "requires_grad", "name", "op")

    def __init__(
        self,
        value: np.ndarray,
        tape: Optional["Tape"],
        parents: Sequence["Node"] = (),
        backward_fn: Optional[Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]] = None,
        requires_grad: bool = False,
        name: Optional[str] = None,
        op: str = "leaf",
    ):
        self.value = value
        # weak, so a finished tape is freed by refcounting rather than the cycle collector
        self._tape = weakref.ref(tape) if tape is not None else None
        self.parents = tuple(parents)
        self.backward_fn = backward_fn
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self.op = op

    @property
    def tape(self) -> Optional["Tape"]:
        return self._tape() if self._tape is not None else None

    @property
    def shape(self) -> tuple:
        return self.value.shape

    @property
    def T(self) -> "Node":
        return transpose(self)

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Node<{self.op}{label} {self.shape[0]}x{self.shape[1]}>"

    def __add__(self, other):
        if np.isscalar(other):
            return add_scalar(self, other)
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        if np.isscalar(other):
            return add_scalar(self, -other)
        return sub(self, other)

    def __rsub__(self, other):
        if np.isscalar(other):
            return add_scalar(scale(self, -1.0), other)
        return sub(other, self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, other)
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)


Operand = Union[Node, np.ndarray, float, Sequence]


class Tape:
    """Ordered record of the primitive operations of one forward pass."""

    def __init__(self, check_finite: bool = True):
        self.nodes: list[Node] = []
        self.check_finite = check_finite

    def __len__(self) -> int:
        return len(self.nodes)

    def leaf(self, value, name: Optional[str] = None, requires_grad: bool = True) -> Node:
        """Record a parameter or input. Leaves with ``requires_grad`` receive gradients."""
        node = Node(as_matrix(value), self, requires_grad=requires_grad, name=name)
        self.nodes.append(node)
        return node

    def constant(self, value, name: Optional[str] = None) -> Node:
        return self.leaf(value, name=name, requires_grad=False)

    def record(self, value, parents, backward_fn, op: str) -> Node:
        if self.check_finite and not np.all(np.isfinite(value)):
            raise NonFiniteError(f"{op} produced non-finite values")
        node = Node(
            value,
            self,
            parents,
            backward_fn,
            requires_grad=any(p.requires_grad for p in parents),
            op=op,
        )
        self.nodes.append(node)
        return node

    def zero_grad(self) -> None:
        for node in self.nodes:
            node.grad = None

    def backward(self, loss: Node) -> None:
        """Populate ``grad`` on every node the scalar ``loss`` depends on."""
        if loss.tape is not self:
            raise ValueError("loss node was not recorded on this tape")
        if loss.shape != (1, 1):
            raise ShapeError(f"backward needs a 1x1 loss, got {loss.shape[0]}x{loss.shape[1]}")
        self.zero_grad()
        loss.grad = np.ones((1, 1))
        stop = self.nodes.index(loss)
        for node in reversed(self.nodes[: stop + 1]):
            if node.grad is None or node.backward_fn is None or not node.requires_grad:
                continue
            parent_grads = node.backward_fn(node.grad)
            for parent, g in zip(node.parents, parent_grads):
                if g is None or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = g
                else:
                    parent.grad = parent.grad + g


def _tape_of(operands) -> Tape:
    for x in operands:
        if isinstance(x, Node) and x.tape is not None:
            return x.tape
    return Tape()


def _lift(x, tape: Tape) -> Node:
    if isinstance(x, Node):
        if x.tape is not None and x.tape is not tape:
            raise ValueError("operands live on different tapes")
        return x
    return tape.constant(x)


def _prepare(*operands):
    tape = _tape_of(operands)
    return tape, [_lift(x, tape) for x in operands]


def _same_shape(op: str, a: Node, b: Node) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape[0]}x{a.shape[1]} vs {b.shape[0]}x{b.shape[1]}")


# --- primitives -------------------------------------------------------------


def matmul(a: Operand, b: Operand) -> Node:
    tape, (a, b) = _prepare(a, b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: shape mismatch {a.shape[0]}x{a.shape[1]} @ {b.shape[0]}x{b.shape[1]}")
    av, bv = a.value, b.value
    need_a, need_b = a.requires_grad, b.requires_grad

    def backward(g):
        return (g @ bv.T if need_a else None, av.T @ g if need_b else None)

    return tape.record(av @ bv, (a, b), backward, "matmul")


def transpose(a: Operand) -> Node:
    tape, (a,) = _prepare(a)
    return tape.record(np.ascontiguousarray(a.value.T), (a,), lambda g: (g.T,), "transpose")


def add(a: Operand, b: Operand) -> Node:
    tape, (a, b) = _prepare(a, b)
    _same_shape("add", a, b)
    return tape.record(a.value + b.value, (a, b), lambda g: (g, g), "add")


def sub(a: Operand, b: Operand) -> Node:
    tape, (a, b) = _prepare(a, b)
    _same_shape("sub", a, b)
    return tape.record(a.value - b.value, (a, b), lambda g: (g, -g), "sub")


def mul(a: Operand, b: Operand) -> Node:
    """Hadamard product."""
    tape, (a, b) = _prepare(a, b)
    _same_shape("mul", a, b)
    av, bv = a.value, b.value
    return tape.record(av * bv, (a, b), lambda g: (g * bv, g * av), "mul")


def scale(a: Operand, c: float) -> Node:
    tape, (a,) = _prepare(a)
    c = float(c)
    return tape.record(a.value * c, (a,), lambda g: (g * c,), "scale")


def add_scalar(a: Operand, c: float) -> Node:
    tape, (a,) = _prepare(a)
    return tape.record(a.value + float(c), (a,), lambda g: (g,), "add_scalar")


def square(a: Operand) -> Node:
    tape, (a,) = _prepare(a)
    av = a.value
    return tape.record(av * av, (a,), lambda g: (2.0 * g * av,), "square")


def reciprocal(a: Operand) -> Node:
    tape, (a,) = _prepare(a)
    if np.any(a.value == 0):
        raise DomainError("reciprocal of a zero entry")
    out = 1.0 / a.value
    return tape.record(out, (a,), lambda g: (-g * out * out,), "reciprocal")


def relu(a: Operand) -> Node:
    tape, (a,) = _prepare(a)
    # subgradient 0 at exactly 0
    active = a.value > 0
    return tape.record(np.where(active, a.value, 0.0), (a,), lambda g: (g * active,), "relu")


def softmax_rows(a: Operand) -> Node:
    tape, (a,) = _prepare(a)
    shifted = a.value - a.value.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=1, keepdims=True)),)

    return tape.record(y, (a,), backward, "softmax_rows")


def row_sum(a: Operand) -> Node:
    """Sum across each row; returns an n x 1 column."""
    tape, (a,) = _prepare(a)
    cols = a.shape[1]
    return tape.record(a.value.sum(axis=1, keepdims=True), (a,), lambda g: (np.repeat(g, cols, axis=1),), "row_sum")


def col_sum(a: Operand) -> Node:
    """Sum down each column; returns a 1 x m row."""
    tape, (a,) = _prepare(a)
    rows = a.shape[0]
    return tape.record(a.value.sum(axis=0, keepdims=True), (a,), lambda g: (np.repeat(g, rows, axis=0),), "col_sum")


def total_sum(a: Operand) -> Node:
    tape, (a,) = _prepare(a)
    shape = a.shape
    return tape.record(np.array([[a.value.sum()]]), (a,), lambda g: (np.full(shape, g[0, 0]),), "total_sum")


def mean(a: Operand) -> Node:
    tape, (a,) = _prepare(a)
    shape = a.shape
    size = a.value.size
    return tape.record(np.array([[a.value.mean()]]), (a,), lambda g: (np.full(shape, g[0, 0] / size),), "mean")


def sqfrob(a: Operand) -> Node:
    """Squared Frobenius norm."""
    tape, (a,) = _prepare(a)
    av = a.value
    return tape.record(np.array([[np.sum(av * av)]]), (a,), lambda g: (2.0 * g[0, 0] * av,), "sqfrob")


def pairwise_sqdist(a: Operand, b: Operand) -> Node:
    """``out[i, j] = ||a_i - b_j||^2`` for row sets ``a`` (n x d) and ``b`` (m x d)."""
    tape, (a, b) = _prepare(a, b)
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"pairwise_sqdist: shape mismatch {a.shape[0]}x{a.shape[1]} vs {b.shape[0]}x{b.shape[1]}")
    av, bv = a.value, b.value
    diff = av[:, None, :] - bv[None, :, :]
    out = np.einsum("ijk,ijk->ij", diff, diff)

    def backward(g):
        ga = 2.0 * (g.sum(axis=1, keepdims=True) * av - g @ bv)
        gb = 2.0 * (g.sum(axis=0)[:, None] * bv - g.T @ av)
        return ga, gb

    return tape.record(out, (a, b), backward, "pairwise_sqdist")


def log(a: Operand) -> Node:
    tape, (a,) = _prepare(a)
    av = a.value
    if np.any(av <= 0):
        raise DomainError("log of a non-positive entry")
    return tape.record(np.log(av), (a,), lambda g: (g / av,), "log")


def broadcast_row(a: Operand, rows: int) -> Node:
    """Repeat a 1 x m row vector ``rows`` times."""
    tape, (a,) = _prepare(a)
    if a.shape[0] != 1:
        raise ShapeError(f"broadcast_row: expected a 1xm row, got {a.shape[0]}x{a.shape[1]}")
    out = np.repeat(a.value, rows, axis=0)
    return tape.record(out, (a,), lambda g: (g.sum(axis=0, keepdims=True),), "broadcast_row")


def broadcast_col(a: Operand, cols: int) -> Node:
    """Repeat an n x 1 column vector ``cols`` times."""
    tape, (a,) = _prepare(a)
    if a.shape[1] != 1:
        raise ShapeError(f"broadcast_col: expected an nx1 column, got {a.shape[0]}x{a.shape[1]}")
    out = np.repeat(a.value, cols, axis=1)
    return tape.record(out, (a,), lambda g: (g.sum(axis=1, keepdims=True),), "broadcast_col")


def spmm(s, m: Operand) -> Node:
    """Sparse (constant) times dense. Only the dense operand is differentiated."""
    if hasattr(s, "to_scipy"):
        s = s.to_scipy()
    s = sp.csr_matrix(s)
    tape, (m,) = _prepare(m)
    if s.shape[1] != m.shape[0]:
        raise ShapeError(f"spmm: shape mismatch {s.shape[0]}x{s.shape[1]} @ {m.shape[0]}x{m.shape[1]}")
    st = s.T.tocsr()
    out = np.asarray(s @ m.value)
    return tape.record(out, (m,), lambda g: (np.asarray(st @ g),), "spmm")


# --- verification -----------------------------------------------------------


def grad_check(f: Callable[[Node], Node], point, step: float = 1e-6) -> float:
    """Max relative error between the tape gradient of ``f`` and central differences.

    ``f`` maps a leaf node to a 1x1 node. The error for each entry is
    ``|analytic - numeric| / max(1, |analytic|)``.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    x0 = as_matrix(point)
    tape = Tape()
    leaf = tape.leaf(x0.copy())
    out = f(leaf)
    if not np.all(np.isfinite(out.value)):
        raise NonFiniteError("f is not finite at the point")
    tape.backward(out)
    analytic = leaf.grad if leaf.grad is not None else np.zeros_like(x0)

    def evaluate(x):
        val = f(Tape().leaf(x)).value[0, 0]
        if not np.isfinite(val):
            raise NonFiniteError("f is not finite at a perturbed point")
        return val

    numeric = np.empty_like(x0)
    for idx in np.ndindex(x0.shape):
        xp = x0.copy()
        xm = x0.copy()
        xp[idx] += step
        xm[idx] -= step
        numeric[idx] = (evaluate(xp) - evaluate(xm)) / (2.0 * step)
    return float(np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))))


def grad_check_params(f: Callable[[dict], Node], params: dict, step: float = 1e-6) -> dict:
    """Per-parameter max relative gradient error for ``f(leaves) -> 1x1 node``.

    Same error measure as :func:`grad_check`, over every entry of every
    array in ``params``.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    base = {k: as_matrix(v) for k, v in params.items()}
    tape = Tape()
    leaves = {k: tape.leaf(v.copy(), name=k) for k, v in base.items()}
    out = f(leaves)
    tape.backward(out)

    def evaluate(name, idx, delta):
        t = Tape()
        vals = {k: v for k, v in base.items()}
        x = base[name].copy()
        x[idx] += delta
        vals[name] = x
        val = f({k: t.leaf(v, name=k) for k, v in vals.items()}).value[0, 0]
        if not np.isfinite(val):
            raise NonFiniteError(f"f is not finite after perturbing {name}")
        return val

    errors = {}
    for name, x0 in base.items():
        analytic = leaves[name].grad if leaves[name].grad is not None else np.zeros_like(x0)
        numeric = np.empty_like(x0)
        for idx in np.ndindex(x0.shape):
            numeric[idx] = (evaluate(name, idx, step) - evaluate(name, idx, -step)) / (2.0 * step)
        errors[name] = float(np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))))
    return errors
