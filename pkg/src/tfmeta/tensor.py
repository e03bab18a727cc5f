"""Dense float64 tensors with reverse-mode automatic differentiation.

Every differentiable quantity in the library is a :class:`Tensor`. Operations
record themselves on an implicit tape (a DAG of :class:`Node` objects hanging
off their output tensors); :func:`backward` replays the tape in reverse
topological order and accumulates gradients into the leaves.

The backward rules are themselves written in terms of the public ops, so a
backward pass run with ``create_graph=True`` produces a differentiable graph.
That is what makes second-order bi-level updates possible: the adapted
parameters ``theta - lr * grad`` stay on the tape and the outer gradient flows
through the inner gradient computation.

Arrays are always float64. Broadcasting follows numpy; gradients of
broadcast operands are summed back to the operand's shape.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from .errors import ContractError, DimensionError

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Node:
    """One executed op: its parent tensors and the backward rule."""

    __slots__ = ("parents", "vjp", "name")

    def __init__(self, parents, vjp, name):
        self.parents = parents
        self.vjp = vjp  # vjp(g, needs) -> tuple of cotangents (Tensor or None)
        self.name = name


class Tensor:
    """A dense float64 array, optionally attached to the autodiff tape."""

    __slots__ = ("data", "requires_grad", "grad", "node")

    def __init__(self, data, requires_grad=False, node=None):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad) or node is not None
        self.grad = None  # np.ndarray, filled by backward()
        self.node = node

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        """A view of the same values with no tape attachment."""
        return Tensor(self.data)

    def __repr__(self):
        tag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{tag})"

    # Operator sugar; scalars are wrapped as constants.
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _wrap(other))


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(data) -> Tensor:
    return Tensor(data)


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def _make(data, parents, vjp, name) -> Tensor:
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        return Tensor(data, node=Node(tuple(parents), vjp, name))
    return Tensor(data)


# ---------------------------------------------------------------------------
# broadcast helpers


def _collapse(g: Tensor, shape) -> Tensor:
    """Sum a broadcast gradient back down to ``shape``."""
    shape = tuple(shape)
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = reduce_sum(g, axis=tuple(range(extra)))
    axes = tuple(
        i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1
    )
    if axes:
        g = reduce_sum(g, axis=axes, keepdims=True)
    if g.shape != shape:  # e.g. scalar () target
        g = reshape(g, shape)
    return g


def broadcast_to(a: Tensor, shape) -> Tensor:
    data = np.ascontiguousarray(np.broadcast_to(a.data, shape))

    def vjp(g, needs):
        return (_collapse(g, a.shape),)

    return _make(data, [a], vjp, "broadcast_to")


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a: Tensor, b: Tensor) -> Tensor:
    def vjp(g, needs):
        return (
            _collapse(g, a.shape) if needs[0] else None,
            _collapse(g, b.shape) if needs[1] else None,
        )

    return _make(a.data + b.data, [a, b], vjp, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    def vjp(g, needs):
        return (
            _collapse(g, a.shape) if needs[0] else None,
            _collapse(neg(g), b.shape) if needs[1] else None,
        )

    return _make(a.data - b.data, [a, b], vjp, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    def vjp(g, needs):
        return (
            _collapse(mul(g, b), a.shape) if needs[0] else None,
            _collapse(mul(g, a), b.shape) if needs[1] else None,
        )

    return _make(a.data * b.data, [a, b], vjp, "mul")


def div(a: Tensor, b: Tensor) -> Tensor:
    out = _make(a.data / b.data, [a, b], None, "div")

    def vjp(g, needs):
        return (
            _collapse(div(g, b), a.shape) if needs[0] else None,
            _collapse(neg(div(mul(g, out), b)), b.shape) if needs[1] else None,
        )

    if out.node is not None:
        out.node.vjp = vjp
    return out


def neg(a: Tensor) -> Tensor:
    def vjp(g, needs):
        return (neg(g),)

    return _make(-a.data, [a], vjp, "neg")


def scale(a: Tensor, c: float) -> Tensor:
    """Multiply by a python scalar."""
    c = float(c)

    def vjp(g, needs):
        return (scale(g, c),)

    return _make(a.data * c, [a], vjp, "scale")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0.0

    def vjp(g, needs):
        return (mul(g, Tensor(mask.astype(np.float64))),)

    return _make(np.where(mask, a.data, 0.0), [a], vjp, "relu")


def sqrt(a: Tensor) -> Tensor:
    if np.any(a.data < 0.0):
        raise ContractError("sqrt of negative value")
    out = _make(np.sqrt(a.data), [a], None, "sqrt")

    def vjp(g, needs):
        return (scale(div(g, out), 0.5),)

    if out.node is not None:
        out.node.vjp = vjp
    return out


# ---------------------------------------------------------------------------
# shape ops


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)

    def vjp(g, needs):
        return (reshape(g, a.shape),)

    return _make(a.data.reshape(shape), [a], vjp, "reshape")


def transpose(a: Tensor) -> Tensor:
    """Swap the last two axes."""
    if a.ndim < 2:
        raise DimensionError(f"transpose needs ndim >= 2, got {a.ndim}")

    def vjp(g, needs):
        return (transpose(g),)

    return _make(np.ascontiguousarray(a.data.swapaxes(-1, -2)), [a], vjp, "transpose")


def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    parts = list(parts)
    if not parts:
        raise ContractError("concat of zero tensors")
    data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def vjp(g, needs):
        return tuple(
            narrow(g, axis, int(offsets[i]), sizes[i]) if needs[i] else None
            for i in range(len(parts))
        )

    return _make(data, parts, vjp, "concat")


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Slice ``length`` entries along ``axis`` starting at ``start``."""
    index = [slice(None)] * a.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)

    def vjp(g, needs):
        return (_pad_slice(g, axis, start, a.shape),)

    return _make(np.ascontiguousarray(a.data[index]), [a], vjp, "narrow")


def _pad_slice(g: Tensor, axis: int, start: int, full_shape) -> Tensor:
    length = g.shape[axis]
    data = np.zeros(full_shape, dtype=np.float64)
    index = [slice(None)] * len(full_shape)
    index[axis] = slice(start, start + length)
    data[tuple(index)] = g.data

    def vjp(gg, needs):
        return (narrow(gg, axis, start, length),)

    return _make(data, [g], vjp, "pad_slice")


def take_rows(a: Tensor, indices) -> Tensor:
    """Select rows of a 2-D tensor (gradient scatters back by index)."""
    idx = np.asarray(indices, dtype=np.int64)

    def vjp(g, needs):
        return (_scatter_rows(g, idx, a.shape),)

    return _make(a.data[idx], [a], vjp, "take_rows")


def _scatter_rows(g: Tensor, idx: np.ndarray, full_shape) -> Tensor:
    data = np.zeros(full_shape, dtype=np.float64)
    np.add.at(data, idx, g.data)

    def vjp(gg, needs):
        return (take_rows(gg, idx),)

    return _make(data, [g], vjp, "scatter_rows")


# ---------------------------------------------------------------------------
# reductions


def reduce_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = np.sum(a.data, axis=axis, keepdims=keepdims)

    def vjp(g, needs):
        gg = g
        if not keepdims and axis is not None:
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            kshape = list(a.shape)
            for ax in axes:
                kshape[ax] = 1
            gg = reshape(gg, kshape)
        elif axis is None:
            gg = reshape(gg, (1,) * a.ndim)
        return (broadcast_to(gg, a.shape),)

    return _make(data, [a], vjp, "sum")


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        n = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        n = 1
        for ax in axes:
            n *= a.shape[ax]
    return scale(reduce_sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with numpy semantics (leading dims broadcast)."""
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError("matmul operands must have ndim >= 2")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner dims differ: {a.shape} x {b.shape}")
    try:
        data = np.matmul(a.data, b.data)
    except ValueError as exc:  # incompatible batch dims
        raise DimensionError(str(exc)) from None

    def vjp(g, needs):
        ga = gb = None
        if b.ndim == 2 and a.ndim > 2:
            # stacked inputs against a shared matrix: flatten the leading
            # dims so each gradient is one large GEMM instead of a batch of
            # small outer products reduced over the batch
            k, n = b.shape
            g2 = reshape(g, (-1, n))
            if needs[0]:
                ga = reshape(matmul(g2, transpose(b)), a.shape)
            if needs[1]:
                gb = matmul(transpose(reshape(a, (-1, k))), g2)
        else:
            if needs[0]:
                ga = _collapse(matmul(g, transpose(b)), a.shape)
            if needs[1]:
                gb = _collapse(matmul(transpose(a), g), b.shape)
        return (ga, gb)

    return _make(data, [a, b], vjp, "matmul")


def softmax_rows(a: Tensor) -> Tensor:
    """Row-wise softmax over the last axis, computed with max subtraction."""
    shifted = a.data - np.max(a.data, axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = _make(e / np.sum(e, axis=-1, keepdims=True), [a], None, "softmax_rows")

    def vjp(g, needs):
        inner = reduce_sum(mul(g, out), axis=-1, keepdims=True)
        return (mul(sub(g, inner), out),)

    if out.node is not None:
        out.node.vjp = vjp
    return out


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean cross-entropy of integer labels against rows of logits."""
    if logits.ndim != 2:
        raise DimensionError(f"cross_entropy expects 2-D logits, got {logits.shape}")
    y = np.asarray(labels, dtype=np.int64)
    n, c = logits.shape
    if y.shape != (n,):
        raise DimensionError(f"labels shape {y.shape} does not match batch {n}")
    if y.size and (y.min() < 0 or y.max() >= c):
        raise ContractError(f"label out of range [0, {c})")
    m = np.max(logits.data, axis=-1, keepdims=True)
    lse = m[:, 0] + np.log(np.sum(np.exp(logits.data - m), axis=-1))
    picked = logits.data[np.arange(n), y]
    data = np.mean(lse - picked)
    onehot = np.zeros((n, c))
    onehot[np.arange(n), y] = 1.0

    def vjp(g, needs):
        diff = sub(softmax_rows(logits), Tensor(onehot))
        return (mul(diff, scale(reshape(g, (1, 1)), 1.0 / n)),)

    return _make(data, [logits], vjp, "cross_entropy")


# ---------------------------------------------------------------------------
# composite layers


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Affine map ``x @ w + b``."""
    return add(matmul(x, w), b)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale-shift."""
    mu = mean(x, axis=-1, keepdims=True)
    xc = sub(x, mu)
    var = mean(mul(xc, xc), axis=-1, keepdims=True)
    inv = div(xc, sqrt(add(var, Tensor(eps))))
    return add(mul(inv, gain), bias)


def mse(a: Tensor, b: Tensor) -> Tensor:
    d = sub(a, b)
    return mean(mul(d, d))


# ---------------------------------------------------------------------------
# backward engine


def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        t, expanded = stack.pop()
        if expanded:
            order.append(t)
            continue
        if id(t) in seen:
            continue
        seen.add(id(t))
        stack.append((t, True))
        if t.node is not None:
            for p in t.node.parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
    return order


def _backprop(loss: Tensor, create_graph: bool) -> dict[int, Tensor]:
    order = _toposort(loss)
    cot: dict[int, Tensor] = {id(loss): Tensor(np.ones(loss.shape))}
    ctx = contextlib.nullcontext() if create_graph else no_grad()
    with ctx:
        for t in reversed(order):
            g = cot.get(id(t))
            if g is None or t.node is None:
                continue
            needs = tuple(p.requires_grad for p in t.node.parents)
            parent_grads = t.node.vjp(g, needs)
            for p, pg in zip(t.node.parents, parent_grads):
                if pg is None or not p.requires_grad:
                    continue
                acc = cot.get(id(p))
                cot[id(p)] = pg if acc is None else add(acc, pg)
    return cot


def backward(loss: Tensor, create_graph: bool = False) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf.

    Gradients add up across calls; zero them explicitly between passes.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss.node is None:
        raise ContractError("loss is not the output of taped operations")
    cot = _backprop(loss, create_graph)
    for t in _toposort(loss):
        if t.node is None and t.requires_grad:
            g = cot.get(id(t))
            if g is None:
                continue
            if t.grad is None:
                t.grad = g.data.copy()
            else:
                t.grad = t.grad + g.data


def grad(
    loss: Tensor,
    params: Sequence[Tensor],
    create_graph: bool = False,
    allow_unused: bool = False,
) -> list[Tensor | None]:
    """Functional gradients of a scalar loss w.r.t. ``params``.

    Returns taped tensors when ``create_graph`` is set, so the result can be
    differentiated again. Parameters the loss does not depend on yield None
    (or raise, unless ``allow_unused``).
    """
    if loss.size != 1:
        raise ContractError(f"grad needs a scalar loss, got shape {loss.shape}")
    if loss.node is None:
        raise ContractError("loss is not the output of taped operations")
    cot = _backprop(loss, create_graph)
    out: list[Tensor | None] = []
    for p in params:
        g = cot.get(id(p))
        if g is None and not allow_unused:
            raise ContractError("a parameter does not influence the loss")
        out.append(g)
    return out


# ---------------------------------------------------------------------------
# parameters and SGD


class ParamSet:
    """An ordered, named collection of tensors (the model parameters)."""

    def __init__(self, items: dict[str, Tensor] | Iterable[tuple[str, Tensor]] = ()):
        self._items: dict[str, Tensor] = dict(items)

    def __getitem__(self, name: str) -> Tensor:
        return self._items[name]

    def __setitem__(self, name: str, value: Tensor) -> None:
        self._items[name] = value

    def __contains__(self, name: str) -> bool:
        return name in self._items

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self) -> Iterator[str]:
        return iter(self._items)

    def names(self) -> list[str]:
        return list(self._items)

    def items(self) -> Iterable[tuple[str, Tensor]]:
        return self._items.items()

    def tensors(self) -> list[Tensor]:
        return list(self._items.values())

    def subset(self, predicate: Callable[[str], bool]) -> "ParamSet":
        return ParamSet((k, v) for k, v in self._items.items() if predicate(k))

    def replace(self, updates: dict[str, Tensor]) -> "ParamSet":
        """New ParamSet with some entries swapped (originals untouched)."""
        merged = dict(self._items)
        merged.update(updates)
        return ParamSet(merged)

    def detached_copy(self) -> "ParamSet":
        return ParamSet(
            (k, parameter(v.data.copy())) for k, v in self._items.items()
        )

    def zero_grads(self) -> None:
        for t in self._items.values():
            t.grad = None

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self._items.items()}


@dataclass
class SgdState:
    """Velocity buffers plus hyperparameters for SGD with momentum.

    ``lr_overrides`` maps name prefixes to learning rates; the longest
    matching prefix wins, otherwise ``learning_rate`` applies.
    """

    learning_rate: float
    momentum: float = 0.9
    weight_decay: float = 1e-4
    lr_overrides: dict[str, float] = field(default_factory=dict)
    velocity: dict[str, np.ndarray] = field(default_factory=dict)

    def lr_for(self, name: str) -> float:
        best = ""
        lr = self.learning_rate
        for prefix, value in self.lr_overrides.items():
            if name.startswith(prefix) and len(prefix) >= len(best):
                best = prefix
                lr = value
        return lr


def sgd_step(params: ParamSet, state: SgdState) -> None:
    """v <- mu*v + g + wd*theta; theta <- theta - lr*v (in place)."""
    for name, p in params.items():
        if p.grad is None:
            raise ContractError(f"parameter {name!r} has no gradient")
        v = state.velocity.get(name)
        if v is None:
            v = np.zeros_like(p.data)
        v = state.momentum * v + p.grad + state.weight_decay * p.data
        state.velocity[name] = v
        p.data -= state.lr_for(name) * v
