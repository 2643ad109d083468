"""Dense float64 tensors with a define-by-run tape for reverse-mode gradients.

Every operation works on the trailing axis as the "vector" axis and treats
any leading axes as a batch, which is all the GRU and attention code needs.

    >>> tape = Tape()
    >>> x = tape.leaf([3.0])
    >>> y = x * x
    >>> grads = backward(tape, sum_all(y))
    >>> float(grads[x][0])
    6.0
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

EPS_NORM = 1e-12


class DimensionError(ValueError):
    """Operand shapes do not conform."""


class RankError(ValueError):
    """Operand has the wrong number of axes."""


class Tensor:
    """A float64 array, optionally attached to a :class:`Tape` node."""

    __slots__ = ("value", "tape", "node_id")

    def __init__(self, value, tape: Tape | None = None, node_id: int | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.tape = tape
        self.node_id = node_id

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, node={self.node_id})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __getitem__(self, key):
        return getitem(self, key)


@dataclass
class Node:
    op: str
    inputs: tuple[int, ...]
    output: int
    shape: tuple[int, ...]
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None


@dataclass
class Tape:
    """Ordered record of operations; rebuilt for every forward pass."""

    nodes: list[Node] = field(default_factory=list)

    def leaf(self, value, name: str = "leaf") -> Tensor:
        value = np.array(value, dtype=np.float64)
        node_id = len(self.nodes)
        self.nodes.append(Node(name, (), node_id, value.shape))
        return Tensor(value, self, node_id)

    def record(self, op, value, inputs, backward_fn) -> Tensor:
        node_id = len(self.nodes)
        ids = tuple(t.node_id if t.tape is self else -1 for t in inputs)
        self.nodes.append(Node(op, ids, node_id, np.shape(value), backward_fn))
        return Tensor(value, self, node_id)


class Gradients(dict):
    """Map node id -> gradient array; also indexable by the Tensor itself."""

    def __getitem__(self, key):
        if isinstance(key, Tensor):
            key = key.node_id
        return super().__getitem__(key)

    def get(self, key, default=None):
        if isinstance(key, Tensor):
            key = key.node_id
        return super().get(key, default)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _tape_of(*tensors: Tensor) -> Tape | None:
    for t in tensors:
        if t.tape is not None:
            return t.tape
    return None


def _emit(op: str, value: np.ndarray, inputs: Sequence[Tensor], backward_fn) -> Tensor:
    tape = _tape_of(*inputs)
    if tape is None:
        return Tensor(value)
    return tape.record(op, value, inputs, backward_fn)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not conform") from None


# -- elementwise ----------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)
    sa, sb = a.shape, b.shape
    return _emit("add", a.value + b.value, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a, b)
    sa, sb = a.shape, b.shape
    return _emit("sub", a.value - b.value, (a, b),
                 lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)
    av, bv = a.value, b.value
    return _emit("mul", av * bv, (a, b),
                 lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)))


def activation(kind: str, x) -> Tensor:
    """Elementwise ``sigmoid`` or ``tanh``."""
    x = as_tensor(x)
    if kind == "sigmoid":
        # split by sign so exp never overflows
        v = x.value
        out = np.empty_like(v)
        pos = v >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
        e = np.exp(v[~pos])
        out[~pos] = e / (1.0 + e)
        return _emit("sigmoid", out, (x,), lambda g: (g * out * (1.0 - out),))
    if kind == "tanh":
        out = np.tanh(x.value)
        return _emit("tanh", out, (x,), lambda g: (g * (1.0 - out * out),))
    raise ValueError(f"unknown activation kind {kind!r}")


def sigmoid(x) -> Tensor:
    return activation("sigmoid", x)


def tanh(x) -> Tensor:
    return activation("tanh", x)


# -- linear algebra -------------------------------------------------------


def affine(W, x, b=None) -> Tensor:
    """``W @ x + b`` applied over the trailing axis of ``x``.

    ``W`` is ``m x n``; ``x`` is ``[..., n]``; ``b`` is ``[m]`` or None.
    """
    W, x = as_tensor(W), as_tensor(x)
    if W.ndim != 2 or x.ndim < 1 or x.shape[-1] != W.shape[1]:
        raise DimensionError(f"affine: W shape {W.shape} does not conform with x shape {x.shape}")
    inputs = [W, x]
    out = x.value @ W.value.T
    if b is not None:
        b = as_tensor(b)
        if b.shape != (W.shape[0],):
            raise DimensionError(f"affine: bias shape {b.shape} does not conform with W shape {W.shape}")
        out = out + b.value
        inputs.append(b)
    Wv, xv = W.value, x.value
    has_bias = b is not None

    def backward_fn(g):
        flat_g = g.reshape(-1, g.shape[-1])
        gW = flat_g.T @ xv.reshape(-1, xv.shape[-1])
        gx = g @ Wv
        if has_bias:
            return gW, gx, flat_g.sum(axis=0)
        return gW, gx

    return _emit("affine", out, inputs, backward_fn)


def concat(a, b) -> Tensor:
    """Join ``a`` and ``b`` along the trailing axis."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 1 or b.ndim < 1:
        raise RankError(f"concat: expected vectors, got ranks {a.ndim} and {b.ndim}")
    if a.shape[:-1] != b.shape[:-1]:
        raise DimensionError(f"concat: leading shapes {a.shape} and {b.shape} differ")
    m = a.shape[-1]
    return _emit("concat", np.concatenate([a.value, b.value], axis=-1), (a, b),
                 lambda g: (g[..., :m], g[..., m:]))


def getitem(x, key) -> Tensor:
    x = as_tensor(x)
    shape = x.shape

    def backward_fn(g):
        out = np.zeros(shape)
        np.add.at(out, key, g)
        return (out,)

    return _emit("getitem", x.value[key], (x,), backward_fn)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    old = x.shape
    return _emit("reshape", x.value.reshape(shape), (x,), lambda g: (g.reshape(old),))


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.stack([t.value for t in tensors], axis=axis)
    n = len(tensors)
    return _emit("stack", out, tensors,
                 lambda g: tuple(np.take(g, i, axis=axis) for i in range(n)))


def embed(E, ids) -> Tensor:
    """Columns of a ``d x V`` matrix picked by integer ``ids``; result ``[*ids.shape, d]``."""
    E = as_tensor(E)
    ids = np.asarray(ids, dtype=np.intp)
    shape = E.shape

    def backward_fn(g):
        out = np.zeros(shape)
        np.add.at(out.T, ids, g)
        return (out,)

    return _emit("embed", E.value.T[ids], (E,), backward_fn)


def sum_all(x) -> Tensor:
    x = as_tensor(x)
    shape = x.shape
    return _emit("sum", np.array(x.value.sum()), (x,), lambda g: (np.broadcast_to(g, shape).copy(),))


def sum_last(x) -> Tensor:
    x = as_tensor(x)
    shape = x.shape
    return _emit("sum_last", x.value.sum(axis=-1), (x,),
                 lambda g: (np.broadcast_to(g[..., None], shape).copy(),))


def mean_all(x) -> Tensor:
    x = as_tensor(x)
    return mul(sum_all(x), 1.0 / max(x.value.size, 1))


def weighted_sum(weights, vectors) -> Tensor:
    """``sum_t w[..., t] * v[..., t, :]``."""
    w, v = as_tensor(weights), as_tensor(vectors)
    if v.ndim < 2 or w.shape != v.shape[:-1]:
        raise DimensionError(f"weighted_sum: weights {w.shape} do not match vectors {v.shape}")
    wv, vv = w.value, v.value
    out = np.einsum("...t,...td->...d", wv, vv)
    return _emit("weighted_sum", out, (w, v),
                 lambda g: (np.einsum("...d,...td->...t", g, vv), wv[..., None] * g[..., None, :]))


# -- similarity and attention normalization --------------------------------


def cosine_similarity(a, b) -> Tensor:
    """Cosine along the trailing axis; leading axes broadcast.

    When either norm is below ``EPS_NORM`` the similarity is 0 and no
    gradient flows through that pair.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 1 or b.ndim < 1:
        raise RankError("cosine_similarity: expected vectors")
    if a.shape[-1] != b.shape[-1] or a.shape[-1] < 1:
        raise DimensionError(f"cosine_similarity: shapes {a.shape} and {b.shape} do not conform")
    _check_broadcast("cosine_similarity", a, b)
    av, bv = a.value, b.value
    na = np.sqrt((av * av).sum(axis=-1))
    nb = np.sqrt((bv * bv).sum(axis=-1))
    dot = (av * bv).sum(axis=-1)
    ok = (na >= EPS_NORM) & (nb >= EPS_NORM)
    na_safe = np.where(ok, na, 1.0)
    nb_safe = np.where(ok, nb, 1.0)
    denom = na_safe * nb_safe
    cos = np.where(ok, dot / denom, 0.0)

    def backward_fn(g):
        g = np.where(ok, g, 0.0)[..., None]
        c = cos[..., None]
        na_ = np.broadcast_to(na_safe, cos.shape)[..., None]
        nb_ = np.broadcast_to(nb_safe, cos.shape)[..., None]
        ga = g * (bv / (na_ * nb_) - c * av / (na_ * na_))
        gb = g * (av / (na_ * nb_) - c * bv / (nb_ * nb_))
        return _unbroadcast(ga, av.shape), _unbroadcast(gb, bv.shape)

    return _emit("cosine", np.asarray(cos, dtype=np.float64), (a, b), backward_fn)


def normalize_attention(alphas, active) -> Tensor:
    """Softmax over the active positions of the trailing axis.

    Inactive positions get exactly 0. Every row must have at least one
    active position.
    """
    x = as_tensor(alphas)
    active = np.asarray(active, dtype=bool)
    if active.shape != x.shape:
        raise DimensionError(f"normalize_attention: mask {active.shape} does not match scores {x.shape}")
    if x.ndim == 0 or not active.any(axis=-1).all():
        raise ValueError("normalize_attention: every row needs at least one active position")
    v = np.where(active, x.value, -np.inf)
    v = v - v.max(axis=-1, keepdims=True)
    e = np.where(active, np.exp(v), 0.0)
    p = e / e.sum(axis=-1, keepdims=True)

    def backward_fn(g):
        return (p * (g - (g * p).sum(axis=-1, keepdims=True)),)

    return _emit("softmax", p, (x,), backward_fn)


def log_softmax(x) -> Tensor:
    x = as_tensor(x)
    v = x.value - x.value.max(axis=-1, keepdims=True)
    out = v - np.log(np.exp(v).sum(axis=-1, keepdims=True))
    p = np.exp(out)
    return _emit("log_softmax", out, (x,),
                 lambda g: (g - p * g.sum(axis=-1, keepdims=True),))


# -- reverse pass ----------------------------------------------------------


def backward(tape: Tape, seed: Tensor) -> Gradients:
    """Accumulate d(seed)/d(node) for every node the seed depends on."""
    if seed.tape is not tape:
        raise ValueError("seed tensor is not recorded on this tape")
    if seed.value.size != 1:
        raise RankError(f"backward: seed must be a scalar, got shape {seed.shape}")
    grads = Gradients()
    grads[seed.node_id] = np.ones(seed.shape)
    for node in reversed(tape.nodes[: seed.node_id + 1]):
        g = grads.get(node.output)
        if g is None or node.backward is None:
            continue
        for inp, gi in zip(node.inputs, node.backward(g)):
            if inp < 0 or gi is None:
                continue
            prev = grads.get(inp)
            grads[inp] = gi if prev is None else prev + gi
    return grads


def finite_diff_check(f: Callable[[Tensor], Tensor], x, eps: float = 1e-5) -> float:
    """Max over components of |g_ad - g_fd| / max(1, |g_fd|), central differences."""
    x0 = np.array(x.value if isinstance(x, Tensor) else x, dtype=np.float64)
    tape = Tape()
    xt = tape.leaf(x0)
    out = f(xt)
    g_ad = backward(tape, out).get(xt.node_id, np.zeros_like(x0))

    def value_at(v):
        return np.asarray(f(Tensor(v)).value).item()

    g_fd = np.zeros_like(x0)
    flat = g_fd.reshape(-1)
    for i in range(x0.size):
        xp = x0.copy().reshape(-1)
        xm = x0.copy().reshape(-1)
        xp[i] += eps
        xm[i] -= eps
        flat[i] = (value_at(xp.reshape(x0.shape)) - value_at(xm.reshape(x0.shape))) / (2 * eps)
    err = np.abs(g_ad - g_fd) / np.maximum(1.0, np.abs(g_fd))
    return float(err.max()) if err.size else 0.0
