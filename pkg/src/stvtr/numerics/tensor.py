"""Dense-array substrate with reverse-mode differentiation.

A :class:`Tensor` wraps a NumPy array and records the backward closure of
the operation that produced it.  :func:`backward` replays the tape in
reverse topological order.  The engine supports exactly what the encoders
and losses need: elementwise arithmetic with NumPy broadcasting, (batched)
matrix products, axis reductions, a handful of fused neural-net kernels,
and gather/replicate bookkeeping ops.

Two storage modes are used throughout the project: float32 for training
and float64 for verification.  Ops preserve the dtype of their inputs;
:func:`finite_diff_check` insists on float64.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Iterable, Iterator, NamedTuple

import numpy as np

from . import kernels

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable tape recording inside the block (evaluation fast path)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    """A dense array plus the bookkeeping needed for reverse-mode autodiff."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    # Make ndarray <op> Tensor defer to the reflected Tensor operators
    # instead of producing an object array.
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    # -- introspection -------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"

    # -- arithmetic ----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(_as_tensor(other), -1.0))

    def __rsub__(self, other):
        return add(_as_tensor(other), mul(self, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    # -- shape ops (defined below as functions) --------------------------

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def transpose(self, *axes):
        return transpose(self, axes if axes else None)

    @property
    def T(self):
        return transpose(self, None)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x))


def _make(data: np.ndarray, parents: tuple[Tensor, ...], bwd: Callable[[np.ndarray], None]) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = bwd
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of NumPy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise / linear algebra
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data + b.data

    def bwd(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _make(out_data, (a, b), bwd)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data * b.data

    def bwd(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _make(out_data, (a, b), bwd)


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data / b.data

    def bwd(g):
        _accum(a, _unbroadcast(g / b.data, a.data.shape))
        _accum(b, _unbroadcast(-g * out_data / b.data, b.data.shape))

    return _make(out_data, (a, b), bwd)


def matmul(a, b) -> Tensor:
    """Matrix product, batched over leading axes like ``np.matmul``.

    Raises ``ValueError`` when the inner extents disagree.
    """
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.shape[-1] != b.data.shape[-2 if b.data.ndim > 1 else 0]:
        raise ValueError(
            f"matmul inner extents disagree: {a.data.shape} x {b.data.shape}"
        )
    out_data = np.matmul(a.data, b.data)

    def bwd(g):
        if a.requires_grad:
            ga = np.matmul(g, np.swapaxes(b.data, -1, -2)) if b.data.ndim > 1 else np.multiply.outer(g, b.data)
            _accum(a, _unbroadcast(ga, a.data.shape))
        if b.requires_grad:
            if b.data.ndim > 1:
                gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
            else:
                gb = np.matmul(np.swapaxes(a.data, -1, -2), g[..., None])[..., 0]
            _accum(b, _unbroadcast(gb, b.data.shape))

    return _make(out_data, (a, b), bwd)


def relu(x) -> Tensor:
    x = _as_tensor(x)
    mask = x.data > 0
    out_data = np.where(mask, x.data, np.asarray(0.0, dtype=x.data.dtype))

    def bwd(g):
        _accum(x, g * mask)

    return _make(out_data, (x,), bwd)


def absolute(x) -> Tensor:
    x = _as_tensor(x)
    out_data = np.abs(x.data)
    sign = np.sign(x.data)

    def bwd(g):
        _accum(x, g * sign)

    return _make(out_data, (x,), bwd)


def exp(x) -> Tensor:
    x = _as_tensor(x)
    out_data = np.exp(x.data)

    def bwd(g):
        _accum(x, g * out_data)

    return _make(out_data, (x,), bwd)


def log(x) -> Tensor:
    x = _as_tensor(x)
    out_data = np.log(x.data)

    def bwd(g):
        _accum(x, g / x.data)

    return _make(out_data, (x,), bwd)


def gelu(x) -> Tensor:
    x = _as_tensor(x)
    out_data = kernels.gelu_fwd(x.data)

    def bwd(g):
        _accum(x, kernels.gelu_bwd(x.data, g))

    return _make(out_data, (x,), bwd)


# ---------------------------------------------------------------------------
# reductions and shape bookkeeping
# ---------------------------------------------------------------------------


def sum_(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    out_data = x.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            axes = axis if isinstance(axis, tuple) else (axis,)
            for ax in sorted(a % x.data.ndim for a in axes):
                g = np.expand_dims(g, ax)
        _accum(x, np.broadcast_to(g, x.data.shape).copy())

    return _make(out_data, (x,), bwd)


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    if axis is None:
        n = x.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = 1
        for ax in axes:
            n *= x.data.shape[ax]
    return mul(sum_(x, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(x, shape) -> Tensor:
    x = _as_tensor(x)
    out_data = x.data.reshape(shape)

    def bwd(g):
        _accum(x, g.reshape(x.data.shape))

    return _make(out_data, (x,), bwd)


def transpose(x, axes=None) -> Tensor:
    x = _as_tensor(x)
    out_data = x.data.transpose(axes)

    def bwd(g):
        if axes is None:
            _accum(x, g.transpose())
        else:
            inv = np.argsort(axes)
            _accum(x, g.transpose(inv))

    return _make(out_data, (x,), bwd)


def diag_part(x) -> Tensor:
    """Diagonal of a square matrix as a vector."""
    x = _as_tensor(x)
    n, m = x.data.shape
    if n != m:
        raise ValueError(f"diag_part expects a square matrix, got {x.data.shape}")
    out_data = np.diagonal(x.data).copy()

    def bwd(g):
        gx = np.zeros_like(x.data)
        np.fill_diagonal(gx, g)
        _accum(x, gx)

    return _make(out_data, (x,), bwd)


def take_rows(table, ids: np.ndarray) -> Tensor:
    """Row gather (embedding lookup): ``table[ids]`` with scatter-add backward."""
    table = _as_tensor(table)
    ids = np.asarray(ids)
    out_data = table.data[ids]

    def bwd(g):
        if table.requires_grad:
            gt = np.zeros_like(table.data)
            np.add.at(gt, ids, g)
            _accum(table, gt)

    return _make(out_data, (table,), bwd)


def repeat_rows(x, k: int) -> Tensor:
    """Repeat each row ``k`` consecutive times: (T, D) -> (T*k, D)."""
    x = _as_tensor(x)
    out_data = np.repeat(x.data, k, axis=0)

    def bwd(g):
        t, d = x.data.shape
        _accum(x, g.reshape(t, k, d).sum(axis=1))

    return _make(out_data, (x,), bwd)


def tile_rows(x, k: int) -> Tensor:
    """Tile the whole row block ``k`` times: (S, D) -> (k*S, D)."""
    x = _as_tensor(x)
    out_data = np.tile(x.data, (k, 1))

    def bwd(g):
        s, d = x.data.shape
        _accum(x, g.reshape(k, s, d).sum(axis=0))

    return _make(out_data, (x,), bwd)


# ---------------------------------------------------------------------------
# fused kernels (backend-selected)
# ---------------------------------------------------------------------------


def softmax_lastdim(x) -> Tensor:
    """Numerically stabilized softmax over the last axis; rows sum to one."""
    x = _as_tensor(x)
    if x.data.shape[-1] < 1:
        raise ValueError("softmax_lastdim requires a non-empty last axis")
    y = kernels.softmax_fwd(x.data)

    def bwd(g):
        _accum(x, kernels.softmax_bwd(y, g))

    return _make(y, (x,), bwd)


def layernorm(x, gain, eps: float = 1e-5) -> Tensor:
    """LayerNorm over the last axis with a learned gain (no bias)."""
    x, gain = _as_tensor(x), _as_tensor(gain)
    y, xhat, inv = kernels.layernorm_fwd(x.data, gain.data, eps)

    def bwd(g):
        gx, ggain = kernels.layernorm_bwd(g, xhat, inv, gain.data)
        _accum(x, gx)
        _accum(gain, ggain)

    return _make(y, (x, gain), bwd)


def rope_rotate(x, cos: np.ndarray, sin: np.ndarray) -> Tensor:
    """Rotate interleaved feature pairs of ``x`` by fixed per-token angles.

    ``x`` is (..., n_tokens, dim); ``cos``/``sin`` are constant
    (n_tokens, dim/2) tables.  The backward pass rotates by the negated
    angles, so per-pair norms are preserved exactly in both directions.
    """
    x = _as_tensor(x)
    if x.data.shape[-2] != cos.shape[0] or x.data.shape[-1] != 2 * cos.shape[1]:
        raise ValueError(
            f"rotation table {cos.shape} does not match sequence {x.data.shape}"
        )
    c = cos.astype(x.data.dtype, copy=False)
    s = sin.astype(x.data.dtype, copy=False)
    y = kernels.rope_fwd(x.data, c, s)

    def bwd(g):
        _accum(x, kernels.rope_bwd(g, c, s))

    return _make(y, (x,), bwd)


class NormalizedRows(NamedTuple):
    values: Tensor
    zero_rows: np.ndarray


def l2_normalize(x, axis: int = -1) -> NormalizedRows:
    """Scale rows along ``axis`` to unit Euclidean norm.

    All-zero rows are returned unchanged and flagged in ``zero_rows``.
    """
    x = _as_tensor(x)
    if axis not in (-1, x.data.ndim - 1):
        moved = transpose(x, tuple(i for i in range(x.data.ndim) if i != axis % x.data.ndim) + (axis % x.data.ndim,))
        res = l2_normalize(moved, axis=-1)
        back_axes = list(range(x.data.ndim - 1))
        back_axes.insert(axis % x.data.ndim, x.data.ndim - 1)
        return NormalizedRows(transpose(res.values, tuple(back_axes)), res.zero_rows)
    y, safe, zero = kernels.l2norm_fwd(x.data)

    def bwd(g):
        _accum(x, kernels.l2norm_bwd(g, y, safe))

    return NormalizedRows(_make(y, (x,), bwd), zero)


# ---------------------------------------------------------------------------
# parameters and the backward driver
# ---------------------------------------------------------------------------


class ParameterSet:
    """Named map of trainable leaves, each with a same-shape gradient slot."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(np.asarray(value), requires_grad=True)
        t.grad = np.zeros_like(t.data)
        self._params[name] = t
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

    def zero_grads(self) -> None:
        for t in self._params.values():
            if t.grad is None:
                t.grad = np.zeros_like(t.data)
            else:
                t.grad.fill(0.0)

    def n_parameters(self) -> int:
        return sum(t.data.size for t in self._params.values())

    def values_dict(self) -> dict[str, np.ndarray]:
        return {k: t.data for k, t in self._params.items()}

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        for k, t in self._params.items():
            v = np.asarray(values[k], dtype=t.data.dtype)
            if v.shape != t.data.shape:
                raise ValueError(f"shape mismatch for {k!r}: {v.shape} vs {t.data.shape}")
            t.data = v.copy()
            t.grad = np.zeros_like(t.data)


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, Iterator[Tensor]]] = [(root, iter(root._parents))]
    seen.add(id(root))
    while stack:
        node, it = stack[-1]
        advanced = False
        for p in it:
            if id(p) not in seen and p.requires_grad:
                seen.add(id(p))
                stack.append((p, iter(p._parents)))
                advanced = True
                break
        if not advanced:
            order.append(node)
            stack.pop()
    return order


def backward(loss: Tensor, params: ParameterSet | None = None) -> ParameterSet | None:
    """Accumulate d(loss)/d(leaf) into every reachable leaf's gradient slot.

    ``loss`` must be scalar.  Leaf gradients are *accumulated*; call
    ``ParameterSet.zero_grads()`` at step start.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward expects a scalar loss, got shape {loss.data.shape}")
    if not loss.requires_grad:
        return params
    order = _topo_order(loss)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None:
            node._backward(node.grad)
            node.grad = None  # free intermediate storage
    return params


def finite_diff_check(
    f: Callable[[ParameterSet], Tensor],
    params: ParameterSet,
    eps: float = 1e-5,
) -> float:
    """Max scaled deviation between backward() and central finite differences.

    ``f(params)`` must rebuild the scalar loss from the current leaf values.
    Requires float64 leaves; per-coordinate error is
    ``|fd - analytic| / max(1, |fd|, |analytic|)`` so that near-zero
    gradients are compared absolutely.  Returns 0.0 for an empty set.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    for name, t in params.items():
        if t.data.dtype != np.float64:
            raise ValueError(f"finite_diff_check requires float64 leaves ({name!r} is {t.data.dtype})")

    params.zero_grads()
    loss = f(params)
    backward(loss, params)
    analytic = {k: t.grad.copy() for k, t in params.items()}

    worst = 0.0
    for name, t in params.items():
        w = t.data
        flat = w.reshape(-1)
        an = analytic[name].reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + eps
            with no_grad():
                fp = float(f(params).data)
            flat[i] = keep - eps
            with no_grad():
                fm = float(f(params).data)
            flat[i] = keep
            fd = (fp - fm) / (2.0 * eps)
            err = abs(fd - an[i]) / max(1.0, abs(fd), abs(an[i]))
            if err > worst:
                worst = err
    return worst
