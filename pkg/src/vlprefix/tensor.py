"""Dense float64 tensors with eager reverse-mode differentiation.

Every forward op records a closure that scatters the output gradient back
into its parents; ``backward`` on a scalar loss walks the recorded graph
once in reverse topological order. Graphs are built per forward pass and
never reused. All math is 64-bit; there is no device or dtype dispatch.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class BackwardError(RuntimeError):
    """The autodiff tape was used in an unsupported way."""


class NumericsError(ArithmeticError):
    """A forward op produced or received values outside its domain."""


_grad_enabled = True


def grad_enabled() -> bool:
    return _grad_enabled


class no_grad:
    """Context manager that suspends graph recording (forward values only)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn", "_backward_ran")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward_fn = None
        self._backward_ran = False

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
        return float(self.data)

    def detach(self) -> "Tensor":
        """Same values as a fresh leaf, cut off from the recorded graph."""
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __truediv__(self, other):
        return div(self, _lift(other))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _lift(other))

    def __getitem__(self, idx):
        return take(self, idx)

    def backward(self):
        backward(self)


class Parameter(Tensor):
    """Trainable leaf tensor with a unique dotted-path name and a freeze flag."""

    __slots__ = ("name", "frozen", "init_spec")

    def __init__(self, shape, init_spec=("zeros",), name: str = ""):
        super().__init__(np.zeros(shape), requires_grad=True)
        self.name = name
        self.frozen = False
        self.init_spec = init_spec

    def initialize(self, rng) -> None:
        kind = self.init_spec[0]
        if kind == "zeros":
            self.data[...] = 0.0
        elif kind == "ones":
            self.data[...] = 1.0
        elif kind == "normal":
            std = self.init_spec[1]
            self.data[...] = rng.normal(self.data.shape, std=std)
        elif kind == "fanin":
            std = 1.0 / np.sqrt(self.data.shape[0])
            self.data[...] = rng.normal(self.data.shape, std=std)
        else:
            raise ValueError(f"unknown init spec {self.init_spec!r}")


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64)
    else:
        t.grad += g


def _node(data: np.ndarray, parents: tuple, backward_fn) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward_fn = backward_fn
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum-reduce a broadcast gradient back to the original operand shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise ops


def add(a: Tensor, b: Tensor) -> Tensor:
    def bw(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(g, b.data.shape))

    return _node(a.data + b.data, (a, b), bw)


def sub(a: Tensor, b: Tensor) -> Tensor:
    def bw(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(-g, b.data.shape))

    return _node(a.data - b.data, (a, b), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    def bw(g):
        _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return _node(a.data * b.data, (a, b), bw)


def div(a: Tensor, b: Tensor) -> Tensor:
    if np.any(b.data == 0.0):
        raise NumericsError("division by zero")

    def bw(g):
        _accumulate(a, _unbroadcast(g / b.data, a.data.shape))
        _accumulate(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _node(a.data / b.data, (a, b), bw)


def neg(a: Tensor) -> Tensor:
    def bw(g):
        _accumulate(a, -g)

    return _node(-a.data, (a,), bw)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0.0

    def bw(g):
        _accumulate(a, g * mask)

    return _node(a.data * mask, (a,), bw)


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0.0):
        raise NumericsError("log of non-positive value")

    def bw(g):
        _accumulate(a, g / a.data)

    return _node(np.log(a.data), (a,), bw)


def clip_min(a: Tensor, floor: float) -> Tensor:
    mask = a.data >= floor

    def bw(g):
        _accumulate(a, g * mask)

    return _node(np.maximum(a.data, floor), (a,), bw)


def square(a: Tensor) -> Tensor:
    def bw(g):
        _accumulate(a, 2.0 * g * a.data)

    return _node(a.data * a.data, (a,), bw)


# ---------------------------------------------------------------------------
# reductions and reshaping


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    def bw(g):
        if axis is None:
            _accumulate(a, np.broadcast_to(g, a.data.shape))
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            _accumulate(a, np.broadcast_to(gg, a.data.shape))

    return _node(a.data.sum(axis=axis, keepdims=keepdims), (a,), bw)


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = a.data.size
    else:
        count = a.data.shape[axis]

    def bw(g):
        if axis is None:
            _accumulate(a, np.broadcast_to(g / count, a.data.shape))
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            _accumulate(a, np.broadcast_to(gg / count, a.data.shape))

    return _node(a.data.mean(axis=axis, keepdims=keepdims), (a,), bw)


def reshape(a: Tensor, shape) -> Tensor:
    def bw(g):
        _accumulate(a, g.reshape(a.data.shape))

    return _node(a.data.reshape(shape), (a,), bw)


def transpose(a: Tensor, axes) -> Tensor:
    inverse = np.argsort(axes)

    def bw(g):
        _accumulate(a, g.transpose(inverse))

    return _node(a.data.transpose(axes), (a,), bw)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = tuple(tensors)
    if not tensors:
        raise ShapeError("concat of zero tensors")
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            _accumulate(t, g[tuple(sl)])

    return _node(np.concatenate([t.data for t in tensors], axis=axis), tensors, bw)


def take(a: Tensor, idx) -> Tensor:
    """Basic or integer-array indexing with scatter-add on the way back."""
    fancy = isinstance(idx, (list, np.ndarray))
    if fancy:
        idx = np.asarray(idx)

    def bw(g):
        if not a.requires_grad:
            return
        full = np.zeros_like(a.data)
        if fancy:
            np.add.at(full, idx, g)
        else:
            full[idx] = g
        _accumulate(a, full)

    return _node(a.data[idx], (a,), bw)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape[-1] != b.data.shape[-2 if b.data.ndim > 1 else 0]:
        raise ShapeError(f"matmul inner extents differ: {a.data.shape} x {b.data.shape}")

    def bw(g):
        if a.requires_grad:
            ga = np.matmul(g, np.swapaxes(b.data, -1, -2)) if b.data.ndim > 1 else np.outer(g, b.data)
            _accumulate(a, _unbroadcast(ga, a.data.shape))
        if b.requires_grad:
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g) if a.data.ndim > 1 else np.outer(a.data, g)
            _accumulate(b, _unbroadcast(gb, b.data.shape))

    return _node(np.matmul(a.data, b.data), (a, b), bw)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Fused x @ weight + bias for 2-D x; one graph node instead of two."""
    if x.data.shape[-1] != weight.data.shape[0]:
        raise ShapeError(f"linear: {x.data.shape} x {weight.data.shape}")
    out = x.data @ weight.data
    if bias is not None:
        out = out + bias.data
    parents = (x, weight) if bias is None else (x, weight, bias)

    def bw(g):
        if x.requires_grad:
            _accumulate(x, g @ weight.data.T)
        if weight.requires_grad:
            _accumulate(weight, x.data.T @ g)
        if bias is not None and bias.requires_grad:
            _accumulate(bias, g.sum(axis=tuple(range(g.ndim - 1))))

    return _node(out, parents, bw)


# ---------------------------------------------------------------------------
# normalization and attention primitives


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    if not (-x.data.ndim <= axis < x.data.ndim):
        raise ShapeError(f"softmax axis {axis} out of range for ndim {x.data.ndim}")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        inner = (g * y).sum(axis=axis, keepdims=True)
        _accumulate(x, y * (g - inner))

    return _node(y, (x,), bw)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    d = x.data.shape[-1]
    if d == 0:
        raise ShapeError("layer_norm over zero-length rows")
    if gain.data.shape != (d,) or bias.data.shape != (d,):
        raise ShapeError("layer_norm gain/bias must match the last axis")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    normed = centered * inv
    y = normed * gain.data + bias.data

    def bw(g):
        if gain.requires_grad:
            _accumulate(gain, (g * normed).sum(axis=tuple(range(g.ndim - 1))))
        if bias.requires_grad:
            _accumulate(bias, g.sum(axis=tuple(range(g.ndim - 1))))
        if x.requires_grad:
            gn = g * gain.data
            term = gn - gn.mean(axis=-1, keepdims=True) - normed * (gn * normed).mean(axis=-1, keepdims=True)
            _accumulate(x, term * inv)

    return _node(y, (x, gain, bias), bw)


def dropout(x: Tensor, p: float, rng) -> Tensor:
    """Inverted dropout; identity when p == 0. Mask comes from the given rng."""
    if p <= 0.0:
        return x
    keep = (rng.uniform(x.data.shape) >= p) / (1.0 - p)

    def bw(g):
        _accumulate(x, g * keep)

    return _node(x.data * keep, (x,), bw)


def multi_head_attention(q: Tensor, k: Tensor, v: Tensor, heads: int, return_weights: bool = False):
    """Scaled dot-product attention over row sets, split into `heads` slices.

    q is (m, d), k/v are (n, d); output is (m, d). Per-head scaling uses the
    head width d/heads. Weight rows always sum to one.
    """
    m, d = q.data.shape
    n = k.data.shape[0]
    if n == 0:
        raise ShapeError("attention over an empty context")
    if d % heads != 0:
        raise ShapeError(f"width {d} not divisible by {heads} heads")
    dk = d // heads
    qh = transpose(reshape(q, (m, heads, dk)), (1, 0, 2))
    kh = transpose(reshape(k, (n, heads, dk)), (1, 0, 2))
    vh = transpose(reshape(v, (n, heads, dk)), (1, 0, 2))
    scores = mul(matmul(qh, transpose(kh, (0, 2, 1))), Tensor(1.0 / np.sqrt(dk)))
    weights = softmax(scores, axis=-1)
    ctx = matmul(weights, vh)
    out = reshape(transpose(ctx, (1, 0, 2)), (m, d))
    if return_weights:
        return out, weights
    return out


def cross_attention(q: Tensor, kv: Tensor, heads: int,
                    wq: Tensor | None = None, wk: Tensor | None = None,
                    wv: Tensor | None = None, wo: Tensor | None = None,
                    return_weights: bool = False):
    """Attend query rows over a context; optional bias-free projections."""
    qp = q if wq is None else matmul(q, wq)
    kp = kv if wk is None else matmul(kv, wk)
    vp = kv if wv is None else matmul(kv, wv)
    res = multi_head_attention(qp, kp, vp, heads, return_weights=return_weights)
    out, weights = res if return_weights else (res, None)
    if wo is not None:
        out = matmul(out, wo)
    if return_weights:
        return out, weights
    return out


def cross_entropy(probabilities: Tensor, gold: int) -> Tensor:
    """Negative log of the gold entry of an explicit distribution."""
    p = probabilities.data
    if p.ndim != 1:
        raise ShapeError("cross_entropy expects a 1-D distribution")
    if not (0 <= gold < p.shape[0]):
        raise IndexError(f"gold index {gold} out of range for {p.shape[0]} entries")
    if np.any(p <= 0.0):
        raise NumericsError("cross_entropy needs strictly positive probabilities")
    if abs(p.sum() - 1.0) > 1e-9:
        raise NumericsError(f"probabilities sum to {p.sum():.12f}, not 1")
    return neg(log(take(probabilities, gold)))


# ---------------------------------------------------------------------------
# backward pass


def backward(loss: Tensor) -> None:
    """Reverse-topological gradient sweep from a scalar loss."""
    if loss.data.size != 1:
        raise BackwardError("backward requires a scalar loss")
    if loss._backward_ran:
        raise BackwardError("backward already ran on this graph; rebuild the forward pass first")
    loss._backward_ran = True
    if not loss.requires_grad:
        return

    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        fn = node._backward_fn
        if fn is not None:
            fn(node.grad)
            node._backward_fn = None
            node._parents = ()
