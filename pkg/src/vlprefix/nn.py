"""Small neural net building blocks over the tensor core.

Modules are plain containers: they expose parameters through attribute
walking, get dotted names bound once at construction of the root, and are
initialized from per-parameter derived rng streams so that adding or
reordering siblings never shifts anyone else's draw.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .rng import Rng
from .tensor import Parameter, Tensor


class Module:
    def children(self):
        for key in sorted(vars(self)):
            val = vars(self)[key]
            if isinstance(val, Module):
                yield key, val
            elif isinstance(val, Parameter):
                yield key, val
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, (Module, Parameter)):
                        yield f"{key}.{i}", item

    def named_parameters(self, prefix: str = ""):
        for key, val in self.children():
            path = f"{prefix}{key}"
            if isinstance(val, Parameter):
                yield path, val
            else:
                yield from val.named_parameters(prefix=path + ".")

    def parameters(self):
        for _, p in self.named_parameters():
            yield p

    def bind_names(self, prefix: str = "") -> None:
        """Stamp each parameter with its dotted path from this root."""
        for name, p in self.named_parameters(prefix=prefix):
            p.name = name

    def initialize(self, rng: Rng) -> None:
        """Each parameter draws from a stream keyed by its own name."""
        for name, p in self.named_parameters():
            if not p.name:
                raise RuntimeError("bind_names must run before initialize")
            p.initialize(rng.derive(p.name))

    def set_frozen(self, frozen: bool) -> None:
        for p in self.parameters():
            p.frozen = frozen


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, bias: bool = True):
        self.weight = Parameter((d_in, d_out), ("fanin",))
        self.bias = Parameter((d_out,)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return T.linear(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, d: int):
        self.gain = Parameter((d,), ("ones",))
        self.bias = Parameter((d,))

    def __call__(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gain, self.bias)


class MLP(Module):
    """Two affine maps with a ReLU between them."""

    def __init__(self, d_in: int, d_hidden: int, d_out: int):
        self.fc1 = Linear(d_in, d_hidden)
        self.fc2 = Linear(d_hidden, d_out)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(T.relu(self.fc1(x)))


class SelfAttention(Module):
    def __init__(self, d: int, heads: int):
        self.heads = heads
        self.wq = Linear(d, d)
        self.wk = Linear(d, d)
        self.wv = Linear(d, d)
        self.wo = Linear(d, d)

    def __call__(self, x: Tensor) -> Tensor:
        att = T.multi_head_attention(self.wq(x), self.wk(x), self.wv(x), self.heads)
        return self.wo(att)


class TransformerLayer(Module):
    """Pre-norm encoder layer: self-attention then feed-forward.

    Normalizing before each sublayer keeps the residual path identity-like
    at init, which lets the small stacks here train without lr warmup.
    """

    def __init__(self, d: int, heads: int, ffn_mult: int = 4):
        self.attn = SelfAttention(d, heads)
        self.norm1 = LayerNorm(d)
        self.ffn = MLP(d, ffn_mult * d, d)
        self.norm2 = LayerNorm(d)

    def __call__(self, x: Tensor, dropout_p: float = 0.0, rng: Rng | None = None) -> Tensor:
        a = self.attn(self.norm1(x))
        if dropout_p > 0.0:
            a = T.dropout(a, dropout_p, rng.derive("attn"))
        h = x + a
        f = self.ffn(self.norm2(h))
        if dropout_p > 0.0:
            f = T.dropout(f, dropout_p, rng.derive("ffn"))
        return h + f


class CrossAttentionBlock(Module):
    """Queries attend over a separate context; projections carry no bias so a
    zero query always produces uniform attention weights."""

    def __init__(self, d: int, heads: int):
        self.heads = heads
        self.wq = Parameter((d, d), ("fanin",))
        self.wk = Parameter((d, d), ("fanin",))
        self.wv = Parameter((d, d), ("fanin",))
        self.wo = Parameter((d, d), ("fanin",))

    def __call__(self, q: Tensor, kv: Tensor, return_weights: bool = False):
        return T.cross_attention(q, kv, self.heads, wq=self.wq, wk=self.wk,
                                 wv=self.wv, wo=self.wo, return_weights=return_weights)


class CrossAttentionLayer(Module):
    """Pre-norm layer whose attention reads from an external context."""

    def __init__(self, d: int, heads: int, ffn_mult: int = 4):
        self.attn = CrossAttentionBlock(d, heads)
        self.norm1 = LayerNorm(d)
        self.ffn = MLP(d, ffn_mult * d, d)
        self.norm2 = LayerNorm(d)

    def __call__(self, q: Tensor, kv: Tensor) -> Tensor:
        h = q + self.attn(self.norm1(q), kv)
        return h + self.ffn(self.norm2(h))


def sinusoidal_positions(length: int, d: int) -> np.ndarray:
    """Fixed sin/cos position table, rows 0..length-1."""
    pos = np.arange(length, dtype=np.float64)[:, None]
    i = np.arange(d // 2, dtype=np.float64)[None, :]
    angles = pos / np.power(10000.0, 2.0 * i / d)
    out = np.zeros((length, d))
    out[:, 0::2] = np.sin(angles)
    out[:, 1::2] = np.cos(angles)
    return out
