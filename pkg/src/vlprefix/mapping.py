"""Mapping networks that turn encoder outputs into reasoner-space prefixes.

The visual mapper reads only the global image vector and emits a fixed
number of prefix rows. The alignment mapper condenses the token- and
phrase-aligned views through two cross-attention+MLP layers into one pivot
vector, then projects that into prefix rows with the same MLP shape the
visual mapper uses. A one-logit score head on the pivot vector drives the
warmup objective.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .nn import CrossAttentionBlock, Linear, MLP, Module
from .tensor import Tensor


class VisualMapper(Module):
    """Global image vector -> length x d_lm prefix via MLP with ReLU."""

    def __init__(self, d_e: int, d_lm: int, length: int):
        if length < 1:
            raise ValueError("visual prefix length must be >= 1")
        self.length = length
        self.d_lm = d_lm
        self.net = MLP(d_e, d_lm, length * d_lm)

    def __call__(self, h_image_global: Tensor) -> Tensor:
        flat = self.net(T.reshape(h_image_global, (1, -1)))
        return T.reshape(flat, (self.length, self.d_lm))


class AlignLayer(Module):
    """One condensation step: project a query, cross-attend, run an MLP.

    The query projection carries a bias; the attention projections do not,
    so an all-zero query yields uniform weights over the context rows.
    """

    def __init__(self, d_query: int, d_e: int, d_lm: int, heads: int):
        self.query = Linear(d_query, d_e)
        self.attend = CrossAttentionBlock(d_e, heads)
        self.mix = MLP(d_e, d_lm, d_e)

    def __call__(self, query_source: Tensor, context: Tensor) -> Tensor:
        q = self.query(T.reshape(query_source, (1, -1)))
        attended = self.attend(q, context)
        return T.reshape(self.mix(attended), (-1,))


class AlignMapper(Module):
    """Two-layer condenser over aligned answer rows plus the prefix head.

    Layer 1 queries with the joined token/phrase globals; layer 2 queries
    with layer 1's output. The context for both is the 2N non-global rows
    of the two aligned views stacked together.
    """

    def __init__(self, d_e: int, d_lm: int, heads: int, length: int):
        if length < 0:
            raise ValueError("alignment prefix length must be >= 0")
        self.length = length
        self.d_lm = d_lm
        self.layer1 = AlignLayer(2 * d_e, d_e, d_lm, heads)
        self.layer2 = AlignLayer(d_e, d_e, d_lm, heads)
        self.head = MLP(d_e, d_lm, length * d_lm) if length > 0 else None
        self.score = Linear(d_e, 1)

    def context_rows(self, h_token: Tensor, h_phrase: Tensor) -> Tensor:
        n = h_token.shape[0] - 1
        if n < 1:
            raise ValueError("aligned views must contain at least one token row")
        body = list(range(1, n + 1))
        return T.concat([h_token[body], h_phrase[body]], axis=0)

    def pivot(self, h_token: Tensor, h_phrase: Tensor) -> Tensor:
        """Condensed alignment vector of shape (d_e,)."""
        context = self.context_rows(h_token, h_phrase)
        joined = T.concat([h_token[0], h_phrase[0]], axis=0)
        first = self.layer1(joined, context)
        return self.layer2(first, context)

    def prefix(self, pivot: Tensor) -> Tensor:
        """length x d_lm rows; empty matrix when length is zero."""
        if self.head is None:
            return Tensor(np.zeros((0, self.d_lm)))
        flat = self.head(T.reshape(pivot, (1, -1)))
        return T.reshape(flat, (self.length, self.d_lm))

    def __call__(self, h_token: Tensor, h_phrase: Tensor):
        p = self.pivot(h_token, h_phrase)
        return p, self.prefix(p)

    def warmup_logit(self, pivot: Tensor) -> Tensor:
        return T.reshape(self.score(T.reshape(pivot, (1, -1))), ())
