"""Region-set image encoding and image-aligned answer representations.

The image side projects appearance+box features into the shared width,
prepends a learned global row, and runs a small self-attention stack with
no positional signal (regions are a set). The text side produces two
alignments of the answer against the encoded regions: one with per-token
queries and one with mean-pooled phrase-span queries, each through its own
cross-attention stack but over one shared token embedding table.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .nn import (CrossAttentionLayer, LayerNorm, Linear, Module,
                 TransformerLayer, sinusoidal_positions)
from .tensor import Parameter, Tensor


@dataclass
class RegionFeatureSet:
    """O appearance vectors with normalized [0,1] boxes, O >= 1."""

    features: np.ndarray  # (O, d_v)
    boxes: np.ndarray     # (O, 4)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.boxes = np.asarray(self.boxes, dtype=np.float64)
        if self.features.ndim != 2 or self.features.shape[0] == 0:
            raise ValueError("need at least one region")
        if self.boxes.shape != (self.features.shape[0], 4):
            raise ValueError("boxes must be (O, 4)")
        if np.any(self.boxes < 0.0) or np.any(self.boxes > 1.0):
            raise ValueError("boxes must lie in [0, 1]")

    @property
    def count(self) -> int:
        return self.features.shape[0]


@dataclass
class Chunking:
    """Ordered, non-overlapping spans that partition [0, n)."""

    spans: list  # of (start, end)

    def validate(self, n: int, window: int) -> None:
        expect = 0
        for start, end in self.spans:
            if start != expect or end <= start or end - start > window:
                raise ValueError(f"bad span ({start}, {end})")
            expect = end
        if expect != n:
            raise ValueError(f"spans cover [0, {expect}) but answer has {n} tokens")


@dataclass
class AlignmentOutputs:
    """Encoded image rows plus token- and phrase-aligned answer rows.

    Row 0 of each matrix is the stream's global vector.
    """

    h_image: Tensor   # (O+1, d_e)
    h_token: Tensor   # (N+1, d_e)
    h_phrase: Tensor  # (N+1, d_e)


def chunk(n_tokens: int, window: int) -> Chunking:
    """Greedy fixed-width spans over [0, n_tokens); the tail may be short."""
    if n_tokens <= 0:
        raise ValueError("cannot chunk an empty answer")
    if window < 1:
        raise ValueError("window must be >= 1")
    spans = [(s, min(s + window, n_tokens)) for s in range(0, n_tokens, window)]
    return Chunking(spans)


class ImageEncoder(Module):
    """Region set -> (O+1) x d_e matrix with a learned global row at index 0."""

    def __init__(self, d_v: int, d_e: int, heads: int, layers: int):
        self.project = Linear(d_v + 4, d_e)
        self.global_token = Parameter((1, d_e), ("normal", 1.0))
        self.stack = [TransformerLayer(d_e, heads) for _ in range(layers)]
        self.norm = LayerNorm(d_e)

    def __call__(self, rf: RegionFeatureSet) -> Tensor:
        raw = np.concatenate([rf.features, rf.boxes], axis=1)
        rows = self.project(Tensor(raw))
        h = T.concat([self.global_token, rows], axis=0)
        for layer in self.stack:
            h = layer(h)
        return self.norm(h)


class AnswerAligner(Module):
    """One cross-attention stack aligning answer-side queries over image rows."""

    def __init__(self, d_e: int, heads: int, layers: int):
        self.global_token = Parameter((1, d_e), ("normal", 1.0))
        self.stack = [CrossAttentionLayer(d_e, heads) for _ in range(layers)]
        self.norm = LayerNorm(d_e)

    def __call__(self, queries: Tensor, h_image: Tensor) -> Tensor:
        h = T.concat([self.global_token, queries], axis=0)
        for layer in self.stack:
            h = layer(h, h_image)
        return self.norm(h)


class AlignmentEncoder(Module):
    """Shared token embeddings feeding two separate aligner stacks."""

    def __init__(self, vocab_size: int, d_e: int, heads: int, layers: int, window: int):
        self.embed = Parameter((vocab_size, d_e), ("normal", 1.0))
        self.token_aligner = AnswerAligner(d_e, heads, layers)
        self.phrase_aligner = AnswerAligner(d_e, heads, layers)
        self.window = window
        self._pos = sinusoidal_positions(512, d_e)

    def embed_tokens(self, token_ids) -> Tensor:
        ids = np.asarray(token_ids, dtype=np.int64)
        if ids.size == 0:
            raise ValueError("answer must contain at least one token")
        return self.embed[ids] + Tensor(self._pos[1:ids.size + 1])

    def align_tokens(self, token_ids, h_image: Tensor) -> Tensor:
        return self.token_aligner(self.embed_tokens(token_ids), h_image)

    def align_phrases(self, token_ids, chunking: Chunking, h_image: Tensor) -> Tensor:
        emb = self.embed_tokens(token_ids)
        pooled = T.concat([T.tmean(emb[np.arange(s, e)], axis=0, keepdims=True)
                           for s, e in chunking.spans], axis=0)
        aligned = self.phrase_aligner(pooled, h_image)
        # row 0 is global; broadcast each span's row back over its tokens
        span_of = np.empty(len(token_ids), dtype=np.int64)
        for j, (s, e) in enumerate(chunking.spans):
            span_of[s:e] = j + 1
        body = aligned[span_of]
        return T.concat([aligned[np.array([0])], body], axis=0)


@dataclass
class EncoderConfig:
    d_v: int = 24
    d_e: int = 64
    heads: int = 4
    image_layers: int = 2
    align_layers: int = 1
    window: int = 3


class GroundingEncoders(Module):
    """Bundle of image encoder and answer aligners used ahead of the mappers."""

    def __init__(self, cfg: EncoderConfig, vocab_size: int):
        self.cfg = cfg
        self.image = ImageEncoder(cfg.d_v, cfg.d_e, cfg.heads, cfg.image_layers)
        self.align = AlignmentEncoder(vocab_size, cfg.d_e, cfg.heads,
                                      cfg.align_layers, cfg.window)

    def align_views(self, answer_ids, h_image: Tensor) -> AlignmentOutputs:
        """Both answer alignments against already-encoded image rows."""
        spans = chunk(len(answer_ids), self.align.window)
        return AlignmentOutputs(
            h_image=h_image,
            h_token=self.align.align_tokens(answer_ids, h_image),
            h_phrase=self.align.align_phrases(answer_ids, spans, h_image),
        )

    def __call__(self, rf: RegionFeatureSet, answer_ids) -> AlignmentOutputs:
        return self.align_views(answer_ids, self.image(rf))
