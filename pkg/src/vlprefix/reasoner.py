"""Instruction-template assembly and the candidate-scoring text encoder.

A fixed template names four slots. Literal template words become ordinary
token embeddings; the two prefix slots take externally computed rows
verbatim; premise and answer slots take embedded token ids. Every row,
prefix rows included, receives a sinusoidal positional code, and a small
bidirectional encoder scores the sequence through its first row.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .data import tokenize
from .nn import MLP, LayerNorm, Module, TransformerLayer, sinusoidal_positions
from .rng import Rng
from .tensor import Parameter, Tensor

TEMPLATE = ("<cls> Is Answer correct or wrong based on conditions? <sep> "
            "Conditions: The Image is <V>, Bridge between the following text "
            "and image is <A>, Premise Text is <Premise Text> <sep> Answer is "
            "<Answer candidate>.")

SLOTS = ("<V>", "<A>", "<Premise Text>", "<Answer candidate>")


def template_segments(template: str = TEMPLATE):
    """Split the template into literal token runs around the four slots.

    Returns a list of token lists with len(SLOTS)+1 entries; slot i sits
    between segments i and i+1.
    """
    rest = template
    segments = []
    for marker in SLOTS:
        if rest.count(marker) != 1:
            raise ValueError(f"template must contain {marker} exactly once")
        literal, rest = rest.split(marker)
        segments.append(tokenize(literal))
    segments.append(tokenize(rest))
    return segments


def template_literal_tokens():
    out = []
    for seg in template_segments():
        out.extend(seg)
    return out


@dataclass
class AssembledSequence:
    embeddings: Tensor      # (T, d_lm), no positions applied yet
    positions: np.ndarray   # 0..T-1
    slot_map: dict          # marker -> (start, end) row span

    @property
    def length(self) -> int:
        return self.embeddings.shape[0]


@dataclass
class CandidateScores:
    x: Tensor  # (Y,) probabilities summing to one
    q: int

    def __post_init__(self):
        y = self.x.data
        if y.ndim != 1 or y.shape[0] < 2:
            raise ValueError("need at least two candidate probabilities")
        if abs(float(y.sum()) - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {y.sum():.12f}")
        if not (0 <= self.q < y.shape[0]):
            raise ValueError(f"gold index {self.q} out of range")


class Reasoner(Module):
    """Token embeddings, position-coded encoder stack, one-logit read-out."""

    def __init__(self, vocab_size: int, d_lm: int, heads: int, layers: int,
                 max_len: int = 512):
        self.d_lm = d_lm
        self.embed = Parameter((vocab_size, d_lm), ("normal", 1.0))
        self.stack = [TransformerLayer(d_lm, heads) for _ in range(layers)]
        self.norm = LayerNorm(d_lm)
        self.classify = MLP(d_lm, d_lm, 1)
        self._pos = sinusoidal_positions(max_len, d_lm)
        self._segments = template_segments()

    def literal_rows(self, vocab, segment: int) -> Tensor:
        ids = np.array([vocab.id_of(t) for t in self._segments[segment]], dtype=np.int64)
        return self.embed[ids]

    def assemble(self, vocab, prefix_v: Tensor, prefix_a: Tensor,
                 premise_ids, answer_ids) -> AssembledSequence:
        if len(premise_ids) == 0 or len(answer_ids) == 0:
            raise ValueError("premise and answer must be nonempty")
        fillers = (
            prefix_v,
            prefix_a,
            self.embed[np.asarray(premise_ids, dtype=np.int64)],
            self.embed[np.asarray(answer_ids, dtype=np.int64)],
        )
        rows = []
        slot_map = {}
        cursor = 0
        for i, marker in enumerate(SLOTS):
            seg = self.literal_rows(vocab, i)
            rows.append(seg)
            cursor += seg.shape[0]
            width = fillers[i].shape[0]
            slot_map[marker] = (cursor, cursor + width)
            if width:
                rows.append(fillers[i])
            cursor += width
        tail = self.literal_rows(vocab, len(SLOTS))
        rows.append(tail)
        cursor += tail.shape[0]
        return AssembledSequence(
            embeddings=T.concat(rows, axis=0),
            positions=np.arange(cursor),
            slot_map=slot_map,
        )

    def score_candidate(self, seq: AssembledSequence, dropout_p: float = 0.0,
                        rng: Rng | None = None) -> Tensor:
        h = seq.embeddings + Tensor(self._pos[seq.positions])
        for k, layer in enumerate(self.stack):
            h = layer(h, dropout_p=dropout_p,
                      rng=rng.derive(f"layer{k}") if rng is not None else None)
        h = self.norm(h)
        return T.reshape(self.classify(h[np.array([0])]), ())


def scores_from_logits(logits, q: int) -> CandidateScores:
    stacked = T.concat([T.reshape(l, (1,)) for l in logits], axis=0)
    return CandidateScores(x=T.softmax(stacked), q=q)


def loss_lf(scores: CandidateScores) -> Tensor:
    """Negative log-probability of the gold candidate, floored away from 0."""
    gold = scores.x[scores.q]
    if float(gold.data) < 1e-12:
        import warnings

        warnings.warn("gold probability underflowed; clipping at 1e-12")
    return T.neg(T.log(T.clip_min(gold, 1e-12)))


def predict(scores: CandidateScores) -> int:
    """Index of the largest probability; ties go to the lowest index."""
    return int(np.argmax(scores.x.data))
