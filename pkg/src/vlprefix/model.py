"""End-to-end scoring pipeline with its ablation variants.

The full variant maps the encoded image to a visual prefix once per
instance, and maps the aligned answer views to a per-candidate alignment
prefix. visual_only drops the alignment path, random_align replaces it
with a free learned matrix, and text_only runs the bare template.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .data import Instance, Vocab
from .encoders import (EncoderConfig, GroundingEncoders, ImageEncoder,
                       RegionFeatureSet)
from .mapping import AlignMapper, VisualMapper
from .nn import Module
from .reasoner import (CandidateScores, Reasoner, loss_lf, predict,
                       scores_from_logits)
from .rng import Rng
from .tensor import Parameter, Tensor

VARIANTS = ("full", "visual_only", "random_align", "text_only")


@dataclass
class ModelConfig:
    lv: int = 5
    la: int = 5
    variant: str = "full"
    d_v: int = 24
    d_e: int = 64
    d_lm: int = 64
    heads: int = 4
    image_layers: int = 2
    align_layers: int = 1
    reason_layers: int = 2
    window: int = 3
    dropout: float = 0.1

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.lv < 0 or self.la < 0:
            raise ValueError("prefix lengths must be >= 0")
        if self.variant in ("visual_only", "text_only") and self.la != 0:
            raise ValueError(f"{self.variant} requires la=0")
        if self.variant == "text_only" and self.lv != 0:
            raise ValueError("text_only requires lv=0")

    @property
    def uses_image(self) -> bool:
        return self.variant in ("full", "visual_only", "random_align") and self.lv > 0

    @property
    def uses_align(self) -> bool:
        return self.variant == "full" and self.la > 0


class Pipeline(Module):
    """Instance scorer assembled from the configured submodules."""

    def __init__(self, cfg: ModelConfig, vocab: Vocab):
        self.cfg = cfg
        self.vocab = vocab
        enc_cfg = EncoderConfig(d_v=cfg.d_v, d_e=cfg.d_e, heads=cfg.heads,
                                image_layers=cfg.image_layers,
                                align_layers=cfg.align_layers, window=cfg.window)
        # each variant instantiates only the submodules it can reach, so the
        # parameter set in a checkpoint is exactly the set in use
        if cfg.uses_align:
            self.encoders = GroundingEncoders(enc_cfg, len(vocab))
            self.amn = AlignMapper(cfg.d_e, cfg.d_lm, cfg.heads, cfg.la)
        elif cfg.uses_image:
            self.encoders = ImageEncoder(cfg.d_v, cfg.d_e, cfg.heads, cfg.image_layers)
        if cfg.uses_image:
            self.vmn = VisualMapper(cfg.d_e, cfg.d_lm, cfg.lv)
        if cfg.variant == "random_align" and cfg.la > 0:
            self.free_prefix = Parameter((cfg.la, cfg.d_lm), ("normal", 1.0))
        self.reasoner = Reasoner(len(vocab), cfg.d_lm, cfg.heads, cfg.reason_layers)

    # -- construction helpers -------------------------------------------
    @classmethod
    def build(cls, cfg: ModelConfig, vocab: Vocab, seed: int) -> "Pipeline":
        pipe = cls(cfg, vocab)
        pipe.bind_names()
        pipe.initialize(Rng(seed).derive("init"))
        return pipe

    def encoder_parameters(self):
        """Parameters of the image encoder and aligner stacks (freezable)."""
        if hasattr(self, "encoders"):
            yield from self.encoders.named_parameters(prefix="encoders.")

    def amn_parameters(self):
        if hasattr(self, "amn"):
            yield from self.amn.named_parameters(prefix="amn.")

    # -- forward ---------------------------------------------------------
    def _regions(self, inst: Instance) -> RegionFeatureSet:
        return RegionFeatureSet(inst.features, inst.boxes)

    def _image_rows(self, inst: Instance):
        if self.cfg.uses_align:
            return self.encoders.image(self._regions(inst))
        return self.encoders(self._regions(inst))

    def candidate_logits(self, inst: Instance, train_rng: Rng | None = None,
                         collect=None):
        """One logit per candidate; optional hooks receive per-candidate parts."""
        cfg = self.cfg
        dropout_p = cfg.dropout if train_rng is not None else 0.0
        empty = Tensor(np.zeros((0, cfg.d_lm)))
        h_image = self._image_rows(inst) if cfg.uses_image else None
        prefix_v = self.vmn(h_image[0]) if cfg.uses_image else empty
        logits = []
        premise_ids = self.vocab.encode(inst.premise)
        for j, cand in enumerate(inst.candidates):
            answer_ids = self.vocab.encode(cand.text)
            if cfg.uses_align:
                outs = self.encoders.align_views(answer_ids, h_image)
                pivot = self.amn.pivot(outs.h_token, outs.h_phrase)
                prefix_a = self.amn.prefix(pivot)
            elif cfg.variant == "random_align" and cfg.la > 0:
                pivot, prefix_a = None, self.free_prefix
            else:
                pivot, prefix_a = None, empty
            seq = self.reasoner.assemble(self.vocab, prefix_v, prefix_a,
                                         premise_ids, answer_ids)
            # one mask stream per instance, shared by all candidates: dropout
            # noise then cancels out of the candidate comparison
            rng = train_rng.derive("mask") if train_rng is not None else None
            logits.append(self.reasoner.score_candidate(seq, dropout_p=dropout_p, rng=rng))
            if collect is not None:
                collect(j, pivot, seq)
        return logits

    def score_instance(self, inst: Instance, train_rng: Rng | None = None) -> CandidateScores:
        return scores_from_logits(self.candidate_logits(inst, train_rng=train_rng), inst.q)

    def predict(self, inst: Instance) -> int:
        with T.no_grad():
            return predict(self.score_instance(inst))

    def loss_final(self, inst: Instance, train_rng: Rng | None = None) -> Tensor:
        return loss_lf(self.score_instance(inst, train_rng=train_rng))

    def loss_warmup(self, inst: Instance) -> Tensor:
        """Candidate-level cross-entropy on the alignment score head only.

        Encoder outputs are detached so the warmup objective is local: only
        the alignment mapper (its score head included) sees gradients.
        """
        if not self.cfg.uses_align:
            raise ValueError("warmup loss requires the full variant with la > 0")
        with T.no_grad():
            h_image = self.encoders.image(self._regions(inst))
            views = [self.encoders.align_views(self.vocab.encode(c.text), h_image)
                     for c in inst.candidates]
        logits = []
        for outs in views:
            pivot = self.amn.pivot(outs.h_token, outs.h_phrase)
            logits.append(self.amn.warmup_logit(pivot))
        stacked = T.concat([T.reshape(l, (1,)) for l in logits], axis=0)
        return T.cross_entropy(T.softmax(stacked), inst.q)
