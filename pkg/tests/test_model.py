import dataclasses

import numpy as np
import pytest

from vlprefix.data import GenConfig, generate
from vlprefix.model import ModelConfig, Pipeline, VARIANTS
from vlprefix.reasoner import template_literal_tokens
from vlprefix.data import Vocab
from vlprefix.rng import Rng

D_SMALL = dict(d_v=24, d_e=32, d_lm=32, heads=4, image_layers=1,
               align_layers=1, reason_layers=2)


@pytest.fixture(scope="module")
def tiny():
    data = generate(GenConfig(seed=5, train=6, val=4, test=4, max_regions=3))
    vocab = Vocab.build(template_literal_tokens(), data.train)
    return data, vocab


def build(vocab, variant="full", lv=2, la=2, seed=0, dropout=0.1):
    if variant in ("visual_only", "random_align"):
        la = la if variant == "random_align" else 0
    if variant == "text_only":
        lv, la = 0, 0
    if variant == "visual_only":
        la = 0
    cfg = ModelConfig(lv=lv, la=la, variant=variant, dropout=dropout, **D_SMALL)
    return Pipeline.build(cfg, vocab, seed)


# ---------------------------------------------------------------------------
# configuration and construction


def test_variant_constraints_enforced():
    with pytest.raises(ValueError):
        ModelConfig(variant="visual_only", la=3)
    with pytest.raises(ValueError):
        ModelConfig(variant="text_only", lv=1, la=0)
    with pytest.raises(ValueError):
        ModelConfig(variant="nope")
    with pytest.raises(ValueError):
        ModelConfig(lv=-2)


def test_variants_instantiate_only_reachable_submodules(tiny):
    _, vocab = tiny
    full = build(vocab, "full")
    assert hasattr(full, "amn") and hasattr(full, "vmn")
    groups = {name.split(".")[0] for name, _ in full.named_parameters()}
    assert groups == {"encoders", "amn", "vmn", "reasoner"}

    vis = build(vocab, "visual_only")
    assert not hasattr(vis, "amn")
    groups = {name.split(".")[0] for name, _ in vis.named_parameters()}
    assert groups == {"encoders", "vmn", "reasoner"}

    rnd = build(vocab, "random_align")
    assert hasattr(rnd, "free_prefix")
    groups = {name.split(".")[0] for name, _ in rnd.named_parameters()}
    assert groups == {"encoders", "vmn", "free_prefix", "reasoner"}

    txt = build(vocab, "text_only")
    groups = {name.split(".")[0] for name, _ in txt.named_parameters()}
    assert groups == {"reasoner"}


def test_same_seed_builds_identical_models(tiny):
    data, vocab = tiny
    a = build(vocab, "full", seed=3)
    b = build(vocab, "full", seed=3)
    for (na, pa), (nb, pb) in zip(a.named_parameters(), b.named_parameters()):
        assert na == nb
        assert np.array_equal(pa.data, pb.data)
    c = build(vocab, "full", seed=4)
    assert any(not np.array_equal(pa.data, pc.data)
               for (_, pa), (_, pc) in zip(a.named_parameters(), c.named_parameters()))


# ---------------------------------------------------------------------------
# scoring


def test_scores_are_a_distribution_over_candidates(tiny):
    data, vocab = tiny
    pipe = build(vocab, "full")
    inst = data.train[0]
    scores = pipe.score_instance(inst)
    assert scores.x.shape == (4,)
    assert abs(scores.x.data.sum() - 1.0) < 1e-9
    assert 0 <= pipe.predict(inst) < 4


@pytest.mark.parametrize("variant", VARIANTS)
def test_prediction_is_deterministic(tiny, variant):
    data, vocab = tiny
    pipe = build(vocab, variant)
    inst = data.train[1]
    assert pipe.predict(inst) == pipe.predict(inst)


def test_candidate_order_equivariance_end_to_end(tiny):
    data, vocab = tiny
    pipe = build(vocab, "full")
    inst = data.train[2]
    base = pipe.score_instance(inst)
    perm = [2, 0, 3, 1]
    shuffled = dataclasses.replace(
        inst, candidates=[inst.candidates[p] for p in perm],
        q=perm.index(inst.q))
    moved = pipe.score_instance(shuffled)
    assert np.allclose(moved.x.data, base.x.data[perm], atol=1e-12)
    assert perm[int(np.argmax(moved.x.data))] == int(np.argmax(base.x.data))


def test_text_only_ignores_the_image(tiny):
    data, vocab = tiny
    pipe = build(vocab, "text_only")
    inst = data.train[3]
    doctored = dataclasses.replace(inst, features=np.zeros_like(inst.features))
    assert np.array_equal(pipe.score_instance(inst).x.data,
                          pipe.score_instance(doctored).x.data)


def test_full_variant_reads_the_image(tiny):
    data, vocab = tiny
    pipe = build(vocab, "full")
    inst = data.train[3]
    doctored = dataclasses.replace(inst, features=np.zeros_like(inst.features))
    assert not np.array_equal(pipe.score_instance(inst).x.data,
                              pipe.score_instance(doctored).x.data)


def test_random_align_prefix_feeds_the_scores(tiny):
    data, vocab = tiny
    pipe = build(vocab, "random_align")
    inst = data.train[0]
    before = pipe.score_instance(inst).x.data.copy()
    pipe.free_prefix.data += 1.0
    after = pipe.score_instance(inst).x.data
    assert not np.array_equal(before, after)


# ---------------------------------------------------------------------------
# losses and gradient routing


def test_warmup_loss_requires_alignment(tiny):
    data, vocab = tiny
    for variant in ("visual_only", "text_only", "random_align"):
        pipe = build(vocab, variant)
        with pytest.raises(ValueError):
            pipe.loss_warmup(data.train[0])


def test_warmup_gradients_touch_only_the_alignment_mapper(tiny):
    data, vocab = tiny
    pipe = build(vocab, "full")
    pipe.loss_warmup(data.train[0]).backward()
    with_grad = {name for name, p in pipe.named_parameters() if p.grad is not None}
    expected = {name for name, _ in pipe.amn_parameters()
                if not name.startswith("amn.head.")}
    assert with_grad == expected
    assert len(with_grad) == 22


def test_final_loss_reaches_every_submodule(tiny):
    data, vocab = tiny
    pipe = build(vocab, "full")
    for _, p in pipe.named_parameters():
        p.zero_grad()
    loss = pipe.loss_final(data.train[0])
    assert loss.shape == ()
    assert loss.item() > 0.0
    loss.backward()
    got = {name.split(".")[0] for name, p in pipe.named_parameters()
           if p.grad is not None and np.any(p.grad != 0.0)}
    assert got == {"encoders", "amn", "vmn", "reasoner"}


def test_shared_dropout_masks_keep_duplicate_candidates_tied(tiny):
    data, vocab = tiny
    pipe = build(vocab, "full", dropout=0.5)
    inst = data.train[0]
    clones = [dataclasses.replace(inst.candidates[0]) for _ in range(4)]
    twin = dataclasses.replace(inst, candidates=clones, q=0)
    logits = pipe.candidate_logits(twin, train_rng=Rng(9).derive("drop"))
    vals = [l.item() for l in logits]
    assert all(v == vals[0] for v in vals)
    # and the mask is real: scores move relative to the dropout-free pass
    clean = pipe.candidate_logits(twin)
    assert vals[0] != clean[0].item()
