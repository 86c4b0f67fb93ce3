import numpy as np
import pytest

from vlprefix.data import GenConfig, RESERVED, generate
from vlprefix.training import (Adam, CSV_HEADER, Metrics, RunConfig, Trainer,
                               coerce_field, csv_row, evaluate, format_table,
                               load_pipeline, parse_config_file, train,
                               write_csv)
from vlprefix.tensor import Parameter
from vlprefix.rng import Rng

QUIET = lambda msg: None


@pytest.fixture(scope="module")
def tiny_data():
    return generate(GenConfig(seed=0, train=16, val=8, test=8, max_regions=3))


def tiny_config(**kw):
    base = dict(seed=0, variant="full", lv=2, la=2, epochs=1, lr=1e-3,
                batch_size=8, dropout=0.0, n_whole=0)
    base.update(kw)
    return RunConfig(**base)


# ---------------------------------------------------------------------------
# config handling


def test_variant_coercion_zeroes_prefix_lengths():
    assert RunConfig(variant="text_only", lv=5, la=5).lv == 0
    assert RunConfig(variant="text_only", lv=5, la=5).la == 0
    vo = RunConfig(variant="visual_only", lv=5, la=5)
    assert (vo.lv, vo.la) == (5, 0)


def test_config_rejects_bad_values():
    with pytest.raises(ValueError):
        RunConfig(variant="telepathy")
    with pytest.raises(ValueError):
        RunConfig(lv=-1)
    with pytest.raises(ValueError):
        RunConfig.from_dict({"seed": 0, "bogus_key": 1})


def test_config_roundtrips_through_dict():
    cfg = tiny_config(lr=3e-3, freeze_encoders=True)
    assert RunConfig.from_dict(cfg.to_dict()) == cfg


def test_config_file_parsing(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(
        "# comment line\n"
        "seed = 3\n"
        "lr = 0.01  # trailing comment\n"
        "freeze_encoders = true\n"
        "variant = visual_only\n"
        "\n")
    parsed = parse_config_file(path)
    assert parsed == {"seed": 3, "lr": 0.01, "freeze_encoders": True,
                      "variant": "visual_only"}


def test_config_file_errors_name_lines(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("seed = 1\nnot a pair\n")
    with pytest.raises(ValueError, match="line 2"):
        parse_config_file(path)
    path.write_text("mystery = 9\n")
    with pytest.raises(ValueError, match="unknown key"):
        parse_config_file(path)


def test_boolean_coercion_is_strict():
    assert coerce_field("freeze_encoders", "YES") is True
    assert coerce_field("freeze_encoders", "0") is False
    with pytest.raises(ValueError):
        coerce_field("freeze_encoders", "maybe")


# ---------------------------------------------------------------------------
# metrics


def test_metrics_reject_rates_not_summing_to_100():
    with pytest.raises(ValueError):
        Metrics(accuracy=50.0, at=50.0, d1=30.0, af=10.0, d2=5.0, count=20)


class FixedPredictor:
    def __init__(self, picks):
        self.picks = dict(picks)

    def predict(self, inst):
        return self.picks[inst.id]


def test_breakdown_rates_from_hand_picked_predictions(tiny_data):
    insts = tiny_data.val[:4]
    # choose one candidate from each category per instance
    picks = {}
    wanted = ["at", "d1", "af", "d2"]
    for inst, cat in zip(insts, wanted):
        picks[inst.id] = next(i for i in range(4) if inst.category_of(i) == cat)
    m = evaluate(FixedPredictor(picks), insts)
    assert (m.at, m.d1, m.af, m.d2) == (25.0, 25.0, 25.0, 25.0)
    assert m.accuracy == 25.0
    assert m.count == 4


def test_always_gold_predictor_scores_100(tiny_data):
    insts = tiny_data.val
    m = evaluate(FixedPredictor({i.id: i.q for i in insts}), insts)
    assert m.accuracy == 100.0
    assert m.at == 100.0
    assert m.d1 == m.af == m.d2 == 0.0


def test_evaluate_rejects_empty_split(tiny_data):
    with pytest.raises(ValueError):
        evaluate(FixedPredictor({}), [])


# ---------------------------------------------------------------------------
# optimizer


def test_adam_minimizes_a_quadratic():
    p = Parameter((1,), name="x")
    p.data[...] = 10.0
    opt = Adam(lr=0.3)
    for _ in range(200):
        p.grad = 2.0 * (p.data - 3.0)
        opt.step([p])
    assert abs(p.data[0] - 3.0) < 1e-3


def test_adam_skips_frozen_and_gradless_params():
    frozen = Parameter((1,), name="frozen")
    frozen.data[...] = 5.0
    frozen.frozen = True
    frozen.grad = np.ones(1)
    idle = Parameter((1,), name="idle")
    idle.data[...] = 7.0
    opt = Adam(lr=0.5)
    opt.step([frozen, idle])
    assert frozen.data[0] == 5.0
    assert idle.data[0] == 7.0
    assert opt.state == {}


# ---------------------------------------------------------------------------
# schedule semantics


def test_n_whole_minus_one_means_one_epoch(tiny_data):
    tr = Trainer(tiny_config(n_whole=-1, epochs=3, batch_size=4), tiny_data,
                 log=QUIET)
    assert tr.steps_per_epoch == 4
    assert tr.n_whole == 4
    assert tr.phase(3) == "warmup"
    assert tr.phase(4) == "final"


def test_n_whole_counts_steps_not_epochs(tiny_data):
    tr = Trainer(tiny_config(n_whole=5, epochs=2, batch_size=4), tiny_data,
                 log=QUIET)
    assert tr.n_whole == 5
    assert [tr.phase(s) for s in range(8)] == ["warmup"] * 5 + ["final"] * 3


def test_n_whole_clamped_to_total_steps(tiny_data):
    tr = Trainer(tiny_config(n_whole=10 ** 6, epochs=1, batch_size=8), tiny_data,
                 log=QUIET)
    assert tr.n_whole == tr.total_steps == 2


def test_variants_without_alignment_skip_warmup(tiny_data):
    for variant in ("visual_only", "text_only"):
        tr = Trainer(tiny_config(variant=variant, n_whole=50), tiny_data,
                     log=QUIET)
        assert tr.n_whole == 0


def test_warmup_updates_only_alignment_mapper(tiny_data):
    cfg = tiny_config(n_whole=10 ** 6, epochs=1, batch_size=8, lr=1e-3)
    tr = Trainer(cfg, tiny_data, log=QUIET)
    before = {p.name: p.data.copy() for p in tr.params}
    tr.run()
    changed = {p.name for p in tr.params
               if not np.array_equal(p.data, before[p.name])}
    assert changed
    assert all(name.startswith("amn.") for name in changed)


def test_final_phase_updates_reasoner_too(tiny_data):
    cfg = tiny_config(n_whole=0, epochs=1, batch_size=8, lr=1e-3)
    tr = Trainer(cfg, tiny_data, log=QUIET)
    before = {p.name: p.data.copy() for p in tr.params}
    tr.run()
    changed = {p.name for p in tr.params
               if not np.array_equal(p.data, before[p.name])}
    assert any(name.startswith("reasoner.") for name in changed)
    assert any(name.startswith("amn.") for name in changed)


def test_freeze_encoders_keeps_them_bitwise_constant(tiny_data):
    cfg = tiny_config(freeze_encoders=True, epochs=1, lr=1e-2)
    tr = Trainer(cfg, tiny_data, log=QUIET)
    before = {p.name: p.data.copy() for p in tr.params}
    tr.run()
    encoder_names = {name for name, _ in tr.pipe.encoder_parameters()}
    for name, p in tr.pipe.encoder_parameters():
        assert np.array_equal(p.data, before[name]), name
    moved = {p.name for p in tr.params
             if not np.array_equal(p.data, before[p.name])}
    assert moved and not (moved & encoder_names)
    assert any(name.startswith("reasoner.") for name in moved)


# ---------------------------------------------------------------------------
# training behaviour


def test_same_seed_training_is_bitwise_deterministic(tiny_data):
    cfg = tiny_config(dropout=0.1, epochs=1, lr=1e-3)
    a = Trainer(cfg, tiny_data, log=QUIET)
    b = Trainer(cfg, tiny_data, log=QUIET)
    a.run()
    b.run()
    assert a.history == b.history
    for pa, pb in zip(a.params, b.params):
        assert pa.name == pb.name
        assert np.array_equal(pa.data, pb.data), pa.name


def test_run_restores_best_validation_state(tiny_data):
    cfg = tiny_config(epochs=2, lr=1e-2)
    tr = Trainer(cfg, tiny_data, log=QUIET)
    out = tr.run()
    best = max(h["val_accuracy"] for h in tr.history)
    assert out["best_val_accuracy"] == best
    assert evaluate(tr.pipe, tiny_data.val).accuracy == best


def test_overfit_probe_drives_loss_down(tiny_data):
    """A pipeline that cannot overfit 8 instances is wired wrong somewhere."""
    small = generate(GenConfig(seed=1, train=8, val=4, test=4, max_regions=3))
    cfg = RunConfig(seed=0, variant="text_only", epochs=25, lr=1e-2,
                    batch_size=8, dropout=0.0, n_whole=0)
    tr = Trainer(cfg, small, log=QUIET)
    first = None
    losses = []
    rng = Rng(0).derive("train")
    # run manually to capture per-step losses
    for epoch in range(cfg.epochs):
        order = rng.derive(f"order/{epoch}").permutation(8)
        losses.append(tr._train_step(order, rng))
        tr.step += 1
    assert losses[-1] < 0.35 * losses[0]


def test_manifest_records_run_state(tiny_data):
    tr = Trainer(tiny_config(), tiny_data, log=QUIET)
    tr.run()
    man = tr.manifest()
    assert RunConfig.from_dict(man["config"]) == tr.cfg
    assert man["vocab"][:4] == list(RESERVED)
    assert man["optimizer"] == {"name": "adam", "beta1": 0.9, "beta2": 0.999,
                                "eps": 1e-8}
    assert man["step"] == tr.total_steps
    assert len(man["history"]) == tr.cfg.epochs


def test_checkpoint_roundtrip_preserves_predictions(tiny_data, tmp_path):
    tr = train(tiny_config(epochs=1, lr=1e-3), tiny_data, log=QUIET)
    path = tmp_path / "model.ckpt"
    tr.save(path)
    pipe, manifest = load_pipeline(path)
    for inst in tiny_data.val:
        assert pipe.predict(inst) == tr.pipe.predict(inst)
    assert manifest["config"]["variant"] == "full"


def test_load_pipeline_rejects_mismatched_config(tiny_data, tmp_path):
    tr = train(tiny_config(epochs=1), tiny_data, log=QUIET)
    path = tmp_path / "model.ckpt"
    man = tr.manifest()
    man["config"]["lv"] = tr.cfg.lv + 2  # claims prefix rows that were never trained
    from vlprefix.checkpoint import save_checkpoint

    save_checkpoint(path, {p.name: p.data for p in tr.params}, man)
    with pytest.raises(ValueError):
        load_pipeline(path)


# ---------------------------------------------------------------------------
# sweep and ablation plumbing


def test_csv_row_matches_header_and_format():
    row = {"lv": 5, "la": 3, "variant": "full", "seed": 2, "accuracy": 91.25,
           "at": 91.25, "d1": 5.0, "af": 2.5, "d2": 1.25}
    line = csv_row(row)
    assert CSV_HEADER == "lv,la,variant,seed,accuracy,at,d1,af,d2"
    assert line == "5,3,full,2,91.25,91.25,5.00,2.50,1.25"
    assert len(line.split(",")) == len(CSV_HEADER.split(","))


def test_write_csv_and_table(tmp_path):
    rows = [{"lv": 1, "la": 0, "variant": "text_only", "seed": 0,
             "accuracy": 50.0, "at": 50.0, "d1": 25.0, "af": 12.5, "d2": 12.5}]
    out = tmp_path / "rows.csv"
    write_csv(out, rows)
    lines = out.read_text().splitlines()
    assert lines[0] == CSV_HEADER
    assert lines[1].startswith("1,0,text_only,0,50.00")
    table = format_table(rows)
    assert table.splitlines()[0].split() == CSV_HEADER.split(",")
    assert "text_only" in table
