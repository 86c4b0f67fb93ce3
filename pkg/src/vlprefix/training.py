"""Two-phase training, category-level evaluation, sweeps, and ablations.

Training runs a warmup stretch first: a local candidate-ranking loss that
touches only the alignment mapper, easing the cold start of the alignment
prefix before the full loss takes over at step n_whole. Evaluation buckets
every prediction by the chosen candidate's two stored truth flags.
"""

from __future__ import annotations

import math
import sys
import time
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from . import tensor as T
from .checkpoint import load_checkpoint, save_checkpoint
from .data import RESERVED, DatasetSplit, Vocab
from .model import VARIANTS, ModelConfig, Pipeline
from .reasoner import template_literal_tokens
from .rng import Rng


@dataclass
class RunConfig:
    seed: int = 0
    lv: int = 5
    la: int = 5
    freeze_encoders: bool = False
    epochs: int = 5
    n_whole: int = -1  # steps; -1 means one epoch's worth
    lr: float = 2e-5
    batch_size: int = 32
    dropout: float = 0.1
    max_regions: int = 10
    window: int = 3
    variant: str = "full"
    data: str = ""
    out: str = ""

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.lv < 0 or self.la < 0:
            raise ValueError("prefix lengths must be >= 0")
        if self.variant == "text_only":
            self.lv = 0
        if self.variant in ("visual_only", "text_only"):
            self.la = 0

    def model_config(self) -> ModelConfig:
        return ModelConfig(lv=self.lv, la=self.la, variant=self.variant,
                           window=self.window, dropout=self.dropout)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def parse_config_file(path) -> dict:
    """Line-oriented key=value pairs; '#' starts a comment; types coerced."""
    types = {f.name: f.type for f in fields(RunConfig)}
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}: line {lineno}: expected key=value")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in types:
                raise ValueError(f"{path}: line {lineno}: unknown key {key!r}")
            out[key] = coerce_field(key, value)
    return out


def coerce_field(key: str, value: str):
    hints = {f.name: f.type for f in fields(RunConfig)}
    hint = hints[key]
    if hint in ("int", int):
        return int(value)
    if hint in ("float", float):
        return float(value)
    if hint in ("bool", bool):
        if value.lower() in ("1", "true", "yes"):
            return True
        if value.lower() in ("0", "false", "no"):
            return False
        raise ValueError(f"bad boolean for {key}: {value!r}")
    return value


@dataclass
class Metrics:
    """Prediction-category rates in percent; accuracy is the gold-hit rate."""

    accuracy: float
    at: float
    d1: float
    af: float
    d2: float
    count: int

    def __post_init__(self):
        total = self.at + self.d1 + self.af + self.d2
        if abs(total - 100.0) > 0.1:
            raise ValueError(f"category rates sum to {total:.4f}, not 100")

    def row(self) -> dict:
        return {"accuracy": self.accuracy, "at": self.at, "d1": self.d1,
                "af": self.af, "d2": self.d2}


def evaluate(pipe: Pipeline, instances) -> Metrics:
    if not instances:
        raise ValueError("cannot evaluate an empty split")
    buckets = {"at": 0, "d1": 0, "af": 0, "d2": 0}
    for inst in instances:
        buckets[inst.category_of(pipe.predict(inst))] += 1
    n = len(instances)
    pct = {k: 100.0 * v / n for k, v in buckets.items()}
    return Metrics(accuracy=pct["at"], at=pct["at"], d1=pct["d1"],
                   af=pct["af"], d2=pct["d2"], count=n)


class Adam:
    """Adam with bias correction; beta=(0.9, 0.999), eps=1e-8, no decay."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state = {}

    def step(self, params) -> None:
        for p in params:
            if p.frozen or p.grad is None:
                continue
            g = p.grad
            m, v, t = self.state.get(p.name) or (np.zeros_like(p.data),
                                                 np.zeros_like(p.data), 0)
            t += 1
            m = self.beta1 * m + (1.0 - self.beta1) * g
            v = self.beta2 * v + (1.0 - self.beta2) * g * g
            m_hat = m / (1.0 - self.beta1 ** t)
            v_hat = v / (1.0 - self.beta2 ** t)
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
            self.state[p.name] = (m, v, t)


class Trainer:
    def __init__(self, cfg: RunConfig, dataset: DatasetSplit, log=None):
        self.cfg = cfg
        self.dataset = dataset
        self.log = log if log is not None else (lambda msg: print(msg, file=sys.stderr))
        self.vocab = Vocab.build(template_literal_tokens(), dataset.train)
        self.pipe = Pipeline.build(cfg.model_config(), self.vocab, cfg.seed)
        if cfg.freeze_encoders:
            for _, p in self.pipe.encoder_parameters():
                p.frozen = True
        self.params = [p for _, p in self.pipe.named_parameters()]
        self.opt = Adam(cfg.lr)
        self.steps_per_epoch = max(1, math.ceil(len(dataset.train) / cfg.batch_size))
        self.total_steps = self.steps_per_epoch * cfg.epochs
        n_whole = cfg.n_whole if cfg.n_whole >= 0 else self.steps_per_epoch
        if not self.pipe.cfg.uses_align:
            n_whole = 0  # no alignment mapper to warm up
        self.n_whole = min(n_whole, self.total_steps)
        self.step = 0
        self.history = []

    def phase(self, step: int) -> str:
        return "warmup" if step < self.n_whole else "final"

    def _train_step(self, batch, rng: Rng) -> float:
        warm = self.phase(self.step) == "warmup"
        for p in self.params:
            p.zero_grad()
        scale = 1.0 / len(batch)
        total = 0.0
        for idx in batch:
            inst = self.dataset.train[idx]
            if warm:
                loss = self.pipe.loss_warmup(inst)
            else:
                drop_rng = rng.derive(f"drop/{self.step}/{inst.id}") \
                    if self.cfg.dropout > 0.0 else None
                loss = self.pipe.loss_final(inst, train_rng=drop_rng)
            total += loss.item()
            (loss * scale).backward()
        mean_loss = total * scale
        if not math.isfinite(mean_loss):
            raise T.NumericsError(
                f"non-finite loss {mean_loss} at step {self.step} "
                f"(phase {self.phase(self.step)}, lr {self.cfg.lr})")
        self.opt.step(self.params)
        return mean_loss

    def run(self) -> dict:
        cfg = self.cfg
        rng = Rng(cfg.seed).derive("train")
        best_acc = -1.0
        best_state = None
        started = time.time()
        for epoch in range(cfg.epochs):
            order = rng.derive(f"order/{epoch}").permutation(len(self.dataset.train))
            for lo in range(0, len(order), cfg.batch_size):
                batch = order[lo:lo + cfg.batch_size]
                loss = self._train_step(batch, rng)
                if self.step % 10 == 0:
                    self.log(f"step {self.step:4d} phase={self.phase(self.step):6s} "
                             f"loss={loss:.4f}")
                self.step += 1
            val = evaluate(self.pipe, self.dataset.val)
            self.history.append({"epoch": epoch, "step": self.step,
                                 "val_accuracy": val.accuracy})
            self.log(f"epoch {epoch} done: val accuracy {val.accuracy:.2f}% "
                     f"({time.time() - started:.0f}s elapsed)")
            if val.accuracy > best_acc:
                best_acc = val.accuracy
                best_state = {p.name: p.data.copy() for p in self.params}
        if best_state is not None:
            for p in self.params:
                p.data = best_state[p.name]
        return {"best_val_accuracy": best_acc, "history": self.history}

    def manifest(self) -> dict:
        return {
            "config": self.cfg.to_dict(),
            "vocab": self.vocab.tokens,
            "step": self.step,
            "phase": self.phase(max(0, self.step - 1)),
            "n_whole": self.n_whole,
            "history": self.history,
            "optimizer": {"name": "adam", "beta1": self.opt.beta1,
                          "beta2": self.opt.beta2, "eps": self.opt.eps},
        }

    def save(self, path) -> None:
        save_checkpoint(path, {p.name: p.data for p in self.params}, self.manifest())


def train(cfg: RunConfig, dataset: DatasetSplit, log=None) -> Trainer:
    trainer = Trainer(cfg, dataset, log=log)
    trainer.run()
    return trainer


def load_pipeline(path):
    """Rebuild a pipeline from a checkpoint -> (pipeline, manifest)."""
    manifest, arrays = load_checkpoint(path)
    cfg = RunConfig.from_dict(manifest["config"])
    tokens = manifest["vocab"]
    if tokens[:len(RESERVED)] != list(RESERVED):
        raise ValueError("checkpoint vocabulary is malformed")
    vocab = Vocab(tokens[len(RESERVED):])
    pipe = Pipeline(cfg.model_config(), vocab)
    pipe.bind_names()
    names = {p.name for _, p in pipe.named_parameters()}
    if names != set(arrays):
        missing = sorted(names - set(arrays))[:3]
        extra = sorted(set(arrays) - names)[:3]
        raise ValueError(f"checkpoint does not match model: missing {missing}, "
                         f"unexpected {extra}")
    for _, p in pipe.named_parameters():
        if arrays[p.name].shape != p.data.shape:
            raise ValueError(f"shape mismatch for {p.name}: "
                             f"{arrays[p.name].shape} vs {p.data.shape}")
        p.data = arrays[p.name]
    return pipe, manifest


# ---------------------------------------------------------------------------
# sweeps and ablations


CSV_HEADER = "lv,la,variant,seed,accuracy,at,d1,af,d2"


def csv_row(row: dict) -> str:
    return (f"{row['lv']},{row['la']},{row['variant']},{row['seed']},"
            f"{row['accuracy']:.2f},{row['at']:.2f},{row['d1']:.2f},"
            f"{row['af']:.2f},{row['d2']:.2f}")


def format_table(rows) -> str:
    cols = CSV_HEADER.split(",")
    cells = [[str(r["lv"]), str(r["la"]), r["variant"], str(r["seed"])]
             + [f"{r[c]:.2f}" for c in ("accuracy", "at", "d1", "af", "d2")]
             for r in rows]
    widths = [max(len(col), *(len(row[i]) for row in cells)) if cells else len(col)
              for i, col in enumerate(cols)]
    lines = ["  ".join(col.ljust(w) for col, w in zip(cols, widths))]
    for row in cells:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)))
    return "\n".join(lines)


def _run_once(cfg: RunConfig, dataset: DatasetSplit, log=None) -> dict:
    trainer = train(cfg, dataset, log=log)
    metrics = evaluate(trainer.pipe, dataset.test)
    row = {"lv": cfg.lv, "la": cfg.la, "variant": cfg.variant, "seed": cfg.seed}
    row.update(metrics.row())
    return row


def sweep(cfg: RunConfig, lv_list, la_list, dataset: DatasetSplit, log=None):
    if not lv_list or not la_list:
        raise ValueError("sweep lists must be nonempty")
    rows = []
    for lv in lv_list:
        for la in la_list:
            run = replace(cfg, lv=lv, la=la)
            rows.append(_run_once(run, dataset, log=log))
    return rows


def ablate(cfg: RunConfig, variants, dataset: DatasetSplit, seeds=None, log=None):
    rows = []
    for variant in variants:
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}")
        for seed in (seeds if seeds is not None else [cfg.seed]):
            run = replace(cfg, variant=variant, seed=seed)
            rows.append(_run_once(run, dataset, log=log))
    return rows


def write_csv(path, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(CSV_HEADER + "\n")
        for row in rows:
            fh.write(csv_row(row) + "\n")
