"""Synthetic grounded-inference benchmark: generation, serialization, tokens.

Each instance pairs a one-line premise stating an entity's mood with a set
of noisy region features rendered from a fixed attribute dictionary. A
mood->verb rule decides which action follows, and the regions decide which
color/place description matches the scene. Candidates cover all four
combinations of (action correct, image correct), so a reader of only one
clue is capped at chance-of-two by construction.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .rng import Rng

RULE_FAMILY = "rf1"
SEGMENT_DIM = 8
FEATURE_DIM = 3 * SEGMENT_DIM

# mood -> verb, the whole rule family; one rule template per mood
RULES = {
    "tired": "rests",
    "hungry": "eats",
    "playful": "plays",
    "scared": "hides",
    "curious": "explores",
    "angry": "growls",
    "cold": "shivers",
    "happy": "sings",
    "sleepy": "naps",
    "bored": "wanders",
}
MOODS = tuple(RULES)
VERBS = tuple(RULES.values())
SPECIES = ("cat", "dog", "bird", "fox", "frog", "owl", "pig", "bee", "deer", "hare")
COLORS = ("red", "blue", "green", "gold", "black", "white")
PLACES = ("park", "barn", "pond", "cave", "field", "shore")

RESERVED = ("<pad>", "<cls>", "<sep>", "<unk>")


def _family_seed() -> int:
    digest = hashlib.sha256(RULE_FAMILY.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def attribute_dictionary() -> dict:
    """Fixed per-attribute-value code vectors, independent of dataset seed."""
    root = Rng(_family_seed())
    table = {}
    for kind, values in (("species", SPECIES), ("color", COLORS), ("place", PLACES)):
        for value in values:
            table[(kind, value)] = root.derive(f"dict/{kind}/{value}").normal((SEGMENT_DIM,))
    return table


def render_region(dictionary: dict, species: str, color: str, place: str,
                  sigma: float, rng: Rng) -> np.ndarray:
    """Three dictionary segments stacked, then corrupted with Gaussian noise."""
    clean = np.concatenate([
        dictionary[("species", species)],
        dictionary[("color", color)],
        dictionary[("place", place)],
    ])
    noisy = clean + rng.normal((FEATURE_DIM,), std=sigma)
    return np.round(noisy, 6)


@dataclass
class Candidate:
    text: str
    action_true: bool
    image_true: bool


@dataclass
class Instance:
    id: str
    premise: str
    features: np.ndarray  # (O, FEATURE_DIM)
    boxes: np.ndarray     # (O, 4)
    candidates: list
    q: int

    def category_of(self, index: int) -> str:
        c = self.candidates[index]
        if c.action_true and c.image_true:
            return "at"
        if c.action_true:
            return "d1"
        if c.image_true:
            return "af"
        return "d2"


@dataclass
class GenConfig:
    seed: int = 0
    train: int = 200
    val: int = 50
    test: int = 50
    y: int = 4
    max_regions: int = 10
    sigma: float = 0.05
    qr_mode: bool = False

    def validate(self):
        if min(self.train, self.val, self.test) < 1:
            raise ValueError("all split counts must be >= 1")
        if self.y != 4:
            raise ValueError("only 4-way candidate sets are generated")
        if not (3 <= self.max_regions <= len(SPECIES)):
            raise ValueError(f"max_regions must be in [3, {len(SPECIES)}]")


@dataclass
class DatasetSplit:
    manifest: dict
    train: list = field(default_factory=list)
    val: list = field(default_factory=list)
    test: list = field(default_factory=list)

    def split(self, name: str) -> list:
        return {"train": self.train, "val": self.val, "test": self.test}[name]


def _premise(species: str, mood: str, qr_mode: bool) -> str:
    base = f"the {species} is {mood} ."
    if qr_mode:
        base += f" what will the {species} do ?"
    return base


def _candidate_text(color: str, species: str, verb: str, place: str) -> str:
    return f"the {color} {species} {verb} at the {place} ."


def _other(pool, value, rng: Rng):
    rest = [v for v in pool if v != value]
    return rest[rng.integer(0, len(rest))]


def _wrong_scene(color: str, place: str, rng: Rng):
    """A (color, place) pair differing from the focal one in at least one slot."""
    mode = rng.integer(0, 3)
    if mode == 0:
        return _other(COLORS, color, rng), place
    if mode == 1:
        return color, _other(PLACES, place, rng)
    return _other(COLORS, color, rng), _other(PLACES, place, rng)


def make_instance(inst_id: str, rng: Rng, dictionary: dict, cfg: GenConfig) -> Instance:
    species = SPECIES[rng.integer(0, len(SPECIES))]
    color = COLORS[rng.integer(0, len(COLORS))]
    place = PLACES[rng.integer(0, len(PLACES))]
    mood = MOODS[rng.integer(0, len(MOODS))]
    verb = RULES[mood]

    wrong_verb = _other(VERBS, verb, rng)
    wrong_verb2 = _other(VERBS, verb, rng)
    c1, p1 = _wrong_scene(color, place, rng)
    c2, p2 = _wrong_scene(color, place, rng)
    cands = [
        Candidate(_candidate_text(color, species, verb, place), True, True),
        Candidate(_candidate_text(c1, species, verb, p1), True, False),
        Candidate(_candidate_text(color, species, wrong_verb, place), False, True),
        Candidate(_candidate_text(c2, species, wrong_verb2, p2), False, False),
    ]

    # fillers: distinct other species, and colors/places no candidate
    # mentions, so a wrong-scene description never half-matches a filler
    count = rng.integer(3, cfg.max_regions + 1)
    others = [s for s in SPECIES if s != species]
    order = rng.permutation(len(others))
    fillers = [others[i] for i in order[:count - 1]]
    free_colors = [c for c in COLORS if c not in {color, c1, c2}]
    free_places = [p for p in PLACES if p not in {place, p1, p2}]
    slot = rng.integer(0, count)
    feats, boxes = [], []
    filler_iter = iter(fillers)
    for pos in range(count):
        if pos == slot:
            s, c, p = species, color, place
        else:
            s = next(filler_iter)
            c = free_colors[rng.integer(0, len(free_colors))]
            p = free_places[rng.integer(0, len(free_places))]
        feats.append(render_region(dictionary, s, c, p, cfg.sigma, rng.derive(f"noise/{pos}")))
        boxes.append(np.round(rng.uniform((4,)), 6))

    order = rng.permutation(4)
    cands = [cands[i] for i in order]
    gold = int(np.where(order == 0)[0][0])
    return Instance(
        id=inst_id,
        premise=_premise(species, mood, cfg.qr_mode),
        features=np.stack(feats),
        boxes=np.stack(boxes),
        candidates=cands,
        q=gold,
    )


def generate(cfg: GenConfig) -> DatasetSplit:
    cfg.validate()
    dictionary = attribute_dictionary()
    root = Rng(cfg.seed)
    manifest = {
        "seed": cfg.seed,
        "counts": {"train": cfg.train, "val": cfg.val, "test": cfg.test},
        "y": cfg.y,
        "d_v": FEATURE_DIM,
        "rule_family": RULE_FAMILY,
        "sigma": cfg.sigma,
        "max_regions": cfg.max_regions,
        "qr_mode": cfg.qr_mode,
    }
    out = DatasetSplit(manifest=manifest)
    for name, count in (("train", cfg.train), ("val", cfg.val), ("test", cfg.test)):
        bucket = out.split(name)
        for i in range(count):
            inst_id = f"{name}-{i:05d}"
            bucket.append(make_instance(inst_id, root.derive(f"inst/{inst_id}"), dictionary, cfg))
    return out


# ---------------------------------------------------------------------------
# serialization: one JSON record per line, manifest first


def _instance_record(inst: Instance) -> dict:
    return {
        "id": inst.id,
        "premise": inst.premise,
        "regions": [
            {"f": [float(x) for x in f], "box": [float(x) for x in b]}
            for f, b in zip(inst.features, inst.boxes)
        ],
        "candidates": [
            {"text": c.text, "action_true": c.action_true, "image_true": c.image_true}
            for c in inst.candidates
        ],
        "q": inst.q,
    }


def _instance_from_record(rec: dict) -> Instance:
    return Instance(
        id=rec["id"],
        premise=rec["premise"],
        features=np.array([r["f"] for r in rec["regions"]], dtype=np.float64),
        boxes=np.array([r["box"] for r in rec["regions"]], dtype=np.float64),
        candidates=[Candidate(c["text"], bool(c["action_true"]), bool(c["image_true"]))
                    for c in rec["candidates"]],
        q=int(rec["q"]),
    )


def save_split(path, instances: list, manifest: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(manifest, sort_keys=True) + "\n")
        for inst in instances:
            fh.write(json.dumps(_instance_record(inst), sort_keys=False) + "\n")


def load_split(path):
    """-> (manifest, instances); raises ValueError naming the offending line."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ValueError(f"{path}: empty file, expected a manifest line")
    try:
        manifest = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise ValueError(f"{path}: line 1: bad manifest: {e}") from e
    instances = []
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            instances.append(_instance_from_record(json.loads(line)))
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise ValueError(f"{path}: line {lineno}: bad instance record: {e}") from e
    return manifest, instances


def save(dirpath, dataset: DatasetSplit) -> None:
    import os

    os.makedirs(dirpath, exist_ok=True)
    for name in ("train", "val", "test"):
        manifest = dict(dataset.manifest, split=name)
        save_split(os.path.join(dirpath, f"{name}.jsonl"), dataset.split(name), manifest)


def load(dirpath) -> DatasetSplit:
    import os

    out = None
    for name in ("train", "val", "test"):
        manifest, instances = load_split(os.path.join(dirpath, f"{name}.jsonl"))
        manifest.pop("split", None)
        if out is None:
            out = DatasetSplit(manifest=manifest)
        out.split(name).extend(instances)
    return out


# ---------------------------------------------------------------------------
# tokens


def tokenize(text: str) -> list:
    return text.lower().split()


class Vocab:
    """Whitespace-token vocabulary with reserved ids 0..3."""

    def __init__(self, tokens):
        self.tokens = list(RESERVED) + [t for t in tokens if t not in RESERVED]
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")
        self.index = {t: i for i, t in enumerate(self.tokens)}
        self.unk = self.index["<unk>"]

    def __len__(self):
        return len(self.tokens)

    def encode(self, text: str) -> list:
        return [self.index.get(t, self.unk) for t in tokenize(text)]

    def id_of(self, token: str) -> int:
        return self.index.get(token, self.unk)

    @classmethod
    def build(cls, template_literals, instances) -> "Vocab":
        seen = []
        have = set(RESERVED)
        for tok in template_literals:
            if tok not in have:
                seen.append(tok)
                have.add(tok)
        corpus = set()
        for inst in instances:
            corpus.update(tokenize(inst.premise))
            for c in inst.candidates:
                corpus.update(tokenize(c.text))
        seen.extend(sorted(corpus - have))
        return cls(seen)
