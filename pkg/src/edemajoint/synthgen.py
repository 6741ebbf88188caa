"""Seeded synthetic paired corpus: images and reports with a known latent severity.

Every example draws from its own Philox stream keyed by ``(seed, index)``, so
the corpus is identical regardless of generation order or worker count.
"""

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError, IntegrityError
from .rng import Rng
from .textlab import default_ruleset, rules_by_level
from .textlab.negation import NEGATION_TRIGGERS

PAD_TOKEN, BOS_TOKEN, EOS_TOKEN, UNK_TOKEN = "<pad>", "<bos>", "<eos>", "<unk>"
SPECIAL_TOKENS = (PAD_TOKEN, BOS_TOKEN, EOS_TOKEN, UNK_TOKEN)

# class frequencies of the labeled CHF cohort (levels 0..3)
DEFAULT_CLASS_WEIGHTS = (2883, 1511, 1709, 640)

# "resolved" reads as a post-hoc qualifier, so reports never open a phrase with it
REPORT_TRIGGERS = tuple(t for t in NEGATION_TRIGGERS if t != ("resolved",))

DISTRACTOR_VOCAB = (
    "heart", "size", "is", "top", "normal", "stable", "mediastinal", "contours", "unchanged",
    "there", "are", "bilateral", "small", "effusions", "the", "left", "right", "lung", "base",
    "atelectasis", "catheter", "tip", "in", "svc", "sternotomy", "wires", "intact", "osseous",
    "structures", "cardiomegaly", "mild", "moderate", "with", "and", "portable", "upright",
    "view", "chest", "compared", "prior", "study", "line", "pacemaker", "leads", "aortic",
    "knob", "calcified", "apex", "costophrenic", "angle", "blunting", "trachea", "midline",
)

DATASET_FORMAT = "edemajoint-dataset"
DATASET_VERSION = 1
MIN_IMAGE_SIZE = 16
_LEVEL_STREAM = 1 << 40


@dataclass
class PairedExample:
    image: np.ndarray
    tokens: np.ndarray  # ids, BOS first and EOS last
    label: Optional[int]
    latent_level: int = field(repr=False)


@dataclass
class GenConfig:
    n_labeled: int = 400
    n_unlabeled: int = 2000
    image_size: int = 32
    seed: int = 0
    class_weights: tuple = DEFAULT_CLASS_WEIGHTS
    noise_std: float = 0.02

    def to_dict(self):
        d = asdict(self)
        d["class_weights"] = list(self.class_weights)
        return d


@dataclass
class DatasetSplit:
    labeled: list
    unlabeled: list
    vocabulary: dict  # token -> id
    seed: int
    config: Optional[GenConfig] = None

    @property
    def examples(self):
        """Labeled examples first, so index ``j < n_labeled`` means labeled."""
        return self.labeled + self.unlabeled

    @property
    def id_to_token(self):
        return {i: t for t, i in self.vocabulary.items()}

    def decode(self, ids):
        inv = self.id_to_token
        return [inv.get(int(i), UNK_TOKEN) for i in ids]

    def __len__(self):
        return len(self.labeled) + len(self.unlabeled)


# ------------------------------------------------------------------ vocabulary

def distractor_vocab(ruleset=None):
    """Filler words that share no token with any keyword rule or negation cue."""
    ruleset = default_ruleset() if ruleset is None else ruleset
    banned = {t for r in ruleset for t in r.phrase} | {t for trig in NEGATION_TRIGGERS for t in trig}
    return tuple(w for w in DISTRACTOR_VOCAB if w not in banned)


def build_vocabulary(ruleset=None, distractors=None):
    ruleset = default_ruleset() if ruleset is None else ruleset
    distractors = distractor_vocab(ruleset) if distractors is None else distractors
    words = {t for r in ruleset for t in r.phrase}
    words |= {t for trig in REPORT_TRIGGERS for t in trig}
    words |= set(distractors)
    return {tok: i for i, tok in enumerate(SPECIAL_TOKENS + tuple(sorted(words)))}


# ------------------------------------------------------------------ generators

def gen_image(level, height, width, rng, noise_std=0.02):
    """Vertical gradient plus ``2*level`` Gaussian blobs of height ``0.15*level``, plus noise.

    Values are clamped to [0, 1] and rounded through float32 so the grid
    survives the on-disk format unchanged.
    """
    if level not in (0, 1, 2, 3):
        raise ConfigError(f"level must be in 0..3, got {level!r}")
    if height < MIN_IMAGE_SIZE or width < MIN_IMAGE_SIZE:
        raise ConfigError(f"image size must be at least {MIN_IMAGE_SIZE}x{MIN_IMAGE_SIZE}")
    rows = np.linspace(0.2, 0.5, height)[:, None]
    img = np.repeat(rows, width, axis=1)
    sigma = max(1.5, min(height, width) / 16.0)
    yy, xx = np.mgrid[0:height, 0:width]
    for _ in range(2 * level):
        cy = 2 + rng.uniform() * (height - 5)
        cx = 2 + rng.uniform() * (width - 5)
        img = img + 0.15 * level * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma**2))
    if noise_std > 0:
        img = img + noise_std * rng.normal((height, width))
    return np.clip(img, 0.0, 1.0).astype(np.float32).astype(np.float64)


def gen_report(level, rng, ruleset=None, distractors=None):
    """Word sequence ``<bos> ... <eos>`` holding one keyword phrase of ``level``.

    The phrase is preceded by a negation cue iff its rule requires one, and is
    placed at a random slot among 5-20 filler words.
    """
    ruleset = default_ruleset() if ruleset is None else ruleset
    distractors = distractor_vocab(ruleset) if distractors is None else distractors
    candidates = rules_by_level(ruleset).get(level, [])
    if not candidates:
        raise ConfigError(f"ruleset has no keyword rule for level {level}")
    rule = candidates[rng.integer(len(candidates))]
    phrase = list(rule.phrase)
    if rule.requires_negation:
        phrase = list(REPORT_TRIGGERS[rng.integer(len(REPORT_TRIGGERS))]) + phrase
    n_fill = 5 + rng.integer(16)
    fill = [distractors[rng.integer(len(distractors))] for _ in range(n_fill)]
    slot = rng.integer(n_fill + 1)
    return [BOS_TOKEN] + fill[:slot] + phrase + fill[slot:] + [EOS_TOKEN]


def report_text(words):
    """Plain text of a generated report (markers dropped)."""
    return " ".join(w for w in words if w not in SPECIAL_TOKENS)


def _draw_levels(n, weights, rng):
    return [rng.choice(4, weights) for _ in range(n)]


def _labeled_levels(config, weights):
    present = [lvl for lvl, w in enumerate(weights) if w > 0]
    if config.n_labeled < max(4, len(present)):
        raise ConfigError(
            f"n_labeled={config.n_labeled} cannot cover the {len(present)} classes with weight > 0")
    # redraw the whole labeled set until every class with positive weight appears
    for attempt in range(1000):
        levels = _draw_levels(config.n_labeled, weights, Rng(config.seed, _LEVEL_STREAM + attempt))
        if set(present) <= set(levels):
            return levels
    raise ConfigError("could not draw a labeled set containing every weighted class")


def gen_dataset(config=None, ruleset=None):
    """Labeled and unlabeled pairs with latent levels drawn from ``class_weights``."""
    config = GenConfig() if config is None else config
    weights = np.asarray(config.class_weights, dtype=np.float64)
    if weights.shape != (4,) or np.any(weights < 0) or weights.sum() <= 0:
        raise ConfigError("class_weights must be 4 non-negative numbers with a positive sum")
    if config.n_unlabeled < 0:
        raise ConfigError("n_unlabeled must be non-negative")
    ruleset = default_ruleset() if ruleset is None else ruleset
    distractors = distractor_vocab(ruleset)
    vocab = build_vocabulary(ruleset, distractors)

    levels = _labeled_levels(config, weights)
    levels += _draw_levels(config.n_unlabeled, weights, Rng(config.seed, _LEVEL_STREAM - 1))

    examples = []
    for index, level in enumerate(levels):
        rng = Rng(config.seed, stream=index + 1)
        image = gen_image(level, config.image_size, config.image_size, rng, config.noise_std)
        words = gen_report(level, rng, ruleset, distractors)
        ids = np.array([vocab[w] for w in words], dtype=np.int64)
        label = level if index < config.n_labeled else None
        examples.append(PairedExample(image, ids, label, level))
    return DatasetSplit(examples[:config.n_labeled], examples[config.n_labeled:], vocab,
                        config.seed, config)


def holdout_split(split, n_holdout):
    """Move the last ``n_holdout`` labeled examples out of training.

    Returns ``(train_split, held_out)``; every example lands in exactly one part.
    """
    if not 0 <= n_holdout < len(split.labeled):
        raise ConfigError(f"cannot hold out {n_holdout} of {len(split.labeled)} labeled examples")
    cut = len(split.labeled) - n_holdout
    train = replace(split, labeled=split.labeled[:cut])
    return train, split.labeled[cut:]


# ----------------------------------------------------------------- persistence

def save_dataset(split, directory):
    """Write ``manifest.json``, ``images.f32`` and ``records.jsonl`` under ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    examples = split.examples
    h, w = examples[0].image.shape if examples else (0, 0)
    manifest = {
        "format": DATASET_FORMAT,
        "version": DATASET_VERSION,
        "seed": split.seed,
        "config": split.config.to_dict() if split.config else None,
        "vocabulary": [t for t, _ in sorted(split.vocabulary.items(), key=lambda kv: kv[1])],
        "n_labeled": len(split.labeled),
        "n_unlabeled": len(split.unlabeled),
        "image_shape": [h, w],
        "images": "images.f32",
        "records": "records.jsonl",
    }
    pixels = np.stack([e.image for e in examples]).astype("<f4") if examples else np.zeros(0, "<f4")
    (directory / "images.f32").write_bytes(pixels.tobytes())
    with (directory / "records.jsonl").open("w") as fh:
        for i, e in enumerate(examples):
            fh.write(json.dumps({"index": i, "tokens": [int(t) for t in e.tokens],
                                 "label": e.label, "latent_level": e.latent_level}) + "\n")
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_dataset(directory):
    directory = Path(directory)
    try:
        manifest = json.loads((directory / "manifest.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise IntegrityError(f"unreadable dataset manifest: {exc}") from None
    if manifest.get("format") != DATASET_FORMAT or manifest.get("version") != DATASET_VERSION:
        raise IntegrityError("dataset manifest has an unexpected format or version")
    n_lab, n_unl = manifest["n_labeled"], manifest["n_unlabeled"]
    h, w = manifest["image_shape"]
    raw = np.frombuffer((directory / manifest["images"]).read_bytes(), dtype="<f4")
    if raw.size != (n_lab + n_unl) * h * w:
        raise IntegrityError("image file size does not match the manifest")
    images = raw.astype(np.float64).reshape(n_lab + n_unl, h, w)
    records = [json.loads(line) for line in
               (directory / manifest["records"]).read_text().splitlines() if line.strip()]
    if len(records) != n_lab + n_unl:
        raise IntegrityError("record count does not match the manifest")
    examples = [PairedExample(images[i], np.array(r["tokens"], dtype=np.int64),
                              r["label"], r["latent_level"]) for i, r in enumerate(records)]
    cfg = manifest.get("config")
    config = None
    if cfg:
        cfg["class_weights"] = tuple(cfg["class_weights"])
        config = GenConfig(**cfg)
    vocab = {t: i for i, t in enumerate(manifest["vocabulary"])}
    return DatasetSplit(examples[:n_lab], examples[n_lab:], vocab, manifest["seed"], config)
