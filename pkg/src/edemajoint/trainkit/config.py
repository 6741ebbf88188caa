"""Training configuration: defaults, YAML loading, and aggregated validation."""

from dataclasses import asdict, dataclass, field, fields

import yaml

from ..encoders import ModelConfig
from ..errors import ConfigError
from ..objective import MODES, SIMILARITY_KINDS, ObjectiveConfig, SimilarityKind

PAPER_BASE_LR = 2e-5

_MODEL_KEYS = ("embed_dim", "image_channels", "stem_stride", "text_width", "text_layers",
               "text_heads", "text_ffn", "max_seq_len")


@dataclass(frozen=True)
class TrainConfig:
    """Everything that, together with the dataset, determines a training run.

    The effective peak learning rate is ``base_lr * lr_multiplier``; the
    multiplier compensates for the much smaller desk-scale networks.
    """

    seed: int = 0
    phase1_epochs: int = 10
    phase2_epochs: int = 50
    batch_size: int = 4
    base_lr: float = PAPER_BASE_LR
    lr_multiplier: float = 25.0
    warmup_fraction: float = 0.1
    weight_decay: float = 0.01
    betas: tuple = (0.9, 0.999)
    epsilon: float = 1e-8
    similarity: str = "dot"
    mode: str = "ranking"
    unlabeled_margin: float = 0.5
    image_only: bool = False
    augment_shift: int = 0
    holdout: int = 0
    model: dict = field(default_factory=dict)

    @property
    def peak_lr(self):
        return self.base_lr * self.lr_multiplier

    def objective(self, phase="joint"):
        return ObjectiveConfig(SimilarityKind(self.similarity, self.mode),
                               self.unlabeled_margin, phase, self.image_only)

    def model_config(self, vocab_size, image_size):
        return ModelConfig(image_size=image_size, vocab_size=vocab_size, **self.model)

    def to_dict(self):
        d = asdict(self)
        d["betas"] = list(self.betas)
        d["model"] = {k: list(v) if isinstance(v, tuple) else v for k, v in self.model.items()}
        return d

    def replace(self, **changes):
        return config_from_dict({**self.to_dict(), **changes})


_DEFAULTS = TrainConfig()
_KEYS = {f.name for f in fields(TrainConfig)}


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_real(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def validate_dict(data):
    """Return ``(TrainConfig or None, errors)``; every problem is reported, not just the first."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        return None, ["config root must be a mapping"]
    errors = []
    for key in sorted(set(data) - _KEYS):
        errors.append(f"{key}: unknown key")
    merged = {**_DEFAULTS.to_dict(), **{k: v for k, v in data.items() if k in _KEYS}}

    for key in ("seed", "phase1_epochs", "phase2_epochs", "augment_shift", "holdout"):
        if not _is_int(merged[key]):
            errors.append(f"{key}: expected an integer, got {merged[key]!r}")
        elif key != "seed" and merged[key] < 0:
            errors.append(f"{key}: must be >= 0")
    if not _is_int(merged["batch_size"]):
        errors.append(f"batch_size: expected an integer, got {merged['batch_size']!r}")
    elif merged["batch_size"] < 1:
        errors.append("batch_size: must be >= 1")
    if _is_int(merged["augment_shift"]) and merged["augment_shift"] > 2:
        errors.append("augment_shift: at most 2 pixels")
    for key in ("base_lr", "lr_multiplier", "epsilon", "unlabeled_margin"):
        if not _is_real(merged[key]):
            errors.append(f"{key}: expected a number, got {merged[key]!r}")
        elif merged[key] <= 0:
            errors.append(f"{key}: must be > 0")
    if not _is_real(merged["weight_decay"]) or merged["weight_decay"] < 0:
        errors.append(f"weight_decay: expected a number >= 0, got {merged['weight_decay']!r}")
    wf = merged["warmup_fraction"]
    if not _is_real(wf) or not 0 <= wf < 1:
        errors.append(f"warmup_fraction: expected a number in [0, 1), got {wf!r}")
    betas = merged["betas"]
    if (not isinstance(betas, (list, tuple)) or len(betas) != 2
            or not all(_is_real(b) and 0 <= b < 1 for b in betas)):
        errors.append(f"betas: expected two numbers in [0, 1), got {betas!r}")
    if merged["similarity"] not in SIMILARITY_KINDS:
        errors.append(f"similarity: expected one of {list(SIMILARITY_KINDS)}, got {merged['similarity']!r}")
    if merged["mode"] not in MODES:
        errors.append(f"mode: expected one of {list(MODES)}, got {merged['mode']!r}")
    if not isinstance(merged["image_only"], bool):
        errors.append(f"image_only: expected true/false, got {merged['image_only']!r}")

    model = merged["model"]
    if not isinstance(model, dict):
        errors.append("model: expected a mapping")
        model = {}
    for key in sorted(set(model) - set(_MODEL_KEYS)):
        errors.append(f"model.{key}: unknown key")
    for key in set(model) & set(_MODEL_KEYS):
        v = model[key]
        if key == "image_channels":
            if not isinstance(v, (list, tuple)) or not v or not all(_is_int(c) and c > 0 for c in v):
                errors.append(f"model.image_channels: expected a list of positive integers, got {v!r}")
        elif not _is_int(v) or v < 1:
            errors.append(f"model.{key}: expected a positive integer, got {v!r}")
    if not errors:
        try:
            ModelConfig(**{k: model[k] for k in model if k in _MODEL_KEYS})
        except (ConfigError, ValueError) as exc:
            errors.append(f"model: {exc}")

    if errors:
        return None, errors
    merged["betas"] = tuple(float(b) for b in betas)
    merged["model"] = {k: tuple(v) if k == "image_channels" else v for k, v in model.items()}
    return TrainConfig(**merged), []


def config_from_dict(data):
    config, errors = validate_dict(data)
    if errors:
        raise ConfigError("; ".join(errors))
    return config


def validate_config(path):
    """Parse a YAML config file; returns ``(config, errors)``."""
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        return None, [f"cannot read {path}: {exc}"]
    except yaml.YAMLError as exc:
        return None, [f"not valid YAML: {exc}"]
    return validate_dict(data)


def load_config(path):
    config, errors = validate_config(path)
    if errors:
        raise ConfigError("; ".join(errors))
    return config


def dump_config(config):
    return yaml.safe_dump(config.to_dict(), sort_keys=True)
