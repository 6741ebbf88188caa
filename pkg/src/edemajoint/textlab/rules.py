"""Keyword rules mapping report phrases to edema severity levels."""

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from ..errors import ConfigError
from .tokens import tokenize

LEVELS = (0, 1, 2, 3)


@dataclass(frozen=True)
class KeywordRule:
    phrase: tuple
    level: int
    requires_negation: bool

    def __post_init__(self):
        if not self.phrase:
            raise ConfigError("keyword rule phrase is empty")
        if self.level not in LEVELS:
            raise ConfigError(f"keyword rule level {self.level!r} not in 0..3")

    @property
    def text(self):
        return " ".join(self.phrase)


def rules_from_dict(data):
    try:
        entries = data["rules"]
    except (KeyError, TypeError):
        raise ConfigError("ruleset must be an object with a 'rules' list") from None
    rules = []
    for k, entry in enumerate(entries):
        try:
            phrase = tuple(tokenize(entry["phrase"]))
            level = int(entry["level"])
            req = bool(entry.get("requires_negation", level == 0))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"ruleset entry {k} is malformed: {exc}") from None
        rules.append(KeywordRule(phrase, level, req))
    return tuple(rules)


def rules_to_dict(rules):
    return {
        "version": 1,
        "rules": [
            {"phrase": r.text, "level": r.level, "requires_negation": r.requires_negation}
            for r in rules
        ],
    }


def load_ruleset(path=None):
    """Load a JSON ruleset; ``None`` or ``"default"`` gives the bundled keyword table."""
    if path is None or str(path) == "default":
        text = resources.files(__package__).joinpath("default_rules.json").read_text()
    else:
        text = Path(path).read_text()
    return rules_from_dict(json.loads(text))


def default_ruleset():
    return load_ruleset(None)


def rules_by_level(rules):
    out = {lvl: [] for lvl in LEVELS}
    for r in rules:
        out[r.level].append(r)
    return out
