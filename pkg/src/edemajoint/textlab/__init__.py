"""Rule-based severity labeling of free-text reports."""

from .labeler import (
    CorpusLabels,
    Evidence,
    LabelResult,
    ReportDocument,
    label_corpus,
    label_text,
    labels_csv,
    match_keywords,
    read_reports,
    resolve_label,
)
from .negation import NEGATION_TRIGGERS, SCOPE_TERMINATORS, detect_negation
from .rules import KeywordRule, default_ruleset, load_ruleset, rules_by_level, rules_to_dict
from .sections import extract_sections
from .tokens import Token, tokenize, tokenize_with_offsets

__all__ = [
    "CorpusLabels", "Evidence", "KeywordRule", "LabelResult", "NEGATION_TRIGGERS",
    "ReportDocument", "SCOPE_TERMINATORS", "Token", "default_ruleset", "detect_negation",
    "extract_sections", "label_corpus", "label_text", "labels_csv", "load_ruleset",
    "match_keywords", "read_reports", "resolve_label", "rules_by_level", "rules_to_dict",
    "tokenize", "tokenize_with_offsets",
]
