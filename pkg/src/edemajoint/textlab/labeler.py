"""Keyword matching, label resolution, and corpus-level labeling."""

import csv
import io
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from ..errors import EmptyDocumentError
from .negation import detect_negation
from .rules import LEVELS, default_ruleset
from .sections import extract_sections
from .tokens import tokenize_with_offsets


@dataclass(frozen=True)
class Evidence:
    rule: object
    span: tuple  # [start, end) token indices
    negated: bool


@dataclass
class LabelResult:
    level: Optional[int]
    evidence: list = field(default_factory=list)


@dataclass
class ReportDocument:
    id: str
    raw_text: str
    selected_text: str
    tokens: list  # Token tuples with offsets into selected_text

    @classmethod
    def from_text(cls, id, raw_text):
        selected = extract_sections(raw_text)
        return cls(str(id), raw_text, selected, tokenize_with_offsets(selected))

    @property
    def words(self):
        return [t.text for t in self.tokens]


def match_keywords(tokens, negated, ruleset):
    """Left-to-right, longest-first, non-overlapping rule matches.

    A rule is eligible at a position only when its negation status agrees
    with ``requires_negation``.  Ineligible matches are skipped without
    consuming tokens, so a shorter eligible rule may still fire there.
    """
    tokens = list(tokens)
    ordered = sorted(ruleset, key=lambda r: -len(r.phrase))
    evidence = []
    i = 0
    while i < len(tokens):
        hit = None
        for rule in ordered:
            n = len(rule.phrase)
            if tuple(tokens[i:i + n]) != rule.phrase:
                continue
            is_neg = any(k in negated for k in range(i, i + n))
            if is_neg == rule.requires_negation:
                hit = Evidence(rule, (i, i + n), is_neg)
                break
        if hit is None:
            i += 1
        else:
            evidence.append(hit)
            i = hit.span[1]
    return evidence


def resolve_label(evidence):
    """Worst finding wins; no evidence means no label."""
    if not evidence:
        return LabelResult(None, [])
    return LabelResult(max(e.rule.level for e in evidence), list(evidence))


def label_text(raw_text, ruleset=None):
    ruleset = default_ruleset() if ruleset is None else ruleset
    doc = ReportDocument.from_text("", raw_text)
    words = doc.words
    return resolve_label(match_keywords(words, detect_negation(words), ruleset))


@dataclass
class CorpusLabels:
    results: dict  # id -> LabelResult
    failures: dict  # id -> error message

    @property
    def summary(self):
        counts = Counter(r.level for r in self.results.values() if r.level is not None)
        return {
            "n_documents": len(self.results) + len(self.failures),
            "counts": {str(lvl): counts.get(lvl, 0) for lvl in LEVELS},
            "unlabeled": sum(1 for r in self.results.values() if r.level is None),
            "failures": dict(self.failures),
        }


def label_corpus(documents, ruleset=None):
    """Label ``(id, text)`` pairs; empty documents are recorded as failures."""
    ruleset = default_ruleset() if ruleset is None else ruleset
    results, failures = {}, {}
    for doc_id, text in documents:
        try:
            results[doc_id] = label_text(text, ruleset)
        except EmptyDocumentError as exc:
            failures[doc_id] = str(exc)
    return CorpusLabels(results, failures)


def read_reports(path):
    """Yield ``(id, text)`` from a JSON-lines file or a directory of ``.txt`` files."""
    path = Path(path)
    if path.is_dir():
        for p in sorted(path.glob("*.txt")):
            yield p.stem, p.read_text()
        return
    with path.open() as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                yield str(rec["id"]), rec.get("text", "")


def labels_csv(corpus):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "level", "evidence_count"])
    for doc_id, res in corpus.results.items():
        w.writerow([doc_id, "" if res.level is None else res.level, len(res.evidence)])
    return buf.getvalue()
