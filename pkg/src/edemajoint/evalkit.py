"""Ordinal evaluation: dichotomised AUCs at the three severity cuts and macro-F1."""

import json
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .encoders import N_CLASSES, classify, encode_image
from .errors import DegenerateLabelsError, ParameterError

CUTS = (1, 2, 3)
CUT_NAMES = {1: "auc_0v123", 2: "auc_01v23", 3: "auc_012v3"}
CUT_TITLES = {1: "AUC (0 vs 1,2,3)", 2: "AUC (0,1 vs 2,3)", 3: "AUC (0,1,2 vs 3)"}


def dichotomize(probs, cut):
    """Probability mass on severities ``>= cut`` (works row-wise on a batch)."""
    if cut not in CUTS:
        raise ParameterError(f"cut must be 1, 2 or 3, got {cut!r}")
    return np.asarray(probs, dtype=np.float64)[..., cut:].sum(axis=-1)


def _average_ranks(x):
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    ranks = np.empty(len(x), dtype=np.float64)
    i = 0
    while i < len(xs):
        j = i
        while j + 1 < len(xs) and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auc(scores, labels):
    """Mann-Whitney AUC: P(score_pos > score_neg), ties counting one half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    if scores.shape != labels.shape:
        raise ParameterError("scores and labels differ in length")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabelsError("AUC needs at least one positive and one negative")
    ranks = _average_ranks(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def confusion_matrix(predicted, gold, n_classes=N_CLASSES):
    """Counts with rows indexed by gold class and columns by predicted class."""
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(gold, dtype=np.int64), np.asarray(predicted, dtype=np.int64)), 1)
    return cm


def macro_f1(predicted, gold, n_classes=N_CLASSES):
    """Unweighted mean of per-class F1 over all classes; undefined ratios count as 0."""
    predicted = np.asarray(predicted, dtype=np.int64)
    gold = np.asarray(gold, dtype=np.int64)
    if predicted.size == 0:
        raise ParameterError("macro_f1 of an empty prediction list")
    if predicted.shape != gold.shape:
        raise ParameterError("predicted and gold differ in length")
    if predicted.min() < 0 or gold.min() < 0 or max(predicted.max(), gold.max()) >= n_classes:
        raise ParameterError(f"class ids must lie in 0..{n_classes - 1}")
    cm = confusion_matrix(predicted, gold, n_classes)
    f1 = []
    for c in range(n_classes):
        tp = cm[c, c]
        n_pred, n_gold = cm[:, c].sum(), cm[c, :].sum()
        p = tp / n_pred if n_pred else 0.0
        r = tp / n_gold if n_gold else 0.0
        f1.append(2 * p * r / (p + r) if p + r else 0.0)
    return float(np.mean(f1))


@dataclass
class EvalReport:
    auc_0_vs_123: Optional[float]
    auc_01_vs_23: Optional[float]
    auc_012_vs_3: Optional[float]
    macro_f1: float
    confusion: np.ndarray
    n_examples: int

    @property
    def aucs(self):
        return (self.auc_0_vs_123, self.auc_01_vs_23, self.auc_012_vs_3)

    @property
    def mean_auc(self):
        present = [a for a in self.aucs if a is not None]
        return float(np.mean(present)) if present else None

    def to_dict(self):
        d = asdict(self)
        d["confusion"] = self.confusion.tolist()
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)


def report_from_probs(probs, gold):
    """Build an :class:`EvalReport` from (n, 4) probabilities and gold classes."""
    probs = np.asarray(probs, dtype=np.float64)
    gold = np.asarray(gold, dtype=np.int64)
    aucs = []
    for cut in CUTS:
        try:
            aucs.append(auc(dichotomize(probs, cut), gold >= cut))
        except DegenerateLabelsError:
            aucs.append(None)
    predicted = probs.argmax(axis=1)  # first maximum: lowest class wins ties
    return EvalReport(*aucs, macro_f1(predicted, gold), confusion_matrix(predicted, gold),
                      int(gold.size))


def predict_probs(params, examples):
    """Image-stream severity distributions, one example at a time.

    Single-example passes keep every output independent of which other
    examples happen to be scored alongside it.
    """
    params = getattr(params, "params", params)
    out = [classify(encode_image(e.image, params), params, "image") for e in examples]
    return np.stack(out) if out else np.zeros((0, N_CLASSES))


def evaluate(checkpoint, examples):
    """Score labeled examples with image-only inference.

    ``checkpoint`` may be a Checkpoint or a bare ParameterStore.  AUCs for a
    cut with only one side present are reported as ``None``.
    """
    if any(e.label is None for e in examples):
        raise ParameterError("evaluate needs labeled examples")
    return report_from_probs(predict_probs(checkpoint, examples), [e.label for e in examples])


def format_table(rows):
    """Aligned plain-text table; ``rows`` is a list of ``(name, EvalReport)``."""
    header = ["Model", *CUT_TITLES.values(), "macro-F1"]
    body = []
    for name, rep in rows:
        cells = ["-" if a is None else f"{a:.4f}" for a in rep.aucs]
        body.append([name, *cells, f"{rep.macro_f1:.4f}"])
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths)))
             for r in [header] + body]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"
