"""Similarity measures, the ranking embedding loss, classifier cross-entropy,
and the combined training objective over a mini-batch."""

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .encoders import classifier_logits, image_forward, text_forward
from .errors import ConfigError, EmptyClassificationError, ShapeError
from .gradnet import tensor as T

SIMILARITY_KINDS = ("dot", "neg_l2", "cosine")
MODES = ("ranking", "direct")
PHASES = ("embedding_only", "joint")
PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class SimilarityKind:
    kind: str = "dot"
    mode: str = "ranking"

    def __post_init__(self):
        if self.kind not in SIMILARITY_KINDS:
            raise ConfigError(f"similarity kind must be one of {SIMILARITY_KINDS}, got {self.kind!r}")
        if self.mode not in MODES:
            raise ConfigError(f"similarity mode must be one of {MODES}, got {self.mode!r}")


@dataclass(frozen=True)
class ObjectiveConfig:
    """What to optimise.

    ``image_only`` drops the text stream entirely (image encoder plus image
    classifier trained by cross-entropy alone).
    """

    similarity: SimilarityKind = field(default_factory=SimilarityKind)
    unlabeled_margin: float = 0.5
    phase: str = "joint"
    image_only: bool = False

    def __post_init__(self):
        if not self.unlabeled_margin > 0:
            raise ConfigError("unlabeled_margin must be positive")
        if self.phase not in PHASES:
            raise ConfigError(f"phase must be one of {PHASES}, got {self.phase!r}")

    def with_phase(self, phase):
        return ObjectiveConfig(self.similarity, self.unlabeled_margin, phase, self.image_only)

    def to_dict(self):
        return asdict(self)


def _kind(kind):
    return kind.kind if isinstance(kind, SimilarityKind) else kind


# ---------------------------------------------------------------- similarity

def similarity_tensor(a, b, kind):
    """Row-wise similarity of two (..., d) tensors."""
    kind = _kind(kind)
    if kind == "dot":
        return T.dot(a, b)
    if kind == "neg_l2":
        return -T.norm(T.sub(a, b))
    if kind == "cosine":
        return T.cosine(a, b)
    raise ConfigError(f"unknown similarity kind {kind!r}")


def similarity(a, b, kind="dot"):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"similarity: operand shapes {a.shape} and {b.shape} differ")
    return float(similarity_tensor(T.Tensor(a), T.Tensor(b), kind).data)


def margin(y_j, y_s, config=None):
    """Label distance when both labels are known, else the constant margin."""
    if y_j is not None and y_s is not None:
        return float(abs(int(y_j) - int(y_s)))
    return config.unlabeled_margin if config is not None else ObjectiveConfig().unlabeled_margin


def ranking_loss(I_j, R_j, I_s, R_s, eta, kind=SimilarityKind()):
    """Two-sided hinge between a matched pair and its impostor pairs.

    In ``direct`` mode this is just the negated matched-pair similarity.
    """
    if not isinstance(kind, SimilarityKind):
        kind = SimilarityKind(kind)
    matched = similarity(I_j, R_j, kind)
    if kind.mode == "direct":
        return -matched
    return (max(0.0, similarity(I_j, R_s, kind) - matched + eta)
            + max(0.0, similarity(I_s, R_j, kind) - matched + eta))


def cross_entropy_pair(p_img, p_txt, y):
    """-log p_img[y] - log p_txt[y], probabilities floored at 1e-12."""
    return float(-np.log(max(p_img[y], PROB_FLOOR)) - np.log(max(p_txt[y], PROB_FLOOR)))


# -------------------------------------------------------------- impostors

@dataclass(frozen=True)
class ImpostorMap:
    """Permutation ``s`` with ``perm[j]`` the impostor index of example ``j``."""

    perm: np.ndarray
    epoch: int = 0

    def __getitem__(self, j):
        return int(self.perm[j])

    def __len__(self):
        return len(self.perm)


def sample_impostor_map(n, rng, epoch=0):
    if n < 1:
        raise ValueError("impostor map needs n >= 1")
    return ImpostorMap(rng.permutation(n), epoch)


# ------------------------------------------------------------------- batches

@dataclass
class Batch:
    images: np.ndarray
    tokens: list
    labels: list
    impostor_images: Optional[np.ndarray] = None
    impostor_tokens: Optional[list] = None
    impostor_labels: Optional[list] = None

    def __len__(self):
        return len(self.tokens)

    @classmethod
    def from_examples(cls, examples, indices, impostors=None):
        """Gather ``examples[indices]``; impostor of ``examples[j]`` is ``examples[impostors[j]]``."""
        rows = [examples[i] for i in indices]
        batch = cls(np.stack([e.image for e in rows]), [e.tokens for e in rows],
                    [e.label for e in rows])
        if impostors is not None:
            imp = [examples[impostors[i]] for i in indices]
            batch.impostor_images = np.stack([e.image for e in imp])
            batch.impostor_tokens = [e.tokens for e in imp]
            batch.impostor_labels = [e.label for e in imp]
        return batch


def _uses_ranking(config):
    return not config.image_only and config.similarity.mode == "ranking"


def batch_loss(P, model, batch, config):
    """Scalar loss tensor for one mini-batch (sum over members, not mean)."""
    n = len(batch)
    if n == 0:
        raise ShapeError("empty batch")
    joint = config.phase == "joint"
    ranking = _uses_ranking(config)
    if ranking and batch.impostor_images is None:
        raise ShapeError("ranking objective needs impostor assignments for the batch")
    if config.image_only and not joint:
        raise ConfigError("the image-only model has no embedding-only phase")

    images = batch.images
    if ranking:
        images = np.concatenate([images, batch.impostor_images])
    I_all, _ = image_forward(P, model, images)
    I_j = I_all[:n] if ranking else I_all

    terms = []
    if not config.image_only:
        seqs = list(batch.tokens) + (list(batch.impostor_tokens) if ranking else [])
        R_all, _, _ = text_forward(P, model, seqs)
        R_j = R_all[:n] if ranking else R_all
        kind = config.similarity.kind
        matched = similarity_tensor(I_j, R_j, kind)
        if ranking:
            I_s, R_s = I_all[n:], R_all[n:]
            eta = np.array([margin(a, b, config)
                            for a, b in zip(batch.labels, batch.impostor_labels)])
            hinge_r = T.relu(similarity_tensor(I_j, R_s, kind) - matched + eta)
            hinge_i = T.relu(similarity_tensor(I_s, R_j, kind) - matched + eta)
            terms.append(T.tsum(hinge_r + hinge_i))
        else:
            terms.append(-T.tsum(matched))

    if joint:
        rows = np.array([i for i, y in enumerate(batch.labels) if y is not None], dtype=np.int64)
        if rows.size == 0:
            raise EmptyClassificationError("joint phase batch has no labeled member")
        ys = np.array([batch.labels[i] for i in rows], dtype=np.int64)
        streams = [("image", I_j)] if config.image_only else [("image", I_j), ("text", R_j)]
        for stream, emb in streams:
            probs = T.softmax(classifier_logits(P, emb[rows], stream), axis=-1)
            terms.append(-T.tsum(T.log(probs[np.arange(rows.size), ys], floor=PROB_FLOOR)))

    loss = terms[0]
    for t in terms[1:]:
        loss = loss + t
    return loss


def total_loss(batch, params, config):
    """Objective value on ``batch`` for the parameters in ``params``."""
    loss = batch_loss(params.tensors(requires_grad=False), params.model, batch, config)
    return float(loss.data)

