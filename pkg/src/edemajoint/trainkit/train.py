"""Two-phase training loop and decoupled image-only inference."""

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..encoders import classify, encode_image, init_params
from ..errors import ConfigError, ShapeError
from ..evalkit import CUT_NAMES, evaluate
from ..gradnet import loss_and_gradients
from ..objective import Batch, sample_impostor_map
from ..rng import Rng
from .checkpoint import Checkpoint
from .optim import OptimizerState, adamw_step, lr_at_step

log = logging.getLogger(__name__)

LOG_COLUMNS = ("epoch", "phase", "loss", *CUT_NAMES.values(), "macro_f1")

_ORDER_STREAM = 0x5EED
_IMPOSTOR_STREAM = 0x1D05
_AUGMENT_STREAM = 0xA06


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    log: list = field(default_factory=list)
    best: Optional[Checkpoint] = None
    lr_trace: list = field(default_factory=list)


def metrics_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LOG_COLUMNS)
    for row in rows:
        w.writerow(["" if row.get(c) is None else repr(row[c]) if isinstance(row[c], float)
                    else row[c] for c in LOG_COLUMNS])
    return buf.getvalue()


def _shift(image, dy, dx):
    """Translate by whole pixels, repeating the border."""
    h, w = image.shape
    rows = np.clip(np.arange(h) - dy, 0, h - 1)
    cols = np.clip(np.arange(w) - dx, 0, w - 1)
    return image[rows][:, cols]


def _augment(batch, rng, max_shift):
    def jitter(images):
        out = []
        for img in images:
            dy = rng.integer(2 * max_shift + 1) - max_shift
            dx = rng.integer(2 * max_shift + 1) - max_shift
            out.append(_shift(img, dy, dx))
        return np.stack(out)

    batch.images = jitter(batch.images)
    if batch.impostor_images is not None:
        batch.impostor_images = jitter(batch.impostor_images)
    return batch


def _run_phase(params, examples, config, objective, phase, epochs, result, validation, on_epoch):
    n = len(examples)
    bs = config.batch_size
    steps_per_epoch = math.ceil(n / bs)
    total = steps_per_epoch * epochs
    warmup = int(config.warmup_fraction * total)
    state = OptimizerState.zeros(params)
    ranking = not objective.image_only and objective.similarity.mode == "ranking"
    order_rng = Rng(config.seed, _ORDER_STREAM + phase)
    imp_rng = Rng(config.seed, _IMPOSTOR_STREAM + phase)
    aug_rng = Rng(config.seed, _AUGMENT_STREAM + phase)
    step = 0
    for epoch in range(1, epochs + 1):
        impostors = sample_impostor_map(n, imp_rng, epoch) if ranking else None
        order = order_rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, bs):
            batch = Batch.from_examples(examples, order[start:start + bs], impostors)
            if config.augment_shift:
                batch = _augment(batch, aug_rng, config.augment_shift)
            loss, grads = loss_and_gradients(params, batch, objective)
            lr = lr_at_step(step, warmup, total, config.peak_lr)
            adamw_step(params, grads, state, lr, config.betas, config.epsilon, config.weight_decay)
            result.lr_trace.append(lr)
            epoch_loss += loss
            step += 1
        row = {"epoch": epoch, "phase": phase, "loss": epoch_loss / n}
        if phase == 2 and validation:
            report = evaluate(params, validation)
            row.update(zip(CUT_NAMES.values(), report.aucs))
            row["macro_f1"] = report.macro_f1
            on_epoch(row, report, state, step)
        result.log.append(row)
        log.info("phase %d epoch %d loss %.5f", phase, epoch, row["loss"])
    return state, step


def train(config, dataset, validation=None):
    """Phase 1: embedding term over every pair.  Phase 2: full objective over labeled pairs.

    ``validation`` (labeled examples held out of ``dataset``) is scored after
    each phase-2 epoch; the checkpoint with the best mean dichotomised AUC is
    kept in ``TrainResult.best``.
    """
    examples = dataset.examples
    if not examples:
        raise ConfigError("training dataset is empty")
    if config.phase2_epochs > 0 and len(dataset.labeled) < config.batch_size:
        raise ConfigError(
            f"phase 2 needs at least batch_size={config.batch_size} labeled pairs, "
            f"got {len(dataset.labeled)}")
    image_size = examples[0].image.shape[0]
    model = config.model_config(len(dataset.vocabulary), image_size)
    params = init_params(model, config.seed)
    result = TrainResult(None)
    state = OptimizerState.zeros(params)
    steps = 0
    best = {"score": -math.inf}

    def keep_best(row, report, opt_state, step):
        score = report.mean_auc
        if score is not None and score > best["score"]:
            best["score"] = score
            best["ckpt"] = Checkpoint(params.copy(), _copy_state(opt_state), steps + step,
                                      config, dict(dataset.vocabulary))

    if config.phase1_epochs > 0 and not config.image_only:
        state, n1 = _run_phase(params, examples, config, config.objective("embedding_only"), 1,
                               config.phase1_epochs, result, None, None)
        steps += n1
    if config.phase2_epochs > 0:
        state, n2 = _run_phase(params, dataset.labeled, config, config.objective("joint"), 2,
                               config.phase2_epochs, result, validation, keep_best)
        steps += n2
    result.checkpoint = Checkpoint(params, state, steps, config, dict(dataset.vocabulary))
    result.best = best.get("ckpt")
    return result


def _copy_state(state):
    return OptimizerState({k: v.copy() for k, v in state.m.items()},
                          {k: v.copy() for k, v in state.v.items()}, state.t)


def infer_image(checkpoint, image):
    """Severity distribution from the image stream alone."""
    params = getattr(checkpoint, "params", checkpoint)
    image = np.asarray(image, dtype=np.float64)
    size = params.model.image_size
    if image.shape != (size, size):
        raise ShapeError(f"image shape {image.shape} does not match model input ({size}, {size})")
    return classify(encode_image(image, params), params, "image")
