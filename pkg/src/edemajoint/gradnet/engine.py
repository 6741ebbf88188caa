"""Loss/gradient evaluation over a ParameterStore and a finite-difference verifier."""

import numpy as np

from ..errors import ParameterError
from ..rng import Rng
from .params import GradientSet


def loss_and_gradients(params, batch, objective_config):
    """Objective value and exact gradients for every parameter the loss reaches.

    Parameters with no path to the loss in the active phase (e.g. the
    classifiers during the embedding-only phase) are absent from the
    returned :class:`GradientSet`.
    """
    from ..objective import batch_loss

    leaves = params.tensors(requires_grad=True)
    loss = batch_loss(leaves, params.model, batch, objective_config)
    loss.backward()
    grads = GradientSet()
    for name, leaf in leaves.items():
        if leaf.grad is not None:
            grads[name] = leaf.grad
    return float(loss.data), grads


def finite_diff_check(params, batch=None, objective_config=None, epsilon=1e-6,
                      max_coords=200, seed=0, loss_fn=None):
    """Worst relative error between analytic and central-difference gradients.

    Checks up to ``max_coords`` randomly chosen coordinates across all
    parameters.  The relative error of one coordinate is
    ``|a - n| / max(|a|, |n|, 1e-8)``.  ``loss_fn(params) -> (loss, grads)``
    replaces the model objective, which lets toy objectives share the harness.
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise ParameterError(f"epsilon must lie in [1e-7, 1e-3], got {epsilon}")
    if loss_fn is None:
        def loss_fn(p):
            return loss_and_gradients(p, batch, objective_config)

    _, grads = loss_fn(params)
    coords = [(name, k) for name in params for k in range(params[name].size)]
    rng = Rng(seed, stream=0xFD)
    if len(coords) > max_coords:
        picks = rng.permutation(len(coords))[:max_coords]
        coords = [coords[i] for i in sorted(picks)]

    work = params.copy()
    worst = 0.0
    for name, k in coords:
        base = params[name]
        flat = base.reshape(-1).copy()
        x0 = flat[k]
        flat[k] = x0 + epsilon
        work.assign(name, flat.reshape(base.shape))
        f_plus, _ = loss_fn(work)
        flat[k] = x0 - epsilon
        work.assign(name, flat.reshape(base.shape))
        f_minus, _ = loss_fn(work)
        work.assign(name, base)
        numeric = (f_plus - f_minus) / (2.0 * epsilon)
        analytic = grads[name].reshape(-1)[k] if name in grads else 0.0
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
        worst = max(worst, err)
    return worst
