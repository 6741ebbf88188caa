"""AdamW with decoupled weight decay, and the warmup-linear learning-rate schedule."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import NumericError, ParameterError


@dataclass
class OptimizerState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0

    @classmethod
    def zeros(cls, params):
        return cls({n: np.zeros_like(params[n]) for n in params},
                   {n: np.zeros_like(params[n]) for n in params}, 0)


def adamw_step(params, grads, state, lr, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.01):
    """One AdamW update, in place, of every parameter present in ``grads``.

    ``theta -= lr * m_hat / (sqrt(v_hat) + eps) + lr * weight_decay * theta``.
    Parameters without a gradient entry are left untouched.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError("adamw_step", f"non-finite gradient for parameter {name!r}")
    b1, b2 = betas
    state.t += 1
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name in params:
        if name not in grads:
            continue
        g = grads[name]
        theta = params[name]
        m = b1 * state.m[name] + (1.0 - b1) * g
        v = b2 * state.v[name] + (1.0 - b2) * g * g
        state.m[name], state.v[name] = m, v
        update = (m / c1) / (np.sqrt(v / c2) + eps)
        params.assign(name, theta - lr * update - lr * weight_decay * theta)
    return params, state


def lr_at_step(step, warmup_steps, total_steps, base_lr):
    """Linear ramp 0 -> base_lr over the warmup, then linear decay to 0 at ``total_steps``."""
    if not 0 <= warmup_steps < total_steps:
        raise ParameterError(f"need 0 <= warmup_steps < total_steps, got {warmup_steps}, {total_steps}")
    if not 0 <= step <= total_steps:
        raise ParameterError(f"step {step} outside [0, {total_steps}]")
    if step < warmup_steps:
        return base_lr * step / warmup_steps
    return base_lr * (total_steps - step) / (total_steps - warmup_steps)
