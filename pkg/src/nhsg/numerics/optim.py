"""Adam / AdamW with gradient clipping and a warmup + exponential-decay
learning-rate schedule.

The decoupled weight decay is applied independently of the scheduled
learning rate, so a zero learning rate leaves Adam a no-op and AdamW a
pure weight-decay step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, NumericsError
from .store import ParameterStore


@dataclass
class OptimizerState:
    kind: str = "adam"  # adam | adamw
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    warmup_steps: int = 0
    decay_gamma: float = 0.999   # multiplicative decay applied per decay_steps
    decay_steps: int = 1000
    clip_norm: float = 0.0       # 0 disables clipping
    step_count: int = 0
    skipped_steps: int = 0
    moments: dict = field(default_factory=dict)  # name -> (m, v)

    def __post_init__(self):
        if self.kind not in ("adam", "adamw"):
            raise ConfigError(f"unknown optimizer kind {self.kind!r}")
        if self.learning_rate < 0 or self.decay_steps < 1:
            raise ConfigError("bad optimizer hyperparameters")

    def current_lr(self) -> float:
        """Linear warmup to the peak rate, then exponential decay."""
        t = self.step_count + 1
        if self.warmup_steps > 0 and t <= self.warmup_steps:
            return self.learning_rate * t / self.warmup_steps
        past = t - self.warmup_steps
        return self.learning_rate * self.decay_gamma ** (past / self.decay_steps)


def global_grad_norm(store: ParameterStore) -> float:
    total = 0.0
    for t in store.tensors():
        if t.grad is not None:
            total += float(np.sum(t.grad.astype(np.float64) ** 2))
    return float(np.sqrt(total))


def adamw_step(store: ParameterStore, opt: OptimizerState) -> float:
    """Clip grads globally, apply the Adam/AdamW update, advance the schedule.

    Returns the pre-clip gradient norm.  Raises NumericsError on non-finite
    gradients without touching any parameter (callers may catch, log, and
    continue; `opt.skipped_steps` counts those events).
    """
    norm = global_grad_norm(store)
    if not np.isfinite(norm):
        opt.skipped_steps += 1
        raise NumericsError(
            f"non-finite gradient at step {opt.step_count}; step skipped")

    scale = 1.0
    if opt.clip_norm > 0 and norm > opt.clip_norm:
        scale = opt.clip_norm / norm

    lr = opt.current_lr()
    b1, b2 = opt.beta1, opt.beta2
    t = opt.step_count + 1
    bias1 = 1.0 - b1 ** t
    bias2 = 1.0 - b2 ** t

    for name, p in store.items():
        if not p.requires_grad:
            continue
        g = p.grad
        if g is None:
            g = np.zeros_like(p.data)
        g = g * scale
        if name not in opt.moments:
            opt.moments[name] = (np.zeros_like(p.data), np.zeros_like(p.data))
        m, v = opt.moments[name]
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        opt.moments[name] = (m, v)
        update = lr * (m / bias1) / (np.sqrt(v / bias2) + opt.eps)
        if opt.kind == "adamw" and opt.weight_decay > 0:
            update = update + opt.weight_decay * p.data
        p.data = (p.data - update).astype(np.float32)

    opt.step_count += 1
    store.step += 1
    store.check_finite()
    return norm
