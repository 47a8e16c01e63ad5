"""NovoGrad: SGD with layer-wise scalar second moments and decoupled decay.

Each parameter tensor keeps one scalar second moment v (the squared gradient
norm, exponentially averaged) plus a first-moment tensor m. Weight decay is
added after the gradient is normalized, so the decay strength does not depend
on the gradient scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import Model


class OptimError(RuntimeError):
    pass


@dataclass(frozen=True)
class OptimConfig:
    lr: float = 0.01
    beta1: float = 0.95
    beta2: float = 0.5
    weight_decay: float = 0.001
    eps: float = 1e-8
    warmup_steps: int = 1000
    total_steps: int | None = None  # only used by the cosine schedule
    schedule: str = "constant"  # "constant" or "cosine" after warmup

    def __post_init__(self):
        if self.schedule not in ("constant", "cosine"):
            raise OptimError(f"unknown schedule {self.schedule!r}")
        if self.schedule == "cosine" and not self.total_steps:
            raise OptimError("cosine schedule needs total_steps")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise OptimError("betas must lie in [0, 1)")
        if self.lr <= 0:
            raise OptimError("lr must be positive")


@dataclass
class OptimState:
    cfg: OptimConfig
    step: int = 0  # completed update count
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, float] = field(default_factory=dict)


def lr_at_step(cfg: OptimConfig, step: int, base_lr: float | None = None) -> float:
    """Learning rate applied at update ``step`` (1-based): linear warmup from
    base/warmup_steps up to the base rate, then constant (or cosine to zero)."""
    base = cfg.lr if base_lr is None else base_lr
    if step < 1:
        raise OptimError("steps are counted from 1")
    if cfg.warmup_steps > 0 and step <= cfg.warmup_steps:
        return base * step / cfg.warmup_steps
    if cfg.schedule == "constant":
        return base
    total = max(cfg.total_steps, cfg.warmup_steps + 1)
    frac = min(1.0, (step - cfg.warmup_steps) / (total - cfg.warmup_steps))
    return base * 0.5 * (1.0 + math.cos(math.pi * frac))


def novograd_step(model: Model, grads: dict[str, np.ndarray], state: OptimState,
                  lr: float | None = None) -> float:
    """Apply one update in place; returns the learning rate used.

    Only tensors present in ``grads`` move. A non-finite gradient aborts with
    the offending tensor named rather than poisoning the weights.
    """
    state.step += 1
    lr = lr_at_step(state.cfg, state.step) if lr is None else lr
    cfg = state.cfg
    for name in sorted(grads):
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise OptimError(f"non-finite gradient for {name!r} at step {state.step}")
        g = g.astype(np.float64, copy=False)
        w = model.tensors[name]
        gg = float(np.vdot(g, g))
        if name not in state.v:
            v = gg
            u = g / (math.sqrt(v) + cfg.eps) + cfg.weight_decay * w
            m = u.copy()
        else:
            v = cfg.beta2 * state.v[name] + (1.0 - cfg.beta2) * gg
            u = g / (math.sqrt(v) + cfg.eps) + cfg.weight_decay * w
            m = cfg.beta1 * state.m[name] + u
        state.v[name] = v
        state.m[name] = m
        w -= (lr * m).astype(w.dtype)
    return lr
