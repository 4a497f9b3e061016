"""Training configuration and the Adam optimizer with stepped lr decay.

The effective learning rate follows the staircase schedule

    lr(epoch) = learning_rate * decay_factor ** floor(epoch / decay_every)

so with the defaults (0.001, 0.1, 20) epochs 0-19 run at 1e-3, epochs
20-39 at 1e-4, and so on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["TrainConfig", "AdamState", "adam_step", "effective_lr"]

_MODES = ("unsupervised", "supervised")


@dataclass
class TrainConfig:
    """Hyper-parameters of a training run."""

    learning_rate: float = 0.001
    decay_factor: float = 0.1
    decay_every: int = 20
    epochs: int = 60
    batch_size: int = 1024
    lambda_reg: float = 0.2
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    seed: int = 0
    mode: str = "unsupervised"

    def validate(self):
        for name in ("learning_rate", "lambda_reg", "adam_epsilon"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("decay_every", "epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0 < self.decay_factor <= 1:
            raise ValueError(f"decay_factor must be in (0, 1], got {self.decay_factor}")
        for name in ("adam_beta1", "adam_beta2"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} must be in (0, 1), got {getattr(self, name)}")
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}, got {self.mode!r}")


@dataclass
class AdamState:
    """First/second moment accumulators plus the global step counter."""

    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params) -> "AdamState":
        return cls(
            step=0,
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
        )


def effective_lr(cfg: TrainConfig, epoch: int) -> float:
    """Staircase-decayed learning rate for the given (0-based) epoch."""
    return cfg.learning_rate * cfg.decay_factor ** (epoch // cfg.decay_every)


def adam_step(params, grads, state: AdamState, cfg: TrainConfig, epoch: int = 0):
    """One in-place Adam update with bias correction.

    ``params`` and ``grads`` are the model's ordered tensor lists; ``state``
    must have been created by :meth:`AdamState.for_params` for the same
    list.  Returns the (mutated) state for convenience.
    """
    if len(state.m) != len(params):
        raise ValueError(
            f"optimizer state tracks {len(state.m)} tensors but got {len(params)} params"
        )
    state.step += 1
    t = state.step
    lr = effective_lr(cfg, epoch)
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + cfg.adam_epsilon)
    return state
