"""Adadelta optimizer.

Accumulator form with a global learning-rate multiplier on the applied
update: the squared-update accumulator tracks the raw ratio-times-gradient
step, before the learning rate is applied.

    Eg2  <- rho * Eg2  + (1 - rho) * g^2
    u     = -sqrt(Edx2 + eps) / sqrt(Eg2 + eps) * g
    Edx2 <- rho * Edx2 + (1 - rho) * u^2
    p    <- p + lr * u
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from harlab.errors import ConfigError, TrainingError


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 128
    lr: float = 0.001
    rho: float = 0.95
    epsilon: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 < self.rho < 1.0:
            raise ConfigError(f"rho must be in (0, 1), got {self.rho}")
        if self.epsilon <= 0.0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}")


@dataclass
class AdadeltaState:
    """Decayed squared-gradient (eg2) and squared-update (edx2) accumulators.

    Keyed (layer_idx, param_name); entries exist only for unfrozen layers
    and start at zero, shaped exactly like their parameters.
    """

    eg2: dict = field(default_factory=dict)
    edx2: dict = field(default_factory=dict)

    @classmethod
    def for_model(cls, model) -> "AdadeltaState":
        state = cls()
        for i, layer_params in enumerate(model.params):
            if model.frozen[i]:
                continue
            for name, p in layer_params.items():
                state.eg2[(i, name)] = np.zeros_like(p)
                state.edx2[(i, name)] = np.zeros_like(p)
        return state


def adadelta_step(params, grads, state: AdadeltaState, cfg: TrainConfig):
    """Apply one update in place to every parameter tracked by ``state``.

    Frozen layers are excluded by construction (no accumulator entries).
    Returns (params, state) for convenience; both are mutated.
    """
    rho, eps, lr = cfg.rho, cfg.epsilon, cfg.lr
    for (i, name), eg2 in state.eg2.items():
        g = grads[i][name]
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient in layer {i} param {name!r}")
        edx2 = state.edx2[(i, name)]
        eg2 *= rho
        eg2 += (1.0 - rho) * g * g
        update = g * (np.sqrt(edx2 + eps) / np.sqrt(eg2 + eps))
        edx2 *= rho
        edx2 += (1.0 - rho) * update * update
        params[i][name] -= lr * update
    return params, state
