"""Parameter update rules: Adadelta (default) and plain SGD."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError


@dataclass
class OptimizerConfig:
    method: str = "adadelta"  # "adadelta" | "sgd"
    rho: float = 0.9
    eps: float = 1e-6
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.method not in ("adadelta", "sgd"):
            raise ConfigError(f"unknown optimizer method {self.method!r}")


class ParamState:
    """Per-tensor Adadelta accumulators (squared grads, squared updates)."""

    def __init__(self, shape):
        self.acc_grad = np.zeros(shape)
        self.acc_update = np.zeros(shape)


def apply_update(
    param: np.ndarray,
    grad: np.ndarray,
    state: ParamState,
    cfg: OptimizerConfig,
    lr: float,
) -> None:
    """Update `param` in place from `grad`; weight decay is the caller's job."""
    if param.shape != grad.shape:
        raise ShapeError(f"grad shape {grad.shape} != param shape {param.shape}")
    if cfg.method == "sgd":
        param -= lr * grad
        return
    state.acc_grad *= cfg.rho
    state.acc_grad += (1.0 - cfg.rho) * grad * grad
    delta = np.sqrt(state.acc_update + cfg.eps) / np.sqrt(state.acc_grad + cfg.eps) * grad
    state.acc_update *= cfg.rho
    state.acc_update += (1.0 - cfg.rho) * delta * delta
    param -= lr * delta
