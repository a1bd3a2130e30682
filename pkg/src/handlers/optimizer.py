from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from src.errors import ContractError, TrainingDivergenceError
from src.handlers.case_model import Parameters
from src.schemas.training import LrSchedule, OptimizerConfig


@dataclass
class OptimizerState:
    first: dict[str, np.ndarray] = field(default_factory=dict)
    second: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def zeros(cls, params: Parameters) -> "OptimizerState":
        return cls(
            first={n: np.zeros_like(t.data) for n, t in params.items()},
            second={n: np.zeros_like(t.data) for n, t in params.items()},
        )


def lr_at_epoch(schedule: LrSchedule, epoch: int) -> float:
    if epoch < 0:
        raise ContractError(f"epoch must be non-negative, got {epoch}")
    return max(schedule.lr0 * schedule.decay**epoch, schedule.floor)


def adamw_step(
    state: OptimizerState,
    params: Parameters,
    grads: dict[str, np.ndarray],
    lr: float,
    weight_decay: float,
    config: OptimizerConfig | None = None,
    names: Iterable[str] | None = None,
):
    """One AdamW update, in place.

    Weight decay is decoupled: theta -= lr * wd * theta, separately from the
    bias-corrected adaptive step. Blocks without a gradient get decay only and
    keep their moment estimates.
    """
    config = config or OptimizerConfig()
    names = list(names) if names is not None else params.names()

    for name in names:
        grad = grads.get(name)
        if grad is not None and not np.isfinite(grad).all():
            raise TrainingDivergenceError(
                f"non-finite gradient in parameter block {name}"
            )

    state.step += 1
    t = state.step
    correction1 = 1.0 - config.beta1**t
    correction2 = 1.0 - config.beta2**t
    for name in names:
        tensor = params[name]
        theta = tensor.data
        if name not in state.first:
            state.first[name] = np.zeros_like(theta)
            state.second[name] = np.zeros_like(theta)
        decayed = theta - lr * weight_decay * theta
        grad = grads.get(name)
        if grad is None:
            tensor.data = decayed.astype(theta.dtype, copy=False)
            continue
        m = state.first[name]
        v = state.second[name]
        m *= config.beta1
        m += (1.0 - config.beta1) * grad
        v *= config.beta2
        v += (1.0 - config.beta2) * grad * grad
        m_hat = m / correction1
        v_hat = v / correction2
        tensor.data = (decayed - lr * m_hat / (np.sqrt(v_hat) + config.eps)).astype(
            theta.dtype, copy=False
        )
