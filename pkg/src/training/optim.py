"""
Adam optimizer and the step learning-rate schedule.
"""

from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Tuple

import numpy as np

from src import config
from src.exceptions import NonFiniteError, ShapeError
from src.tensor import Tensor


@dataclass
class AdamState:
    """Adam moments keyed by parameter name.

    Attributes:
        m: First moments
        v: Second moments
        step: Number of updates applied so far
    """

    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    beta1: float = config.ADAM_BETA1
    beta2: float = config.ADAM_BETA2
    eps: float = config.ADAM_EPS

    @classmethod
    def create(cls, named_params: Iterable[Tuple[str, Tensor]]) -> "AdamState":
        m, v = {}, {}
        for name, t in named_params:
            m[name] = np.zeros_like(t.data)
            v[name] = np.zeros_like(t.data)
        return cls(m=m, v=v)


def adam_step(named_params: Iterable[Tuple[str, Tensor]], grads: Mapping[str, np.ndarray], state: AdamState,
              lr: float) -> Tuple[Dict[str, Tensor], AdamState]:
    """One bias-corrected Adam update.

    Args:
        named_params: (name, tensor) pairs to update
        grads: Gradient per parameter name
        state: Current moments; not modified
        lr: Learning rate for this step

    Returns:
        (new parameters by name, new state)

    Raises:
        NonFiniteError: If a gradient contains NaN or Inf
        ShapeError: If a gradient or moment does not match its parameter
    """
    step = state.step + 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1 ** step
    correction2 = 1.0 - b2 ** step
    params: Dict[str, Tensor] = {}
    new_m: Dict[str, np.ndarray] = {}
    new_v: Dict[str, np.ndarray] = {}
    for name, param in named_params:
        grad = grads[name]
        if grad.shape != param.shape or state.m[name].shape != param.shape:
            raise ShapeError(f"gradient of '{name}' has shape {grad.shape}, parameter {param.shape}")
        if not np.all(np.isfinite(grad)):
            bad = int(np.size(grad) - np.count_nonzero(np.isfinite(grad)))
            raise NonFiniteError(f"gradient of '{name}' has {bad} non-finite values at step {step}")
        dtype = param.dtype
        m = (b1 * state.m[name] + (1.0 - b1) * grad).astype(dtype, copy=False)
        v = (b2 * state.v[name] + (1.0 - b2) * grad * grad).astype(dtype, copy=False)
        m_hat = m / correction1
        v_hat = v / correction2
        update = lr * m_hat / (np.sqrt(v_hat) + state.eps)
        params[name] = Tensor((param.data - update).astype(dtype, copy=False),
                              requires_grad=param.requires_grad, name=name)
        new_m[name], new_v[name] = m, v
    return params, AdamState(m=new_m, v=new_v, step=step, beta1=b1, beta2=b2, eps=state.eps)


def lr_at(epoch: int, train_config) -> float:
    """Step decay: lr0 * decay_rate ** floor(epoch / (epochs / 3))."""
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    drops = (config.LR_DECAY_MILESTONES * epoch) // train_config.epochs
    drops = min(drops, config.LR_DECAY_MILESTONES - 1)
    return train_config.lr0 * train_config.decay_rate ** drops
