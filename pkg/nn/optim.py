"""
Adam Optimizer
Bias-corrected first and second moment estimates, one state entry per named parameter
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional

import numpy as np

from errors import NonFiniteError, ShapeMismatchError
from schemas.config import AdamConfig

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    """Per-parameter moments m and v, keyed like the parameters, plus the step counter t"""

    alpha: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def from_config(cls, config: Optional[AdamConfig] = None) -> "AdamState":
        config = config or AdamConfig()
        return cls(alpha=config.alpha, beta1=config.beta1, beta2=config.beta2, epsilon=config.epsilon)

    def hyperparameters(self) -> Dict[str, float]:
        return {"alpha": self.alpha, "beta1": self.beta1, "beta2": self.beta2, "epsilon": self.epsilon}


def adam_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray], state: AdamState) -> AdamState:
    """
    One Adam update, in place on params and state. Every gradient is checked before
    anything is modified, so a rejected step leaves both untouched.
    """
    for name, param in params.items():
        grad = grads.get(name)
        if grad is None:
            raise KeyError(f"missing gradient for {name}")
        if grad.shape != param.shape:
            raise ShapeMismatchError(f"gradient of {name}", param.shape, grad.shape)
        if not np.all(np.isfinite(grad)):
            raise NonFiniteError(f"non-finite gradient for {name} at step {state.t + 1}")

    state.t += 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1 ** state.t
    correction2 = 1.0 - b2 ** state.t
    for name, param in params.items():
        g = grads[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(param)
            state.v[name] = np.zeros_like(param)
        state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        state.v[name] = b2 * state.v[name] + (1.0 - b2) * (g * g)
        m_hat = state.m[name] / correction1
        v_hat = state.v[name] / correction2
        param -= (state.alpha * (m_hat / (np.sqrt(v_hat) + state.epsilon))).astype(param.dtype, copy=False)
    return state


class Adam:
    """Optimizer bound to a fixed set of named parameters"""

    def __init__(self, params: Mapping[str, np.ndarray], config: Optional[AdamConfig] = None,
                 state: Optional[AdamState] = None):
        self.params = params
        self.state = state or AdamState.from_config(config)

    def step(self, grads: Mapping[str, np.ndarray]) -> None:
        adam_step(self.params, grads, self.state)
