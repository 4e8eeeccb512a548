"""Nadam with the momentum schedule of MXNet's implementation."""
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from ..core.errors import ConfigurationError, DimensionError
from ..core.tensor import Parameter


@dataclass
class OptimizerState:
    """Moments keyed by parameter name; shapes mirror the parameters"""
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    m_schedule: float = 1.0

    def to_dict(self) -> Dict:
        # moment arrays travel as tensor records, not JSON
        return {'step': self.step, 'm_schedule': self.m_schedule}


class Nadam:
    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8,
                 schedule_decay: float = 0.004, state: OptimizerState = None):
        errors = []
        if not 0 <= beta1 < 1 or not 0 <= beta2 < 1:
            errors.append("beta1 and beta2 must be in [0, 1)")
        if epsilon <= 0:
            errors.append("epsilon must be positive")
        ConfigurationError.raise_if(errors)
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.schedule_decay = schedule_decay
        self.state = state or OptimizerState()

    @classmethod
    def from_config(cls, cfg) -> 'Nadam':
        return cls(cfg.beta1, cfg.beta2, cfg.epsilon, cfg.schedule_decay)

    def _momentum(self, t: int) -> float:
        return self.beta1 * (1.0 - 0.5 * 0.96 ** (t * self.schedule_decay))

    def _moments(self, name: str, p: Parameter) -> Tuple[np.ndarray, np.ndarray]:
        if name not in self.state.m:
            self.state.m[name] = np.zeros_like(p.data)
            self.state.v[name] = np.zeros_like(p.data)
        m, v = self.state.m[name], self.state.v[name]
        if m.shape != p.shape:
            raise DimensionError('shape', p.shape, m.shape, op=f"nadam moments of {name}")
        return m, v

    def step(self, named_params: List[Tuple[str, Parameter]], lr: float):
        """One update of every parameter that holds a gradient"""
        self.state.step += 1
        t = self.state.step
        momentum_t = self._momentum(t)
        momentum_next = self._momentum(t + 1)
        self.state.m_schedule *= momentum_t
        m_schedule_next = self.state.m_schedule * momentum_next
        bias_v = 1.0 - self.beta2 ** t

        for name, p in named_params:
            if p.grad is None:
                continue
            m, v = self._moments(name, p)
            grad = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            grad_prime = grad / (1.0 - self.state.m_schedule)
            m_prime = m / (1.0 - m_schedule_next)
            v_prime = v / bias_v
            m_bar = (1.0 - momentum_t) * grad_prime + momentum_next * m_prime
            update = lr * m_bar / (np.sqrt(v_prime) + self.epsilon)
            p.data -= update.astype(p.data.dtype)
