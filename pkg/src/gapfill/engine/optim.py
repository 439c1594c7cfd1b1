from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Adam:
    """Adam with bias correction folded into the step size.

    Parameters are updated in place, moments are kept per parameter key.
    """

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7
    iterations: int = 0
    _m: dict = field(default_factory=dict, repr=False)
    _v: dict = field(default_factory=dict, repr=False)

    def step(self, params: dict, grads: dict) -> None:
        self.iterations += 1
        t = self.iterations
        lr_t = float(self.learning_rate * np.sqrt(1.0 - self.beta2**t) / (1.0 - self.beta1**t))
        for key, p in params.items():
            g = grads[key]
            m = self._m.get(key)
            if m is None:
                m = self._m[key] = np.zeros_like(p)
                self._v[key] = np.zeros_like(p)
            v = self._v[key]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= (lr_t * m / (np.sqrt(v) + self.epsilon)).astype(p.dtype, copy=False)
