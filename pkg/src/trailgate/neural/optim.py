"""Adam with bias-corrected moments."""
from __future__ import annotations

import numpy as np


def adam_update(param, grad, m, v, t, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
    """One Adam step for a single tensor; ``t`` is the 1-based step count.

    Returns ``(new_param, new_m, new_v)``.
    """
    if t < 1:
        raise ValueError("step counter starts at 1")
    m = beta1 * m + (1.0 - beta1) * grad
    v = beta2 * v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    return param - lr * m_hat / (np.sqrt(v_hat) + eps), m, v


class Adam:
    def __init__(self, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, params: dict, grads: dict):
        """Update the arrays in ``params`` in place."""
        self.t += 1
        for name, p in params.items():
            g = grads[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            new, self.m[name], self.v[name] = adam_update(
                p, g, self.m[name], self.v[name], self.t, self.lr, self.beta1, self.beta2, self.eps)
            p[...] = new
