"""Adam optimizer with decoupled weight decay.

The weight decay is applied directly to the parameters (AdamW style), so
the training objective value stays the pure reconstruction/classification
loss.
"""

import numpy as np


class Adam:
    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0):
        """``params`` is a list of (name, array); arrays are updated in place."""
        self.params = list(params)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self._m = {name: np.zeros_like(p) for name, p in self.params}
        self._v = {name: np.zeros_like(p) for name, p in self.params}

    def step(self, grads, lr):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1**self.t
        bc2 = 1.0 - b2**self.t
        for name, p in self.params:
            g = grads[name]
            m = self._m[name]
            v = self._v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if self.weight_decay:
                update = update + self.weight_decay * p
            p -= lr * update
