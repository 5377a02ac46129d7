"""Adam optimizer with bias correction, updating parameters in place."""

import numpy as np

from ..errors import ContractError


class Adam:
    def __init__(self, lr=1e-4, beta1=0.5, beta2=0.999, eps=1e-8):
        if lr <= 0:
            raise ContractError("learning rate must be positive")
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self._m = {}
        self._v = {}

    def step(self, named_grads):
        """Apply one update. named_grads is a list of (name, param, grad)
        with stable names; params are modified in place."""
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for name, param, grad in named_grads:
            if grad is None:
                raise ContractError(f"missing gradient for parameter {name}")
            if grad.shape != param.shape:
                raise ContractError(
                    f"gradient shape {grad.shape} does not match parameter "
                    f"{name} with shape {param.shape}")
            if name not in self._m:
                self._m[name] = np.zeros_like(param)
                self._v[name] = np.zeros_like(param)
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            mhat = m / b1t
            vhat = v / b2t
            param -= self.lr * mhat / (np.sqrt(vhat) + self.eps)
