import numpy as np

from ..exceptions import ContractError, NumericError


class Adam:
    """Bias-corrected Adam over a list of parameter arrays, updated in place."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]

    def step(self, grads):
        grads = list(grads)
        if len(grads) != len(self.params):
            raise ContractError("gradient list does not match parameters")
        for p, g in zip(self.params, grads):
            if np.shape(g) != p.shape:
                raise ContractError(f"gradient shape {np.shape(g)} != parameter shape {p.shape}")
            if not np.all(np.isfinite(g)):
                raise NumericError("non-finite gradient; Adam step rejected")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1 - b1 ** self.t
        c2 = 1 - b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * (g * g)
            p -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype)


def adam_step(params, grads, state):
    """Functional alias: apply one update of ``state`` (an ``Adam``) and return it."""
    state.step(grads)
    return params, state
