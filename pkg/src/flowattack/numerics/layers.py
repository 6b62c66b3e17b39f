"""Dense layers and MLP stacks with hand-written reverse-mode gradients.

Inputs are batched ``(N, in)`` arrays (a 1-D vector is treated as a batch of
one).  Every ``forward`` returns ``(output, cache)`` and the matching
``backward(cache, grad_out)`` returns ``(grad_in, param_grads)`` where
``param_grads`` lines up with ``parameters()``.  Parameters are updated in place
by the optimizer, so ``parameters()`` hands out the live arrays.
"""

import numpy as np

from ..exceptions import ContractError
from .tensor import DTYPE

LEAKY_SLOPE = 0.1
ACTIVATIONS = ("leaky_relu", "identity", "tanh")


class Dense:
    def __init__(self, weights, bias, activation="identity", slope=LEAKY_SLOPE):
        if activation not in ACTIVATIONS:
            raise ContractError(f"unknown activation {activation!r}")
        self.weights = np.asarray(weights)
        self.bias = np.asarray(bias)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ContractError("weights must be [out x in] and bias [out]")
        self.activation = activation
        self.slope = float(slope)

    @classmethod
    def init(cls, n_in, n_out, prng, activation="identity", zero=False, dtype=DTYPE):
        if zero:
            w = np.zeros((n_out, n_in), dtype=dtype)
        else:
            gain = np.sqrt(2.0) if activation == "leaky_relu" else 1.0
            w = prng.standard_normal((n_out, n_in), dtype=dtype) * dtype(gain / np.sqrt(n_in))
        return cls(w, np.zeros(n_out, dtype=dtype), activation)

    @property
    def n_in(self):
        return self.weights.shape[1]

    @property
    def n_out(self):
        return self.weights.shape[0]

    def parameters(self):
        return [self.weights, self.bias]

    def forward(self, x):
        x = np.asarray(x)
        squeeze = x.ndim == 1
        x2 = x[None, :] if squeeze else x
        if x2.ndim != 2 or x2.shape[1] != self.n_in:
            raise ContractError(f"expected input width {self.n_in}, got shape {x.shape}")
        pre = x2 @ self.weights.T + self.bias
        if self.activation == "leaky_relu":
            y = np.where(pre > 0, pre, pre * pre.dtype.type(self.slope))
        elif self.activation == "tanh":
            y = np.tanh(pre)
        else:
            y = pre
        cache = (self, x2, pre, y, squeeze)
        return (y[0] if squeeze else y), cache

    def backward(self, cache, grad_out):
        layer, x2, pre, y, squeeze = cache
        if layer is not self:
            raise ContractError("cache does not belong to this layer")
        g = np.asarray(grad_out)
        g = g[None, :] if squeeze else g
        if g.shape != y.shape:
            raise ContractError(f"grad_out shape {g.shape} does not match output {y.shape}")
        if self.activation == "leaky_relu":
            g = np.where(pre > 0, g, g * pre.dtype.type(self.slope))
        elif self.activation == "tanh":
            g = g * (1 - y * y)
        grad_w = g.T @ x2
        grad_b = g.sum(axis=0)
        grad_in = g @ self.weights
        return (grad_in[0] if squeeze else grad_in), [grad_w, grad_b]

    def astype(self, dtype):
        return Dense(self.weights.astype(dtype), self.bias.astype(dtype), self.activation, self.slope)


class MLP:
    """A stack of Dense layers evaluated in order."""

    def __init__(self, layers):
        self.layers = list(layers)

    @classmethod
    def init(cls, n_in, n_out, hidden, prng, zero_last=False, dtype=DTYPE,
             hidden_activation="leaky_relu", out_activation="identity"):
        widths = [n_in, *hidden, n_out]
        layers = []
        for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
            last = i == len(widths) - 2
            act = out_activation if last else hidden_activation
            layers.append(Dense.init(a, b, prng, act, zero=last and zero_last, dtype=dtype))
        return cls(layers)

    def parameters(self):
        return [p for layer in self.layers for p in layer.parameters()]

    def forward(self, x):
        caches = []
        for layer in self.layers:
            x, c = layer.forward(x)
            caches.append(c)
        return x, caches

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, caches, grad_out):
        grads = []
        g = grad_out
        for layer, c in zip(reversed(self.layers), reversed(caches)):
            g, pg = layer.backward(c, g)
            grads = pg + grads
        return g, grads

    def astype(self, dtype):
        return MLP([layer.astype(dtype) for layer in self.layers])


def dense_forward(layer, x):
    return layer.forward(x)


def dense_backward(layer, cache, grad_out):
    return layer.backward(cache, grad_out)
