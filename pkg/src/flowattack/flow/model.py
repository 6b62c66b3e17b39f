"""Composition of invertible blocks into a flow, its likelihood, and desk architecture."""

import numpy as np

from ..exceptions import ContractError, NumericError
from ..numerics.prng import Prng
from .blocks import ALPHA, DELTA, CouplingPair, Flatten, LogitPreprocess, Permute, Split, Squeeze

HALF_LOG_2PI = 0.5 * np.log(2 * np.pi)


class FlowModel:
    """Ordered blocks from the data side (``blocks[0]``) to the latent side.

    ``inverse`` maps images to flat base vectors ``z`` of length ``dim``;
    ``forward`` maps base vectors back to images.
    """

    def __init__(self, blocks, input_shape):
        self.blocks = list(blocks)
        self.input_shape = tuple(int(s) for s in input_shape)
        self.dim = int(np.prod(self.input_shape))
        shape = self.input_shape
        for b in self.blocks:
            shape = b.out_shape(shape)
        if int(np.prod(shape)) != self.dim:
            raise ContractError("blocks do not preserve the dimension")
        self.latent_shape = shape

    def parameters(self):
        return [p for b in self.blocks for p in b.parameters()]

    def _batch(self, x, shape):
        x = np.asarray(x)
        if x.shape == shape:
            return x[None], True
        if x.shape[1:] != shape:
            raise ContractError(f"expected shape {shape} or (N, *{shape}), got {x.shape}")
        return x, False

    def inverse(self, x):
        """Image batch -> (flat base vectors, log|det dz/dx| per example)."""
        x, single = self._batch(x, self.input_shape)
        ld = np.zeros(x.shape[0], x.dtype)
        h = x
        for i, b in enumerate(self.blocks):
            h, l = b.inverse(h)
            if not (np.all(np.isfinite(h)) and np.all(np.isfinite(l))):
                raise NumericError("non-finite values in inverse pass", block=i)
            ld = ld + l
        z = h.reshape(h.shape[0], -1)
        return (z[0], ld[0]) if single else (z, ld)

    def forward(self, z):
        """Flat base vectors -> (image batch, log|det dx/dz| per example)."""
        z, single = self._batch(z, (self.dim,))
        h = z.reshape((z.shape[0],) + tuple(self.latent_shape))
        ld = np.zeros(z.shape[0], z.dtype)
        for i in range(len(self.blocks) - 1, -1, -1):
            h, l = self.blocks[i].forward(h)
            if not (np.all(np.isfinite(h)) and np.all(np.isfinite(l))):
                raise NumericError("non-finite values in forward pass", block=i)
            ld = ld + l
        return (h[0], ld[0]) if single else (h, ld)

    def nll(self, x):
        """Per-example negative log-likelihood in nats under a standard-normal base."""
        z, ld = self.inverse(x)
        return 0.5 * np.sum(np.square(z, dtype=np.float64), axis=-1) + self.dim * HALF_LOG_2PI - ld

    def nll_and_grad(self, x):
        """Mean NLL over the batch and its gradient for every parameter."""
        x, _ = self._batch(x, self.input_shape)
        n = x.shape[0]
        h = x
        ld = np.zeros(n, x.dtype)
        caches = []
        for i, b in enumerate(self.blocks):
            h, l, c = b.inverse_cached(h)
            if not (np.all(np.isfinite(h)) and np.all(np.isfinite(l))):
                raise NumericError("non-finite values in inverse pass", block=i)
            ld = ld + l
            caches.append(c)
        z = h.reshape(n, -1)
        per = 0.5 * np.sum(z.astype(np.float64) ** 2, axis=1) + self.dim * HALF_LOG_2PI - ld
        g = (h / h.dtype.type(n)).astype(h.dtype)
        g_ld = np.full(n, -1.0 / n, dtype=h.dtype)
        grads = []
        for b, c in zip(reversed(self.blocks), reversed(caches)):
            g, pg = b.backward_inverse(c, g, g_ld)
            grads = pg + grads
        return float(per.mean()), grads

    def astype(self, dtype):
        return FlowModel([b.astype(dtype) for b in self.blocks], self.input_shape)

    def describe(self):
        return {"input_shape": list(self.input_shape), "blocks": [b.describe() for b in self.blocks]}

    def tensors(self):
        return [t for b in self.blocks for t in b.tensors()]


def flow_forward(z, model):
    return model.forward(z)[0]


def flow_inverse(x, model):
    return model.inverse(x)


def nll(x, model):
    return model.nll(x)


def _coupling_stack(n_pairs, width, prng, hidden, alpha):
    blocks = []
    for _ in range(n_pairs):
        blocks.append(Permute.random(width, prng))
        blocks.append(CouplingPair.init(width, prng, hidden, alpha))
    return blocks


def build_flow(input_shape=(1, 8, 8), high_res_blocks=4, low_res_blocks=6, fc_blocks=6,
               hidden=(64, 64), alpha=ALPHA, delta=DELTA, seed=0):
    """Two-level multi-scale flow.

    Data side to latent side: logit preprocessing, ``high_res_blocks`` coupling
    pairs at full resolution, a squeeze, ``low_res_blocks`` pairs, a flatten, and
    a split that taps three quarters to the output while ``fc_blocks`` pairs act
    on the remaining quarter.  Each pair is preceded by a fixed random
    permutation.  Subnet output layers start at zero, so the fresh flow is the
    identity after preprocessing.
    """
    prng = Prng(seed)
    c, h, w = input_shape
    d = c * h * w
    blocks = [LogitPreprocess(delta)]
    blocks += _coupling_stack(high_res_blocks, d, prng, hidden, alpha)
    blocks.append(Squeeze())
    blocks += _coupling_stack(low_res_blocks, d, prng, hidden, alpha)
    sq_shape = (4 * c, h // 2, w // 2)
    blocks.append(Flatten(sq_shape))
    blocks.append(Split(_coupling_stack(fc_blocks, d // 4, prng, hidden, alpha)))
    return FlowModel(blocks, input_shape)
