"""Maximum-likelihood training of the multi-scale flow behind a transformer interface."""

import logging

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ..data import dequantize as _dequantize
from ..exceptions import ContractError, NumericError
from ..numerics.optim import Adam
from ..numerics.prng import Prng
from ..validation import check_images
from .blocks import ALPHA, DELTA
from .model import build_flow

log = logging.getLogger(__name__)


def exponential_lr(step, total, lr_start, lr_end):
    """Geometric interpolation from ``lr_start`` (step 0) to ``lr_end`` (last step)."""
    if total <= 1:
        return lr_start
    return lr_start * (lr_end / lr_start) ** (step / (total - 1))


class NormalizingFlow(TransformerMixin, BaseEstimator):
    """Multi-scale affine-coupling flow fitted by exact maximum likelihood.

    ``transform`` maps images to base vectors, ``inverse_transform`` maps base
    vectors back to images, and ``score_samples`` returns per-image
    log-likelihoods in nats.
    """

    def __init__(self, high_res_blocks=4, low_res_blocks=6, fc_blocks=6, hidden=(64, 64),
                 alpha=ALPHA, delta=DELTA, lr=1e-4, lr_final=1e-6, batch_size=64, epochs=30,
                 dequantize=True, seed=0):
        self.high_res_blocks = high_res_blocks
        self.low_res_blocks = low_res_blocks
        self.fc_blocks = fc_blocks
        self.hidden = hidden
        self.alpha = alpha
        self.delta = delta
        self.lr = lr
        self.lr_final = lr_final
        self.batch_size = batch_size
        self.epochs = epochs
        self.dequantize = dequantize
        self.seed = seed

    def fit(self, X, y=None):
        X = check_images(X)
        if len(X) == 0:
            raise ContractError("cannot fit a flow on an empty dataset")
        self.model_ = build_flow(X.shape[1:], self.high_res_blocks, self.low_res_blocks,
                                 self.fc_blocks, tuple(self.hidden), self.alpha, self.delta, self.seed)
        return self._train(X)

    def _train(self, X):
        model = self.model_
        prng = Prng(self.seed + 1)
        params = model.parameters()
        opt = Adam(params, lr=self.lr)
        n = len(X)
        per_epoch = -(-n // self.batch_size)
        total = per_epoch * self.epochs
        self.nll_trace_ = []
        good = [p.copy() for p in params]
        step = 0
        for epoch in range(self.epochs):
            data = _dequantize(X, prng) if self.dequantize else X
            order = prng.permutation(n)
            acc = 0.0
            for start in range(0, n, self.batch_size):
                idx = order[start:start + self.batch_size]
                try:
                    loss, grads = model.nll_and_grad(data[idx])
                    opt.lr = exponential_lr(step, total, self.lr, self.lr_final)
                    opt.step(grads)
                except NumericError as err:
                    for p, g in zip(params, good):
                        p[...] = g
                    raise NumericError(f"flow training diverged in epoch {epoch}; "
                                       f"parameters restored to the last good epoch ({err})")
                acc += loss * len(idx)
                step += 1
            mean = acc / n
            if not np.isfinite(mean):
                for p, g in zip(params, good):
                    p[...] = g
                raise NumericError(f"flow training diverged in epoch {epoch}; "
                                   "parameters restored to the last good epoch")
            good = [p.copy() for p in params]
            self.nll_trace_.append(mean / model.dim)
            log.info("epoch %d: %.4f nats/dim", epoch, mean / model.dim)
        return self

    @property
    def dim(self):
        return self.model_.dim

    def transform(self, X):
        check_is_fitted(self, "model_")
        return self.model_.inverse(np.asarray(X, dtype=np.float32))[0]

    def inverse_transform(self, Z):
        check_is_fitted(self, "model_")
        return self.model_.forward(np.asarray(Z, dtype=np.float32))[0]

    def score_samples(self, X):
        check_is_fitted(self, "model_")
        return -self.model_.nll(np.asarray(X, dtype=np.float32))

    def score(self, X, y=None):
        return float(np.mean(self.score_samples(X)))

    def bits_per_dim(self, X):
        return float(-self.score(X) / self.dim / np.log(2))

    def sample(self, n, temperature=1.0, prng=None):
        """Draw ``n`` images from ``z ~ N(0, temperature^2 I)``."""
        check_is_fitted(self, "model_")
        if temperature < 0:
            raise ContractError("temperature must be non-negative")
        prng = prng or Prng(self.seed)
        z = prng.standard_normal((n, self.dim)) * np.float32(temperature)
        return self.model_.forward(z)[0]


def train_flow(dataset, **params):
    return NormalizingFlow(**params).fit(dataset.images)


def sample(flow, count, temperature, prng):
    return flow.sample(count, temperature, prng)
