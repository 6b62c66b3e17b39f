"""Attack target: an MLP classifier, white-box PGD, PGD adversarial training, and the query oracle.

Only :func:`pgd_attack` and adversarial training read classifier gradients.
Black-box attacks see the model exclusively through :class:`QueryOracle`.
"""

import threading

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import BudgetExhausted, ContractError, NumericError
from .numerics.layers import MLP
from .numerics.optim import Adam
from .numerics.prng import Prng
from .numerics.tensor import log_softmax
from .validation import check_images, check_labels

DEFAULT_BUDGET = 10_000
EPS_8_255 = 8 / 255


def cross_entropy(logprobs, y):
    """Mean negative log-probability of the true classes."""
    logprobs = np.atleast_2d(logprobs)
    y = np.atleast_1d(y)
    return float(-np.mean(logprobs[np.arange(len(y)), y]))


class MLPClassifier(ClassifierMixin, BaseEstimator):
    """Dense classifier over flattened images with a log-softmax head.

    With ``adversarial=True`` every minibatch is replaced by PGD perturbations
    (cross-entropy ascent from a random start in the ``adv_eps`` ball) of
    itself before the update.
    """

    def __init__(self, hidden=(64, 64), lr=1e-3, epochs=30, batch_size=64, seed=0,
                 adversarial=False, adv_eps=EPS_8_255, adv_steps=7, adv_step_size=2 / 255):
        self.hidden = hidden
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed
        self.adversarial = adversarial
        self.adv_eps = adv_eps
        self.adv_steps = adv_steps
        self.adv_step_size = adv_step_size

    def _init_net(self, n_in, n_classes):
        self.net_ = MLP.init(n_in, n_classes, tuple(self.hidden), Prng(self.seed))
        return self

    def fit(self, X, y):
        X = check_images(X)
        y = check_labels(y, len(X))
        self.classes_ = np.unique(y)
        self.n_classes_ = int(y.max()) + 1
        self.input_shape_ = X.shape[1:]
        self._init_net(int(np.prod(self.input_shape_)), self.n_classes_)
        prng = Prng(self.seed + 1)
        opt = Adam(self.net_.parameters(), lr=self.lr)
        self.loss_trace_, self.accuracy_trace_ = [], []
        n = len(X)
        for _ in range(self.epochs):
            order = prng.permutation(n)
            losses, correct = [], 0
            for start in range(0, n, self.batch_size):
                idx = order[start:start + self.batch_size]
                xb, yb = X[idx], y[idx]
                if self.adversarial:
                    xb = pgd_attack(self, xb, yb, self.adv_eps, self.adv_steps, self.adv_step_size,
                                    loss="ce", random_start=True, prng=prng)
                logits, caches = self.net_.forward(xb.reshape(len(xb), -1))
                lp = log_softmax(logits)
                losses.append(cross_entropy(lp, yb) * len(idx))
                correct += int(np.sum(np.argmax(lp, axis=1) == yb))
                g = np.exp(lp)
                g[np.arange(len(yb)), yb] -= 1
                _, grads = self.net_.backward(caches, (g / len(yb)).astype(np.float32))
                opt.step(grads)
            loss = sum(losses) / n
            if not np.isfinite(loss):
                raise NumericError("classifier training diverged")
            self.loss_trace_.append(loss)
            self.accuracy_trace_.append(correct / n)
        return self

    def _flat(self, X):
        check_is_fitted(self, "net_")
        X = np.asarray(X, dtype=np.float32)
        if X.shape == tuple(self.input_shape_):
            X = X[None]
        if X.shape[1:] != tuple(self.input_shape_):
            raise ContractError(f"expected images of shape {tuple(self.input_shape_)}, got {X.shape}")
        return X.reshape(len(X), -1)

    def predict_log_proba(self, X):
        return log_softmax(self.net_(self._flat(X)))

    def predict_proba(self, X):
        return np.exp(self.predict_log_proba(X))

    def predict(self, X):
        return np.argmax(self.predict_log_proba(X), axis=1)

    def input_gradient(self, X, grad_logits):
        """Vector-Jacobian product of the logits with respect to the input images."""
        X = np.asarray(X, dtype=np.float32)
        _, caches = self.net_.forward(self._flat(X))
        g, _ = self.net_.backward(caches, np.asarray(grad_logits, dtype=np.float32))
        return g.reshape(X.shape)


def clf_logprobs(model, x):
    x = np.asarray(x)
    if np.any(~((x >= 0) & (x <= 1))):
        raise ContractError("pixels must lie in [0, 1]")
    out = model.predict_log_proba(x)
    return out[0] if x.shape == tuple(model.input_shape_) else out


def train_classifier(dataset, **params):
    return MLPClassifier(**params).fit(dataset.images, dataset.labels)


def pgd_adv_train(dataset, eps=EPS_8_255, steps=7, step_size=2 / 255, **params):
    return MLPClassifier(adversarial=True, adv_eps=eps, adv_steps=steps, adv_step_size=step_size,
                         **params).fit(dataset.images, dataset.labels)


def _loss_grad_logits(logits, y, loss):
    lp = log_softmax(logits)
    g = np.zeros_like(logits)
    rows = np.arange(len(y))
    if loss == "ce":
        # ascent direction on cross-entropy, expressed as a loss to minimize
        g = -(np.exp(lp))
        g[rows, y] += 1
        return g
    other = lp.copy()
    other[rows, y] = -np.inf
    c = np.argmax(other, axis=1)
    active = lp[rows, y] - other[rows, c] > 0
    g[rows[active], y[active]] = 1
    g[rows[active], c[active]] -= 1
    return g


def pgd_attack(model, x, y, eps=EPS_8_255, steps=100, step_size=None, loss="cw",
               random_start=False, prng=None):
    """White-box l-inf PGD minimizing the C&W margin (or maximizing cross-entropy with ``loss='ce'``).

    ``step_size`` defaults to ``2.5 * eps / steps``.  Output always satisfies
    the ball and [0, 1] constraints exactly.
    """
    x = np.asarray(x, dtype=np.float32)
    single = x.shape == tuple(model.input_shape_)
    xb = x[None] if single else x
    yb = np.atleast_1d(np.asarray(y, dtype=np.int64))
    if step_size is None:
        step_size = 2.5 * eps / max(steps, 1)
    lo = np.clip(xb - np.float32(eps), 0, 1)
    hi = np.clip(xb + np.float32(eps), 0, 1)
    adv = xb.copy()
    if random_start and eps > 0:
        prng = prng or Prng(0)
        adv = np.clip(adv + prng.uniform(-eps, eps, adv.shape), lo, hi)
    for _ in range(steps if eps > 0 else 0):
        logits = model.net_(adv.reshape(len(adv), -1))
        g = model.input_gradient(adv, _loss_grad_logits(logits, yb, loss))
        adv = np.clip(adv - np.float32(step_size) * np.sign(g), lo, hi).astype(np.float32)
    return adv[0] if single else adv


class QueryOracle:
    """Budgeted, counting black-box view of a classifier.

    Returns log-probabilities only.  Every image evaluated through the oracle
    increments ``queries`` by one; a query that would exceed ``budget`` raises
    :class:`BudgetExhausted` without being evaluated.  ``on_query`` (if given)
    is called with every image before evaluation, in query order.
    """

    def __init__(self, model, budget=DEFAULT_BUDGET, on_query=None):
        self._model = model
        self.budget = int(budget)
        self.queries = 0
        self.on_query = on_query
        self._lock = threading.Lock()

    @property
    def remaining(self):
        return self.budget - self.queries

    @property
    def exhausted(self):
        return self.queries >= self.budget

    @property
    def n_classes(self):
        return self._model.n_classes_

    def query_batch(self, xs):
        xs = np.asarray(xs, dtype=np.float32)
        with self._lock:
            if len(xs) > self.remaining:
                raise BudgetExhausted(f"budget of {self.budget} queries exhausted")
            if self.on_query is not None:
                for x in xs:
                    self.on_query(x)
            self.queries += len(xs)
        return clf_logprobs(self._model, xs)

    def query(self, x):
        return self.query_batch(np.asarray(x)[None])[0]


def oracle_query(oracle, x):
    return oracle.query(x)
