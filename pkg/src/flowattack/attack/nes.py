"""Query-limited NES baseline with antithetic sampling."""

import numpy as np
from sklearn.base import BaseEstimator

from ..exceptions import BudgetExhausted
from ..numerics.prng import Prng
from .config import AttackResult, NESConfig
from .latent import _query_until_success, _result
from .losses import cw_loss, project


def nes_gradient(loss_fn, x, sigma, n_pairs, prng):
    """Antithetic NES estimate ``1/(2 m sigma) * sum_i [L(x + sigma u_i) - L(x - sigma u_i)] u_i``.

    ``loss_fn`` maps a batch ``(2m, ...)`` to ``2m`` losses (positive probes
    first, then their mirrors).
    """
    x = np.asarray(x)
    u = prng.standard_normal((n_pairs,) + x.shape, dtype=np.float64)
    probes = np.concatenate([x + sigma * u, x - sigma * u])
    losses = np.asarray(loss_fn(probes), dtype=np.float64)
    diff = losses[:n_pairs] - losses[n_pairs:]
    g = np.tensordot(diff, u, axes=1) / (2 * n_pairs * sigma)
    return g, losses


def nes_attack(x, y, oracle, cfg=None, prng=None):
    """Signed-gradient descent on the C&W loss with NES gradient estimates.

    Every iteration queries the current iterate (success check), then
    ``n_samples`` projected antithetic probes around it.  Probe points are
    projected into the threat ball before they reach the oracle.
    """
    cfg = cfg or NESConfig()
    prng = prng or Prng(cfg.seed)
    x = np.asarray(x, dtype=np.float32)
    y = int(y)
    pairs = cfg.n_samples // 2
    x_adv = x.copy()
    best_loss, best_x = np.inf, x_adv
    trace = []

    def probe_losses(batch):
        batch = project(batch.astype(np.float32), x, cfg.eps, cfg.norm)
        losses, hit = _query_until_success(oracle, batch[:oracle.remaining], y)
        if hit is not None:
            raise _Found(batch[hit])
        if len(losses) < len(batch):
            raise BudgetExhausted("budget exhausted mid-iteration")
        return losses

    for it in range(cfg.max_iters):
        try:
            lp = oracle.query(x_adv)
        except BudgetExhausted:
            return _result(x, best_x, False, oracle, best_loss, it, cfg.norm, "budget", trace)
        loss = cw_loss(lp, y)
        if loss < best_loss:
            best_loss, best_x = loss, x_adv
        trace.append(best_loss)
        if loss == 0.0 and int(np.argmax(lp)) != y:
            return _result(x, x_adv, True, oracle, 0.0, it, cfg.norm, None, trace)
        try:
            g, _ = nes_gradient(probe_losses, x_adv, cfg.sigma, pairs, prng)
        except _Found as found:
            return _result(x, found.x, True, oracle, 0.0, it + 1, cfg.norm, None, trace)
        except BudgetExhausted:
            return _result(x, best_x, False, oracle, best_loss, it + 1, cfg.norm, "budget", trace)
        x_adv = project(x_adv - np.float32(cfg.lr) * np.sign(g).astype(np.float32), x, cfg.eps,
                        cfg.norm)
    return _result(x, best_x, False, oracle, best_loss, cfg.max_iters, cfg.norm, "max_iters", trace)


class _Found(Exception):
    def __init__(self, x):
        super().__init__()
        self.x = x


class NESAttack(BaseEstimator):
    def __init__(self, sigma=0.1, n_samples=50, lr=0.01, max_iters=10_000, eps=8 / 255,
                 norm="inf", budget=10_000, seed=0):
        self.sigma = sigma
        self.n_samples = n_samples
        self.lr = lr
        self.max_iters = max_iters
        self.eps = eps
        self.norm = norm
        self.budget = budget
        self.seed = seed

    @property
    def config(self):
        return NESConfig(**self.get_params())

    def attack(self, x, y, oracle, prng=None):
        return nes_attack(x, y, oracle, self.config, prng)
