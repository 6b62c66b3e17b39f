"""Black-box search over a flow's base distribution."""

import numpy as np
from sklearn.base import BaseEstimator

from ..exceptions import BudgetExhausted, NumericError
from ..numerics.prng import Prng
from .config import AttackConfig, AttackResult
from .losses import cw_loss, lp_norm, project


def _query_until_success(oracle, candidates, y):
    """Query candidates in index order; stop at the first one the oracle misclassifies.

    Returns ``(losses, hit)`` where ``losses`` covers the queried prefix and
    ``hit`` is the index of the successful candidate or ``None``.  Raises
    :class:`BudgetExhausted` only when no query at all is possible.
    """
    losses = []
    for i, x in enumerate(candidates):
        lp = oracle.query(x)
        loss = cw_loss(lp, y)
        losses.append(loss)
        if loss == 0.0 and int(np.argmax(lp)) != y:
            return np.asarray(losses), i
    return np.asarray(losses), None


def _result(x, x_adv, success, oracle, loss, iterations, norm, failure=None, trace=None):
    dist = float(lp_norm((x_adv - x)[None], norm)[0]) if x_adv is not None else float("nan")
    return AttackResult(success, oracle.queries, x_adv, float(loss), dist, iterations, failure,
                        trace or [])


def latent_attack(x, y, flow, oracle, cfg=None, prng=None):
    """Search ``z_clean + mu + sigma * eps`` for an adversarial image.

    Each iteration draws ``n_samples`` base points, maps them through the flow,
    projects the images into the threat ball, queries them in order, and moves
    ``mu`` to the mean offset of the ``k`` lowest-loss candidates, re-encoded
    from their projected images.  ``flow`` is a :class:`FlowModel` (or a fitted
    :class:`NormalizingFlow`).
    """
    cfg = cfg or AttackConfig()
    model = getattr(flow, "model_", flow)
    prng = prng or Prng(cfg.seed)
    x = np.asarray(x, dtype=np.float32)
    y = int(y)
    z_clean = model.inverse(x)[0]
    mu = prng.standard_normal(z_clean.shape) * np.float32(cfg.sigma_init)
    best_loss, best_x = np.inf, None
    trace = []
    for it in range(cfg.max_iters):
        if oracle.exhausted:
            return _result(x, best_x, False, oracle, best_loss, it, cfg.norm, "budget", trace)
        noise = prng.standard_normal((cfg.n_samples, z_clean.size))
        z = z_clean + mu + np.float32(cfg.sigma) * noise
        try:
            cand = project(model.forward(z)[0], x, cfg.eps, cfg.norm)
        except NumericError:
            return _result(x, best_x, False, oracle, best_loss, it, cfg.norm, "numeric", trace)
        cand = cand[:oracle.remaining]
        try:
            losses, hit = _query_until_success(oracle, cand, y)
        except BudgetExhausted:
            return _result(x, best_x, False, oracle, best_loss, it, cfg.norm, "budget", trace)
        i_best = int(np.argmin(losses))
        if losses[i_best] < best_loss:
            best_loss, best_x = float(losses[i_best]), cand[i_best]
        trace.append(best_loss)
        if hit is not None:
            return _result(x, cand[hit], True, oracle, 0.0, it + 1, cfg.norm, None, trace)
        if len(losses) < cfg.n_samples:
            return _result(x, best_x, False, oracle, best_loss, it + 1, cfg.norm, "budget", trace)
        elites = np.argsort(losses, kind="stable")[:cfg.k]
        try:
            z_elite = model.inverse(cand[elites])[0]
        except NumericError:
            return _result(x, best_x, False, oracle, best_loss, it + 1, cfg.norm, "numeric", trace)
        mu = (z_elite - z_clean).mean(axis=0).astype(np.float32)
    return _result(x, best_x, False, oracle, best_loss, cfg.max_iters, cfg.norm, "max_iters", trace)


class LatentAttack(BaseEstimator):
    """Estimator-style wrapper: ``LatentAttack(flow, ...).attack(x, y, oracle)``."""

    def __init__(self, flow=None, sigma=0.1, n_samples=20, k=4, max_iters=500, eps=8 / 255,
                 norm="inf", budget=10_000, sigma_init=0.01, seed=0):
        self.flow = flow
        self.sigma = sigma
        self.n_samples = n_samples
        self.k = k
        self.max_iters = max_iters
        self.eps = eps
        self.norm = norm
        self.budget = budget
        self.sigma_init = sigma_init
        self.seed = seed

    @property
    def config(self):
        params = self.get_params()
        params.pop("flow")
        return AttackConfig(**params)

    def attack(self, x, y, oracle, prng=None):
        return latent_attack(x, y, self.flow, oracle, self.config, prng)
