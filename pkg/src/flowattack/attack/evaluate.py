"""Success-rate / query-count evaluation over a test set."""

import os
from concurrent.futures import ThreadPoolExecutor
from decimal import ROUND_HALF_UP, Decimal

import numpy as np

from ..classifier import QueryOracle, pgd_attack
from ..exceptions import ContractError
from ..numerics.prng import Prng, derive_seed
from .config import AttackConfig, AttackResult, NESConfig
from .latent import latent_attack
from .losses import cw_loss, lp_norm
from .nes import nes_attack

ATTACKS = ("flow", "nes", "pgd")


class ConstraintMonitor:
    """Counts oracle queries that leave ``{||x' - x||_p <= eps} ∩ [0, 1]^d``.

    The ball check allows 4 float32 ulps of slack at each pixel's magnitude.
    """

    def __init__(self, x_orig, eps, norm="inf"):
        self.x = np.asarray(x_orig, dtype=np.float64)
        self.eps = eps
        self.norm = norm
        self.checked = 0
        self.violations = 0

    def __call__(self, img):
        img = np.asarray(img, dtype=np.float64)
        self.checked += 1
        slack = 4 * np.spacing(np.maximum(np.abs(img), np.abs(self.x)).astype(np.float32))
        if self.norm == "inf":
            inside = np.all(np.abs(img - self.x) <= self.eps + slack)
        else:
            inside = np.linalg.norm(img - self.x) <= self.eps + float(slack.max())
        if not inside or img.min() < 0 or img.max() > 1:
            self.violations += 1


def round_half_up(value, digits=2):
    return float(Decimal(repr(float(value))).quantize(Decimal(1).scaleb(-digits), ROUND_HALF_UP))


def aggregate(records):
    """Success rate (%) and average / median queries over successful attacks."""
    if not records:
        raise ContractError("no records to aggregate")
    wins = [r["queries"] for r in records if r["success"]]
    return {
        "n_examples": len(records),
        "n_success": len(wins),
        "success_rate_percent": round_half_up(100.0 * len(wins) / len(records)),
        "avg_queries": float(np.mean(wins)) if wins else None,
        "median_queries": float(np.median(wins)) if wins else None,
    }


def _record(index, label, result):
    return {
        "index": int(index),
        "label": int(label),
        "success": bool(result.success),
        "queries": int(result.queries),
        "loss": float(result.loss),
        "norm": float(result.norm),
        "iterations": int(result.iterations),
        "failure": result.failure,
    }


def _threads():
    try:
        return max(0, int(os.environ.get("NF_THREADS", "0")))
    except ValueError:
        return 0


def evaluate(images, labels, attack, classifier, flow=None, cfg=None, seed=0, limit=None,
             threads=None, keep_images=False):
    """Attack every correctly classified image with a fresh oracle.

    ``attack`` is ``'flow'``, ``'nes'`` or ``'pgd'`` (white-box reference, zero
    queries).  Misclassified images never enter the statistics.  Returns a dict
    with ``records``, ``aggregates``, ``constraint`` (query-level constraint
    audit) and optionally ``adversarial`` images.
    """
    if attack not in ATTACKS:
        raise ContractError(f"unknown attack {attack!r}")
    if attack == "flow" and flow is None:
        raise ContractError("the flow attack needs a trained flow")
    if cfg is None:
        cfg = AttackConfig() if attack != "nes" else NESConfig()
    images = np.asarray(images, dtype=np.float32)
    labels = np.asarray(labels, dtype=np.int64)
    eligible = np.flatnonzero(classifier.predict(images) == labels)
    if limit is not None:
        eligible = eligible[:limit]
    if len(eligible) == 0:
        raise ContractError("no correctly classified examples to attack")

    def run(i):
        x, y = images[i], int(labels[i])
        monitor = ConstraintMonitor(x, cfg.eps, cfg.norm)
        if attack == "pgd":
            adv = pgd_attack(classifier, x, y, cfg.eps)
            lp = classifier.predict_log_proba(adv)[0]
            monitor(adv)
            ok = int(np.argmax(lp)) != y
            res = AttackResult(ok, 0, adv, cw_loss(lp, y), float(lp_norm((adv - x)[None], cfg.norm)[0]),
                               100)
        else:
            oracle = QueryOracle(classifier, cfg.budget, on_query=monitor)
            prng = Prng(derive_seed(seed, i))
            if attack == "flow":
                res = latent_attack(x, y, flow, oracle, cfg, prng)
            else:
                res = nes_attack(x, y, oracle, cfg, prng)
            if res.queries != oracle.queries:
                raise AssertionError("query accounting mismatch")
        return res, monitor

    n_threads = _threads() if threads is None else threads
    if n_threads > 0:
        with ThreadPoolExecutor(n_threads) as pool:
            outcomes = list(pool.map(run, eligible))
    else:
        outcomes = [run(i) for i in eligible]

    records = [_record(i, labels[i], res) for i, (res, _) in zip(eligible, outcomes)]
    out = {
        "attack": attack,
        "config": cfg.to_dict(),
        "records": records,
        "aggregates": aggregate(records),
        "constraint": {
            "queries_checked": sum(m.checked for _, m in outcomes),
            "violations": sum(m.violations for _, m in outcomes),
        },
    }
    if keep_images:
        out["clean"] = images[eligible]
        out["adversarial"] = np.stack([res.x_adv if res.x_adv is not None else images[i]
                                       for i, (res, _) in zip(eligible, outcomes)])
    return out
