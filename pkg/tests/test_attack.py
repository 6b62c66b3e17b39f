import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import linear_classifier
from flowattack.attack import (AttackConfig, LatentAttack, NESAttack, NESConfig, aggregate,
                               cw_loss, evaluate, latent_attack, lp_norm, nes_attack, nes_gradient,
                               project)
from flowattack.attack.evaluate import ConstraintMonitor, round_half_up
from flowattack.classifier import QueryOracle
from flowattack.exceptions import ContractError
from flowattack.flow import FlowModel, LogitPreprocess
from flowattack.numerics.prng import Prng

EPS = 8 / 255


# ---------------------------------------------------------------- loss and projection

def test_cw_loss_values():
    lp = np.log([0.7, 0.2, 0.1])
    assert cw_loss(lp, 0) == pytest.approx(1.25276297, abs=1e-7)
    assert cw_loss(lp, 1) == 0.0
    for y in range(3):
        assert cw_loss(np.log(np.full(3, 1 / 3)), y) == 0.0


def test_cw_loss_batch_and_range():
    lp = np.log([[0.7, 0.2, 0.1], [0.1, 0.2, 0.7]])
    np.testing.assert_allclose(cw_loss(lp, 0), [np.log(3.5), 0.0])
    with pytest.raises(ContractError):
        cw_loss(np.log([0.5, 0.5]), 2)


def test_project_linf_clamp():
    out = project(np.array([0.6], np.float32), np.array([0.5], np.float32), EPS)
    assert out[0] == pytest.approx(0.531373, abs=1e-6)


def test_project_keeps_feasible_candidates_bitwise():
    x = np.array([0.5, 0.2, 0.9], np.float32)
    cand = np.array([0.51, 0.19, 0.92], np.float32)
    np.testing.assert_array_equal(project(cand, x, EPS), cand)
    np.testing.assert_array_equal(project(cand, x, 0.1, "2"), cand)


def test_project_l2_rescales_345():
    x = np.array([0.1, 0.1], np.float32)
    out = project(x + np.array([0.3, 0.4], np.float32), x, 0.1, "2")
    np.testing.assert_allclose(out - x, [0.06, 0.08], atol=1e-6)


def test_project_unknown_norm():
    with pytest.raises(ContractError):
        project(np.zeros(2), np.zeros(2), 0.1, "1")


@settings(max_examples=100, deadline=None)
@given(arrays(np.float32, 6, elements=st.floats(0, 1, width=32)),
       arrays(np.float32, 6, elements=st.floats(-3, 3, width=32)),
       st.sampled_from(["inf", "2"]), st.floats(0.001, 0.5))
def test_project_is_feasible_and_idempotent(x, cand, norm, eps):
    out = project(cand, x, eps, norm)
    assert out.min() >= 0 and out.max() <= 1
    slack = 4 * np.spacing(np.float32(1.0))
    assert lp_norm((out - x)[None], norm)[0] <= eps + slack
    np.testing.assert_array_equal(project(out, x, eps, norm), out)


# ---------------------------------------------------------------- configs

def test_attack_config_defaults():
    cfg = AttackConfig()
    assert (cfg.sigma, cfg.n_samples, cfg.k, cfg.max_iters) == (0.1, 20, 4, 500)
    assert cfg.max_queries == 10_000 == cfg.budget
    with pytest.raises(ContractError):
        AttackConfig(k=30)


def test_nes_profiles():
    v = NESConfig.profile("vanilla")
    d = NESConfig.profile("defended")
    assert (v.sigma, v.n_samples, v.lr) == (0.1, 50, 0.01)
    assert (d.sigma, d.n_samples, d.lr) == (0.001, 100, 0.01)
    with pytest.raises(ContractError):
        NESConfig(n_samples=51)
    with pytest.raises(ContractError):
        NESConfig.profile("paranoid")


# ---------------------------------------------------------------- NES

def test_nes_gradient_on_quadratic():
    g, losses = nes_gradient(lambda b: b[:, 0] ** 2, np.array([1.0]), 0.001, 500, Prng(0))
    assert g[0] == pytest.approx(2.0, abs=0.1)
    assert losses.shape == (1000,)


def test_nes_early_exit_on_adversarial_start():
    # boundary at x = 0.35, and the start point is already misclassified
    clf = linear_classifier(np.array([[0.0], [10.0]]), np.array([0.0, -3.5]), (1,))
    oracle = QueryOracle(clf)
    res = nes_attack(np.array([0.5], np.float32), 0, oracle, NESConfig(), Prng(0))
    assert res.success and res.queries <= 1 and oracle.queries == res.queries


def test_nes_crosses_nearby_boundary():
    clf = linear_classifier(np.array([[0.0, 0.0], [10.0, 10.0]]), np.array([0.0, -6.0]), (2,))
    x = np.array([0.29, 0.29], np.float32)
    oracle = QueryOracle(clf)
    res = NESAttack(eps=0.05).attack(x, 0, oracle, Prng(1))
    assert res.success
    assert clf.predict(res.x_adv[None])[0] != 0
    assert np.max(np.abs(res.x_adv - x)) <= 0.05 + 1e-7
    assert res.queries == oracle.queries


def test_nes_budget_exhaustion():
    clf = linear_classifier(np.array([[10.0, 0.0], [0.0, 0.0]]), np.zeros(2), (2,))
    oracle = QueryOracle(clf, budget=120)
    res = nes_attack(np.array([0.5, 0.5], np.float32), 0, oracle, NESConfig(budget=120), Prng(0))
    assert not res.success and res.failure == "budget" and res.queries == 120


# ---------------------------------------------------------------- latent attack

def identity_flow(d=2):
    return FlowModel([], (d,))


def test_latent_attack_succeeds_near_boundary():
    clf = linear_classifier(np.array([[0.0, 0.0], [10.0, 10.0]]), np.array([0.0, -6.0]), (2,))
    x = np.array([0.29, 0.29], np.float32)
    seen = []
    oracle = QueryOracle(clf, on_query=seen.append)
    res = latent_attack(x, 0, identity_flow(), oracle, AttackConfig(eps=0.05), Prng(3))
    assert res.success and res.failure is None
    assert res.queries == oracle.queries == len(seen)
    assert clf.predict(res.x_adv[None])[0] == 1
    for q in seen:
        assert np.max(np.abs(q - x)) <= 0.05 + 1e-7


def test_latent_attack_infeasible_runs_to_quota():
    # the ball never reaches the boundary: all 500 iterations of 20 queries are spent
    clf = linear_classifier(np.array([[0.0, 0.0], [10.0, 10.0]]), np.array([0.0, -9.0]), (2,))
    oracle = QueryOracle(clf)
    res = latent_attack(np.array([0.2, 0.2], np.float32), 0, identity_flow(), oracle,
                        AttackConfig(eps=0.05), Prng(0))
    assert not res.success
    assert res.queries == oracle.queries == 10_000
    assert res.iterations == 500
    assert res.loss > 0


def test_latent_attack_budget_failure():
    clf = linear_classifier(np.array([[0.0, 0.0], [10.0, 10.0]]), np.array([0.0, -9.0]), (2,))
    oracle = QueryOracle(clf, budget=50)
    res = latent_attack(np.array([0.2, 0.2], np.float32), 0, identity_flow(), oracle,
                        AttackConfig(eps=0.05, budget=50), Prng(0))
    assert not res.success and res.failure == "budget" and res.queries == 50


def test_latent_attack_through_logit_flow_is_deterministic():
    clf = linear_classifier(np.array([[0.0] * 4, [5.0] * 4]), np.array([0.0, -8.6]), (4,))
    flow = FlowModel([LogitPreprocess()], (4,))
    x = np.array([0.4, 0.4, 0.4, 0.4], np.float32)
    runs = [latent_attack(x, 0, flow, QueryOracle(clf), AttackConfig(), Prng(9)) for _ in range(2)]
    assert runs[0].success
    assert runs[0].queries == runs[1].queries
    np.testing.assert_array_equal(runs[0].x_adv, runs[1].x_adv)


def test_latent_attack_estimator_wrapper():
    att = LatentAttack(identity_flow(), eps=0.05, seed=2)
    assert att.get_params()["n_samples"] == 20
    assert att.config.eps == 0.05
    clf = linear_classifier(np.array([[0.0, 0.0], [10.0, 10.0]]), np.array([0.0, -6.0]), (2,))
    assert att.attack(np.array([0.29, 0.29], np.float32), 0, QueryOracle(clf)).success


# ---------------------------------------------------------------- evaluation

def test_monitor_counts_violations():
    m = ConstraintMonitor(np.array([0.5, 0.5]), EPS)
    m(np.array([0.5 + EPS, 0.5]))
    m(np.array([0.6, 0.5]))
    m(np.array([0.5, 1.01]))
    assert (m.checked, m.violations) == (3, 2)


@pytest.mark.parametrize("value, expected", [(66.665, 66.67), (200 / 3, 66.67), (12.345, 12.35), (50, 50.0)])
def test_round_half_up(value, expected):
    assert round_half_up(value) == expected


def test_aggregate_statistics():
    recs = [{"success": True, "queries": q} for q in (100, 300, 200)]
    agg = aggregate(recs)
    assert agg["avg_queries"] == 200 and agg["median_queries"] == 200
    assert agg["success_rate_percent"] == 100.0
    recs[1]["success"] = False
    agg = aggregate(recs)
    assert agg["success_rate_percent"] == 66.67
    assert agg["median_queries"] == 150 and agg["avg_queries"] == 150
    none = aggregate([{"success": False, "queries": 10}])
    assert none["median_queries"] is None and none["success_rate_percent"] == 0.0


def test_evaluate_rejects_zero_accuracy():
    clf = linear_classifier(np.array([[0.0, 0.0], [1.0, 1.0]]), np.array([0.0, 5.0]), (2,))
    with pytest.raises(ContractError):
        evaluate(np.full((4, 2), 0.5), np.zeros(4, int), "flow", clf, identity_flow())


def test_aggregate_one_query_successes():
    agg = aggregate([{"success": True, "queries": 1} for _ in range(10)])
    assert agg["success_rate_percent"] == 100.0
    assert agg["avg_queries"] == 1 and agg["median_queries"] == 1


def test_evaluate_skips_misclassified_and_is_reproducible():
    clf = linear_classifier(np.array([[0.0, 0.0], [10.0, 10.0]]), np.array([0.0, -6.0]), (2,))
    images = np.array([[0.29, 0.29], [0.9, 0.9], [0.25, 0.27], [0.28, 0.26]], np.float32)
    labels = np.zeros(4, int)
    cfg = AttackConfig(eps=0.05)
    a = evaluate(images, labels, "flow", clf, identity_flow(), cfg, seed=5)
    b = evaluate(images, labels, "flow", clf, identity_flow(), cfg, seed=5, threads=3)
    assert [r["index"] for r in a["records"]] == [0, 2, 3]
    assert a["records"] == b["records"]
    assert a["constraint"]["violations"] == 0
    assert a["constraint"]["queries_checked"] == sum(r["queries"] for r in a["records"])
    nes = evaluate(images, labels, "nes", clf, cfg=NESConfig(eps=0.05), seed=5)
    assert nes["constraint"]["violations"] == 0
    pgd = evaluate(images, labels, "pgd", clf, cfg=cfg)
    assert all(r["queries"] == 0 for r in pgd["records"])
