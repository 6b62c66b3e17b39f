"""Normalizing-flow black-box adversarial attacks, built on a from-scratch numpy flow."""

from .attack import AttackConfig, LatentAttack, NESAttack, NESConfig, evaluate, latent_attack, nes_attack
from .classifier import MLPClassifier, QueryOracle, pgd_attack
from .data import Dataset, gen_shapes
from .flow import FlowModel, NormalizingFlow, build_flow

__version__ = "0.1.0"

__all__ = [
    "AttackConfig", "Dataset", "FlowModel", "LatentAttack", "MLPClassifier", "NESAttack",
    "NESConfig", "NormalizingFlow", "QueryOracle", "build_flow", "evaluate", "gen_shapes",
    "latent_attack", "nes_attack", "pgd_attack",
]
