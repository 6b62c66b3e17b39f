from .config import AttackConfig, AttackResult, NESConfig
from .evaluate import ATTACKS, ConstraintMonitor, aggregate, evaluate, round_half_up
from .latent import LatentAttack, latent_attack
from .losses import cw_loss, lp_norm, project
from .nes import NESAttack, nes_attack, nes_gradient

__all__ = [
    "ATTACKS", "AttackConfig", "AttackResult", "ConstraintMonitor", "LatentAttack", "NESAttack",
    "NESConfig", "aggregate", "cw_loss", "evaluate", "latent_attack", "lp_norm", "nes_attack",
    "nes_gradient", "project", "round_half_up",
]
