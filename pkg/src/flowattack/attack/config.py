from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from ..classifier import DEFAULT_BUDGET, EPS_8_255
from ..exceptions import ContractError


@dataclass
class AttackConfig:
    """Latent-search hyperparameters.  Defaults follow the published attack settings."""

    sigma: float = 0.1
    n_samples: int = 20
    k: int = 4
    max_iters: int = 500
    eps: float = EPS_8_255
    norm: str = "inf"
    budget: int = DEFAULT_BUDGET
    sigma_init: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.k <= self.n_samples:
            raise ContractError("need 1 <= k <= n_samples")
        if self.sigma <= 0 or self.eps <= 0:
            raise ContractError("sigma and eps must be positive")
        if self.norm not in ("inf", "2"):
            raise ContractError("norm must be 'inf' or '2'")
        if self.max_iters < 1 or self.budget < 1:
            raise ContractError("max_iters and budget must be positive")

    @property
    def max_queries(self):
        """Queries the search can issue before ``max_iters`` ends it."""
        return self.n_samples * self.max_iters

    def to_dict(self):
        return asdict(self)


@dataclass
class NESConfig:
    """Query-limited NES hyperparameters (``vanilla`` / ``defended`` profiles)."""

    sigma: float = 0.1
    n_samples: int = 50
    lr: float = 0.01
    max_iters: int = 10_000
    eps: float = EPS_8_255
    norm: str = "inf"
    budget: int = DEFAULT_BUDGET
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 2 or self.n_samples % 2:
            raise ContractError("NES sample size must be even (antithetic pairs)")
        if self.sigma <= 0 or self.eps <= 0 or self.lr <= 0:
            raise ContractError("sigma, eps and lr must be positive")
        if self.norm not in ("inf", "2"):
            raise ContractError("norm must be 'inf' or '2'")

    @classmethod
    def profile(cls, name, **overrides):
        base = {"vanilla": dict(sigma=0.1, n_samples=50),
                "defended": dict(sigma=0.001, n_samples=100)}
        if name not in base:
            raise ContractError(f"unknown NES profile {name!r}")
        return cls(**{**base[name], **overrides})

    def to_dict(self):
        return asdict(self)


@dataclass
class AttackResult:
    success: bool
    queries: int
    x_adv: Optional[np.ndarray]
    loss: float
    norm: float
    iterations: int
    failure: Optional[str] = None
    loss_trace: list = field(default_factory=list, repr=False)
