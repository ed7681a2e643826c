"""Model parameter sets and the slots that may be randomized."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace

from .errors import DomainError


@dataclass(frozen=True)
class BlackScholesParams:
    sigma: float
    r: float = 0.0
    s0: float = 100.0

    slots = ("sigma", "r")

    def __post_init__(self):
        if not self.sigma >= 0:
            raise DomainError(f"sigma must be nonnegative, got {self.sigma}")
        if not self.s0 > 0:
            raise DomainError(f"s0 must be positive, got {self.s0}")

    @property
    def x0(self):
        return math.log(self.s0)

    def with_param(self, slot, value):
        _check_slot(self, slot)
        return replace(self, **{slot: float(value)})

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class BatesParams:
    """Bates (Heston plus lognormal jumps) parameters; ``lam = 0`` gives Heston."""

    kappa: float
    vbar: float
    gamma: float
    rho: float
    v0: float
    r: float = 0.0
    lam: float = 0.0
    mu_j: float = 0.0
    sigma_j: float = 0.0
    s0: float = 100.0

    slots = ("kappa", "vbar", "gamma", "rho", "v0", "r", "lam", "mu_j", "sigma_j")

    def __post_init__(self):
        for name in ("kappa", "vbar", "gamma", "v0", "lam", "sigma_j"):
            value = getattr(self, name)
            if not value >= 0:
                raise DomainError(f"{name} must be nonnegative, got {value}")
        if not -1.0 <= self.rho <= 1.0:
            raise DomainError(f"rho must lie in [-1, 1], got {self.rho}")
        if not self.s0 > 0:
            raise DomainError(f"s0 must be positive, got {self.s0}")

    @property
    def x0(self):
        return math.log(self.s0)

    @property
    def jump_compensator(self):
        """``E[e^J] - 1`` for the lognormal jump size ``J``."""
        return math.expm1(self.mu_j + 0.5 * self.sigma_j ** 2)

    def with_param(self, slot, value):
        _check_slot(self, slot)
        return replace(self, **{slot: float(value)})

    def to_dict(self):
        return asdict(self)


def _check_slot(params, slot):
    if slot not in params.slots:
        raise DomainError(f"{slot!r} is not a randomizable slot of {type(params).__name__}; choose from {params.slots}")


def params_from_dict(data: dict):
    """Build model parameters from a mapping; the presence of ``kappa`` selects Bates."""
    data = dict(data)
    data.pop("model", None)
    cls = BatesParams if "kappa" in data else BlackScholesParams
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ValueError(f"unknown parameter(s) {sorted(unknown)} for {cls.__name__}")
    return cls(**{k: float(v) for k, v in data.items()})
