"""Randomizer distributions for stochastic model parameters.

Each family exposes closed-form raw moments (both as floats and as exact
rationals), its support, and i.i.d. sampling from an explicit generator.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from fractions import Fraction
from typing import ClassVar, NamedTuple

import numpy as np
from scipy.special import gammaln

from .errors import InvariantViolation, MomentOverflowError

# above this order factorial-type terms are evaluated in log space
_LOG_SPACE_ORDER = 20


class Interval(NamedTuple):
    lo: float
    hi: float
    lo_closed: bool = True
    hi_closed: bool = True

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        above = x >= self.lo if self.lo_closed else x > self.lo
        below = x <= self.hi if self.hi_closed else x < self.hi
        return bool(np.all(above & below))


def _finite(value: float, n: int, family: str) -> float:
    if not math.isfinite(value):
        raise MomentOverflowError(n, family)
    return value


def _log_factorial(n: int) -> float:
    return float(gammaln(n + 1))


@dataclass(frozen=True)
class Randomizer:
    """Base class; concrete families are the subclasses below."""

    family: ClassVar[str] = ""

    @property
    def hyper_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in fields(self))

    def raw_moment(self, n: int) -> float:
        raise NotImplementedError

    def raw_moment_exact(self, n: int) -> Fraction:
        raise NotImplementedError

    def support(self) -> Interval:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        raise NotImplementedError

    def mean(self) -> float:
        return self.raw_moment(1)

    def variance(self) -> float:
        return self.raw_moment(2) - self.raw_moment(1) ** 2

    def with_hyper(self, name: str, value: float) -> "Randomizer":
        return replace(self, **{name: value})

    def to_dict(self) -> dict:
        return {"family": self.family, **asdict(self)}

    def _check_order(self, n: int) -> int:
        if int(n) != n or n < 0:
            raise ValueError(f"moment order must be a nonnegative integer, got {n}")
        return int(n)


@dataclass(frozen=True)
class Uniform(Randomizer):
    a_hat: float
    b_hat: float
    family: ClassVar[str] = "uniform"

    def __post_init__(self):
        if not self.a_hat < self.b_hat:
            raise InvariantViolation(f"Uniform needs a_hat < b_hat, got {self.a_hat}, {self.b_hat}")

    def raw_moment(self, n):
        n = self._check_order(n)
        a, b = self.a_hat, self.b_hat
        return _finite((b ** (n + 1) - a ** (n + 1)) / ((n + 1) * (b - a)), n, self.family)

    def raw_moment_exact(self, n):
        n = self._check_order(n)
        a, b = Fraction(self.a_hat), Fraction(self.b_hat)
        return (b ** (n + 1) - a ** (n + 1)) / ((n + 1) * (b - a))

    def support(self):
        return Interval(self.a_hat, self.b_hat)

    def sample(self, rng, count):
        return rng.uniform(self.a_hat, self.b_hat, count)


@dataclass(frozen=True)
class Exponential(Randomizer):
    """Exponential law with rate ``a_hat`` (mean ``1/a_hat``)."""

    a_hat: float
    family: ClassVar[str] = "exponential"

    def __post_init__(self):
        if not self.a_hat > 0:
            raise InvariantViolation(f"Exponential needs a_hat > 0, got {self.a_hat}")

    def raw_moment(self, n):
        n = self._check_order(n)
        if n <= _LOG_SPACE_ORDER:
            return _finite(math.factorial(n) / self.a_hat ** n, n, self.family)
        try:
            return _finite(math.exp(_log_factorial(n) - n * math.log(self.a_hat)), n, self.family)
        except OverflowError:
            raise MomentOverflowError(n, self.family) from None

    def raw_moment_exact(self, n):
        n = self._check_order(n)
        return Fraction(math.factorial(n)) / Fraction(self.a_hat) ** n

    def support(self):
        return Interval(0.0, math.inf, False, False)

    def sample(self, rng, count):
        return rng.exponential(1.0 / self.a_hat, count)


def _std_normal_moment(k: int) -> int:
    # (k-1)!! for even k, zero for odd k
    if k % 2:
        return 0
    out = 1
    for j in range(k - 1, 0, -2):
        out *= j
    return out


@dataclass(frozen=True)
class Normal(Randomizer):
    """Affine image ``mu + s * Z`` of a standard normal ``Z``."""

    mu: float = 0.0
    s: float = 1.0
    family: ClassVar[str] = "normal"

    def __post_init__(self):
        if not self.s > 0:
            raise InvariantViolation(f"Normal needs s > 0, got {self.s}")

    def raw_moment(self, n):
        n = self._check_order(n)
        total = 0.0
        for k in range(0, n + 1, 2):
            total += math.comb(n, k) * self.mu ** (n - k) * self.s ** k * _std_normal_moment(k)
        return _finite(total, n, self.family)

    def raw_moment_exact(self, n):
        n = self._check_order(n)
        mu, s = Fraction(self.mu), Fraction(self.s)
        return sum(
            (math.comb(n, k) * mu ** (n - k) * s ** k * _std_normal_moment(k) for k in range(0, n + 1, 2)),
            Fraction(0),
        )

    def support(self):
        return Interval(-math.inf, math.inf, False, False)

    def sample(self, rng, count):
        return self.mu + self.s * rng.standard_normal(count)


# Name used by serialized specs.
StandardNormalAffine = Normal


@dataclass(frozen=True)
class Gamma(Randomizer):
    """Gamma law with shape ``a_hat`` and scale ``b_hat``."""

    a_hat: float
    b_hat: float
    family: ClassVar[str] = "gamma"

    def __post_init__(self):
        if not (self.a_hat > 0 and self.b_hat > 0):
            raise InvariantViolation(f"Gamma needs a_hat, b_hat > 0, got {self.a_hat}, {self.b_hat}")

    def raw_moment(self, n):
        n = self._check_order(n)
        if n <= _LOG_SPACE_ORDER:
            rising = 1.0
            for j in range(n):
                rising *= self.a_hat + j
            return _finite(self.b_hat ** n * rising, n, self.family)
        log_m = n * math.log(self.b_hat) + gammaln(n + self.a_hat) - gammaln(self.a_hat)
        try:
            return _finite(math.exp(log_m), n, self.family)
        except OverflowError:
            raise MomentOverflowError(n, self.family) from None

    def raw_moment_exact(self, n):
        n = self._check_order(n)
        a, b = Fraction(self.a_hat), Fraction(self.b_hat)
        rising = Fraction(1)
        for j in range(n):
            rising *= a + j
        return b ** n * rising

    def support(self):
        return Interval(0.0, math.inf, False, False)

    def sample(self, rng, count):
        return rng.gamma(self.a_hat, self.b_hat, count)


def _ncx2_coef(n: int, j: int) -> float:
    """(n-1)! 2^(j-1) / (n-j)! for 1 <= j <= n, log space for large n."""
    if n <= _LOG_SPACE_ORDER:
        return math.factorial(n - 1) * 2.0 ** (j - 1) / math.factorial(n - j)
    return math.exp(gammaln(n) + (j - 1) * math.log(2.0) - gammaln(n - j + 1))


@dataclass(frozen=True)
class ScaledNoncentralChiSquare(Randomizer):
    """``scale * X`` with ``X`` noncentral chi-square(df, noncentrality)."""

    scale: float
    df: float
    noncentrality: float
    family: ClassVar[str] = "ncchi2"

    def __post_init__(self):
        if not (self.scale > 0 and self.df > 0 and self.noncentrality >= 0):
            raise InvariantViolation(
                "ScaledNoncentralChiSquare needs scale > 0, df > 0, noncentrality >= 0"
            )

    def _unscaled_moments(self, n_max, exact):
        one = Fraction(1) if exact else 1.0
        k = Fraction(self.df) if exact else self.df
        lam = Fraction(self.noncentrality) if exact else self.noncentrality
        m = [one]
        for n in range(1, n_max + 1):
            if exact:
                coef = lambda j: Fraction(math.factorial(n - 1) * 2 ** (j - 1), math.factorial(n - j))
            else:
                coef = lambda j: _ncx2_coef(n, j)
            total = coef(n) * (k + n * lam)
            for j in range(1, n):
                total += coef(j) * (k + j * lam) * m[n - j]
            m.append(total)
        return m

    def raw_moment(self, n):
        n = self._check_order(n)
        with np.errstate(over="ignore"):
            try:
                value = self._unscaled_moments(n, exact=False)[n] * self.scale ** n
            except OverflowError:
                raise MomentOverflowError(n, self.family) from None
        return _finite(value, n, self.family)

    def raw_moment_exact(self, n):
        n = self._check_order(n)
        return self._unscaled_moments(n, exact=True)[n] * Fraction(self.scale) ** n

    def support(self):
        return Interval(0.0, math.inf, True, False)

    def sample(self, rng, count):
        if self.noncentrality == 0:
            return self.scale * rng.chisquare(self.df, count)
        return self.scale * rng.noncentral_chisquare(self.df, self.noncentrality, count)

    _aliases: ClassVar[dict] = {"a_hat": "scale", "b_hat": "df", "c_hat": "noncentrality"}

    def with_hyper(self, name, value):
        return replace(self, **{self._aliases.get(name, name): value})

    def to_dict(self):
        return {"family": self.family, "a_hat": self.scale, "b_hat": self.df, "c_hat": self.noncentrality}


@dataclass(frozen=True)
class Degenerate(Randomizer):
    theta0: float
    family: ClassVar[str] = "degenerate"

    def raw_moment(self, n):
        n = self._check_order(n)
        return _finite(self.theta0 ** n, n, self.family)

    def raw_moment_exact(self, n):
        return Fraction(self.theta0) ** self._check_order(n)

    def support(self):
        return Interval(self.theta0, self.theta0)

    def sample(self, rng, count):
        return np.full(count, float(self.theta0))


_FAMILIES = {
    "uniform": Uniform,
    "exponential": Exponential,
    "normal": Normal,
    "gamma": Gamma,
    "ncchi2": ScaledNoncentralChiSquare,
    "degenerate": Degenerate,
}

# keys accepted in serialized form for each family, in constructor order
_KEYS = {
    "uniform": ("a_hat", "b_hat"),
    "exponential": ("a_hat",),
    "normal": ("mu", "s"),
    "gamma": ("a_hat", "b_hat"),
    "ncchi2": ("a_hat", "b_hat", "c_hat"),
    "degenerate": ("theta0",),
}


def from_dict(data: dict) -> Randomizer:
    """Build a randomizer from its serialized form ``{"family": ..., <hyper keys>}``."""
    family = str(data["family"]).lower()
    if family not in _FAMILIES:
        raise ValueError(f"unknown randomizer family {data['family']!r}; expected one of {sorted(_FAMILIES)}")
    args = [float(data[key]) for key in _KEYS[family]]
    return _FAMILIES[family](*args)


def raw_moment(spec: Randomizer, n: int) -> float:
    return spec.raw_moment(n)


def support(spec: Randomizer) -> Interval:
    return spec.support()


def sample(spec: Randomizer, rng: np.random.Generator, count: int) -> np.ndarray:
    if count < 1:
        raise ValueError("count must be >= 1")
    return spec.sample(rng, count)
