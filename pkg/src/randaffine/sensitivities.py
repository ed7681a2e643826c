"""Sensitivities of randomized prices to the randomizer's hyper-parameters.

The quadrature pairs are differentiated by central differences of the rule
in the hyper-parameter; the conditional ChF is differentiated in the node by
central differences of its exponent.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chf import CharacteristicFn
from .cos import DEFAULT_L, CosConfig, _log_chf_exponent, auto_terms, cos_price, hk_vanilla, truncation_range
from .errors import DomainError, InstabilityError
from .quadrature import quadrature_rule
from .randomizers import Degenerate


@dataclass(frozen=True)
class BumpConfig:
    rel: float = 1e-4
    mode: str = "central"

    def __post_init__(self):
        if not 1e-6 <= self.rel <= 1e-2:
            raise DomainError(f"relative bump must lie in [1e-6, 1e-2], got {self.rel}")
        if self.mode != "central":
            raise DomainError("only central differences are supported")

    def step(self, value):
        return self.rel * abs(value) if value != 0 else self.rel


def _hyper_value(spec, hyper):
    aliases = getattr(spec, "_aliases", {})
    name = aliases.get(hyper, hyper)
    if name not in spec.hyper_names:
        return None
    return getattr(spec, name)


@dataclass
class PairDerivatives:
    nodes: np.ndarray
    weights: np.ndarray
    dnodes: np.ndarray
    dweights: np.ndarray
    bump: float


def dpairs_dhyper(spec, hyper, N, bump=BumpConfig(), method="exact") -> PairDerivatives:
    """Central-difference derivatives of the quadrature nodes and weights."""
    rule = quadrature_rule(spec, N, method=method)
    value = _hyper_value(spec, hyper)
    zeros = np.zeros(len(rule.nodes))
    if value is None:
        return PairDerivatives(np.array(rule.nodes), np.array(rule.weights), zeros, zeros.copy(), 0.0)
    h = bump.step(value)
    try:
        up = quadrature_rule(spec.with_hyper(hyper, value + h), N, method=method)
        dn = quadrature_rule(spec.with_hyper(hyper, value - h), N, method=method)
    except DomainError as exc:
        raise DomainError(f"bumped randomizer is invalid (bump {h:g}): {exc}") from None
    if isinstance(spec, Degenerate):
        return PairDerivatives(np.array(rule.nodes), np.array(rule.weights), np.ones(1), np.zeros(1), h)
    tn, tp = np.asarray(dn.nodes), np.asarray(up.nodes)
    # sort-order matching is only valid if every node moved less than half the local gap
    if len(tn) > 1:
        gap = np.diff(np.asarray(rule.nodes)).min()
        if np.max(np.abs(tp - tn)) >= 0.5 * gap:
            raise InstabilityError(f"quadrature nodes cross under a bump of {h:g} in {hyper!r}; use a smaller bump")
    dnodes = (tp - tn) / (2 * h)
    dweights = (np.asarray(up.weights) - np.asarray(dn.weights)) / (2 * h)
    return PairDerivatives(np.array(rule.nodes), np.array(rule.weights), dnodes, dweights, h)


def _theta_step(theta):
    return max(1e-5, 1e-5 * abs(theta))


def _dlog_dtheta(base, slot, theta, u, discounted):
    """d/dtheta of log phi(u; theta) by central differences of the exponent ratio."""
    h = _theta_step(theta)
    up = base.with_param(slot, theta + h)
    dn = base.with_param(slot, theta - h)
    # exponents rather than ChF values: the ChF underflows at high frequencies
    diff = _log_chf_exponent(up, u) - _log_chf_exponent(dn, u)
    if discounted:
        diff = diff - (up.params.r - dn.params.r) * up.tau
    return diff / (2 * h)


def dchf_dhyper(base: CharacteristicFn, slot, spec, hyper, N, bump=BumpConfig(), discounted=False):
    """Evaluator of the hyper-parameter derivative of the randomized ChF."""
    pairs = dpairs_dhyper(spec, hyper, N, bump)

    def evaluate(u):
        u = np.asarray(u, dtype=complex)
        total = np.zeros(u.shape, dtype=complex)
        for t, w, dt, dw in zip(pairs.nodes, pairs.weights, pairs.dnodes, pairs.dweights):
            if dt == 0 and dw == 0:
                continue
            node = base.with_param(slot, t)
            phi = node.discounted(u) if discounted else node(u)
            term = dw * phi
            if dt != 0:
                term = term + w * phi * _dlog_dtheta(base, slot, t, u, discounted) * dt
            total = total + term
        return total

    return evaluate


@dataclass
class Sensitivity:
    price: np.ndarray
    derivative: np.ndarray
    bump: float


def dprice_dhyper(strikes, kind, base: CharacteristicFn, slot, spec, hyper, N, bump=BumpConfig(), L=DEFAULT_L,
                  n_terms=None) -> Sensitivity:
    """Randomized COS price and its derivative in ``hyper`` with the payoff coefficients held fixed."""
    from .chf import randomize_chf

    strikes = np.atleast_1d(np.asarray(strikes, dtype=float))
    chf = randomize_chf(base, slot, spec, N)
    a, b = truncation_range(chf, L)
    n = n_terms or auto_terms(chf, a, b)
    cfg = CosConfig(a, b, n, tau=chf.tau)
    H = hk_vanilla("put", strikes, a, b, np.arange(n))
    price = cos_price(chf, H, cfg)
    deriv_fn = dchf_dhyper(base, slot, spec, hyper, N, bump, discounted=True)

    class _D:
        def discounted(self, u):
            return deriv_fn(u)

    deriv = cos_price(_D(), H, cfg)
    if kind == "call":
        price = price + chf.discounted(np.array([-1j]))[0].real - strikes * chf.discounted(np.array([0.0]))[0].real
        deriv = deriv + deriv_fn(np.array([-1j]))[0].real - strikes * deriv_fn(np.array([0.0]))[0].real
    elif kind != "put":
        raise DomainError(f"kind must be 'call' or 'put', got {kind!r}")
    pairs_bump = dpairs_dhyper(spec, hyper, N, bump).bump
    return Sensitivity(price, deriv, pairs_bump)
