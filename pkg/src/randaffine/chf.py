"""Characteristic functions of the log-price and their randomized mixtures.

All characteristic functions are non-discounted, ``phi(u) = E[exp(iu X(T))]``
with ``X = log S``; discounting happens once in the pricers via
:meth:`CharacteristicFn.discounted`.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

from .errors import DomainError, ResourceError
from .models import BatesParams, BlackScholesParams
from .quadrature import quadrature_rule

MAX_TENSOR_SIZE = 100_000
RK4_STEPS = 400


def chf_bs(u, tau, x0, r, sigma):
    u = np.asarray(u, dtype=complex)
    var = sigma * sigma * tau
    return np.exp(1j * u * (x0 + r * tau - 0.5 * var) - 0.5 * var * u * u)


def _clog1p(z):
    """Complex log(1 + z) that stays accurate for small ``|z|``."""
    w = 1.0 + z
    out = np.log(w)
    nz = w != 1.0
    out = np.where(nz, out - ((w - 1.0) - z) / np.where(nz, w, 1.0), z)
    return out


def _jump_exponent(u, lam, mu_j, sigma_j):
    """Per-unit-time jump contribution with its martingale compensator."""
    if lam == 0:
        return np.zeros_like(u)
    k = math.expm1(mu_j + 0.5 * sigma_j ** 2)
    return -lam * 1j * u * k + lam * (np.exp(1j * u * mu_j - 0.5 * sigma_j ** 2 * u * u) - 1.0)


def heston_coefficients(u, tau, kappa, vbar, gamma, rho, r, lam=0.0, mu_j=0.0, sigma_j=0.0):
    """Affine coefficients ``(A, C)`` of the Bates log-ChF, ``log phi = iu x0 + C v0 + A``."""
    u = np.asarray(u, dtype=complex)
    if gamma * gamma < 1e-200:
        # vol-of-vol effects are O(gamma), far below double precision here
        gamma = 0.0
    if kappa * kappa < 1e-200:
        # same for mean reversion; also keeps den * den from underflowing
        kappa = 0.0
    iu = 1j * u
    q = u * u + iu
    beta = kappa - gamma * rho * iu
    D = np.sqrt(beta * beta + q * gamma * gamma)
    e = np.exp(-D * tau)
    # expm1 keeps 1 - e accurate when D * tau is tiny (small kappa and gamma)
    one_minus_e = -np.expm1(-D * tau)
    den = beta + D
    # den = 0 only when kappa = gamma = 0; q = 0 (u = 0 or u = -i) has C = 0 exactly
    zero = (den == 0) | (q == 0)
    safe = np.where(zero, 1.0, den)
    # g / gamma^2, finite as gamma -> 0
    G = -q / (safe * safe)
    g = gamma * gamma * G
    one_minus_ge = 1.0 - g * e
    C = one_minus_e / one_minus_ge * (-q) / safe
    # log((1 - g e) / (1 - g)) / gamma^2 written as log1p(x) / gamma^2 with
    # x = g (1 - e) / (1 - g); pulling out x / gamma^2 = G (1 - e) / (1 - g)
    # avoids dividing a cancelled difference by gamma^2
    one_minus_g = np.where(g == 1.0, 1.0, 1.0 - g)
    x = g * one_minus_e / one_minus_g
    small = np.abs(x) <= 1.0
    xs = np.where(small & (x != 0), x, 1.0)
    log1p_ratio = np.where(x != 0, _clog1p(np.where(small, x, 0.0)) / xs, 1.0)
    # large |x| has no cancellation; divide directly (gamma > 0 there)
    big = _clog1p(np.where(small, 0.0, x)) / (gamma * gamma if gamma else 1.0)
    log_term = np.where(small, G * one_minus_e / one_minus_g * log1p_ratio, big)
    A = iu * r * tau + kappa * vbar * (-tau * q / safe - 2.0 * log_term)
    # kappa = gamma = 0: variance is frozen at v0
    C = np.where(zero, -0.5 * q * tau, C)
    A = np.where(zero, iu * r * tau, A)
    A = A + tau * _jump_exponent(u, lam, mu_j, sigma_j)
    return A, C


def chf_bates(u, tau, p: BatesParams):
    A, C = heston_coefficients(u, tau, p.kappa, p.vbar, p.gamma, p.rho, p.r, p.lam, p.mu_j, p.sigma_j)
    u = np.asarray(u, dtype=complex)
    return np.exp(1j * u * p.x0 + C * p.v0 + A)


class CharacteristicFn:
    """ChF of the log-price at horizon ``tau`` for fixed model parameters."""

    def __init__(self, params, tau):
        if not tau > 0:
            raise DomainError(f"horizon tau must be positive, got {tau}")
        self.params = params
        self.tau = float(tau)

    @property
    def model(self):
        return "bates" if isinstance(self.params, BatesParams) else "bs"

    def __call__(self, u):
        if isinstance(self.params, BatesParams):
            return chf_bates(u, self.tau, self.params)
        p = self.params
        return chf_bs(u, self.tau, p.x0, p.r, p.sigma)

    def discounted(self, u):
        return math.exp(-self.params.r * self.tau) * self(u)

    def components(self):
        """List of ``(weight, conditional ChF)`` pairs making up this ChF."""
        return [(1.0, self)]

    def with_param(self, slot, value):
        return CharacteristicFn(self.params.with_param(slot, value), self.tau)

    def __repr__(self):
        return f"CharacteristicFn({self.params!r}, tau={self.tau})"


def conditional_chf(params, tau) -> CharacteristicFn:
    return CharacteristicFn(params, tau)


class MixtureChF(CharacteristicFn):
    """Finite convex combination of characteristic functions."""

    def __init__(self, weights, parts, tau, info=None):
        self.weights = np.asarray(weights, dtype=float)
        self.parts = list(parts)
        self.tau = float(tau)
        self.info = info or {}

    @property
    def params(self):
        return self.parts[0].params

    @property
    def model(self):
        return self.parts[0].model

    def __call__(self, u):
        return sum(w * part(u) for w, part in zip(self.weights, self.parts))

    def discounted(self, u):
        return sum(w * part.discounted(u) for w, part in zip(self.weights, self.parts))

    def with_param(self, slot, value):
        """Substitute ``slot`` in every part; lets randomizations be nested."""
        return MixtureChF(self.weights, [p.with_param(slot, value) for p in self.parts], self.tau, self.info)

    def components(self):
        out = []
        for w, part in zip(self.weights, self.parts):
            out.extend((w * w2, c) for w2, c in part.components())
        return out

    def __repr__(self):
        return f"MixtureChF({len(self.parts)} parts, tau={self.tau}, info={self.info})"


def _node_chf(base, slot, theta):
    try:
        return base.with_param(slot, theta)
    except DomainError as exc:
        raise DomainError(f"quadrature node {theta!r} is not admissible for slot {slot!r}: {exc}") from None


def randomize_chf(base: CharacteristicFn, slot: str, spec, N: int, method="exact") -> MixtureChF:
    """Replace the parameter in ``slot`` by the randomizer ``spec`` with an N-point rule."""
    rule = quadrature_rule(spec, N, method=method)
    parts = [_node_chf(base, slot, t) for t in rule.nodes]
    return MixtureChF(rule.weights, parts, base.tau, {"slot": slot, "spec": spec, "rule": rule})


def randomize_chf_bivariate(base, slot1, slot2, spec1, conditional_spec_factory, N, N2=None, method="exact"):
    """Two randomized slots where the law of the second depends on the first's realization."""
    N2 = N if N2 is None else N2
    outer = quadrature_rule(spec1, N, method=method)
    parts = []
    for t1 in outer.nodes:
        inner_base = _node_chf(base, slot1, t1)
        parts.append(randomize_chf(inner_base, slot2, conditional_spec_factory(t1), N2, method))
    return MixtureChF(outer.weights, parts, base.tau, {"slot": slot1, "spec": spec1, "rule": outer, "inner_slot": slot2})


class PiecewiseChF(CharacteristicFn):
    """ChF for parameters that are constant on each of several time intervals.

    Interval ``k`` covers time-to-maturity ``(tau_{k-1}, tau_k]`` with
    ``tau_0 = 0``, so the first interval is the one that ends at expiry.
    """

    def __init__(self, params_list, tau_grid, rk4_steps=RK4_STEPS):
        self.params_list = list(params_list)
        self.tau_grid = np.asarray(tau_grid, dtype=float)
        self.tau = float(self.tau_grid[-1])
        self.rk4_steps = rk4_steps

    @property
    def params(self):
        return self.params_list[-1]

    @property
    def model(self):
        return "bates" if isinstance(self.params, BatesParams) else "bs"

    def discounted(self, u):
        edges = np.concatenate([[0.0], self.tau_grid])
        r_int = sum(p.r * dt for p, dt in zip(self.params_list, np.diff(edges)))
        return math.exp(-r_int) * self(u)

    def with_param(self, slot, value):
        raise NotImplementedError("piecewise ChFs are randomized through chf_piecewise")

    def __call__(self, u):
        u = np.asarray(u, dtype=complex)
        edges = np.concatenate([[0.0], self.tau_grid])
        steps = np.diff(edges)
        x0 = self.params_list[0].x0
        if isinstance(self.params_list[0], BlackScholesParams):
            expo = 1j * u * x0
            for p, dt in zip(self.params_list, steps):
                var = p.sigma ** 2 * dt
                expo = expo + 1j * u * (p.r * dt - 0.5 * var) - 0.5 * var * u * u
            return np.exp(expo)
        first = self.params_list[0]
        A, C = heston_coefficients(u, steps[0], first.kappa, first.vbar, first.gamma, first.rho, first.r,
                                   first.lam, first.mu_j, first.sigma_j)
        for p, dt in zip(self.params_list[1:], steps[1:]):
            A, C = _riccati_rk4(u, A, C, dt, p, self.rk4_steps)
        return np.exp(1j * u * x0 + C * self.params_list[-1].v0 + A)


def _riccati_rk4(u, A, C, dt, p, min_steps):
    iu = 1j * u
    q = u * u + iu
    lin = iu * p.rho * p.gamma - p.kappa
    quad_c = 0.5 * p.gamma ** 2
    jump = _jump_exponent(u, p.lam, p.mu_j, p.sigma_j)
    drift = iu * p.r + jump
    # keep |lambda h| moderate for the stiff high-frequency part
    rate = np.max(np.abs(np.sqrt((p.kappa - p.gamma * p.rho * iu) ** 2 + q * p.gamma ** 2))) if np.size(u) else 0.0
    n = max(min_steps, int(math.ceil(2.0 * rate * dt)))
    h = dt / n

    def fC(c):
        return quad_c * c * c + lin * c - 0.5 * q

    def fA(c):
        return drift + p.kappa * p.vbar * c

    for _ in range(n):
        k1 = fC(C)
        k2 = fC(C + 0.5 * h * k1)
        k3 = fC(C + 0.5 * h * k2)
        k4 = fC(C + h * k3)
        A = A + h / 6.0 * (fA(C) + 2 * fA(C + 0.5 * h * k1) + 2 * fA(C + 0.5 * h * k2) + fA(C + h * k3))
        C = C + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return A, C


def chf_piecewise(params, slots, specs, tau_grid, N, method="exact", max_tensor=MAX_TENSOR_SIZE,
                  rk4_steps=RK4_STEPS) -> MixtureChF:
    """Randomized ChF with an independent randomizer per time interval.

    ``params`` is the baseline parameter set; ``slots[k]`` and ``specs[k]``
    give the randomized slot and its law on interval ``k`` (``None`` keeps the
    baseline value).  Intervals are indexed as in :class:`PiecewiseChF`.
    """
    tau_grid = np.asarray(tau_grid, dtype=float)
    m = len(tau_grid)
    if m < 1 or len(slots) != m or len(specs) != m:
        raise DomainError("need one slot and one spec per interval")
    if np.any(np.diff(np.concatenate([[0.0], tau_grid])) <= 0):
        raise DomainError("tau grid must be strictly increasing and positive")
    rules = [quadrature_rule(s, N, method=method) if s is not None else None for s in specs]
    sizes = [len(r.nodes) if r is not None else 1 for r in rules]
    total = int(np.prod(sizes))
    if total > max_tensor:
        raise ResourceError(f"piecewise tensor has {total} terms, above the cap of {max_tensor}")
    weights, parts = [], []
    for combo in itertools.product(*(range(s) for s in sizes)):
        w = 1.0
        plist = []
        for k, idx in enumerate(combo):
            p = params
            if rules[k] is not None:
                theta = rules[k].nodes[idx]
                w *= rules[k].weights[idx]
                try:
                    p = params.with_param(slots[k], theta)
                except DomainError as exc:
                    raise DomainError(f"node {theta!r} not admissible for slot {slots[k]!r}: {exc}") from None
            plist.append(p)
        weights.append(w)
        parts.append(PiecewiseChF(plist, tau_grid, rk4_steps))
    return MixtureChF(weights, parts, tau_grid[-1], {"piecewise": True, "rules": rules, "slots": list(slots)})
