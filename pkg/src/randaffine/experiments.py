"""Reproduction drivers for the randomized Black-Scholes tables and IV surfaces."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chf import CharacteristicFn, randomize_chf
from .cos import price_vanilla
from .models import BatesParams, BlackScholesParams
from .quadrature import quadrature_rule
from .randomizers import Gamma, Uniform, ScaledNoncentralChiSquare, sample
from .special import bs_formula, implied_vol_array

TABLE2 = {
    "uniform": Uniform(0.1, 0.45),
    "gamma": Gamma(2.55, 0.1),
    "ncchi2": ScaledNoncentralChiSquare(0.088, 0.1662, 3.2417),
}
TABLE3_DELTAS = (-3.0, -2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 3.0)
TABLE3_EXPIRIES = {"1d": 1 / 365, "1w": 7 / 365, "2w": 14 / 365, "1m": 1 / 12, "3m": 0.25, "6m": 0.5, "12m": 1.0}
TABLE3_SPOT = 100.0
MC_BLOCK = 1_000_000


def table3_strikes(T, spot=TABLE3_SPOT, deltas=TABLE3_DELTAS):
    return spot * np.exp(0.1 * math.sqrt(T) * np.asarray(deltas, dtype=float))


def bs_mixture_price(spot, strikes, rate, T, spec, N, kind="call"):
    """Quadrature-weighted sum of Black-Scholes prices (randomization at price level)."""
    rule = quadrature_rule(spec, N)
    K = np.asarray(strikes, dtype=float)
    return sum(w * bs_formula(spot, K, rate, T, s, kind) for w, s in zip(rule.weights, rule.nodes))


def bs_cos_price(spot, strikes, rate, T, spec, N, kind="call"):
    """COS price from the randomized BS characteristic function."""
    base = CharacteristicFn(BlackScholesParams(1.0, rate, spot), T)
    return price_vanilla(randomize_chf(base, "sigma", spec, N), strikes, kind)


def mc_reference_bs(spec, expiries, strikes_by_T, paths, seed, spot=TABLE3_SPOT, rate=0.0, block=MC_BLOCK):
    """Monte Carlo call prices of the randomized BS model.

    Each path draws sigma from ``spec`` and an exact lognormal terminal
    value.  The same (sigma, Z) draws are reused for every expiry.
    Returns ``{T: (price, se)}``.
    """
    ss = np.random.SeedSequence(seed)
    rng = np.random.Generator(np.random.PCG64(ss))
    sums = {T: np.zeros(len(strikes_by_T[T])) for T in expiries}
    sq = {T: np.zeros(len(strikes_by_T[T])) for T in expiries}
    done = 0
    while done < paths:
        m = min(block, paths - done)
        sig = sample(spec, rng, m)
        z = rng.standard_normal(m)
        for T in expiries:
            K = strikes_by_T[T]
            sT = spot * np.exp((rate - 0.5 * sig * sig) * T + sig * math.sqrt(T) * z)
            # OTM side keeps the estimator variance small; calls recovered by parity below
            fwd = spot * math.exp(rate * T)
            for j, k in enumerate(K):
                pay = np.maximum(sT - k, 0.0) if k >= fwd else np.maximum(k - sT, 0.0)
                sums[T][j] += pay.sum()
                sq[T][j] += (pay * pay).sum()
        done += m
    out = {}
    for T in expiries:
        K = np.asarray(strikes_by_T[T])
        disc = math.exp(-rate * T)
        mean = sums[T] / paths
        se = np.sqrt(np.maximum(sq[T] / paths - mean * mean, 0.0) / (paths - 1))
        fwd = spot * math.exp(rate * T)
        price = disc * mean
        put_side = K < fwd
        price = np.where(put_side, price + spot - K * disc, price)
        out[T] = (price, disc * se)
    return out


@dataclass
class Table3Row:
    label: str
    T: float
    N: int
    error: float
    route_gap: float


def table3(spec, Ns=range(2, 10), expiries=None, paths=10_000_000, seed=42, spot=TABLE3_SPOT, reference=None):
    """Max absolute IV error (in vol points, i.e. percent) per (T, N) against a MC reference.

    ``route_gap`` is the largest difference between the price-level and the
    ChF-level randomized prices on the strike grid.
    """
    expiries = expiries or TABLE3_EXPIRIES
    strikes = {T: table3_strikes(T, spot) for T in expiries.values()}
    if reference is None:
        reference = mc_reference_bs(spec, list(expiries.values()), strikes, paths, seed, spot)
    rows = []
    for label, T in expiries.items():
        K = strikes[T]
        iv_ref = implied_vol_array(reference[T][0], spot, K, 0.0, T, "call")
        for N in Ns:
            p12 = bs_mixture_price(spot, K, 0.0, T, spec, N)
            p14 = bs_cos_price(spot, K, 0.0, T, spec, N)
            iv = implied_vol_array(p14, spot, K, 0.0, T, "call")
            rows.append(Table3Row(label, T, N, 100.0 * float(np.max(np.abs(iv - iv_ref))),
                                  float(np.max(np.abs(p12 - p14)))))
    return rows, reference


def iv_surface(params, slot, spec, N, strikes_fn, expiries, kind="call"):
    """Model implied vols on a (T, K) grid; ``strikes_fn(T)`` gives the strikes for expiry T."""
    rows = []
    for T in expiries:
        K = np.asarray(strikes_fn(T), dtype=float)
        base = CharacteristicFn(params, T)
        chf = base if spec is None else randomize_chf(base, slot, spec, N)
        prices = price_vanilla(chf, K, kind)
        iv = implied_vol_array(prices, params.s0, K, params.r, T, kind)
        rows.extend((float(T), float(k), float(p), float(v)) for k, p, v in zip(K, prices, iv))
    return rows


FIGURE3 = BatesParams(kappa=0.5, vbar=0.1, gamma=0.72, rho=-0.85, v0=0.0625, r=0.0, lam=0.1, mu_j=-0.25,
                      sigma_j=0.05)
FIGURE3_T = 31 / 365
FIGURE3_RANDOMIZERS = {"uniform": Uniform(0.1, 1.34), "gamma": Gamma(2.0, 0.36)}
FIGURE4 = BatesParams(kappa=0.5, vbar=0.13, gamma=0.5, rho=-0.7, v0=0.13, r=0.0, lam=0.08, mu_j=-0.1, sigma_j=0.06)
FIGURE4_T = 1 / 12
TABLE5 = {
    1: (BatesParams(kappa=0.5, vbar=0.23, gamma=1.155, rho=-0.65, v0=0.170 ** 2, lam=0.25, mu_j=-0.25,
                    sigma_j=0.05), Uniform(0.01, 2.3)),
    2: (BatesParams(kappa=0.14, vbar=0.28, gamma=1.051, rho=-0.8, v0=0.267 ** 2, lam=0.1, mu_j=-0.25,
                    sigma_j=0.02), Uniform(0.002, 2.1)),
    3: (BatesParams(kappa=0.5, vbar=0.10, gamma=0.725, rho=-0.85, v0=0.250 ** 2, lam=0.15, mu_j=-0.25,
                    sigma_j=0.05), Uniform(0.05, 1.4)),
}
