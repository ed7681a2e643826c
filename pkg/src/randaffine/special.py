"""Special functions, Black-Scholes formulas and implied volatility."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special as sc
from scipy import stats

from .errors import DomainError, NoSolutionError

_SQRT_HALF_PI = math.sqrt(math.pi / 2.0)
_SQRT_TWO_OVER_PI = math.sqrt(2.0 / math.pi)

IV_LOWER = 1e-6
IV_UPPER = 5.0


def fresnel(x):
    """Fresnel integrals with unnormalized argument.

    Returns ``(C, S)`` with ``C(x) = int_0^x cos(t^2) dt`` and
    ``S(x) = int_0^x sin(t^2) dt``.
    """
    # scipy uses the normalized kernel cos(pi t^2 / 2)
    s, c = sc.fresnel(np.asarray(x, dtype=float) * _SQRT_TWO_OVER_PI)
    return _SQRT_HALF_PI * c, _SQRT_HALF_PI * s


def norm_cdf(x):
    return sc.ndtr(x)


def ncchi2_pdf(x, df, nc):
    x = np.asarray(x, dtype=float)
    if nc == 0:
        return stats.chi2.pdf(x, df)
    return stats.ncx2.pdf(x, df, nc)


def ncchi2_cdf(x, df, nc):
    x = np.asarray(x, dtype=float)
    if nc == 0:
        return stats.chi2.cdf(x, df)
    return stats.ncx2.cdf(x, df, nc)


def ncchi2_sf(x, df, nc):
    x = np.asarray(x, dtype=float)
    if nc == 0:
        return stats.chi2.sf(x, df)
    return stats.ncx2.sf(x, df, nc)


def ncchi2_ppf(q, df, nc):
    if nc == 0:
        return stats.chi2.ppf(q, df)
    return stats.ncx2.ppf(q, df, nc)


def ncchi2_isf(q, df, nc):
    if nc == 0:
        return stats.chi2.isf(q, df)
    return stats.ncx2.isf(q, df, nc)


@dataclass(frozen=True)
class VanillaSpec:
    spot: float
    strike: float
    rate: float
    expiry: float
    kind: str = "call"

    def __post_init__(self):
        if not (self.spot > 0 and self.strike > 0):
            raise DomainError("spot and strike must be positive")
        if not self.expiry > 0:
            raise DomainError(f"expiry must be positive, got {self.expiry}")
        if self.kind not in ("call", "put"):
            raise DomainError(f"kind must be 'call' or 'put', got {self.kind!r}")


def bs_formula(spot, strike, rate, expiry, sigma, kind="call"):
    """Vectorized Black-Scholes price; ``kind`` may be an array of strings."""
    S, K, r, T, sig = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (spot, strike, rate, expiry, sigma)))
    df = np.exp(-r * T)
    sd = sig * np.sqrt(T)
    with np.errstate(divide="ignore", invalid="ignore"):
        d1 = (np.log(S / K) + (r + 0.5 * sig * sig) * T) / sd
        d2 = d1 - sd
        call = S * norm_cdf(d1) - K * df * norm_cdf(d2)
    call = np.where(sd > 0, call, np.maximum(S - K * df, 0.0))
    is_put = np.asarray(kind) == "put"
    out = np.where(is_put, call - S + K * df, call)
    return out[()] if out.ndim == 0 else out


def bs_price(v: VanillaSpec, sigma):
    return bs_formula(v.spot, v.strike, v.rate, v.expiry, sigma, v.kind)


def bs_vega(spot, strike, rate, expiry, sigma):
    S, K, r, T, sig = (np.asarray(a, dtype=float) for a in (spot, strike, rate, expiry, sigma))
    sd = sig * np.sqrt(T)
    with np.errstate(divide="ignore", invalid="ignore"):
        d1 = (np.log(S / K) + (r + 0.5 * sig * sig) * T) / sd
        out = S * np.sqrt(T) * np.exp(-0.5 * d1 * d1) / math.sqrt(2.0 * math.pi)
    return np.where(sd > 0, out, 0.0)


def black76(forward, strike, expiry, sigma, discount=1.0, kind="call"):
    """Black price on a forward, used for VIX options."""
    F, K, T, sig = (np.asarray(a, dtype=float) for a in (forward, strike, expiry, sigma))
    sd = sig * np.sqrt(T)
    with np.errstate(divide="ignore", invalid="ignore"):
        d1 = (np.log(F / K) + 0.5 * sd * sd) / sd
        call = F * norm_cdf(d1) - K * norm_cdf(d1 - sd)
    call = np.where(sd > 0, call, np.maximum(F - K, 0.0))
    out = discount * np.where(np.asarray(kind) == "put", call - F + K, call)
    return out[()] if out.ndim == 0 else out


def black76_vega(forward, strike, expiry, sigma, discount=1.0):
    F, K, T, sig = (np.asarray(a, dtype=float) for a in (forward, strike, expiry, sigma))
    sd = sig * np.sqrt(T)
    with np.errstate(divide="ignore", invalid="ignore"):
        d1 = (np.log(F / K) + 0.5 * sd * sd) / sd
        out = discount * F * np.sqrt(T) * np.exp(-0.5 * d1 * d1) / math.sqrt(2.0 * math.pi)
    return np.where(sd > 0, out, 0.0)


def _solve_vol(target, price_fn, vega_fn, lo, hi, tol=1e-12, max_iter=100):
    """Vectorized bracketed Newton on an increasing price function of sigma."""
    target = np.asarray(target, dtype=float)
    lo = np.full(target.shape, lo)
    hi = np.full(target.shape, hi)
    sig = np.full(target.shape, 0.3)
    for _ in range(max_iter):
        f = price_fn(sig) - target
        done = np.abs(f) <= tol * np.maximum(1.0, np.abs(target))
        if np.all(done):
            break
        lo = np.where(f < 0, sig, lo)
        hi = np.where(f > 0, sig, hi)
        vega = vega_fn(sig)
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = sig - f / vega
        bisect = 0.5 * (lo + hi)
        ok = np.isfinite(newton) & (newton > lo) & (newton < hi)
        sig = np.where(done, sig, np.where(ok, newton, bisect))
    return sig


def implied_vol_array(price, spot, strike, rate, expiry, kind="call", clamp=True):
    """Vectorized Black-Scholes implied volatility.

    Prices outside the no-arbitrage band raise :class:`NoSolutionError`.
    Prices inside the band but outside the range reachable with
    ``sigma in [1e-6, 5]`` are clamped to the nearest bound.
    """
    P, S, K, r, T = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (price, spot, strike, rate, expiry)))
    kinds = np.broadcast_to(np.asarray(kind), P.shape)
    df = np.exp(-r * T)
    # work on the out-of-the-money side where prices are smallest
    call_price = np.where(kinds == "put", P + S - K * df, P)
    lower = np.maximum(S - K * df, 0.0)
    tol = 1e-12 * np.maximum(1.0, S)
    if np.any(call_price < lower - tol):
        raise NoSolutionError("option price is below intrinsic value", side="below_intrinsic")
    if np.any(call_price > S + tol):
        raise NoSolutionError("option price exceeds the upper no-arbitrage bound", side="above_upper")
    otm_put = K * df < S
    target = np.where(otm_put, call_price - S + K * df, call_price)
    otm_kind = np.where(otm_put, "put", "call")

    def price_fn(sig):
        return bs_formula(S, K, r, T, sig, otm_kind)

    def vega_fn(sig):
        return bs_vega(S, K, r, T, sig)

    p_lo, p_hi = price_fn(np.full(P.shape, IV_LOWER)), price_fn(np.full(P.shape, IV_UPPER))
    sig = _solve_vol(np.clip(target, p_lo, p_hi), price_fn, vega_fn, IV_LOWER, IV_UPPER)
    if not clamp:
        bad = (target < p_lo) | (target > p_hi)
        if np.any(bad):
            raise NoSolutionError("price implies a volatility outside [1e-6, 5]", side="out_of_range")
    return sig[()] if sig.ndim == 0 else sig


def implied_vol(price, v: VanillaSpec):
    """Black-Scholes implied volatility of ``price`` for the option ``v``."""
    return float(implied_vol_array(price, v.spot, v.strike, v.rate, v.expiry, v.kind))


def black76_implied_vol(price, forward, strike, expiry, discount=1.0):
    """Implied volatility of a call on a forward (Black model)."""
    P, F, K, T = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (price, forward, strike, expiry)))
    undisc = P / discount
    lower = np.maximum(F - K, 0.0)
    tol = 1e-12 * np.maximum(1.0, F)
    if np.any(undisc < lower - tol):
        raise NoSolutionError("option price is below intrinsic value", side="below_intrinsic")
    if np.any(undisc > F + tol):
        raise NoSolutionError("option price exceeds the forward", side="above_upper")
    otm_put = K < F
    target = np.where(otm_put, undisc - F + K, undisc)
    kinds = np.where(otm_put, "put", "call")

    def price_fn(sig):
        return black76(F, K, T, sig, 1.0, kinds)

    def vega_fn(sig):
        return black76_vega(F, K, T, sig)

    p_lo, p_hi = price_fn(np.full(P.shape, IV_LOWER)), price_fn(np.full(P.shape, IV_UPPER))
    sig = _solve_vol(np.clip(target, p_lo, p_hi), price_fn, vega_fn, IV_LOWER, IV_UPPER)
    return sig[()] if sig.ndim == 0 else sig
