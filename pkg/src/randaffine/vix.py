"""VIX under Bates dynamics: affine map of the variance, density, ChF and option prices.

Volatilities are on the 0-1 scale throughout; option prices are returned in
VIX points, i.e. multiplied by 100, so a strike ``K = 0.2`` is quoted as 20.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .cos import DEFAULT_L_VIX, CosConfig, cos_price, hk_vix
from .errors import DomainError
from .models import BatesParams
from .quadrature import quadrature_rule
from .special import ncchi2_cdf, ncchi2_isf, ncchi2_pdf, ncchi2_sf

VIX_TENOR = 30.0 / 365.0
VIX_SCALE = 100.0
TAIL_MASS = 1e-12


def _one_minus_exp_over(x, scale):
    """(1 - e^{-x}) / x * scale with the x -> 0 limit."""
    return scale if x == 0 else -math.expm1(-x) / x * scale


@dataclass(frozen=True)
class VixCoefficients:
    a: float
    b: float
    c: float
    tenor: float
    expiry: float
    c_bar: float
    delta: float
    kappa_bar: float
    rate: float = 0.0
    t0: float = 0.0

    @property
    def alpha1(self):
        return 1.0 / (self.a * self.c_bar)

    @property
    def alpha2(self):
        return self.b + self.c

    @property
    def floor(self):
        """Smallest attainable VIX value."""
        return math.sqrt(self.alpha2)

    @property
    def mean_vix2(self):
        return self.a * self.c_bar * (self.delta + self.kappa_bar) + self.b + self.c

    @property
    def var_vix2(self):
        return (self.a * self.c_bar) ** 2 * 2.0 * (self.delta + 2.0 * self.kappa_bar)

    @property
    def discount(self):
        return math.exp(-self.rate * (self.expiry - self.t0))


def vix_coefficients(p: BatesParams, expiry, tenor=VIX_TENOR, t0=0.0) -> VixCoefficients:
    """Coefficients of VIX^2(expiry, expiry + tenor) = a v(expiry) + b + c.

    The variance transition is taken over ``(t0, expiry)``.
    """
    horizon = expiry - t0
    if not horizon > 0:
        raise DomainError(f"VIX expiry must lie after the valuation time, got {expiry} <= {t0}")
    if not tenor > 0:
        raise DomainError("VIX tenor must be positive")
    if not p.gamma > 0:
        raise DomainError("VIX density needs gamma > 0 (the variance is deterministic otherwise)")
    if not p.kappa * p.vbar > 0:
        raise DomainError("VIX density needs kappa * vbar > 0 for a positive chi-square degree")
    a = _one_minus_exp_over(p.kappa * tenor, 1.0)
    b = p.vbar * (1.0 - a)
    c = 2.0 * p.lam * (math.exp(p.mu_j + 0.5 * p.sigma_j ** 2) - p.mu_j - 1.0)
    # (1 - e^{-kappa h}) / kappa, finite at kappa = 0
    decay = _one_minus_exp_over(p.kappa * horizon, horizon)
    c_bar = p.gamma ** 2 / 4.0 * decay
    delta = 4.0 * p.kappa * p.vbar / p.gamma ** 2
    kappa_bar = p.v0 * math.exp(-p.kappa * horizon) / c_bar
    return VixCoefficients(a, b, c, tenor, expiry, c_bar, delta, kappa_bar, p.r, t0)


def vix_pdf(x, co: VixCoefficients):
    x = np.asarray(x, dtype=float)
    z = co.alpha1 * (x * x - co.alpha2)
    inside = z > 0
    zs = np.where(inside, z, 1.0)
    out = np.where(inside, 2.0 * co.alpha1 * x * ncchi2_pdf(zs, co.delta, co.kappa_bar), 0.0)
    return out[()] if out.ndim == 0 else out


def vix_cdf(x, co: VixCoefficients):
    x = np.asarray(x, dtype=float)
    z = np.maximum(co.alpha1 * (x * x - co.alpha2), 0.0)
    out = np.where(x * x > co.alpha2, ncchi2_cdf(z, co.delta, co.kappa_bar), 0.0)
    return out[()] if out.ndim == 0 else out


def vix2_chf(u, co: VixCoefficients):
    u = np.asarray(u, dtype=complex)
    ac = co.a * co.c_bar
    w = 1.0 - 2j * u * ac
    return np.exp(1j * u * (co.b + co.c) - 0.5 * co.delta * np.log(w) + 1j * u * ac * co.kappa_bar / w)


class Vix2ChF:
    """ChF of VIX^2 (0-1 scale) for one or several weighted parameter sets."""

    def __init__(self, coeffs, weights=None):
        self.coeffs = list(coeffs)
        self.weights = np.ones(1) if weights is None else np.asarray(weights, dtype=float)

    def __call__(self, u):
        return sum(w * vix2_chf(u, co) for w, co in zip(self.weights, self.coeffs))

    def discounted(self, u):
        return sum(w * co.discount * vix2_chf(u, co) for w, co in zip(self.weights, self.coeffs))

    def truncation_range(self, L=DEFAULT_L_VIX, tail=TAIL_MASS):
        """Envelope of ``[max(floor, mean - L sd), mean + L sd]`` over components.

        With ``tail`` set, the upper end is widened to the ``1 - tail``
        quantile when that lies further out; small chi-square degrees give
        right tails far heavier than L standard deviations suggest.
        """
        lo, hi = math.inf, -math.inf
        for co in self.coeffs:
            sd = math.sqrt(co.var_vix2)
            lo = min(lo, max(co.alpha2, co.mean_vix2 - L * sd))
            hi = max(hi, co.mean_vix2 + L * sd)
            if tail:
                hi = max(hi, _z_upper(co, tail) / co.alpha1 + co.alpha2)
        return max(lo, 0.0), hi


def vix_mean(co: VixCoefficients):
    """E[VIX] (0-1 scale) by quadrature of the density."""
    return _expect_call(co, np.array([0.0]))[0]


def _z_upper(co, tail=TAIL_MASS):
    return float(ncchi2_isf(tail, co.delta, co.kappa_bar))


def _expect_call_density(co, K):
    """E[(VIX - K)^+] integrating the payoff against the VIX density.

    The integration variable is the offset ``d = x - floor`` so that points
    closer to the floor than one ulp of ``x`` stay resolvable; for small
    chi-square degrees most of the mass sits there.
    """
    out = []
    x_floor = co.floor
    d_up = math.sqrt(_z_upper(co) / co.alpha1 + co.alpha2) - x_floor
    power = 0.5 * co.delta - 1.0
    d_mean = math.sqrt(co.mean_vix2) - x_floor
    for k in np.atleast_1d(K):
        d_lo = max(k - x_floor, 0.0)
        if d_lo >= d_up:
            out.append(0.0)
            continue

        def integrand(d):
            x = x_floor + d
            z = co.alpha1 * d * (d + 2.0 * x_floor)
            return (x - k) * 2.0 * co.alpha1 * x * ncchi2_pdf(z, co.delta, co.kappa_bar)

        if d_lo == 0.0 and power < 0:
            # d = s^(2/delta) absorbs the integrable singularity at the support floor
            e = 2.0 / co.delta

            def in_s(sv):
                d = sv ** e
                return integrand(d) / d ** power * e if d > 0 else 0.0

            s_up = d_up ** (1.0 / e)
            pts = [v for v in (d_mean ** (1.0 / e), (0.1 * d_mean) ** (1.0 / e)) if 0 < v < s_up]
            val = integrate.quad(in_s, 0.0, s_up, points=pts or None, limit=400, epsabs=1e-13, epsrel=1e-10)[0]
        else:
            pts = [d_mean] if d_lo < d_mean < d_up else None
            val = integrate.quad(integrand, d_lo, d_up, points=pts, limit=200, epsabs=1e-13, epsrel=1e-10)[0]
        out.append(val)
    return np.array(out)


def _expect_call(co, K):
    """E[(VIX - K)^+] as the integral of g'(z) P(Z > z) with VIX = g(Z), Z chi-square."""
    K = np.atleast_1d(np.asarray(K, dtype=float))
    z_up = _z_upper(co)
    zK = np.maximum(co.alpha1 * (K * K - co.alpha2), 0.0)
    base = np.maximum(co.floor - K, 0.0)
    live = zK < z_up
    if not np.any(live):
        return base
    zl = zK[live]
    span = z_up - zl

    def integrand(t):
        z = zl + span * t
        g = np.sqrt(z / co.alpha1 + co.alpha2)
        return span * ncchi2_sf(z, co.delta, co.kappa_bar) / (2.0 * co.alpha1 * g)

    val = integrate.quad_vec(integrand, 0.0, 1.0, epsabs=1e-13, epsrel=1e-10)[0]
    out = base.copy()
    out[live] += val
    return out


def vix_option_direct(K, p: BatesParams, expiry, tenor=VIX_TENOR, t0=0.0, kind="call", method="survival"):
    """VIX option price in VIX points for strikes ``K`` on the 0-1 scale.

    ``method="density"`` integrates the payoff against the VIX density;
    ``method="survival"`` integrates the survival function of the underlying
    chi-square variable, which is vectorized over strikes.
    """
    co = vix_coefficients(p, expiry, tenor, t0)
    K = np.asarray(K, dtype=float)
    flat = np.atleast_1d(K)
    if method == "density":
        calls = _expect_call_density(co, flat)
    elif method == "survival":
        calls = _expect_call(co, flat)
    else:
        raise ValueError(f"method must be 'density' or 'survival', got {method!r}")
    if kind == "put":
        calls = calls - (vix_mean(co) - flat)
    elif kind != "call":
        raise DomainError(f"kind must be 'call' or 'put', got {kind!r}")
    out = VIX_SCALE * co.discount * calls
    return out.reshape(K.shape)[()] if K.ndim == 0 else out.reshape(K.shape)


def vix_future(p: BatesParams, expiry, tenor=VIX_TENOR, t0=0.0):
    """Model VIX future 100 E[VIX] (no discounting)."""
    return VIX_SCALE * vix_mean(vix_coefficients(p, expiry, tenor, t0))


def _node_params(p, slot, spec, N, method="exact"):
    rule = quadrature_rule(spec, N, method=method)
    try:
        return rule, [p.with_param(slot, t) for t in rule.nodes]
    except DomainError as exc:
        raise DomainError(f"quadrature node not admissible for slot {slot!r}: {exc}") from None


def vix_option_rand(K, p: BatesParams, slot, spec, N, expiry, tenor=VIX_TENOR, t0=0.0, kind="call",
                    method="survival"):
    """Randomized VIX option price: quadrature-weighted sum of node prices."""
    rule, plist = _node_params(p, slot, spec, N)
    return sum(w * vix_option_direct(K, q, expiry, tenor, t0, kind, method) for w, q in zip(rule.weights, plist))


def vix_future_rand(p, slot, spec, N, expiry, tenor=VIX_TENOR, t0=0.0):
    rule, plist = _node_params(p, slot, spec, N)
    return sum(w * vix_future(q, expiry, tenor, t0) for w, q in zip(rule.weights, plist))


def vix2_chf_rand(p, slot, spec, N, expiry, tenor=VIX_TENOR, t0=0.0) -> Vix2ChF:
    rule, plist = _node_params(p, slot, spec, N)
    return Vix2ChF([vix_coefficients(q, expiry, tenor, t0) for q in plist], rule.weights)


def vix_option_cos(K, chf: Vix2ChF, L=DEFAULT_L_VIX, n_terms=8192, tail=TAIL_MASS):
    """VIX call prices in VIX points by the cosine expansion of the VIX^2 density."""
    K = np.atleast_1d(np.asarray(K, dtype=float))
    if np.any(K <= 0):
        raise DomainError("VIX strikes must be positive")
    a, b = chf.truncation_range(L, tail)
    a = min(a, 0.99 * float(np.min(K)) ** 2)
    cfg = CosConfig(a, b, n_terms)
    H = hk_vix(K, a, b, np.arange(n_terms))
    return VIX_SCALE * cos_price(chf, H, cfg)


def vix_future_cos(chf: Vix2ChF, L=DEFAULT_L_VIX, n_terms=8192, tail=TAIL_MASS):
    """100 E[VIX] from a COS call price struck below every component's floor."""
    k_low = 0.5 * min(co.floor for co in chf.coeffs)
    if not k_low > 0:
        k_low = 0.5 * math.sqrt(max(chf.truncation_range(L, tail)[0], 1e-12))
    # below the floor the payoff is VIX - k_low almost surely; undo discounting
    disc = float(np.dot(chf.weights, [co.discount for co in chf.coeffs]))
    return float(vix_option_cos(np.array([k_low]), chf, L, n_terms, tail)[0] / disc + VIX_SCALE * k_low)
