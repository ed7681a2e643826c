"""Fourier-cosine (COS) pricing of European and VIX options."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chf import CharacteristicFn, PiecewiseChF, heston_coefficients
from .errors import DomainError
from .models import BatesParams
from .special import fresnel

DEFAULT_TERMS = 512
DEFAULT_L = 10.0
DEFAULT_L_VIX = 12.0
MAX_TERMS = 2 ** 17


@dataclass(frozen=True)
class CosConfig:
    a: float
    b: float
    n_terms: int = DEFAULT_TERMS
    rate: float = 0.0
    tau: float = 1.0

    def __post_init__(self):
        if not self.a < self.b:
            raise DomainError(f"truncation range needs a < b, got [{self.a}, {self.b}]")
        if self.n_terms < 16:
            raise DomainError(f"need at least 16 expansion terms, got {self.n_terms}")

    @property
    def frequencies(self):
        return np.arange(self.n_terms) * math.pi / (self.b - self.a)


def cos_price(chf, hk, cfg: CosConfig):
    """Primed cosine sum with the ChF discounted once.

    ``hk`` is either an array of coefficients (last axis over k) or a
    callable ``hk(a, b, k)``.  If ``chf`` has no ``discounted`` method it is
    discounted with ``exp(-rate * tau)`` from ``cfg``.
    """
    k = np.arange(cfg.n_terms)
    u = cfg.frequencies
    H = hk(cfg.a, cfg.b, k) if callable(hk) else np.asarray(hk, dtype=float)
    if hasattr(chf, "discounted"):
        phi = chf.discounted(u)
    else:
        phi = math.exp(-cfg.rate * cfg.tau) * np.asarray(chf(u), dtype=complex)
    terms = (phi * np.exp(-1j * u * cfg.a)).real
    terms[0] *= 0.5
    return H @ terms


def _chi_psi(a, b, c, d, k):
    """Cosine coefficients of e^y and 1 over [c, d] inside [a, b]."""
    c = np.asarray(c, dtype=float)[..., None]
    d = np.asarray(d, dtype=float)[..., None]
    w = k * math.pi / (b - a)
    ed, ec = np.exp(d), np.exp(c)
    cd, cc = np.cos(w * (d - a)), np.cos(w * (c - a))
    sd, sc_ = np.sin(w * (d - a)), np.sin(w * (c - a))
    chi = (cd * ed - cc * ec + w * (sd * ed - sc_ * ec)) / (1.0 + w * w)
    with np.errstate(divide="ignore", invalid="ignore"):
        psi = np.where(k == 0, d - c, (sd - sc_) / np.where(k == 0, 1.0, w))
    return chi, psi


def hk_vanilla(kind, K, a, b, k):
    """Cosine coefficients of the call or put payoff in y = log S on [a, b].

    Returns an array of shape ``K.shape + (len(k),)``.
    """
    K = np.asarray(K, dtype=float)
    k = np.asarray(k)
    logk = np.log(K)
    scale = 2.0 / (b - a)
    if kind == "call":
        lo = np.clip(logk, a, b)
        chi, psi = _chi_psi(a, b, lo, np.full_like(lo, b), k)
        H = scale * (chi - K[..., None] * psi)
        return np.where((logk >= b)[..., None], 0.0, H)
    if kind == "put":
        hi = np.clip(logk, a, b)
        chi, psi = _chi_psi(a, b, np.full_like(hi, a), hi, k)
        H = scale * (K[..., None] * psi - chi)
        return np.where((logk <= a)[..., None], 0.0, H)
    raise DomainError(f"kind must be 'call' or 'put', got {kind!r}")


def hk_vix(K, a, b, k):
    """Cosine coefficients of max(sqrt(y) - K, 0) on [a, b], with y = VIX^2.

    Requires ``a < K^2 < b`` (when ``K^2 >= b`` the coefficients vanish).
    """
    K = np.asarray(K, dtype=float)
    k = np.asarray(k)
    if a < 0:
        raise DomainError(f"VIX^2 range must be nonnegative, got a={a}")
    if np.any(K * K <= a):
        raise DomainError("hk_vix needs a < K^2; lower the range start a below the smallest squared strike")
    Kc = np.minimum(K, math.sqrt(b))[..., None]
    scale = 2.0 / (b - a)
    kk = np.where(k == 0, 1, k)
    k1 = kk * math.pi / (b - a)
    k2 = a * k1
    rb = math.sqrt(b)
    # change of variables x = sqrt(y), then integration by parts
    cb, sb = fresnel(rb * np.sqrt(k1))
    ck, sk = fresnel(Kc * np.sqrt(k1))
    a3 = b * k1 - k2
    a4 = Kc * Kc * k1 - k2
    I1 = (np.sin(k2) * (cb - ck) + np.cos(k2) * (sk - sb)) / k1 ** 1.5 + (rb * np.sin(a3) - Kc * np.sin(a4)) / k1
    I2 = (np.sin(a3) - np.sin(a4)) / k1
    I1_0 = 2.0 / 3.0 * (b ** 1.5 - Kc ** 3)
    I2_0 = b - Kc * Kc
    I1 = np.where(k == 0, I1_0, I1)
    I2 = np.where(k == 0, I2_0, I2)
    return scale * (I1 - Kc * I2)


def _log_chf_exponent(c: CharacteristicFn, u):
    """log phi(u) - iu x0 for a conditional ChF, valid for complex u near 0."""
    u = np.asarray(u, dtype=complex)
    if isinstance(c, PiecewiseChF):
        return np.log(c(u)) - 1j * u * c.params_list[0].x0
    p = c.params
    if isinstance(p, BatesParams):
        A, C = heston_coefficients(u, c.tau, p.kappa, p.vbar, p.gamma, p.rho, p.r, p.lam, p.mu_j, p.sigma_j)
        return C * p.v0 + A
    var = p.sigma ** 2 * c.tau
    return 1j * u * (p.r * c.tau - 0.5 * var) - 0.5 * var * u * u


def cumulants(c: CharacteristicFn, radius=0.25, points=64):
    """First, second and fourth cumulant of log S(T) for a conditional ChF.

    Computed from Taylor coefficients of the log-ChF with a Cauchy integral on
    a small circle around the origin.
    """
    p = c.params
    if not isinstance(p, BatesParams) and not isinstance(c, PiecewiseChF):
        var = p.sigma ** 2 * c.tau
        return p.x0 + (p.r - 0.5 * p.sigma ** 2) * c.tau, var, 0.0
    theta = 2.0 * math.pi * np.arange(points) / points
    z = radius * np.exp(1j * theta)
    vals = _log_chf_exponent(c, z)
    coef = np.fft.fft(vals) / points / radius ** np.arange(points)
    # log phi = sum kappa_n (iu)^n / n!
    kappa = [(coef[n] * math.factorial(n) / (1j ** n)).real for n in range(5)]
    x0 = c.params_list[0].x0 if isinstance(c, PiecewiseChF) else p.x0
    return x0 + kappa[1], kappa[2], kappa[4]


def truncation_range(chf, L=DEFAULT_L):
    """Envelope ``[a, b]`` of the cumulant ranges of all mixture components."""
    lo, hi = math.inf, -math.inf
    for _, comp in chf.components():
        c1, c2, c4 = cumulants(comp)
        half = L * math.sqrt(max(c2, 0.0) + math.sqrt(abs(c4)))
        lo, hi = min(lo, c1 - half), max(hi, c1 + half)
    if not hi > lo:
        raise DomainError("degenerate truncation range; the model has no variance")
    return lo, hi


def auto_terms(chf, a, b, floor=DEFAULT_TERMS, cap=MAX_TERMS):
    """Number of terms resolving the narrowest mixture component on [a, b]."""
    s_min = min(math.sqrt(max(cumulants(c)[1], 1e-300)) for _, c in chf.components())
    need = 9.0 * (b - a) / (math.pi * s_min)
    n = floor
    while n < need and n < cap:
        n *= 2
    return n


def price_vanilla(chf, strikes, kind="call", L=DEFAULT_L, n_terms=None):
    """European option prices from a (possibly randomized) log-price ChF.

    Calls are obtained from COS put prices by put-call parity, which avoids
    the exponential growth of call coefficients on wide ranges.
    """
    strikes = np.asarray(strikes, dtype=float)
    if np.any(strikes <= 0):
        raise DomainError("strikes must be positive")
    a, b = truncation_range(chf, L)
    n = n_terms or auto_terms(chf, a, b)
    cfg = CosConfig(a, b, n, tau=chf.tau)
    puts = cos_price(chf, hk_vanilla("put", strikes, a, b, np.arange(n)), cfg)
    if kind == "put":
        return puts
    if kind != "call":
        raise DomainError(f"kind must be 'call' or 'put', got {kind!r}")
    forward_disc = chf.discounted(np.array([-1j]))[0].real
    bond = chf.discounted(np.array([0.0]))[0].real
    return puts + forward_disc - strikes * bond
