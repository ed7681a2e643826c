"""Monte Carlo simulation of (randomized) Black-Scholes and Bates models.

Random streams: parameter draws come from ``SeedSequence(seed, spawn_key=(0,))``
and path increments for node/stream ``n`` from ``spawn_key=(1, n)``.  The
plain estimator uses stream 0, so switching randomization on or off never
shifts the Brownian increments.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError
from .models import BatesParams, BlackScholesParams
from .quadrature import quadrature_rule

SCHEMES = ("euler-full-truncation", "exact-cir")
BLOCK = 250_000


@dataclass(frozen=True)
class McConfig:
    paths: int = 100_000
    steps_per_year: int = 365
    scheme: str = "exact-cir"
    seed: int = 42
    antithetic: bool = False

    def __post_init__(self):
        if self.paths < 1:
            raise DomainError("paths must be positive")
        if self.steps_per_year < 1:
            raise DomainError("steps_per_year must be >= 1")
        if self.scheme not in SCHEMES:
            raise DomainError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.antithetic and self.paths % 2:
            raise DomainError("antithetic sampling needs an even number of paths")

    def n_steps(self, T):
        return max(1, int(math.ceil(T * self.steps_per_year - 1e-9)))


@dataclass
class TerminalSample:
    x: np.ndarray
    v: np.ndarray | None = None
    theta: np.ndarray | None = None


def theta_stream(seed):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))


def path_stream(seed, n=0):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1, n)))


def _normals(rng, shape, antithetic):
    if not antithetic:
        return rng.standard_normal(shape)
    half = rng.standard_normal((shape[0] // 2,) + tuple(shape[1:]))
    return np.concatenate([half, -half])


def _param_arrays(p, slot, theta, count):
    """Model parameters as per-path arrays (only the randomized slot varies)."""
    out = {k: np.full(count, float(v)) for k, v in p.to_dict().items()}
    if slot is not None:
        # admissibility of the extreme draws
        p.with_param(slot, float(np.min(theta)))
        p.with_param(slot, float(np.max(theta)))
        out[slot] = np.asarray(theta, dtype=float)
    return out


def _simulate_bs(q, T, count, rng, antithetic):
    z = _normals(rng, (count,), antithetic)
    sig = q["sigma"]
    return np.log(q["s0"]) + (q["r"] - 0.5 * sig * sig) * T + sig * math.sqrt(T) * z, None


def _jumps(rng, lam, mu, sig, dt, count):
    n = rng.poisson(lam * dt, count)
    jump = np.zeros(count)
    hit = n > 0
    if np.any(hit):
        nh = n[hit]
        jump[hit] = nh * mu[hit] + np.sqrt(nh) * sig[hit] * rng.standard_normal(nh.size)
    return jump


def _exact_cir_step(rng, v, kappa, vbar, gamma, dt):
    """Sample v(t+dt) | v(t) from the scaled noncentral chi-square law."""
    out = np.empty_like(v)
    sto = gamma > 0
    det = ~sto
    if np.any(det):
        # frozen-noise limit: deterministic relaxation towards vbar
        out[det] = vbar[det] + (v[det] - vbar[det]) * np.exp(-kappa[det] * dt)
    if np.any(sto):
        k, vb, g, vs = kappa[sto], vbar[sto], gamma[sto], v[sto]
        decay = np.where(k > 0, -np.expm1(-k * dt) / np.where(k > 0, k, 1.0), dt)
        c_bar = g * g / 4.0 * decay
        delta = 4.0 * k * vb / (g * g)
        nc = vs * np.exp(-k * dt) / c_bar
        pois = rng.poisson(0.5 * nc)
        shape = 0.5 * delta + pois
        draw = np.zeros_like(shape)
        pos = shape > 0
        draw[pos] = 2.0 * rng.gamma(shape[pos])
        out[sto] = c_bar * draw
    return out


def _simulate_bates(q, T, count, rng, cfg):
    n = cfg.n_steps(T)
    dt = T / n
    kappa, vbar, gamma, rho = q["kappa"], q["vbar"], q["gamma"], q["rho"]
    lam, mu_j, sig_j, r = q["lam"], q["mu_j"], q["sigma_j"], q["r"]
    comp = np.expm1(mu_j + 0.5 * sig_j * sig_j)
    x = np.log(q["s0"]).copy()
    v = q["v0"].copy()
    rho_c = np.sqrt(np.maximum(1.0 - rho * rho, 0.0))
    for _ in range(n):
        jump = _jumps(rng, lam, mu_j, sig_j, dt, count) if np.any(lam > 0) else 0.0
        if cfg.scheme == "euler-full-truncation":
            z = _normals(rng, (count, 2), cfg.antithetic)
            vp = np.maximum(v, 0.0)
            sq = np.sqrt(vp * dt)
            x = x + (r - lam * comp - 0.5 * vp) * dt + sq * (rho * z[:, 0] + rho_c * z[:, 1]) + jump
            v = v + kappa * (vbar - vp) * dt + gamma * sq * z[:, 0]
        else:
            v_new = _exact_cir_step(rng, v, kappa, vbar, gamma, dt)
            z = _normals(rng, (count,), cfg.antithetic)
            iv = 0.5 * (v + v_new) * dt
            with np.errstate(divide="ignore", invalid="ignore"):
                # int sqrt(v) dW_v recovered from the variance increment
                lev = np.where(gamma > 0, (v_new - v - kappa * vbar * dt + kappa * iv) / gamma, 0.0)
            # without vol-of-vol the variance path carries no Brownian noise
            resid = np.where(gamma > 0, rho_c * rho_c, 1.0)
            lev_w = np.where(gamma > 0, rho, 0.0)
            x = x + (r - lam * comp) * dt - 0.5 * iv + lev_w * lev + np.sqrt(resid * iv) * z + jump
            v = v_new
    return x, np.maximum(v, 0.0)


def simulate_terminal(model, T, cfg: McConfig, slot=None, spec=None, stream=0, count=None, theta=None):
    """Terminal log-prices (and variances for Bates) for one block of paths.

    With ``slot`` and ``spec`` given, each path uses its own parameter draw
    from ``spec``; pass ``theta`` to supply the draws explicitly.
    """
    if not T > 0:
        raise DomainError("T must be positive")
    count = cfg.paths if count is None else count
    if slot is not None and theta is None:
        if spec is None:
            raise DomainError("a randomized slot needs a randomizer spec")
        theta = spec.sample(theta_stream(cfg.seed), count)
    q = _param_arrays(model, slot, theta, count)
    rng = path_stream(cfg.seed, stream)
    if isinstance(model, BlackScholesParams):
        x, v = _simulate_bs(q, T, count, rng, cfg.antithetic)
    elif isinstance(model, BatesParams):
        x, v = _simulate_bates(q, T, count, rng, cfg)
    else:
        raise DomainError(f"unsupported model {type(model).__name__}")
    return TerminalSample(x, v, theta)


def call_payoff(strikes):
    K = np.atleast_1d(np.asarray(strikes, dtype=float))
    return lambda s: np.maximum(np.asarray(s)[:, None] - K[None, :], 0.0)


def put_payoff(strikes):
    K = np.atleast_1d(np.asarray(strikes, dtype=float))
    return lambda s: np.maximum(K[None, :] - np.asarray(s)[:, None], 0.0)


def vanilla_payoff(kind, strikes):
    if kind == "call":
        return call_payoff(strikes)
    if kind == "put":
        return put_payoff(strikes)
    raise DomainError(f"kind must be 'call' or 'put', got {kind!r}")


def price_v1(terminals, payoff, r, T):
    """Discounted sample mean of ``payoff(S(T))`` and its standard error."""
    x = terminals.x if isinstance(terminals, TerminalSample) else np.asarray(terminals)
    vals = np.asarray(payoff(np.exp(x)), dtype=float)
    m = vals.shape[0]
    df = math.exp(-r * T)
    mean = vals.mean(axis=0)
    se = vals.std(axis=0, ddof=1) / math.sqrt(m) if m > 1 else np.zeros_like(mean)
    return df * mean, df * se


def _accumulate(model, T, payoff, cfg, slot, theta_all, stream):
    """Blockwise sums and sums of squares of payoffs on one stream."""
    total = cfg.paths
    s1 = s2 = None
    rng = path_stream(cfg.seed, stream)
    done = 0
    while done < total:
        count = min(BLOCK, total - done)
        if cfg.antithetic and count % 2:
            count += 1
        theta = None if theta_all is None else theta_all[done:done + count]
        q = _param_arrays(model, slot, theta, count)
        if isinstance(model, BlackScholesParams):
            x, _ = _simulate_bs(q, T, count, rng, cfg.antithetic)
        else:
            x, _ = _simulate_bates(q, T, count, rng, cfg)
        vals = np.asarray(payoff(np.exp(x)), dtype=float)
        a, b = vals.sum(axis=0), (vals * vals).sum(axis=0)
        s1 = a if s1 is None else s1 + a
        s2 = b if s2 is None else s2 + b
        done += count
    return s1, s2, done


def _mean_se(s1, s2, m):
    mean = s1 / m
    var = np.maximum(s2 / m - mean * mean, 0.0) * m / max(m - 1, 1)
    return mean, np.sqrt(var / m)


def mc_price_v1(model, T, payoff, cfg: McConfig, slot=None, spec=None):
    """Plain estimator with a fresh parameter draw per path."""
    theta = spec.sample(theta_stream(cfg.seed), cfg.paths) if slot is not None else None
    s1, s2, m = _accumulate(model, T, payoff, cfg, slot, theta, 0)
    mean, se = _mean_se(s1, s2, m)
    df = math.exp(-model.r * T)
    return df * mean, df * se


@dataclass
class V2Result:
    price: np.ndarray
    se: np.ndarray
    node_prices: np.ndarray
    node_se: np.ndarray
    nodes: np.ndarray
    weights: np.ndarray


def price_v2(model, slot, spec, N, payoff, T, cfg: McConfig, paths_per_node=None):
    """Quadrature-split estimator: one simulation per node, weighted by the rule.

    Each node uses ``paths_per_node`` paths (default ``cfg.paths``).
    """
    rule = quadrature_rule(spec, N)
    per = cfg.paths if paths_per_node is None else int(paths_per_node)
    node_cfg = replace(cfg, paths=per)
    prices, ses = [], []
    for n, theta in enumerate(rule.nodes):
        try:
            node_model = model.with_param(slot, theta)
        except DomainError as exc:
            raise DomainError(f"quadrature node {theta!r} not admissible for slot {slot!r}: {exc}") from None
        s1, s2, m = _accumulate(node_model, T, payoff, node_cfg, None, None, n)
        mean, se = _mean_se(s1, s2, m)
        df = math.exp(-node_model.r * T)
        prices.append(df * mean)
        ses.append(df * se)
    prices, ses = np.array(prices), np.array(ses)
    w = np.asarray(rule.weights)
    price = np.tensordot(w, prices, axes=1)
    se = np.sqrt(np.tensordot(w * w, ses * ses, axes=1))
    return V2Result(price, se, prices, ses, np.asarray(rule.nodes), w)


def simulate_vix_terminal(model: BatesParams, expiry, cfg: McConfig, slot=None, spec=None, tenor=30.0 / 365.0,
                          stream=0, theta=None):
    """VIX (0-1 scale) at ``expiry`` from exact CIR terminal sampling of v(expiry)."""
    from .vix import vix_coefficients

    count = cfg.paths
    if slot is not None and theta is None:
        theta = spec.sample(theta_stream(cfg.seed), count)
    q = _param_arrays(model, slot, theta, count)
    rng = path_stream(cfg.seed, stream)
    v = _exact_cir_step(rng, q["v0"], q["kappa"], q["vbar"], q["gamma"], expiry)
    if slot is None:
        co = vix_coefficients(model, expiry, tenor)
        return np.sqrt(co.a * v + co.b + co.c)
    kappa = q["kappa"]
    a = np.where(kappa > 0, -np.expm1(-kappa * tenor) / np.where(kappa > 0, kappa * tenor, 1.0), 1.0)
    b = q["vbar"] * (1.0 - a)
    c = 2.0 * q["lam"] * (np.exp(q["mu_j"] + 0.5 * q["sigma_j"] ** 2) - q["mu_j"] - 1.0)
    return np.sqrt(a * v + b + c)
