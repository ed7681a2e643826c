import math
from dataclasses import replace

import numpy as np
import pytest
from scipy import integrate

from randaffine.errors import DomainError
from randaffine.experiments import TABLE5
from randaffine.montecarlo import McConfig, simulate_terminal, simulate_vix_terminal
from randaffine.quadrature import quadrature_rule
from randaffine.randomizers import Degenerate
from randaffine.special import ncchi2_pdf
from randaffine.vix import (VIX_TENOR, Vix2ChF, vix2_chf, vix2_chf_rand, vix_cdf, vix_coefficients, vix_future,
                            vix_future_cos, vix_future_rand, vix_mean, vix_option_cos, vix_option_direct,
                            vix_option_rand, vix_pdf)

ROW1, ROW1_SPEC = TABLE5[1]
T1 = 1 / 12


def row1_at(gamma):
    return replace(ROW1, gamma=gamma)


def test_no_jumps_no_c():
    co = vix_coefficients(replace(ROW1, lam=0.0), T1)
    assert co.c == 0.0
    assert vix_coefficients(ROW1, T1).c > 0


def test_small_kappa_limit():
    co = vix_coefficients(replace(ROW1, kappa=1e-12), T1)
    assert co.a == pytest.approx(1.0, abs=1e-12)
    assert co.b == pytest.approx(0.0, abs=1e-12)


def test_coefficients_invariants():
    co = vix_coefficients(ROW1, T1)
    assert 0 < co.a <= 1 and co.b >= 0 and co.c >= 0
    with pytest.raises(DomainError):
        vix_coefficients(ROW1, 0.0)
    with pytest.raises(DomainError):
        vix_coefficients(replace(ROW1, gamma=0.0), T1)


def test_vix_squared_matches_log_contract_monte_carlo():
    # VIX^2 at t = 0 is -(2/tenor) E[log S(tenor)/S(0)] when r = 0; compare with a v0 + b + c
    p = replace(ROW1, r=0.0)
    a = vix_coefficients(p, T1)  # a, b, c do not depend on the expiry
    target = a.a * p.v0 + a.b + a.c
    cfg = McConfig(paths=400_000, seed=42)
    xs = simulate_terminal(p, VIX_TENOR, cfg).x
    y = -2.0 / VIX_TENOR * (xs - math.log(p.s0))
    se = y.std(ddof=1) / math.sqrt(y.size)
    assert abs(y.mean() - target) < 4 * se


def test_pdf_normalizes():
    co = vix_coefficients(ROW1, T1)
    lo = co.floor
    mass = integrate.quad(lambda x: vix_pdf(x, co), lo, lo + 2.0, limit=400, epsabs=1e-12, epsrel=1e-11,
                          points=[math.sqrt(co.mean_vix2)])[0]
    assert abs(mass - 1.0) < 1e-8


def test_cdf_matches_integrated_pdf():
    co = vix_coefficients(ROW1, T1)
    for x in (co.floor + 0.02, math.sqrt(co.mean_vix2), 0.45):
        integ = integrate.quad(lambda t: vix_pdf(t, co), co.floor, x, limit=400, epsabs=1e-13)[0]
        assert vix_cdf(x, co) == pytest.approx(integ, abs=1e-8)


def test_pdf_zero_below_floor():
    co = vix_coefficients(ROW1, T1)
    assert vix_pdf(0.5 * co.floor, co) == 0.0
    assert vix_cdf(0.5 * co.floor, co) == 0.0


def test_chf_unit_and_mean_identity():
    co = vix_coefficients(ROW1, T1)
    assert vix2_chf(0.0, co) == pytest.approx(1.0)
    h = 1e-4
    deriv = (vix2_chf(h, co) - vix2_chf(-h, co)) / (2 * h)
    assert abs((-1j * deriv).real - co.mean_vix2) < 1e-6
    assert co.mean_vix2 == pytest.approx(co.a * co.c_bar * (co.delta + co.kappa_bar) + co.b + co.c, rel=1e-15)


def test_chf_inversion_reproduces_density():
    # chi-square degree above 2: bounded, smooth density for pointwise inversion
    co = vix_coefficients(row1_at(0.3), T1)
    assert co.delta > 2
    a_, b_ = Vix2ChF([co]).truncation_range()
    n = 8192
    k = np.arange(n)
    w = k * math.pi / (b_ - a_)
    coef = (vix2_chf(w, co) * np.exp(-1j * w * a_)).real * 2 / (b_ - a_)
    coef[0] *= 0.5
    y = np.linspace(co.alpha2 + 0.01, co.mean_vix2 + 3 * math.sqrt(co.var_vix2), 40)
    dens = np.cos(np.outer(y - a_, w)) @ coef
    exact = co.alpha1 * ncchi2_pdf(co.alpha1 * (y - co.alpha2), co.delta, co.kappa_bar)
    assert np.max(np.abs(dens - exact)) < 1e-6 * max(1.0, np.max(exact))


def test_low_strike_gives_mean():
    co = vix_coefficients(ROW1, T1)
    mean = vix_mean(co)
    dens_mean = integrate.quad(lambda x: x * vix_pdf(x, co), co.floor, co.floor + 2, limit=400, epsabs=1e-13,
                               points=[math.sqrt(co.mean_vix2)])[0]
    assert mean == pytest.approx(dens_mean, rel=1e-8)
    price = vix_option_direct(np.array([1e-6]), ROW1, T1)[0]
    assert price == pytest.approx(100 * (dens_mean - 1e-6), rel=1e-8)
    assert vix_future(ROW1, T1) == pytest.approx(100 * mean, rel=1e-12)


def test_huge_strike_worthless():
    assert vix_option_direct(np.array([5.0]), ROW1, T1)[0] == 0.0


@pytest.mark.parametrize("method", ["survival", "density"])
def test_monotone_convex_in_strike(method):
    K = np.linspace(0.12, 0.45, 23)
    c = vix_option_direct(K, ROW1, T1, method=method)
    assert np.all(np.diff(c) < 0)
    assert np.all(np.diff(c, 2) > -1e-9)


def test_survival_and_density_agree():
    K = np.linspace(0.1, 0.4, 7)
    for g in (0.3, 1.155, 2.2):
        p = row1_at(g)
        s = vix_option_direct(K, p, T1, method="survival")
        d = vix_option_direct(K, p, T1, method="density")
        assert np.max(np.abs(s - d)) < 1e-7


def test_put_call_parity():
    K = np.array([0.15, 0.2, 0.3])
    c = vix_option_direct(K, ROW1, T1)
    p = vix_option_direct(K, ROW1, T1, kind="put")
    assert np.allclose(c - p, vix_future(ROW1, T1) - 100 * K, atol=1e-9)


@pytest.mark.parametrize("gamma", [0.3, 1.155, 2.0])
def test_cos_matches_direct(gamma):
    p = row1_at(gamma)
    fwd = vix_future(p, T1) / 100
    K = fwd * np.linspace(0.5, 1.5, 11)
    K = K[K > vix_coefficients(p, T1).floor]
    direct = vix_option_direct(K, p, T1)
    cos = vix_option_cos(K, Vix2ChF([vix_coefficients(p, T1)]))
    live = direct > 1e-6
    assert np.all(np.abs(cos[live] / direct[live] - 1) < 1e-3)


def test_cos_future_matches_direct():
    chf = vix2_chf_rand(ROW1, "gamma", ROW1_SPEC, 5, T1)
    assert vix_future_cos(chf) == pytest.approx(vix_future_rand(ROW1, "gamma", ROW1_SPEC, 5, T1), rel=1e-5)


def test_randomized_degenerate_is_direct():
    K = np.array([0.15, 0.2, 0.25])
    assert np.allclose(vix_option_rand(K, ROW1, "gamma", Degenerate(1.155), 3, T1), vix_option_direct(K, ROW1, T1),
                       rtol=1e-14, atol=0)


def test_randomized_is_convex_combination():
    K = np.array([0.15, 0.2, 0.25, 0.3])
    rule = quadrature_rule(ROW1_SPEC, 6)
    nodes = np.array([vix_option_direct(K, row1_at(t), T1) for t in rule.nodes])
    rand = vix_option_rand(K, ROW1, "gamma", ROW1_SPEC, 6, T1)
    assert np.all(rand >= nodes.min(axis=0) - 1e-12) and np.all(rand <= nodes.max(axis=0) + 1e-12)


def test_randomized_cos_matches_randomized_direct():
    fwd = vix_future_rand(ROW1, "gamma", ROW1_SPEC, 6, T1) / 100
    K = fwd * np.linspace(0.8, 1.5, 8)
    chf = vix2_chf_rand(ROW1, "gamma", ROW1_SPEC, 6, T1)
    direct = vix_option_rand(K, ROW1, "gamma", ROW1_SPEC, 6, T1)
    assert np.max(np.abs(vix_option_cos(K, chf) / direct - 1)) < 1e-3


def test_randomized_against_node_monte_carlo():
    N = 8
    rule = quadrature_rule(ROW1_SPEC, N)
    K = np.array([0.18, 0.22, 0.28])
    est, var = np.zeros(3), np.zeros(3)
    for n, (w, t) in enumerate(zip(rule.weights, rule.nodes)):
        vix = simulate_vix_terminal(row1_at(t), T1, McConfig(paths=1_000_000, seed=42), stream=n)
        pay = 100 * np.maximum(vix[:, None] - K[None, :], 0.0)
        est += w * pay.mean(axis=0)
        var += w * w * pay.var(axis=0, ddof=1) / pay.shape[0]
    analytic = vix_option_rand(K, ROW1, "gamma", ROW1_SPEC, N, T1)
    assert np.all(np.abs(est - analytic) < 4 * np.sqrt(var))


def test_vix_cos_domain():
    with pytest.raises(DomainError):
        vix_option_cos(np.array([0.0]), Vix2ChF([vix_coefficients(ROW1, T1)]))
