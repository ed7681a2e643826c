from dataclasses import replace

import numpy as np
import pytest

from randaffine.calibration import (PENALTY, CalibrationOptions, ModelSpec, Quote, QuoteSurface, _run_stage,
                                    atm_weights, calibrate_two_stage, load_quotes, objective, residuals,
                                    save_quotes, synthetic_surface)
from randaffine.errors import DomainError, InvariantViolation
from randaffine.experiments import TABLE5
from randaffine.randomizers import Uniform

T1, T2 = 1 / 12, 2 / 12
ROW1, ROW1_SPEC = TABLE5[1]
ROW3, ROW3_SPEC = TABLE5[3]
START = dict(kappa=0.8, vbar=0.18, gamma=0.8, rho=-0.5, v0=0.03, lam=0.2, mu_j=-0.2, sigma_j=0.08)


def make_surface(model):
    index = {T1: np.linspace(80, 110, 13), T2: np.linspace(75, 115, 9)}
    F = model.vix_future(T1)
    return synthetic_surface(model, index, {T1: np.round(F * np.linspace(0.8, 1.6, 9), 4)})


@pytest.fixture(scope="module")
def row1():
    model = ModelSpec(ROW1, "gamma", ROW1_SPEC, 5)
    surface = make_surface(model)
    forwards = {T1: model.vix_future(T1)}
    return model, surface, atm_weights(surface, forwards)


CSV10 = """# spot=100.0
# rate=0.01
# valuation_date=2024-01-02
underlying,expiry,strike,mid_iv,bid_iv,ask_iv
index,0.0833,90,0.25,0.24,0.26
index,0.0833,95,0.22,,
index,0.0833,100,0.2,0.19,0.21
index,0.0833,105,0.19,0.18,0.2
index,0.0833,110,0.19,0.18,0.2
index,0.1667,90,0.24,0.23,0.25
index,0.1667,100,0.2,0.19,0.21
index,0.1667,110,0.19,0.18,0.2
vix,0.0833,20,0.9,0.85,0.95
vix,0.0833,25,1.0,0.95,1.05
"""


def test_load_ten_rows(tmp_path):
    path = tmp_path / "q.csv"
    path.write_text(CSV10)
    surface = load_quotes(path)
    assert len(surface) == 10
    assert surface.spot == 100.0 and surface.rate == 0.01 and surface.valuation_date == "2024-01-02"
    assert surface.quotes[1].bid_iv is None
    assert surface.expiries("index") == [0.0833, 0.1667]
    assert len(surface.select("vix")) == 2
    assert load_quotes(path, spot=4800.0).spot == 4800.0


def test_bid_above_ask_names_line(tmp_path):
    path = tmp_path / "q.csv"
    path.write_text(CSV10.replace("index,0.0833,100,0.2,0.19,0.21", "index,0.0833,100,0.2,0.22,0.21"))
    with pytest.raises(InvariantViolation, match=r"q\.csv:7"):
        load_quotes(path)


def test_duplicate_rejected(tmp_path):
    path = tmp_path / "q.csv"
    path.write_text(CSV10 + "index,0.0833,100,0.21,,\n")
    with pytest.raises(InvariantViolation, match="duplicate"):
        load_quotes(path)
    with pytest.raises(InvariantViolation, match="duplicate"):
        QuoteSurface([Quote("index", 0.1, 100, 0.2), Quote("index", 0.1, 100, 0.3)])


@pytest.mark.parametrize("bad", ["index,0.0833,100,-0.2,,", "bond,0.0833,100,0.2,,", "index,0,100,0.2,,",
                                 "index,0.0833,abc,0.2,,", "index,0.0833,100,0.2,0.1,0.15"])
def test_malformed_rows(tmp_path, bad):
    path = tmp_path / "q.csv"
    path.write_text("underlying,expiry,strike,mid_iv,bid_iv,ask_iv\n" + bad + "\n")
    with pytest.raises(InvariantViolation, match=r"q\.csv:2"):
        load_quotes(path)


def test_missing_header_column(tmp_path):
    path = tmp_path / "q.csv"
    path.write_text("underlying,expiry,strike\nindex,0.1,100\n")
    with pytest.raises(InvariantViolation, match="mid_iv"):
        load_quotes(path)


def test_save_load_round_trip(tmp_path, row1):
    _, surface, _ = row1
    path = tmp_path / "s.csv"
    save_quotes(surface, path)
    back = load_quotes(path)
    assert back.quotes == surface.quotes and back.spot == surface.spot and back.rate == surface.rate


def test_objective_zero_at_truth(row1):
    model, surface, w = row1
    assert objective(model.params, model.spec, surface, w) < 1e-10


def test_atm_weights_one_per_group(row1):
    _, surface, w = row1
    assert np.sum(w == 5.0) == 3 and np.sum(w == 1.0) == len(surface) - 3
    atm = [q for q, wi in zip(surface.quotes, w) if wi == 5.0]
    assert {(q.underlying, q.expiry) for q in atm} == {("index", T1), ("index", T2), ("vix", T1)}
    assert all(q.strike == 100.0 for q in atm if q.underlying == "index")


def test_doubling_atm_weight_changes_only_atm_terms(row1):
    model, surface, w5 = row1
    forwards = {T1: model.vix_future(T1)}
    w10 = atm_weights(surface, forwards, w_atm=10.0)
    atm = w5 != 1.0
    assert np.array_equal(w5[~atm], w10[~atm]) and np.all(w10[atm] == 2 * w5[atm])
    off = ModelSpec(replace(ROW1, rho=-0.6), "gamma", ROW1_SPEC, 5)
    r = residuals(off, surface)
    f5 = objective(off.params, off.spec, surface, w5) ** 2 * w5.sum()
    f10 = objective(off.params, off.spec, surface, w10) ** 2 * w10.sum()
    assert f10 - f5 == pytest.approx(np.sum(5.0 * r[atm] ** 2), rel=1e-10)


def test_row1_beats_row3_on_row1_surface(row1):
    _, surface, w = row1
    assert objective(ROW1, ROW1_SPEC, surface, w) < objective(replace(ROW3, r=ROW1.r), ROW3_SPEC, surface, w)


def test_truth_is_local_minimum(row1):
    model, surface, w = row1
    rng = np.random.default_rng(42)
    names = ["kappa", "vbar", "gamma", "rho", "v0", "lam", "mu_j", "sigma_j"]
    at_truth = objective(ROW1, ROW1_SPEC, surface, w)
    for _ in range(100):
        f = 1 + 0.01 * rng.choice([-1.0, 1.0], len(names) + 2)
        p = replace(ROW1, **{n: getattr(ROW1, n) * fi for n, fi in zip(names, f)})
        spec = Uniform(ROW1_SPEC.a_hat * f[-2], ROW1_SPEC.b_hat * f[-1])
        assert objective(p, spec, surface, w) >= at_truth


def test_pricing_failure_is_penalized(row1):
    _, surface, w = row1
    # kappa * vbar = 0 has no VIX density; the objective must not raise
    assert objective(replace(ROW1, vbar=0.0), ROW1_SPEC, surface, w) == PENALTY


def test_needs_vix_and_index_quotes(row1):
    _, surface, _ = row1
    index_only = QuoteSurface(surface.select("index"), surface.spot, surface.rate)
    with pytest.raises(DomainError, match="VIX"):
        calibrate_two_stage(index_only, replace(ROW1, **START))
    vix_only = QuoteSurface(surface.select("vix"), surface.spot, surface.rate)
    with pytest.raises(DomainError, match="index"):
        calibrate_two_stage(vix_only, replace(ROW1, **START))


def test_stage1_deterministic(row1):
    _, surface, _ = row1
    w = atm_weights(surface)
    template = ModelSpec(replace(ROW1, **START), "gamma", None, 5)
    names = ["kappa", "vbar", "gamma", "rho", "v0", "lam", "mu_j", "sigma_j"]
    a = _run_stage(names, template, surface, w, False, 60, "cos", 1e-7, 1e-12)
    b = _run_stage(names, template, surface, w, False, 60, "cos", 1e-7, 1e-12)
    assert a.model == b.model and a.objective == b.objective and a.evaluations == b.evaluations <= 60


def test_short_budget_flags_and_reports_best(row1):
    _, surface, _ = row1
    opts = CalibrationOptions(max_evals=40)
    res = calibrate_two_stage(surface, replace(ROW1, **START), opts)
    assert not res.converged
    assert res.stage1.evaluations <= 40 and res.stage2.evaluations <= 40
    again = objective(res.params, res.spec, surface, res.weights)
    assert abs(res.objective - again) < 1e-12
    row = res.table_row()
    assert set(row) >= {"kappa", "v0", "vbar", "rho", "gamma_a_hat", "gamma_b_hat"}
    assert 0 < res.spec.a_hat < res.spec.b_hat


@pytest.mark.slow
def test_degenerate_gamma_round_trip():
    truth = ModelSpec(replace(ROW1, gamma=0.6), "gamma", None, 5)
    surface = make_surface(truth)
    res = calibrate_two_stage(surface, replace(ROW1, **START))
    assert res.spec.a_hat == pytest.approx(0.6, rel=0.05)
    assert res.spec.b_hat == pytest.approx(0.6, rel=0.05)
