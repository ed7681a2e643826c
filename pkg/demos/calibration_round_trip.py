"""Fit the two-stage calibration to a synthetic surface generated by known parameters.

Takes a minute or two.
"""
import time
from dataclasses import replace

import numpy as np

from randaffine.calibration import CalibrationOptions, ModelSpec, calibrate_two_stage, synthetic_surface
from randaffine.experiments import TABLE5

params, spec = TABLE5[1]
truth = ModelSpec(params, "gamma", spec, 5)
T1, T2 = 1 / 12, 2 / 12
F = truth.vix_future(T1)
surface = synthetic_surface(truth, {T1: np.linspace(80, 110, 13), T2: np.linspace(75, 115, 9)},
                            {T1: np.round(F * np.linspace(0.8, 1.6, 9), 4)})
start = replace(params, kappa=0.8, vbar=0.18, gamma=0.8, rho=-0.5, v0=0.03, lam=0.2, mu_j=-0.2, sigma_j=0.08)
opts = CalibrationOptions(stage2_free=("kappa", "vbar", "rho", "v0", "lam", "mu_j", "sigma_j"))

t0 = time.perf_counter()
res = calibrate_two_stage(surface, start, opts)
print(f"done in {time.perf_counter() - t0:.0f}s, {res.iterations} evaluations")
print(f"fitted randomizer {res.spec}  (true {spec})")
print(f"IV RMSE {res.rmse_vol_points():.2e} vol points")
