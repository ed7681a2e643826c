"""VIX futures and option smiles when the vol-of-vol is randomized."""
import numpy as np

from randaffine.experiments import TABLE5
from randaffine.vix import vix_future_rand, vix_option_rand

params, spec = TABLE5[1]
T = 1 / 12
for N in (1, 4, 8):
    F = vix_future_rand(params, "gamma", spec, N, T)
    K = F / 100 * np.linspace(0.8, 1.6, 5)
    prices = vix_option_rand(K, params, "gamma", spec, N, T)
    print(f"N={N}: future {F:.3f}, calls at {np.round(100 * K, 2)} -> {np.round(prices, 4)}")
