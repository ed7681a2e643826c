"""Gauss rules for the built-in randomizers and how many moments they match."""
import numpy as np

from randaffine.quadrature import quadrature_rule
from randaffine.randomizers import Gamma, Normal, ScaledNoncentralChiSquare, Uniform

specs = [Uniform(0.1, 0.45), Normal(0.2, 0.05), Gamma(2.55, 0.1), ScaledNoncentralChiSquare(0.088, 0.1662, 3.2417)]

for spec in specs:
    print(spec)
    for N in (2, 4, 6):
        rule = quadrature_rule(spec, N)
        x, w = np.asarray(rule.nodes), np.asarray(rule.weights)
        # a rule with N nodes integrates polynomials up to degree 2N-1 exactly
        worst = max(abs(np.dot(w, x ** k) / spec.raw_moment(k) - 1) for k in range(2 * N))
        print(f"  N={N}: nodes {np.round(x, 4)}  max moment rel err {worst:.1e}")
