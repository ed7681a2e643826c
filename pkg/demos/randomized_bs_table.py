"""Max implied-vol error of the randomized Black-Scholes model against Monte Carlo.

Uses 1e6 paths so it finishes in a few seconds; pass a larger count to
sharpen the reference.
"""
import sys

from randaffine.experiments import TABLE2, TABLE3_EXPIRIES, table3

paths = int(sys.argv[1]) if len(sys.argv) > 1 else 1_000_000
for name in ("gamma", "uniform"):
    rows, _ = table3(TABLE2[name], range(2, 10), TABLE3_EXPIRIES, paths, 42)
    print(f"{name} randomizer, errors in vol points")
    print("     " + "".join(f"  N={N}" for N in range(2, 10)))
    for label in TABLE3_EXPIRIES:
        cells = [r.error for r in rows if r.label == label]
        print(f"{label:>4} " + "".join(f"{c:6.3f}" for c in cells))
    print()
