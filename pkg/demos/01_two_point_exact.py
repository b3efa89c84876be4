"""A one-dimensional product small enough to enumerate exactly.

Each factor is 1 - 0.2 X with X equal to 0 or 2 with equal odds, so Z_n is
0.6^K where K counts the draws of 2.  Summing over all 2^n paths gives the
exact tail of |Z_n - E Z_n|, which we set beside the exponential bound.
"""

import numpy as np

from randprod import finite_support
from randprod.montecarlo import brute_force_tail, estimate_tail
from randprod.theory import theory_params

e = finite_support([[[0.0]], [[2.0]]], [0.5, 0.5])
alpha = 0.2
p = theory_params(e, alpha)
print(f"lambda={p.lambdas[0]}, r={p.r}, c={p.c[0]}, sigma2={p.sigma2:.6f}")
print(f"step-size window: 0 < alpha < {1 / (2 * p.r)}\n")

grid = np.linspace(0, 1, 11)
for n in (4, 8, 12):
    exact = brute_force_tail(e, alpha, n, grid, params=p)
    print(f"n={n}: 2^{n} = {2**n} paths")
    print("     t   exact tail      bound")
    for t, a, b in zip(grid, exact.tail, exact.bound):
        print(f"  {t:4.1f}   {a:10.6f} {b:10.6f}")
    print()

# Monte Carlo lands on the exact answer within its 99% interval.
mc = estimate_tail(e, alpha, 12, 100_000, grid, seed=1, params=p)
exact = brute_force_tail(e, alpha, 12, grid, params=p)
print("n=12, 1e5 trials:     t   exact    [ci_low, ci_high]")
for k, t in enumerate(grid):
    print(f"                  {t:4.1f}  {exact.tail[k]:.4f}   [{mc.ci_low[k]:.4f}, {mc.ci_high[k]:.4f}]")
