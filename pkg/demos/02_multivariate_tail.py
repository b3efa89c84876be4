"""Tail of the deviation for a 4x4 product driven by rank-one row samples.

The factors are a a^T with a drawn uniformly from eight fixed unit rows.  The
operator-norm tail is estimated by simulation and compared to the bound; the
Frobenius tail is printed alongside, since it always sits above the operator one.
"""

import time

import numpy as np

from randprod import sym_eigen
from randprod.montecarlo import default_grid, estimate_tail
from randprod.sgd import synthetic_problem
from randprod.theory import theory_params

e = synthetic_problem(4, 8, seed=2024).ensemble()
alpha = 1.0 / (4.0 * e.radius())
s = sym_eigen(e.mean())
p = theory_params(e, alpha, spectrum=s)
print("mean eigenvalues:", np.round(s.eigenvalues, 4))
print("c:", np.round(p.c, 3), f" sigma2={p.sigma2:.2f}  alpha={alpha:.4f}")

n, trials = 20, 20_000
grid = default_grid(11)
start = time.perf_counter()
op = estimate_tail(e, alpha, n, trials, grid, seed=1, params=p, spectrum=s)
fro = estimate_tail(e, alpha, n, trials, grid, seed=1, norm_kind="fro", params=p, spectrum=s)
print(f"\n{trials} trials of length {n} per norm in {time.perf_counter() - start:.1f}s\n")
print("    t    op tail  fro tail     bound")
for k, t in enumerate(grid):
    print(f"  {t:4.1f}  {op.tail[k]:8.4f}  {fro.tail[k]:8.4f}  {op.bound[k]:8.4f}")

# The bound stays at 1 over [0, 1] here: with d=4 the 2 d^2 prefactor is 32
# and sigma2 is large, so the inequality holds but says nothing at this size.

# Two thread counts, same counters, same bits.
a = estimate_tail(e, alpha, 50, 20_000, grid, seed=9, threads=1)
b = estimate_tail(e, alpha, 50, 20_000, grid, seed=9, threads=4)
print("\nthreads 1 vs 4 identical:", np.array_equal(a.counts, b.counts))
