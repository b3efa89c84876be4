"""The scaled entries Y_k = q^-k u_i^T Z_k u_j form a martingale with bounded steps.

We replay one trajectory and print each increment next to its allowed size,
then check E[Y_k | past] = Y_{k-1} exactly by summing over every history.
"""

import numpy as np

from randprod import RngState, finite_support, sym_eigen
from randprod.montecarlo import martingale_property_test, martingale_trace, run_trajectory
from randprod.theory import theory_params

atoms = [np.diag([1.0, 0.2]), np.array([[0.5, 0.4], [0.4, 0.9]]), np.diag([0.1, 1.5])]
e = finite_support(atoms, [0.3, 0.3, 0.4])
alpha = 0.2
s = sym_eigen(e.mean())
p = theory_params(e, alpha, spectrum=s)
print("lambda:", np.round(s.eigenvalues, 4), " c:", np.round(p.c, 4), " q:", np.round(p.q, 4))

traj = run_trajectory(e, alpha, 15, RngState(seed=3))
for i in range(2):
    for j in range(2):
        tr = martingale_trace(traj, s, p, i, j)
        print(f"\n(i, j) = ({i}, {j})   k   Y_k        |dY|      allowed")
        for k in range(1, 6):
            print(f"                 {k:3d}  {tr.Y[k]: .5f}  {abs(tr.increments[k - 1]):.5f}  {tr.diff_bounds[k - 1]:.5f}")
        print(f"                 max slack over 15 steps: {tr.max_slack:.4f}")

print()
for depth in (1, 2, 3, 4):
    r = martingale_property_test(e, alpha, s, 0, 1, depth, params=p)
    print(f"depth {depth}: {sum(3**h for h in range(depth + 1))} histories, max |E[Y_k|past] - Y_(k-1)| = {r:.1e}")
