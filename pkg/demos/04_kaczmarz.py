"""SGD on a consistent least-squares problem is a random matrix product in disguise.

With b = A x*, one step x <- x - alpha a (a.x - b_j) maps the error e to
(I - alpha a a^T) e.  So after n steps e_n = Z_n e_0, checked here along a
shared random path, followed by the high-probability radius this implies.
"""

import numpy as np

from randprod.sgd import (
    certificate,
    certificate_coverage,
    error_propagation_check,
    make_problem,
    sgd_run,
    synthetic_problem,
)

p = synthetic_problem(dim=4, m=12, seed=9)
alpha = 0.25
x0 = np.zeros(4)
xs, picks = sgd_run(p, x0, alpha, 200, seed=4)
err = np.linalg.norm(xs - p.x_star, axis=1)
print("rows picked first:", picks[:12])
print("error |x_k - x*| at k = 0, 50, 100, 200:", np.round(err[[0, 50, 100, 200]], 6))
print(f"max_k |e_k - Z_k e_0| = {error_propagation_check(p, x0, alpha, 200, seed=4):.1e}")

for delta in (0.1, 0.01):
    cert = certificate(p, alpha, 200, delta)
    flag = " (vacuous: t >= 1)" if cert.vacuous else ""
    print(f"delta={delta}: |e_n|/|e_0| <= {cert.mean_norm:.2e} + t = {cert.radius:.3f}{flag}")

frac, t = certificate_coverage(p, alpha, 200, 0.1, runs=2000, seed=1)
print(f"runs with |Z_n - E Z_n| >= t={t:.2f}: {frac:.4f}")

# In one dimension, with rows of unequal length, the certificate drops below 1.
q = make_problem([[0.5], [1.0], [1.4]], [2.0])
cert = certificate(q, 0.2, 30, 0.1)
print(f"\nd=1: sigma2={cert.sigma2:.3f}, t={cert.t:.3f}, radius={cert.radius:.3f}")
