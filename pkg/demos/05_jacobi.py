"""The cyclic Jacobi solver behind every spectrum in the package.

It works on stacks of matrices at once, which is how the batched norm checks
stay cheap; results are sorted in descending order with eigenvectors in columns.
"""

import time

import numpy as np

from randprod.linalg import jacobi_eigh, operator_norm

rng = np.random.default_rng(0)
a = rng.standard_normal((5, 5))
a = a + a.T
w, v = jacobi_eigh(a)
print("eigenvalues:", np.round(w, 6))
print("numpy      :", np.round(np.linalg.eigvalsh(a)[::-1], 6))
print(f"|A - V diag(w) V^T| = {np.linalg.norm(v * w @ v.T - a):.1e}")
print(f"|V^T V - I|         = {np.linalg.norm(v.T @ v - np.eye(5)):.1e}")

stack = rng.standard_normal((20_000, 4, 4))
start = time.perf_counter()
norms = operator_norm(stack)
print(f"\n20000 operator norms of 4x4 matrices in {time.perf_counter() - start:.2f}s;"
      f" max error vs SVD {np.max(np.abs(norms - np.linalg.norm(stack, 2, axis=(1, 2)))):.1e}")

# Tiny and huge scales are handled by exact power-of-two rescaling.
for scale in (1e-200, 1e200):
    w, _ = jacobi_eigh(scale * np.diag([3.0, 1.0]) + scale * 0.5)
    print(f"scale {scale:g}: {w / scale}")
