"""Small dense linear algebra: a cyclic Jacobi eigensolver and the norms used by the bound.

Matrices are plain ``numpy`` float64 arrays.  Most routines accept a single
``(d, d)`` matrix or a stack ``(..., d, d)`` and work on the whole stack at once,
which is what the Monte Carlo code relies on for speed.
"""

from dataclasses import dataclass

import numpy as np

MAX_SWEEPS = 100
SWEEP_TOL = 1e-14
MAX_DIM = 512


class ConvergenceError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues sorted non-increasing with matching orthonormal eigenvectors.

    ``eigenvectors[:, i]`` is the unit vector belonging to ``eigenvalues[i]``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self):
        return self.eigenvalues.shape[0]

    def vector(self, i):
        return self.eigenvectors[:, i]

    def reconstruct(self):
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.T


def sym_matrix(a, tol=1e-12):
    """Return ``a`` as a float64 symmetric matrix.

    Entries must agree with their transpose to ``tol`` (relative to the largest
    entry); the result is exactly symmetric.
    """
    a = np.array(a, dtype=float, ndmin=2)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ValueError(f"expected a non-empty square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a))))
    if np.max(np.abs(a - a.T)) > tol * scale:
        raise ValueError("matrix is not symmetric")
    return 0.5 * (a + a.T)


def gen_matrix(a):
    a = np.array(a, dtype=float, ndmin=2)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ValueError(f"expected a non-empty square matrix, got shape {a.shape}")
    return a


def jacobi_eigh(a, tol=SWEEP_TOL, max_sweeps=MAX_SWEEPS, v0=None):
    """Cyclic Jacobi diagonalization of a symmetric matrix or a stack of them.

    Returns ``(w, v)`` with ``w`` sorted descending along the last axis and
    ``a = v @ diag(w) @ v.T``.  A sweep visits every ``(p, q)`` pair once, in
    round-robin rounds of disjoint pairs that are rotated together.  Matrices
    in a stack drop out as soon as their off-diagonal norm falls below
    ``tol * |a|_F``.

    ``v0``, an orthogonal matrix (or stack) close to the eigenvectors, starts the
    iteration from ``v0.T @ a @ v0``; it only saves sweeps.
    """
    a = np.array(a, dtype=float)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {a.shape}")
    d = a.shape[-1]
    if d > MAX_DIM:
        raise ValueError(f"dimension {d} exceeds the supported maximum {MAX_DIM}")
    batch_shape = a.shape[:-2]
    a = a.reshape(-1, d, d)
    if v0 is not None:
        v0 = np.broadcast_to(np.asarray(v0, dtype=float), a.shape)
        a = np.swapaxes(v0, 1, 2) @ a @ v0
        a = 0.5 * (a + np.swapaxes(a, 1, 2))
    # power-of-two scaling is exact and keeps squared norms finite
    peak = np.max(np.abs(a), axis=(1, 2))
    scale = np.ldexp(1.0, np.frexp(np.where(peak > 0, peak, 1.0))[1])
    a = a / scale[:, None, None]
    # batch axis last: every (p, q) slice is contiguous across the stack
    a = np.ascontiguousarray(a.transpose(1, 2, 0))
    if v0 is None:
        v = np.zeros_like(a)
        v[np.arange(d), np.arange(d)] = 1.0
    else:
        v = v0.transpose(1, 2, 0).copy()

    threshold = tol * np.sqrt(np.einsum("ijb,ijb->b", a, a))
    # entries this small are dropped outright; d(d-1) of them stay under threshold
    negligible = threshold / d
    rounds = _round_robin(d)

    todo = np.flatnonzero(_off_norm(a) > threshold)
    for _ in range(max_sweeps):
        if todo.size == 0:
            break
        sub, vsub, neg = a[:, :, todo], v[:, :, todo], negligible[None, todo]
        for p, q in rounds:
            _rotate(sub, vsub, p, q, neg)
        a[:, :, todo], v[:, :, todo] = sub, vsub
        todo = todo[_off_norm(sub) > threshold[todo]]
    else:
        if todo.size:
            raise ConvergenceError(f"Jacobi iteration did not converge in {max_sweeps} sweeps")

    a = a.transpose(2, 0, 1)
    v = v.transpose(2, 0, 1)
    w = np.diagonal(a, axis1=1, axis2=2) * scale[:, None]
    order = np.argsort(-w, axis=1, kind="stable")
    w = np.take_along_axis(w, order, axis=1)
    v = np.take_along_axis(v, order[:, None, :], axis=2)
    return w.reshape(batch_shape + (d,)), v.reshape(batch_shape + (d, d))


def _round_robin(d):
    """Split all pairs p < q into rounds of disjoint pairs (circle method)."""
    players = list(range(d)) + ([None] if d % 2 else [])
    m = len(players)
    rounds = []
    for _ in range(m - 1):
        pairs = [(players[k], players[m - 1 - k]) for k in range(m // 2)]
        pairs = [(min(x, y), max(x, y)) for x, y in pairs if x is not None and y is not None]
        if pairs:
            rounds.append((np.array([x for x, _ in pairs]), np.array([y for _, y in pairs])))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def _rotate(a, v, p, q, negligible):
    """Apply the Jacobi rotations for disjoint pairs ``(p[k], q[k])`` in place.

    ``a`` and ``v`` are stored as ``(d, d, batch)``.
    """
    apq = a[p, q]
    apq = apq * (np.abs(apq) > negligible)
    if not apq.any():
        a[p, q] = apq
        a[q, p] = apq
        return
    h = a[q, q] - a[p, p]
    # tangent of the rotation angle, the smaller root of t^2 + 2 t h / (2 apq) - 1 = 0;
    # exactly 0 for dropped entries
    t = np.copysign(2.0, h) * apq / (np.abs(h) + np.hypot(h, 2.0 * apq) + (apq == 0))
    c = 1.0 / np.sqrt(1.0 + t * t)
    s = t * c

    col_p = a[:, p]
    col_q = a[:, q]
    a[:, p] = c * col_p - s * col_q
    a[:, q] = s * col_p + c * col_q
    row_p = a[p]
    row_q = a[q]
    cr, sr = c[:, None], s[:, None]
    a[p] = cr * row_p - sr * row_q
    a[q] = sr * row_p + cr * row_q
    a[p, q] = 0.0
    a[q, p] = 0.0

    vp = v[:, p]
    vq = v[:, q]
    v[:, p] = c * vp - s * vq
    v[:, q] = s * vp + c * vq


def _off_norm(a):
    off = a * (1.0 - np.eye(a.shape[0]))[:, :, None]
    return np.sqrt(np.einsum("ijb,ijb->b", off, off))


def sym_eigen(a):
    """Eigendecomposition of one symmetric matrix as a :class:`Spectrum`."""
    w, v = jacobi_eigh(sym_matrix(a))
    return Spectrum(eigenvalues=w, eigenvectors=v)


def operator_norm(m):
    """Largest singular value, computed from the top eigenvalue of ``m.T @ m``.

    Works on stacks; returns one value per matrix.
    """
    m = np.asarray(m, dtype=float)
    gram = np.swapaxes(m, -1, -2) @ m
    w, _ = jacobi_eigh(gram)
    return np.sqrt(np.maximum(w[..., 0], 0.0))


def frobenius_norm(m):
    m = np.asarray(m, dtype=float)
    return np.sqrt(np.sum(m * m, axis=(-2, -1)))


def mat_mul(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[-2:] != b.shape[-2:] or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a @ b


def is_psd(a, tol=0.0):
    if tol < 0:
        raise ValueError("tol must be non-negative")
    w, _ = jacobi_eigh(sym_matrix(a))
    return bool(w[-1] >= -tol)


def norm_at_most(m, bound):
    """Elementwise over a stack: does ``operator_norm(m) <= bound`` hold?

    Decided by attempting a Cholesky factorization of ``bound^2 I - m.T @ m``,
    which succeeds exactly when that matrix is positive definite.  A norm equal
    to ``bound`` counts as a failure.
    """
    m = np.asarray(m, dtype=float)
    d = m.shape[-1]
    gram = np.swapaxes(m, -1, -2) @ m
    g = (bound * bound * np.eye(d) - gram).reshape(-1, d, d).transpose(1, 2, 0)
    ok = np.ones(g.shape[-1], dtype=bool)
    low = np.zeros_like(g)
    for j in range(d):
        pivot = g[j, j] - np.sum(low[j, :j] ** 2, axis=0)
        ok &= pivot > 0
        root = np.sqrt(np.where(pivot > 0, pivot, 1.0))
        low[j, j] = root
        for i in range(j + 1, d):
            low[i, j] = (g[i, j] - np.sum(low[i, :j] * low[j, :j], axis=0)) / root
    return ok.reshape(m.shape[:-2])
