"""SGD on a consistent least-squares problem, where the error is a random matrix product.

With rows ``a_j`` drawn uniformly, the update
``x_k = x_{k-1} - alpha a_j (a_j^T x_{k-1} - b_j)`` gives
``x_k - x_star = (I - alpha a_j a_j^T)(x_{k-1} - x_star)``, so the error after
``n`` steps is ``Z_n e_0`` for the rank-one-rows ensemble of the data.
"""

import math
from dataclasses import dataclass

import numpy as np

from .ensembles import rank_one_rows
from .linalg import sym_eigen
from .montecarlo import deviation_norms, run_trajectory, simulate
from .rng import RngState, normals
from .theory import expected_product, theory_params, validate_alpha


@dataclass(frozen=True, eq=False)
class LeastSquaresProblem:
    rows: np.ndarray
    targets: np.ndarray
    x_star: np.ndarray

    @property
    def dim(self):
        return self.rows.shape[1]

    def ensemble(self):
        return rank_one_rows(self.rows)


def make_problem(rows, x_star):
    """Noiseless instance: targets are exactly ``rows @ x_star``."""
    rows = np.array(rows, dtype=float, ndmin=2)
    x_star = np.asarray(x_star, dtype=float)
    if x_star.shape != (rows.shape[1],):
        raise ValueError("x_star must have one entry per column of rows")
    rank_one_rows(rows)  # validates
    # same per-row dot as the update, so x_star is a fixed point bit for bit
    targets = np.array([a @ x_star for a in rows])
    return LeastSquaresProblem(rows=rows, targets=targets, x_star=x_star)


def synthetic_problem(dim, m, seed):
    """Gaussian rows scaled to unit length and a Gaussian solution.

    Row ``j`` comes from stream ``j`` of the counter-based generator and
    ``x_star`` from stream ``m``, all at step 0, so the instance is a function of
    ``(dim, m, seed)`` alone.
    """
    z = normals(seed, np.arange(m + 1, dtype=np.uint64), 0, dim)
    rows = z[:m] / np.linalg.norm(z[:m], axis=1, keepdims=True)
    return make_problem(rows, z[m])


def _check_alpha(p, alpha):
    r = p.ensemble().radius()
    if not validate_alpha(alpha, r):
        raise ValueError(f"alpha={alpha!r} must lie in (0, 1/(2 max|a_j|^2)) = (0, {1 / (2 * r)!r})")


def sgd_run(p: LeastSquaresProblem, x0, alpha, n, seed, stream=0):
    """Iterates ``x_0 .. x_n`` and the row index drawn at each step.

    Step ``k`` uses the same counter ``(seed, stream, k - 1)`` that
    :func:`~randprod.montecarlo.run_trajectory` uses for its ``k``-th factor.
    """
    _check_alpha(p, alpha)
    e = p.ensemble()
    x = np.array(x0, dtype=float)
    if x.shape != (p.dim,):
        raise ValueError("x0 has the wrong length")
    iterates = [x]
    picks = []
    for k in range(n):
        j = int(e.draw_indices(seed, [stream], k)[0])
        a = p.rows[j]
        x = x - alpha * a * (a @ x - p.targets[j])
        iterates.append(x)
        picks.append(j)
    return np.stack(iterates), np.array(picks, dtype=np.int64)


def error_propagation_check(p, x0, alpha, n, seed, stream=0):
    """Largest ``|(x_k - x_star) - Z_k (x_0 - x_star)|`` along one shared random path."""
    iterates, picks = sgd_run(p, x0, alpha, n, seed, stream)
    traj = run_trajectory(p.ensemble(), alpha, n, RngState(seed, stream), keep_partials=True)
    drawn = np.einsum("ki,kj->kij", p.rows[picks], p.rows[picks])
    if not np.array_equal(drawn, traj.factors):
        raise RuntimeError("SGD and the matrix product drew different rows")
    e0 = iterates[0] - p.x_star
    errors = iterates - p.x_star
    predicted = traj.partials @ e0
    return float(np.max(np.linalg.norm(errors - predicted, axis=1)))


@dataclass(frozen=True)
class Certificate:
    t: float
    radius: float
    mean_norm: float
    sigma2: float
    vacuous: bool


def deviation_threshold(alpha, sigma2, d, delta):
    """Smallest ``t`` with ``2 d^2 exp(-t^2 / (alpha sigma2)) <= delta``."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if sigma2 == 0:
        return 0.0
    return math.sqrt(alpha * sigma2 * math.log(2.0 * d * d / delta))


def certificate(p, alpha, n, delta, params=None):
    """High-probability bound on ``|e_n| / |e_0|``.

    With probability at least ``1 - delta``, ``|Z_n - E Z_n| < t``, hence
    ``|e_n| <= (|E Z_n| + t) |e_0|``.  The result is vacuous once ``t >= 1``.
    """
    _check_alpha(p, alpha)
    e = p.ensemble()
    s = sym_eigen(e.mean())
    params = params if params is not None else theory_params(e, alpha, spectrum=s)
    t = deviation_threshold(alpha, params.sigma2, p.dim, delta)
    mean_norm = float(np.max(np.abs(1.0 - alpha * s.eigenvalues)) ** n)
    return Certificate(t=t, radius=mean_norm + t, mean_norm=mean_norm, sigma2=params.sigma2, vacuous=t >= 1.0)


def certificate_coverage(p, alpha, n, delta, runs, seed, threads=1):
    """Fraction of runs whose deviation ``|Z_n - E Z_n|`` reaches the certified ``t``."""
    e = p.ensemble()
    s = sym_eigen(e.mean())
    params = theory_params(e, alpha, spectrum=s)
    t = deviation_threshold(alpha, params.sigma2, p.dim, delta)
    z = simulate(e, alpha, n, runs, seed, threads=threads)
    dev = deviation_norms(z, expected_product(s, alpha, n), "op")
    return float(np.mean(dev >= t)), t
