"""Exact constants and tail bounds for Z_n = (I - a X_n) ... (I - a X_1).

Notation follows the usual one for this bound: ``lambdas`` and the columns of
the spectrum's eigenvectors diagonalize the mean factor, ``c[i]`` is the
smallest almost-sure constant with ``|(X - lambda_i I) u_i| <= c[i] lambda_i``,
``q[i] = 1 - alpha lambda_i`` and ``sigma2 = (4 d / 3) sum_i c[i]^2 lambda_i``.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .linalg import Spectrum, sym_eigen

ZERO_EIG_RTOL = 1e-12
N_EST = 10**6
_EST_CHUNK = 50_000


class SampledConstantWarning(UserWarning):
    """c was estimated from samples and can only under-estimate the true value."""


@dataclass(frozen=True, eq=False)
class TheoryParams:
    alpha: float
    r: float
    lambdas: np.ndarray
    c: np.ndarray
    q: np.ndarray
    sigma2: float
    c_exact: bool

    @property
    def dim(self):
        return len(self.lambdas)


def validate_alpha(alpha, r):
    """True iff ``0 < alpha < 1 / (2 r)``; the interval is open at both ends."""
    if not r > 0:
        raise ValueError("radius r must be positive")
    return bool(0.0 < alpha < 1.0 / (2.0 * r))


def zero_mask(lambdas):
    lambdas = np.asarray(lambdas, dtype=float)
    top = np.max(lambdas) if lambdas.size else 0.0
    if top <= 0:
        return np.ones_like(lambdas, dtype=bool)
    return lambdas <= ZERO_EIG_RTOL * top


def compute_c(e, s: Spectrum, n_est=N_EST, seed=0):
    """Deviation constants ``c`` and whether they are exact.

    Discrete ensembles are maximized over their whole support.  For continuous
    ones the maximum over ``n_est`` samples is returned with ``exact=False``.
    """
    lambdas = s.eigenvalues
    u = s.eigenvectors
    zero = zero_mask(lambdas)
    safe = np.where(zero, 1.0, lambdas)

    def ratios(xs):
        # column i of xs @ u is X u_i
        dev = xs @ u - lambdas * u
        return np.linalg.norm(dev, axis=-2) / safe

    if e.is_discrete:
        c = np.max(ratios(e.atom_matrices()), axis=0)
        exact = True
    else:
        c = np.zeros(len(lambdas))
        for start in range(0, n_est, _EST_CHUNK):
            streams = np.arange(start, min(start + _EST_CHUNK, n_est), dtype=np.uint64)
            xs = e.sample_batch(seed, streams, 0)
            c = np.maximum(c, np.max(ratios(xs), axis=0))
        exact = False
        warnings.warn(
            f"c estimated from {n_est} samples of a continuous ensemble; true values may be larger",
            SampledConstantWarning,
            stacklevel=2,
        )
    c = np.where(zero, 0.0, c)
    return c, exact


def compute_sigma2(c, lambdas, d):
    c = np.asarray(c, dtype=float)
    lambdas = np.asarray(lambdas, dtype=float)
    if c.shape != (d,) or lambdas.shape != (d,):
        raise ValueError("c and lambdas must both have length d")
    if np.any(c < 0):
        raise ValueError("c must be non-negative")
    # round-off can leave zero eigenvalues slightly negative
    return float(4.0 * d / 3.0 * np.sum(c**2 * np.maximum(lambdas, 0.0)))


def theory_params(e, alpha, spectrum=None, n_est=N_EST, seed=0, sigma2=None):
    """Collect every constant of the bound for ensemble ``e`` at step size ``alpha``.

    ``sigma2`` overrides the computed variance parameter (used to demonstrate a
    deliberately wrong bound); everything else is always computed.
    """
    r = e.radius()
    if not validate_alpha(alpha, r):
        raise ValueError(f"alpha={alpha!r} is outside the open interval (0, 1/(2r)) with r={r!r}")
    s = spectrum if spectrum is not None else sym_eigen(e.mean())
    c, exact = compute_c(e, s, n_est=n_est, seed=seed)
    lambdas = s.eigenvalues
    computed = compute_sigma2(c, lambdas, len(lambdas))
    return TheoryParams(
        alpha=float(alpha),
        r=r,
        lambdas=lambdas,
        c=c,
        q=1.0 - alpha * lambdas,
        sigma2=computed if sigma2 is None else float(sigma2),
        c_exact=exact,
    )


def tail_bound(t, alpha, d, sigma2):
    """``min(1, 2 d^2 exp(-t^2 / (alpha sigma2)))``, elementwise in ``t``.

    With ``sigma2 == 0`` the product is deterministic: 1 at ``t = 0``, else 0.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or alpha <= 0 or sigma2 < 0:
        raise ValueError("need t >= 0, alpha > 0, sigma2 >= 0")
    if sigma2 == 0:
        out = np.where(t > 0, 0.0, 1.0)
    else:
        out = np.minimum(1.0, 2.0 * d * d * np.exp(-(t**2) / (alpha * sigma2)))
    return out[()] if out.ndim == 0 else out


def entrywise_tail_bound(t, alpha):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or alpha <= 0:
        raise ValueError("need t >= 0, alpha > 0")
    out = np.minimum(1.0, 2.0 * np.exp(-(t**2) / alpha))
    return out[()] if out.ndim == 0 else out


def entrywise_threshold(t, lam, c):
    return np.asarray(t, dtype=float) * math.sqrt(4.0 * lam / 3.0) * c


def expected_product(s: Spectrum, alpha, n):
    """Closed-form mean ``(I - alpha Sigma)^n`` built from the spectrum."""
    if n < 0:
        raise ValueError("n must be non-negative")
    v = s.eigenvectors
    return (v * (1.0 - alpha * s.eigenvalues) ** n) @ v.T


def geometric_sum_check(q, n):
    """Return ``(sum_{k<n} q^(2k), 2 / (3 (1 - q)))``; the first never exceeds the second."""
    if not 0.5 <= q < 1.0:
        raise ValueError("q must lie in [1/2, 1)")
    if n < 1:
        raise ValueError("n must be at least 1")
    q2 = q * q
    lhs = -math.expm1(n * math.log(q2)) / (1.0 - q2)
    return lhs, 2.0 / (3.0 * (1.0 - q))
