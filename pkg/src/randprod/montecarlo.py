"""Simulation, exact enumeration and martingale replay for Z_n.

Trials are simulated in fixed-size chunks of trial indices.  Trial ``j`` draws its
``k``-th factor from counter ``(seed, j, k - 1)``, and chunk results are joined in
trial order, so the thread count never changes a single bit of the output.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy import stats

from .linalg import Spectrum, frobenius_norm, norm_at_most, operator_norm, sym_eigen
from .rng import RngState
from .theory import (
    TheoryParams,
    entrywise_tail_bound,
    entrywise_threshold,
    expected_product,
    tail_bound,
    theory_params,
    validate_alpha,
    zero_mask,
)

ENUM_BUDGET = 2 * 10**7
CHUNK = 8192
ENUM_CHUNK = 1 << 15
CI_LEVEL = 0.99
CONTRACTION_TOL = 1e-10
MARTINGALE_TOL = 1e-12
MEAN_CHECK_TOL = 1e-10

NORMS = ("op", "fro")


class BudgetExceeded(ValueError):
    pass


class BoundViolation(AssertionError):
    """A property that holds almost surely failed on a concrete trajectory."""


@dataclass
class Trajectory:
    factors: np.ndarray  # (n, d, d): X_1 .. X_n
    final: np.ndarray  # Z_n
    partials: Optional[np.ndarray] = None  # (n + 1, d, d): Z_0 .. Z_n
    alpha: float = 0.0

    @property
    def n(self):
        return len(self.factors)


@dataclass
class TailCurve:
    thresholds: np.ndarray
    tail: np.ndarray
    bound: np.ndarray
    norm_kind: str
    trials: Union[int, str]
    ci_low: Optional[np.ndarray] = None
    ci_high: Optional[np.ndarray] = None
    counts: Optional[np.ndarray] = None

    @property
    def exact(self):
        return self.trials == "exact"


@dataclass
class MartingaleTrace:
    i: int
    j: int
    Y: np.ndarray  # Y_0 .. Y_n
    increments: np.ndarray  # Y_k - Y_{k-1}, k = 1 .. n
    diff_bounds: np.ndarray  # allowed |increment|, k = 1 .. n

    @property
    def max_slack(self):
        """Largest ``|increment| - bound``; non-positive when the bound holds."""
        if len(self.increments) == 0:
            return -np.inf
        return float(np.max(np.abs(self.increments) - self.diff_bounds))


def default_grid(count=41, lo=0.0, hi=1.0):
    return np.linspace(lo, hi, count)


def deviation_norms(z, mean, norm_kind="op"):
    dev = np.asarray(z) - mean
    if norm_kind == "op":
        return operator_norm(dev)
    if norm_kind == "fro":
        return frobenius_norm(dev)
    raise ValueError(f"unknown norm kind {norm_kind!r}; expected one of {NORMS}")


def clopper_pearson(k, n, level=CI_LEVEL):
    """Two-sided exact binomial interval for ``k`` successes in ``n`` trials."""
    k = np.asarray(k)
    a = 0.5 * (1.0 - level)
    with np.errstate(invalid="ignore"):
        low = np.where(k > 0, stats.beta.ppf(a, k, n - k + 1), 0.0)
        high = np.where(k < n, stats.beta.ppf(1.0 - a, k + 1, n - k), 1.0)
    return low, high


def _check_alpha(e, alpha):
    r = e.radius()
    if not validate_alpha(alpha, r):
        raise ValueError(f"alpha={alpha!r} is outside the open interval (0, 1/(2r)) with r={r!r}")


# -- single trajectories ----------------------------------------------------


def run_trajectory(e, alpha, n, rng: RngState, keep_partials=True):
    """Accumulate Z_n by left-multiplying fresh factors drawn from ``rng``."""
    _check_alpha(e, alpha)
    if n < 0:
        raise ValueError("n must be non-negative")
    eye = np.eye(e.dim)
    factors = np.empty((n, e.dim, e.dim))
    z = eye.copy()
    partials = [z] if keep_partials else None
    for k in range(n):
        x = e.sample(rng)
        factors[k] = x
        z = (eye - alpha * x) @ z
        if keep_partials:
            partials.append(z)
    return Trajectory(
        factors=factors,
        final=z,
        partials=np.stack(partials) if keep_partials else None,
        alpha=alpha,
    )


def path_trajectory(e, alpha, indices):
    """Trajectory along an explicit sequence of atom indices of a discrete ensemble."""
    _check_alpha(e, alpha)
    atoms = e.atom_matrices()
    eye = np.eye(e.dim)
    factors = atoms[np.asarray(indices, dtype=int)].reshape(-1, e.dim, e.dim)
    partials = [eye]
    for x in factors:
        partials.append((eye - alpha * x) @ partials[-1])
    return Trajectory(factors=factors, final=partials[-1], partials=np.stack(partials), alpha=alpha)


# -- batched simulation -----------------------------------------------------


def _simulate_chunk(e, alpha, n, seed, streams, hook=None):
    d = e.dim
    eye = np.eye(d)
    z = np.broadcast_to(eye, (len(streams), d, d)).copy()
    for k in range(1, n + 1):
        x = e.sample_batch(seed, streams, k - 1)
        z_next = (eye - alpha * x) @ z
        if hook is not None:
            hook(k, x, z, z_next)
        z = z_next
    return z


def _chunks(trials, size=CHUNK):
    return [np.arange(s, min(s + size, trials), dtype=np.uint64) for s in range(0, trials, size)]


def _map_chunks(fn, trials, threads):
    chunks = _chunks(trials)
    if threads <= 1 or len(chunks) <= 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, chunks))


def simulate(e, alpha, n, trials, seed, threads=1):
    """Final products Z_n of ``trials`` independent trajectories, in trial order."""
    _check_alpha(e, alpha)
    if trials < 1:
        raise ValueError("trials must be positive")
    parts = _map_chunks(lambda s: _simulate_chunk(e, alpha, n, seed, s), trials, threads)
    return np.concatenate(parts)


def _curve_from_deviations(dev, t_grid, bound, norm_kind):
    t_grid = np.asarray(t_grid, dtype=float)
    trials = len(dev)
    counts = np.sum(dev[:, None] >= t_grid[None, :], axis=0)
    low, high = clopper_pearson(counts, trials)
    return TailCurve(
        thresholds=t_grid,
        tail=counts / trials,
        bound=bound,
        norm_kind=norm_kind,
        trials=trials,
        ci_low=low,
        ci_high=high,
        counts=counts,
    )


def estimate_tail(e, alpha, n, trials, t_grid, seed, norm_kind="op", params=None, spectrum=None, threads=1):
    """Empirical tail of the deviation norm with 99% Clopper-Pearson intervals.

    Deviations are measured from the closed-form mean, never the sample mean.
    """
    s = spectrum if spectrum is not None else sym_eigen(e.mean())
    params = params if params is not None else theory_params(e, alpha, spectrum=s)
    mean = expected_product(s, alpha, n)
    z = simulate(e, alpha, n, trials, seed, threads=threads)
    dev = deviation_norms(z, mean, norm_kind)
    bound = tail_bound(np.asarray(t_grid, dtype=float), alpha, e.dim, params.sigma2)
    return _curve_from_deviations(dev, t_grid, bound, norm_kind)


def empirical_mean_product(e, alpha, n, trials, seed, threads=1):
    """Sample mean of Z_n and entrywise standard errors."""
    z = simulate(e, alpha, n, trials, seed, threads=threads)
    # shifting by the first sample makes identical samples give an exact mean and zero SE
    shifted = z - z[0]
    mean = z[0] + shifted.mean(axis=0)
    if trials < 2:
        return mean, np.zeros_like(mean)
    se = shifted.std(axis=0, ddof=1) / np.sqrt(trials)
    return mean, se


def entrywise_tail_check(e, alpha, n, trials, s: Spectrum, params: TheoryParams, i, j, t_grid, seed, threads=1):
    """Empirical tail of ``|u_i^T (Z_n - E Z_n) u_j|`` at the scaled entrywise thresholds."""
    lam, c = s.eigenvalues[i], params.c[i]
    if zero_mask(s.eigenvalues)[i] or c <= 0:
        raise ValueError("entrywise check needs lambda_i > 0 and c_i > 0")
    t_grid = np.asarray(t_grid, dtype=float)
    mean = expected_product(s, alpha, n)
    z = simulate(e, alpha, n, trials, seed, threads=threads)
    u_i, u_j = s.vector(i), s.vector(j)
    dev = np.abs(np.einsum("a,nab,b->n", u_i, z - mean, u_j))
    thresholds = entrywise_threshold(t_grid, lam, c)
    counts = np.sum(dev[:, None] >= thresholds[None, :], axis=0)
    low, high = clopper_pearson(counts, trials)
    return TailCurve(
        thresholds=t_grid,
        tail=counts / trials,
        bound=entrywise_tail_bound(t_grid, alpha),
        norm_kind=f"entry({i},{j})",
        trials=trials,
        ci_low=low,
        ci_high=high,
        counts=counts,
    )


# -- exact enumeration ------------------------------------------------------


def _check_budget(n_atoms, depth, what):
    leaves = n_atoms**depth
    if leaves > ENUM_BUDGET:
        raise BudgetExceeded(
            f"{what} needs {leaves} paths, over the enumeration budget of {ENUM_BUDGET}; "
            "use the trial-based estimate_tail instead"
        )
    return leaves


def enumerate_paths(e, alpha, n):
    """Yield ``(indices, probs, Z_n)`` chunks over every length-``n`` path.

    Paths are in lexicographic order of atom indices (X_1 most significant);
    probabilities are multiplied in path order.
    """
    atoms = e.atom_matrices()
    weights = e.atom_probs()
    n_atoms = len(weights)
    leaves = _check_budget(n_atoms, n, "exact enumeration")
    eye = np.eye(e.dim)
    factors = eye - alpha * atoms
    for start in range(0, leaves, ENUM_CHUNK):
        leaf = np.arange(start, min(start + ENUM_CHUNK, leaves), dtype=np.int64)
        digits = np.empty((len(leaf), n), dtype=np.int64)
        rest = leaf.copy()
        for k in range(n - 1, -1, -1):
            digits[:, k] = rest % n_atoms
            rest //= n_atoms
        probs = np.ones(len(leaf))
        z = np.broadcast_to(eye, (len(leaf), e.dim, e.dim)).copy()
        for k in range(n):
            probs = probs * weights[digits[:, k]]
            z = factors[digits[:, k]] @ z
        yield digits, probs, z


def brute_force_tail(e, alpha, n, t_grid, norm_kind="op", params=None, spectrum=None):
    """Exact tail probabilities by summing path probabilities over every sample path."""
    if not e.is_discrete:
        raise ValueError("exact enumeration needs a finite-support ensemble")
    _check_alpha(e, alpha)
    _check_budget(e.n_atoms, n, "exact enumeration")
    s = spectrum if spectrum is not None else sym_eigen(e.mean())
    params = params if params is not None else theory_params(e, alpha, spectrum=s)
    t_grid = np.asarray(t_grid, dtype=float)
    mean = expected_product(s, alpha, n)

    tail = np.zeros(len(t_grid))
    enum_mean = np.zeros_like(mean)
    for _, probs, z in enumerate_paths(e, alpha, n):
        dev = deviation_norms(z, mean, norm_kind)
        tail += probs @ (dev[:, None] >= t_grid[None, :])
        enum_mean += np.einsum("p,pij->ij", probs, z)
    mismatch = np.max(np.abs(enum_mean - mean))
    if mismatch > MEAN_CHECK_TOL:
        raise RuntimeError(f"enumerated mean differs from the closed form by {mismatch:.3e}")
    return TailCurve(
        thresholds=t_grid,
        tail=np.clip(tail, 0.0, 1.0),
        bound=tail_bound(t_grid, alpha, e.dim, params.sigma2),
        norm_kind=norm_kind,
        trials="exact",
    )


# -- martingale --------------------------------------------------------------


def _require_positive(s, i):
    if zero_mask(s.eigenvalues)[i]:
        raise ValueError(
            f"lambda_{i} is zero: the scaled entry is almost surely constant and its trace is degenerate"
        )


def martingale_trace(traj: Trajectory, s: Spectrum, params: TheoryParams, i, j):
    """Replay ``Y_k = q_i^-k u_i^T Z_k u_j`` and check every increment against its bound."""
    if traj.partials is None:
        raise ValueError("trajectory was recorded without partial products")
    _require_positive(s, i)
    q = params.q[i]
    alpha, lam, c = params.alpha, s.eigenvalues[i], params.c[i]
    z = np.einsum("a,kab,b->k", s.vector(i), traj.partials, s.vector(j))
    k = np.arange(len(z))
    scale = q ** (-k.astype(float))
    y = scale * z
    increments = scale[1:] * (z[1:] - q * z[:-1])
    bounds = scale[1:] * alpha * c * lam
    trace = MartingaleTrace(i=i, j=j, Y=y, increments=increments, diff_bounds=bounds)
    if len(increments) and np.any(np.abs(increments) > bounds + MARTINGALE_TOL):
        step = int(np.argmax(np.abs(increments) - bounds)) + 1
        raise BoundViolation(f"bounded difference fails at step {step} for (i, j) = ({i}, {j})")
    return trace


def martingale_property_test(e, alpha, s: Spectrum, i, j, depth, params=None):
    """Largest ``|E[Y_k | history] - Y_{k-1}|`` over all histories up to length ``depth``."""
    if not e.is_discrete:
        raise ValueError("exact conditional expectations need a finite-support ensemble")
    _check_alpha(e, alpha)
    _require_positive(s, i)
    n_atoms = e.n_atoms
    total = sum(n_atoms**h for h in range(depth + 1))
    if total > ENUM_BUDGET:
        raise BudgetExceeded(f"{total} histories exceed the enumeration budget of {ENUM_BUDGET}")
    q = 1.0 - alpha * s.eigenvalues[i]
    u_i, u_j = s.vector(i), s.vector(j)
    weights = e.atom_probs()
    # row vectors u_i^T (I - alpha X_s), one per atom
    left = u_i - alpha * np.einsum("a,sab->sb", u_i, e.atom_matrices())

    worst = 0.0
    for h in range(depth + 1):
        for _, _, z in enumerate_paths(e, alpha, h):
            zu = z @ u_j
            y_prev = q ** (-h) * (zu @ u_i)
            y_next = q ** (-(h + 1)) * np.einsum("s,sb,pb->p", weights, left, zu)
            worst = max(worst, float(np.max(np.abs(y_next - y_prev))))
    return worst


@dataclass
class ReplayReport:
    trials: int
    max_opnorm: float  # upper bound over every partial product Z_k, see _contraction_bound
    max_martingale_slack: float  # max |Y_k - Y_{k-1}| - bound over k, i, j
    max_domination_gap: float  # max (op deviation - fro deviation) at step n
    max_parseval_residual: float  # relative, at step n

    def passed(self):
        return (
            self.max_opnorm <= 1.0 + CONTRACTION_TOL
            and self.max_martingale_slack <= MARTINGALE_TOL
            and self.max_domination_gap <= 0.0
            and self.max_parseval_residual <= 1e-10
        )


def replay_checks(e, alpha, n, trials, seed, params: TheoryParams, spectrum: Spectrum, threads=1):
    """Re-simulate the trials of :func:`estimate_tail` and check every step.

    Checks contraction of every partial product, the bounded-difference property
    of the scaled entries for every ``(i, j)`` with ``lambda_i > 0``, and at the
    last step that the operator deviation is dominated by the Frobenius one and
    that the entries in the eigenbasis carry the full Frobenius mass.
    """
    _check_alpha(e, alpha)
    u = spectrum.eigenvectors
    live = ~zero_mask(spectrum.eigenvalues)
    q = params.q
    step_bound = alpha * params.c * spectrum.eigenvalues
    mean = expected_product(spectrum, alpha, n)

    def run(streams):
        worst = {"opnorm": 1.0 if n == 0 else 0.0, "slack": -np.inf}

        # entries u_i^T Z_{k-1} u_j of the previous step
        prev = {"entries": np.broadcast_to(np.eye(e.dim), (len(streams), e.dim, e.dim))}

        def hook(k, x, z_prev, z_next):
            a = u.T @ z_next @ u
            b = prev["entries"]
            prev["entries"] = a
            scale = q ** (-float(k))
            inc = scale[:, None] * np.abs(a - q[:, None] * b)
            slack = inc - (scale * step_bound)[:, None]
            if live.any():
                worst["slack"] = max(worst["slack"], float(np.max(slack[:, live, :])))
            worst["opnorm"] = max(worst["opnorm"], _contraction_bound(z_next))

        z = _simulate_chunk(e, alpha, n, seed, streams, hook)
        dev = z - mean
        op = operator_norm(dev)
        fro = frobenius_norm(dev)
        entries = u.T @ dev @ u
        parseval = np.abs(np.sum(entries**2, axis=(1, 2)) - fro**2) / np.maximum(fro**2, 1e-300)
        return worst["opnorm"], worst["slack"], float(np.max(op - fro)), float(np.max(parseval))

    parts = _map_chunks(run, trials, threads)
    return ReplayReport(
        trials=trials,
        max_opnorm=max(p[0] for p in parts),
        max_martingale_slack=max(p[1] for p in parts),
        max_domination_gap=max(p[2] for p in parts),
        max_parseval_residual=max(p[3] for p in parts),
    )


def _contraction_bound(z):
    """Largest of: ``1 + CONTRACTION_TOL`` if every norm is certified below it,
    else the exact norms of the matrices that fail the certificate."""
    ok = norm_at_most(z, 1.0 + CONTRACTION_TOL)
    if ok.all():
        return min(1.0 + CONTRACTION_TOL, float(np.max(frobenius_norm(z))))
    return float(np.max(operator_norm(z[~ok])))
