"""Laws for the random PSD factors, with exact mean, radius and (when finite) support."""

from dataclasses import dataclass, field

import numpy as np

from .linalg import is_psd, jacobi_eigh, sym_matrix
from .rng import RngState, normals, uniforms

FINITE = "finite-support"
ROWS = "rank-one-rows"
SPHERE = "sphere-rank-one"
KINDS = (FINITE, ROWS, SPHERE)

PROB_TOL = 1e-12
PSD_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class Ensemble:
    """A sampling law for bounded PSD matrices.

    Use :func:`finite_support`, :func:`rank_one_rows` or :func:`sphere_rank_one`
    to build one; the constructors validate and the result is immutable.
    """

    kind: str
    dim: int
    atoms: np.ndarray = field(default=None, repr=False)
    probs: np.ndarray = field(default=None, repr=False)
    rows: np.ndarray = field(default=None, repr=False)

    @property
    def is_discrete(self):
        return self.kind in (FINITE, ROWS)

    @property
    def n_atoms(self):
        if self.kind == FINITE:
            return len(self.probs)
        if self.kind == ROWS:
            return len(self.rows)
        raise ValueError(f"{self.kind} ensemble has continuous support")

    def atom_matrices(self):
        if self.kind == FINITE:
            return self.atoms
        if self.kind == ROWS:
            return np.einsum("mi,mj->mij", self.rows, self.rows)
        raise ValueError(f"{self.kind} ensemble has continuous support")

    def atom_probs(self):
        if self.kind == FINITE:
            return self.probs
        if self.kind == ROWS:
            return np.full(len(self.rows), 1.0 / len(self.rows))
        raise ValueError(f"{self.kind} ensemble has continuous support")

    def support(self):
        """Full atom list as ``[(matrix, probability), ...]``."""
        return list(zip(self.atom_matrices(), self.atom_probs()))

    def mean(self):
        if self.kind == FINITE:
            return np.einsum("s,sij->ij", self.probs, self.atoms)
        if self.kind == ROWS:
            return self.rows.T @ self.rows / len(self.rows)
        return np.eye(self.dim)

    def radius(self):
        """Essential supremum of the operator norm of a sample."""
        if self.kind == FINITE:
            # atoms are PSD, so the norm is the top eigenvalue
            w, _ = jacobi_eigh(self.atoms)
            return float(max(np.max(w[:, 0]), 0.0))
        if self.kind == ROWS:
            return float(np.max(np.sum(self.rows**2, axis=1)))
        return float(self.dim)

    def draw_indices(self, seed, streams, step):
        """Atom indices for the ``step``-th factor of each trial in ``streams``."""
        u = uniforms(seed, streams, step, 1)[:, 0]
        if self.kind == FINITE:
            cum = np.cumsum(self.probs)
            idx = np.searchsorted(cum, u, side="right")
            return np.minimum(idx, len(self.probs) - 1)
        if self.kind == ROWS:
            m = len(self.rows)
            return np.minimum((u * m).astype(np.int64), m - 1)
        raise ValueError(f"{self.kind} ensemble has continuous support")

    def sample_batch(self, seed, streams, step):
        """The ``step``-th factor of every trial in ``streams``, shape ``(B, d, d)``."""
        if self.kind == SPHERE:
            z = normals(seed, streams, step, self.dim)
            v = z / np.linalg.norm(z, axis=1, keepdims=True)
            return self.dim * np.einsum("bi,bj->bij", v, v)
        idx = self.draw_indices(seed, streams, step)
        if self.kind == FINITE:
            return self.atoms[idx]
        a = self.rows[idx]
        return np.einsum("bi,bj->bij", a, a)

    def sample(self, rng: RngState):
        """One draw; advances ``rng``."""
        x = self.sample_batch(rng.seed, [rng.stream], rng.step)[0]
        rng.step += 1
        return x


def finite_support(atoms, probs):
    atoms = [sym_matrix(a) for a in atoms]
    if not atoms:
        raise ValueError("at least one atom is required")
    dim = atoms[0].shape[0]
    if any(a.shape != (dim, dim) for a in atoms):
        raise ValueError("atoms must share one dimension")
    probs = np.asarray(probs, dtype=float)
    if probs.shape != (len(atoms),):
        raise ValueError("need one probability per atom")
    if np.any(~np.isfinite(probs)) or np.any(probs <= 0):
        raise ValueError("probabilities must be positive")
    if abs(probs.sum() - 1.0) > PROB_TOL:
        raise ValueError(f"probabilities sum to {probs.sum()!r}, not 1")
    for k, a in enumerate(atoms):
        if not is_psd(a, PSD_TOL):
            raise ValueError(f"atom {k} is not positive semidefinite")
    atoms = np.stack(atoms)
    atoms.setflags(write=False)
    probs = probs / probs.sum()
    probs.setflags(write=False)
    return Ensemble(kind=FINITE, dim=dim, atoms=atoms, probs=probs)


def rank_one_rows(rows):
    rows = np.array(rows, dtype=float, ndmin=2)
    if rows.ndim != 2 or rows.shape[0] < 1 or rows.shape[1] < 1:
        raise ValueError("rows must be a non-empty (m, d) array")
    if not np.all(np.isfinite(rows)):
        raise ValueError("rows must be finite")
    rows.setflags(write=False)
    return Ensemble(kind=ROWS, dim=rows.shape[1], rows=rows)


def sphere_rank_one(dim):
    if int(dim) < 1:
        raise ValueError("dim must be positive")
    return Ensemble(kind=SPHERE, dim=int(dim))
