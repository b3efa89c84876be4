import numpy as np
import pytest

from randprod import RngState, finite_support, rank_one_rows, sphere_rank_one
from randprod.linalg import is_psd, operator_norm, sym_eigen
from randprod.theory import zero_mask

from conftest import random_psd


def test_single_atom_is_deterministic():
    s0 = np.array([[2.0, 1.0], [1.0, 3.0]])
    e = finite_support([s0], [1.0])
    rng = RngState(1)
    for _ in range(5):
        np.testing.assert_array_equal(e.sample(rng), s0)
    np.testing.assert_array_equal(e.mean(), s0)
    assert len(e.support()) == 1 and e.support()[0][1] == 1.0


def test_single_row():
    a = np.array([1.0, -2.0, 0.5])
    e = rank_one_rows([a])
    np.testing.assert_array_equal(e.sample(RngState(3)), np.outer(a, a))


def test_two_point_sampling(two_point):
    draws = two_point.sample_batch(42, np.arange(100_000), 0)[:, 0, 0]
    assert set(np.unique(draws)) <= {0.0, 2.0}
    # each draw has variance 1
    assert abs(draws.mean() - 1.0) <= 4 * np.sqrt(1.0 / draws.size)


def test_means():
    s0 = np.diag([1.0, 2.0])
    assert np.array_equal(finite_support([s0], [1.0]).mean(), s0)
    two = finite_support([[[0.0]], [[2.0]]], [0.5, 0.5])
    assert two.mean()[0, 0] == 0.5 * 0.0 + 0.5 * 2.0
    rows = np.array([[1.0, 2.0], [0.0, 1.0], [3.0, -1.0]])
    np.testing.assert_allclose(rank_one_rows(rows).mean(), sum(np.outer(r, r) for r in rows) / 3)
    np.testing.assert_array_equal(sphere_rank_one(3).mean(), np.eye(3))


def test_sphere_mean_monte_carlo():
    e = sphere_rank_one(3)
    total = np.zeros((3, 3))
    total_sq = np.zeros((3, 3))
    n = 10**6
    for start in range(0, n, 100_000):
        x = e.sample_batch(8, np.arange(start, start + 100_000), 0)
        total += x.sum(axis=0)
        total_sq += (x**2).sum(axis=0)
    mean = total / n
    se = np.sqrt((total_sq / n - mean**2) / n)
    assert np.all(np.abs(mean - np.eye(3)) <= 4 * se)


def test_radius():
    assert finite_support([np.eye(2)], [1.0]).radius() == pytest.approx(1.0)
    assert rank_one_rows([[1.0, 0.0], [0.0, 2.0]]).radius() == 4.0
    assert sphere_rank_one(5).radius() == 5.0


def test_support():
    e = rank_one_rows(np.eye(2))
    atoms = e.support()
    np.testing.assert_array_equal(atoms[0][0], np.diag([1.0, 0.0]))
    np.testing.assert_array_equal(atoms[1][0], np.diag([0.0, 1.0]))
    assert [p for _, p in atoms] == [0.5, 0.5]
    two = finite_support([[[0.0]], [[2.0]]], [0.5, 0.5])
    assert [(float(m[0, 0]), p) for m, p in two.support()] == [(0.0, 0.5), (2.0, 0.5)]
    with pytest.raises(ValueError):
        sphere_rank_one(2).support()


def test_validation():
    with pytest.raises(ValueError):
        finite_support([np.eye(2)], [0.9])
    with pytest.raises(ValueError):
        finite_support([np.eye(2), np.eye(2)], [1.5, -0.5])
    with pytest.raises(ValueError):
        finite_support([np.diag([1.0, -1.0])], [1.0])
    with pytest.raises(ValueError):
        rank_one_rows([[1.0, np.inf]])
    with pytest.raises(ValueError):
        sphere_rank_one(0)


def test_probabilities_renormalized():
    e = finite_support([np.eye(1), 2 * np.eye(1), 3 * np.eye(1)], [0.1, 0.2, 0.7 + 5e-13])
    assert e.probs.sum() == pytest.approx(1.0, abs=1e-15)


def test_zero_atom_allowed():
    e = finite_support([np.zeros((2, 2)), np.eye(2)], [0.5, 0.5])
    assert e.radius() == pytest.approx(1.0)


@pytest.mark.parametrize("kind", ["finite", "rows", "sphere"])
def test_samples_are_psd_and_bounded(kind):
    rng = np.random.default_rng(1)
    if kind == "finite":
        e = finite_support([random_psd(rng, 3, 1), random_psd(rng, 3), np.zeros((3, 3))], [0.2, 0.3, 0.5])
    elif kind == "rows":
        e = rank_one_rows(rng.standard_normal((6, 3)))
    else:
        e = sphere_rank_one(3)
    r = e.radius()
    x = e.sample_batch(4, np.arange(500), 2)
    assert np.all(operator_norm(x) <= r + 1e-10)
    for m in x[:100]:
        assert is_psd(m, 1e-10)


@pytest.mark.parametrize("kind", ["finite", "rows", "sphere"])
def test_empirical_mean_converges(kind):
    rng = np.random.default_rng(2)
    if kind == "finite":
        e = finite_support([random_psd(rng, 3, 1), random_psd(rng, 3, 2)], [0.4, 0.6])
    elif kind == "rows":
        e = rank_one_rows(rng.standard_normal((5, 3)))
    else:
        e = sphere_rank_one(3)
    x = e.sample_batch(17, np.arange(100_000), 0)
    mean = x.mean(axis=0)
    se = x.std(axis=0, ddof=1) / np.sqrt(len(x))
    assert np.linalg.norm(mean - e.mean()) <= 4 * np.linalg.norm(se)


def test_kernel_vectors_are_annihilated():
    rng = np.random.default_rng(3)
    # atoms share a 2-dimensional range inside R^4, so the mean has a 2-dimensional kernel
    basis = np.linalg.qr(rng.standard_normal((4, 2)))[0]
    atoms = [basis @ random_psd(rng, 2, 1) @ basis.T for _ in range(3)]
    e = finite_support(atoms, [0.2, 0.3, 0.5])
    s = sym_eigen(e.mean())
    zero = zero_mask(s.eigenvalues)
    assert zero.sum() == 2
    for x in atoms:
        for i in np.flatnonzero(zero):
            assert np.linalg.norm(x @ s.vector(i)) <= 1e-10


def test_sampling_is_deterministic(rows4):
    a = [rows4.sample(RngState(99, 4)) for _ in range(1)]
    r1, r2 = RngState(99, 4), RngState(99, 4)
    seq1 = np.stack([rows4.sample(r1) for _ in range(10)])
    seq2 = np.stack([rows4.sample(r2) for _ in range(10)])
    assert seq1.tobytes() == seq2.tobytes()
    np.testing.assert_array_equal(a[0], seq1[0])
