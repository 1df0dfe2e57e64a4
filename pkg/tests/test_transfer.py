import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

import oracles
from havok.transfer import (
    BoxGrid, TransitionMatrix, almost_invariant_sets, box_activity, lobe_labels,
    partition_overlap, reversibilize, ulam_matrix,
)
from havok.timeseries import Trajectory


def line_grid(n):
    return BoxGrid(np.array([0.0]), np.array([float(n)]), (n,))


def traj_of(x, dt=1.0):
    x = np.asarray(x, dtype=float)
    return Trajectory(0.0, dt, x.reshape(len(x), -1))


def tm_from(P, pi=None):
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    if pi is None:
        w, V = np.linalg.eig(P.T)
        pi = np.abs(np.real(V[:, np.argmin(np.abs(w - 1))]))
        pi /= pi.sum()
    return TransitionMatrix(sp.csr_matrix(P), 1.0, 1, np.arange(n), np.asarray(pi), line_grid(max(n, 2)))


def test_box_grid_validation():
    with pytest.raises(ValueError):
        BoxGrid(np.zeros(2), np.ones(2), (3,))
    with pytest.raises(ValueError):
        BoxGrid(np.zeros(1), np.ones(1), (1,))
    with pytest.raises(ValueError):
        BoxGrid(np.ones(1), np.zeros(1), (4,))
    g = BoxGrid(np.zeros(2), np.ones(2), (4, 5))
    assert g.n_boxes == 20
    # points on the upper face land in the last box
    assert g.locate(np.array([[1.0, 1.0]]))[0] == 19
    np.testing.assert_array_equal(g.unravel(g.locate(np.array([[0.3, 0.5]]))), [[1, 2]])


def test_constant_trajectory_single_box():
    traj = traj_of(np.full(50, 0.5))
    tm = ulam_matrix(traj, BoxGrid.around(traj.states), 1.0)
    assert tm.n == 1
    np.testing.assert_array_equal(tm.P.toarray(), [[1.0]])


def test_period_two_alternation():
    traj = traj_of(np.tile([0.5, 1.5], 20))
    tm = ulam_matrix(traj, line_grid(2), 1.0)
    np.testing.assert_array_equal(tm.P.toarray(), [[0, 1], [1, 0]])
    np.testing.assert_allclose(tm.pi, [0.5, 0.5])


def test_lag_validation():
    traj = traj_of(np.arange(10.0), dt=0.1)
    with pytest.raises(ValueError):
        ulam_matrix(traj, line_grid(10), 0.15)
    with pytest.raises(ValueError):
        ulam_matrix(traj, line_grid(10), 1.0)


@given(st.integers(0, 10_000), st.integers(1, 5))
def test_rows_stochastic_and_pi_stationary(seed, steps):
    x = np.cumsum(np.random.default_rng(seed).normal(size=(300, 2)), axis=0)
    traj = Trajectory(0.0, 0.1, x)
    tm = ulam_matrix(traj, BoxGrid.around(x, 6), steps * 0.1)
    P = tm.P.toarray()
    assert np.all(P >= 0)
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(tm.pi @ P, tm.pi, atol=1e-12)
    R = reversibilize(tm).toarray()
    np.testing.assert_allclose(R.sum(axis=1), 1.0, atol=1e-12)
    PiR = tm.pi[:, None] * R
    np.testing.assert_allclose(PiR, PiR.T, atol=1e-12)


def test_reversibilize_examples():
    R = reversibilize(tm_from([[0.5, 0.5], [0.5, 0.5]])).toarray()
    np.testing.assert_allclose(R, 0.5)
    R = reversibilize(tm_from([[0, 1], [1, 0]])).toarray()
    np.testing.assert_allclose(R, [[0, 1], [1, 0]])
    with pytest.raises(ValueError):
        reversibilize(tm_from(np.eye(2), pi=[1.0, 0.0]))


def test_reversibilize_random_10(rng):
    P = rng.random((10, 10))
    P /= P.sum(axis=1, keepdims=True)
    tm = tm_from(P)
    R = reversibilize(tm).toarray()
    PiR = tm.pi[:, None] * R
    assert np.max(np.abs(PiR - PiR.T)) <= 1e-10
    np.testing.assert_allclose(R.sum(axis=1), 1.0, atol=1e-10)


def test_two_disconnected_blocks():
    B = np.array([[0.5, 0.5], [0.5, 0.5]])
    P = np.block([[B, np.zeros((2, 2))], [np.zeros((2, 2)), B]])
    res = almost_invariant_sets(P, np.full(4, 0.25))
    assert abs(res.lambda2 - 1.0) <= 1e-10
    assert res.labels[0] == res.labels[1] != res.labels[2] == res.labels[3]


def test_uniform_chain_lambda_zero():
    res = almost_invariant_sets(np.full((5, 5), 0.2), np.full(5, 0.2))
    assert abs(res.lambda2) <= 1e-8


def test_flip_chain_falls_back():
    res = almost_invariant_sets(np.array([[0.0, 1.0], [1.0, 0.0]]), np.array([0.5, 0.5]))
    assert res.lambda2 == pytest.approx(-1.0)
    assert sorted(res.labels) == [0, 1]


def test_single_box():
    res = almost_invariant_sets(np.array([[1.0]]), np.array([1.0]))
    assert res.lambda2 == 0.0 and res.labels.tolist() == [0]


def test_input_validation():
    with pytest.raises(ValueError):
        almost_invariant_sets(np.eye(2), np.ones(3))
    with pytest.raises(ValueError):
        almost_invariant_sets(np.eye(2), np.array([1.0, 0.0]))


def _random_reversible(seed, n):
    rng = np.random.default_rng(seed)
    W = rng.random((n, n))
    W = W + W.T  # symmetric weights give a reversible walk
    pi = W.sum(axis=1) / W.sum()
    return W / W.sum(axis=1, keepdims=True), pi


@given(st.integers(0, 10_000), st.integers(3, 12))
def test_lambda2_matches_dense_spectrum(seed, n):
    R, pi = _random_reversible(seed, n)
    lam = oracles.dense_eigvals(R)
    assert np.max(np.abs(lam.imag)) <= 1e-8
    ref = np.sort(lam.real)[-2]
    res = almost_invariant_sets(R, pi)
    assert res.lambda2 <= 1 + 1e-10
    assert res.lambda2 == pytest.approx(ref, abs=1e-6)


@given(st.integers(0, 10_000), st.integers(3, 10))
def test_permutation_invariance(seed, n):
    R, pi = _random_reversible(seed, n)
    perm = np.random.default_rng(seed + 1).permutation(n)
    a = almost_invariant_sets(R, pi)
    b = almost_invariant_sets(R[np.ix_(perm, perm)], pi[perm])
    assert b.lambda2 == pytest.approx(a.lambda2, abs=1e-8)
    # the eigenvector is unique up to sign when the gap is clear
    gap = np.diff(np.sort(oracles.dense_eigvals(R).real))[-2]
    if gap > 1e-3 and np.min(np.abs(a.vector)) > 1e-4:
        same = np.array_equal(a.labels[perm], b.labels)
        flipped = np.array_equal(1 - a.labels[perm], b.labels)
        assert same or flipped


def test_partition_overlap_identical_and_complementary():
    traj = traj_of(np.tile([0.5, 1.5, 2.5, 3.5], 10))
    tm = ulam_matrix(traj, line_grid(4), 1.0)
    labels = np.array([0, 0, 1, 1])
    assert partition_overlap(tm, labels, labels).score == 1.0
    assert partition_overlap(tm, labels, 1 - labels).score == 1.0
    rep = partition_overlap(tm, labels, labels)
    np.testing.assert_array_equal(rep.contingency, [[2, 0], [0, 2]])
    with pytest.raises(ValueError, match="grid mismatch"):
        partition_overlap(tm, labels[:3], labels)


def test_partition_overlap_complementary_two_boxes():
    traj = traj_of(np.tile([0.5, 1.5], 10))
    tm = ulam_matrix(traj, line_grid(2), 1.0)
    assert partition_overlap(tm, np.array([0, 1]), np.array([1, 0])).score == 1.0


def test_box_activity_majority():
    traj = traj_of([0.5, 0.5, 0.5, 1.5, 1.5])
    tm = ulam_matrix(traj, line_grid(2), 1.0)
    np.testing.assert_array_equal(box_activity(tm, traj, [1, 1, 0, 0, 1]), [1, 0])
    # offset shifts which sample each flag belongs to
    np.testing.assert_array_equal(box_activity(tm, traj, [1, 1, 1], offset=2), [1, 1])


@pytest.fixture(scope="module")
def lorenz_sets(lorenz):
    traj = lorenz.traj
    tm = ulam_matrix(traj, BoxGrid.around(traj.states), 100 * traj.dt)
    return tm, almost_invariant_sets(reversibilize(tm), tm.pi)


@pytest.mark.slow
def test_lorenz_occupied_boxes(lorenz_sets):
    tm, _ = lorenz_sets
    assert 100 < tm.n < 4000
    np.testing.assert_allclose(np.asarray(tm.P.sum(axis=1)).ravel(), 1.0, atol=1e-12)


@pytest.mark.slow
def test_lorenz_almost_invariant_lobes(lorenz_sets):
    tm, res = lorenz_sets
    assert res.lambda2 >= 0.9
    lobes = lobe_labels(tm, res.labels)
    assert lobes[0] != lobes[1]
    R = reversibilize(tm).toarray()
    ref = np.sort(np.linalg.eigvals(R).real)[-2]
    assert res.lambda2 == pytest.approx(ref, abs=1e-6)


@pytest.mark.slow
def test_lorenz_overlap_reported(lorenz, lorenz_sets):
    tm, res = lorenz_sets
    act = lorenz.activity
    offset = int(round((act.times[0] - lorenz.traj.t0) / lorenz.traj.dt))
    rep = partition_overlap(tm, res.labels, box_activity(tm, lorenz.traj, act.mask, offset))
    assert 0.0 <= rep.score <= 1.0
    assert rep.contingency.sum() == tm.n
