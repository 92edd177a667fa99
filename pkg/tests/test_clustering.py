import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from probeprint.clustering import cluster_stream, count_devices, pack_words
from probeprint.errors import MatchingError


def brute_leader(fps, tau):
    reps, assignment = [], []
    for f in fps:
        d = [int(np.count_nonzero(f != r)) for r in reps]
        if d and min(d) < tau:
            assignment.append(d.index(min(d)))
        else:
            assignment.append(len(reps))
            reps.append(f)
    return assignment


def test_identical_stream():
    fps = np.tile(np.array([1, 0, 1, 1, 0, 0, 1, 0], np.uint8), (10, 1))
    run = cluster_stream(fps, 1)
    assert count_devices(run) == 1
    assert run.clusters[0].member_count == 10


def test_tau_zero_opens_every_cluster():
    fps = np.zeros((6, 8), np.uint8)
    run = cluster_stream(fps, 0)
    assert count_devices(run) == 6
    assert run.assignment.tolist() == list(range(6))


def test_hand_simulated():
    f = np.array([0] * 16, np.uint8)
    g = f.copy()
    g[:5] = 1
    run = cluster_stream(np.stack([f, f, g]), 3)
    assert count_devices(run) == 2
    assert run.sizes == [2, 1]
    assert run.assignment.tolist() == [0, 0, 1]


def test_empty_and_single():
    assert count_devices(cluster_stream(np.zeros((0, 16), np.uint8), 3)) == 0
    assert count_devices(cluster_stream(np.zeros((1, 16), np.uint8), 3)) == 1


def test_nearest_with_lowest_id_tiebreak():
    a = np.array([0, 0, 0, 0, 0, 0, 0, 0], np.uint8)
    b = np.array([1, 1, 1, 1, 0, 0, 0, 0], np.uint8)
    x = np.array([1, 1, 0, 0, 0, 0, 0, 0], np.uint8)  # distance 2 to both
    y = np.array([1, 1, 1, 0, 0, 0, 0, 0], np.uint8)  # 3 vs 1
    run = cluster_stream(np.stack([a, b, x, y]), 5)
    assert run.assignment.tolist() == [0, 0, 0, 0]
    run = cluster_stream(np.stack([a, b, x, y]), 3)
    assert run.assignment.tolist() == [0, 1, 0, 1]


def test_representatives_fixed():
    rng = np.random.default_rng(4)
    fps = rng.integers(0, 2, (50, 16)).astype(np.uint8)
    run = cluster_stream(fps, 5)
    for c in run.clusters:
        assert np.array_equal(c.representative, fps[c.members[0]])
        assert c.members == sorted(c.members)


def test_mixed_lengths():
    with pytest.raises(MatchingError):
        cluster_stream([np.zeros(8, np.uint8), np.zeros(9, np.uint8)], 2)


@pytest.mark.parametrize("M", [8, 16, 64, 70, 130])
@pytest.mark.parametrize("use_numba", [True, False])
def test_matches_brute_force(M, use_numba):
    rng = np.random.default_rng(M)
    for _ in range(10):
        centers = rng.integers(0, 2, (4, M)).astype(np.uint8)
        noise = (rng.random((40, M)) < 0.1).astype(np.uint8)
        fps = centers[rng.integers(0, 4, 40)] ^ noise
        tau = int(rng.integers(0, M // 2))
        run = cluster_stream(fps, tau, use_numba=use_numba)
        assert run.assignment.tolist() == brute_leader(fps, tau)


def test_pack_words_hamming():
    rng = np.random.default_rng(1)
    fps = rng.integers(0, 2, (5, 100)).astype(np.uint8)
    w = pack_words(fps)
    assert w.shape == (5, 2)
    d = np.bitwise_count(w[0] ^ w[1]).sum()
    assert d == np.count_nonzero(fps[0] != fps[1])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 40))
def test_deterministic(seed, n):
    fps = np.random.default_rng(seed).integers(0, 2, (n, 16)).astype(np.uint8)
    assert np.array_equal(cluster_stream(fps, 4).assignment, cluster_stream(fps, 4).assignment)


def test_extreme_taus():
    rng = np.random.default_rng(2)
    fps = rng.integers(0, 2, (30, 16)).astype(np.uint8)
    assert count_devices(cluster_stream(fps, 17)) == 1
    assert count_devices(cluster_stream(fps, 0)) == 30


def test_monotonicity_counterexample():
    # a larger tau lets x2 join x1, which leaves x3 and x4 (close to x2, far from
    # each other) to open two clusters instead of one
    x1 = [0, 0, 0, 0, 1, 1, 1, 0]
    x2 = [0, 0, 0, 0, 0, 0, 0, 0]
    x3 = [1, 1, 0, 0, 0, 0, 0, 0]
    x4 = [0, 0, 1, 1, 0, 0, 0, 0]
    fps = np.array([x1, x2, x3, x4], np.uint8)
    assert count_devices(cluster_stream(fps, 3)) == 2
    assert count_devices(cluster_stream(fps, 4)) == 3
