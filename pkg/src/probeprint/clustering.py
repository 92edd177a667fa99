"""Online leader clustering of fingerprints for device counting.

The first fingerprint opens cluster 0 and becomes its representative. Each
later fingerprint joins the nearest representative if that Hamming distance
is below ``tau`` (ties go to the lowest cluster id) and otherwise opens a
new cluster. Representatives never change.
"""
from dataclasses import dataclass

import numpy as np

from . import _accel
from ._accel import njit
from .errors import MatchingError


@dataclass
class Cluster:
    id: int
    representative: np.ndarray
    member_count: int
    members: list


@dataclass
class ClusteringRun:
    clusters: list
    tau: int
    assignment: np.ndarray

    @property
    def sizes(self):
        return [c.member_count for c in self.clusters]


def pack_words(fps):
    """Pack ``(n, M)`` 0/1 fingerprints into ``(n, ceil(M/64))`` uint64 words."""
    fps = np.asarray(fps, dtype=np.uint8)
    n, M = fps.shape
    n_words = max(1, -(-M // 64))
    padded = np.zeros((n, n_words * 64), dtype=np.uint8)
    padded[:, :M] = fps
    packed = np.packbits(padded, axis=1)
    return np.ascontiguousarray(packed).view(">u8").astype(np.uint64).reshape(n, n_words)


@njit
def _popcount64(x):
    x = x - ((x >> np.uint64(1)) & np.uint64(0x5555555555555555))
    x = (x & np.uint64(0x3333333333333333)) + ((x >> np.uint64(2)) & np.uint64(0x3333333333333333))
    x = (x + (x >> np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
    return (x * np.uint64(0x0101010101010101)) >> np.uint64(56)


@njit
def _leader_nb(words, tau, assignment, reps):
    n, n_words = words.shape
    n_clusters = 0
    for k in range(n):
        best = -1
        best_d = tau
        for c in range(n_clusters):
            d = 0
            r = reps[c]
            for w in range(n_words):
                d += _popcount64(words[k, w] ^ words[r, w])
            if d < best_d:
                best_d = d
                best = c
        if best < 0:
            reps[n_clusters] = k
            assignment[k] = n_clusters
            n_clusters += 1
        else:
            assignment[k] = best
    return n_clusters


def _leader_np(words, tau, assignment, reps):
    n = words.shape[0]
    n_clusters = 0
    rep_words = np.empty_like(words)
    for k in range(n):
        if n_clusters:
            d = np.bitwise_count(rep_words[:n_clusters] ^ words[k]).sum(axis=1)
            c = int(np.argmin(d))
            if d[c] < tau:
                assignment[k] = c
                continue
        rep_words[n_clusters] = words[k]
        reps[n_clusters] = k
        assignment[k] = n_clusters
        n_clusters += 1
    return n_clusters


def cluster_stream(fingerprints, tau, use_numba=None):
    """Cluster an ordered ``(n, M)`` fingerprint stream; see module docstring."""
    if isinstance(fingerprints, (list, tuple)):
        lengths = {len(f) for f in fingerprints}
        if len(lengths) > 1:
            raise MatchingError(f"mixed fingerprint lengths in stream: {sorted(lengths)}")
        fingerprints = np.array(fingerprints, dtype=np.uint8).reshape(len(fingerprints), -1)
    fps = np.asarray(fingerprints, dtype=np.uint8)
    if fps.ndim != 2:
        raise MatchingError("fingerprint stream must be a 2-D (n, M) array")
    n = fps.shape[0]
    assignment = np.empty(n, dtype=np.int64)
    reps = np.empty(n, dtype=np.int64)
    if n == 0:
        return ClusteringRun([], int(tau), assignment)
    words = pack_words(fps)
    if use_numba is None:
        use_numba = _accel.USE_NUMBA
    if use_numba:
        n_clusters = _leader_nb(words, np.int64(tau), assignment, reps)
    else:
        n_clusters = _leader_np(words, int(tau), assignment, reps)
    order = np.argsort(assignment, kind="stable")
    bounds = np.searchsorted(assignment[order], np.arange(n_clusters + 1))
    clusters = []
    for c in range(n_clusters):
        members = order[bounds[c]:bounds[c + 1]].tolist()
        clusters.append(Cluster(c, fps[reps[c]].copy(), len(members), members))
    return ClusteringRun(clusters, int(tau), assignment)


def count_devices(run):
    return len(run.clusters)
