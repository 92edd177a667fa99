import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from probeprint.codec import FingerprintModel, WeakClassifier
from probeprint.errors import EvaluationError, ProtocolError
from probeprint.evaluation import (
    RocPoint, clustering_quality, memory_report, optimal_tau, roc_curve, roc_from_distances,
    subset_protocol, weighted_roc_curve, write_roc_csv,
)
from probeprint.filters import BitmaskFilter, generate_bank
from probeprint.ingest import ProbeVector
from probeprint.pairs import build_pairs, split
from probeprint.trainer import train

from conftest import synthetic_vectors
from oracles import oracle_hcv, planted_dataset


@pytest.fixture(scope="module")
def trained():
    vectors = synthetic_vectors(8, 15, seed=2)
    ds = build_pairs(vectors, 150, seed=0)
    tr, te = split(ds, 0.6, seed=0)
    model = train(tr, generate_bank(stride=16), M=16)
    return vectors, model, te


class TestRoc:
    def test_endpoints_and_monotone(self, trained):
        _, model, te = trained
        curve = roc_curve(model, te)
        assert len(curve) == model.M + 2
        assert (curve[0].fpr, curve[0].tpr) == (0.0, 0.0)
        assert (curve[-1].fpr, curve[-1].tpr) == (1.0, 1.0)
        assert all(a.tpr <= b.tpr and a.fpr <= b.fpr for a, b in zip(curve, curve[1:]))
        assert [p.tau for p in curve] == list(range(model.M + 2))

    def test_planted_perfect_point(self, rng):
        vectors = planted_dataset(rng, per_device=20)
        tr, te = split(build_pairs(vectors, 100, seed=1), 0.6, seed=1)
        model = train(tr, generate_bank(), M=1)
        curve = roc_curve(model, te)
        assert any(p.fpr == 0 and p.tpr == 1 for p in curve)
        assert optimal_tau(curve) == 1

    def test_needs_both_classes(self, trained):
        vectors, model, te = trained
        only_pos = te.take(np.flatnonzero(te.y == 1))
        with pytest.raises(EvaluationError):
            roc_curve(model, only_pos)

    def test_from_distances(self):
        d = np.array([0, 1, 3, 2, 5, 4])
        y = np.array([1, 1, 1, -1, -1, -1])
        curve = roc_from_distances(d, y, 5)
        assert curve[2] == RocPoint(2, 2 / 3, 0.0)
        assert curve[4] == RocPoint(4, 1.0, 1 / 3)

    def test_weighted_endpoints(self, trained):
        _, model, te = trained
        curve = weighted_roc_curve(model, te)
        assert (curve[0].tpr, curve[0].fpr) == (0.0, 0.0)
        assert (curve[-1].tpr, curve[-1].fpr) == (1.0, 1.0)
        assert all(a.tpr <= b.tpr and a.fpr <= b.fpr for a, b in zip(curve, curve[1:]))

    def test_csv(self, trained, tmp_path):
        _, model, te = trained
        write_roc_csv(tmp_path / "roc.csv", roc_curve(model, te))
        lines = (tmp_path / "roc.csv").read_text().splitlines()
        assert lines[0] == "tau,tpr,fpr"
        assert len(lines) == model.M + 3


class TestOptimalTau:
    def test_corner(self):
        curve = [RocPoint(0, 0, 0), RocPoint(1, 1, 0), RocPoint(2, 1, 1)]
        assert optimal_tau(curve) == 1

    def test_single_point(self):
        assert optimal_tau([RocPoint(5, 0.3, 0.2)]) == 5

    def test_tie_goes_low(self):
        curve = [RocPoint(3, 0.9, 0.1), RocPoint(2, 0.8, 0.0), RocPoint(4, 1.0, 0.2)]
        # distances: tau 2 -> 0.2, tau 3 -> 0.1414, tau 4 -> 0.2
        assert optimal_tau(curve) == 3
        assert optimal_tau([RocPoint(4, 1.0, 0.2), RocPoint(2, 0.8, 0.0)]) == 2

    def test_empty(self):
        with pytest.raises(EvaluationError):
            optimal_tau([])


class TestClusteringQuality:
    def test_pure(self):
        q = clustering_quality([0, 0, 1, 1, 2], ["a", "a", "b", "b", "c"])
        assert (q.homogeneity, q.completeness, q.v_measure) == (1.0, 1.0, 1.0)
        assert q.cluster_count == q.true_device_count == 3

    def test_single_cluster(self):
        q = clustering_quality([0, 0, 0, 0], ["a", "a", "b", "b"])
        assert q.completeness == 1.0 and q.homogeneity < 1.0

    def test_hand_entropy(self):
        # H(C) = -(3/4 ln 3/4 + 1/4 ln 1/4); H(C|K) = 1/2 * (-(1/2 ln 1/2) * 2) = 1/2 ln 2
        q = clustering_quality([0, 0, 1, 1], ["A", "A", "A", "B"])
        hc = -(0.75 * np.log(0.75) + 0.25 * np.log(0.25))
        assert q.homogeneity == pytest.approx(1 - 0.5 * np.log(2) / hc, abs=1e-12)
        # H(K) = ln 2; H(K|C) = 3/4 * H(2/3, 1/3)
        hk_c = 0.75 * -(2 / 3 * np.log(2 / 3) + 1 / 3 * np.log(1 / 3))
        assert q.completeness == pytest.approx(1 - hk_c / np.log(2), abs=1e-12)
        assert q.v_measure == pytest.approx(
            2 * q.homogeneity * q.completeness / (q.homogeneity + q.completeness), abs=1e-15)

    def test_exhaustive_against_oracle(self):
        for n in range(1, 6):
            for assign in itertools.product(range(3), repeat=n):
                for truth in itertools.product("ab", repeat=n):
                    q = clustering_quality(assign, truth)
                    h, c, v = oracle_hcv(assign, truth)
                    assert q.homogeneity == pytest.approx(h, abs=1e-12)
                    assert q.completeness == pytest.approx(c, abs=1e-12)
                    assert q.v_measure == pytest.approx(v, abs=1e-12)

    def test_agrees_with_sklearn(self, rng):
        sk = pytest.importorskip("sklearn.metrics")
        for _ in range(20):
            a = rng.integers(0, 5, 40)
            t = rng.integers(0, 4, 40)
            q = clustering_quality(a, t)
            h, c, v = sk.homogeneity_completeness_v_measure(t, a)
            assert (q.homogeneity, q.completeness, q.v_measure) == pytest.approx((h, c, v), abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 3)), min_size=1, max_size=30),
           st.permutations(range(5)))
    def test_permutation_invariant(self, pairs, perm):
        assign = [a for a, _ in pairs]
        truth = [t for _, t in pairs]
        q1 = clustering_quality(assign, truth)
        q2 = clustering_quality([perm[a] for a in assign], truth)
        assert q1.homogeneity == pytest.approx(q2.homogeneity, abs=1e-12)
        assert q1.completeness == pytest.approx(q2.completeness, abs=1e-12)
        assert 0 <= q1.v_measure <= 1 + 1e-12

    def test_length_mismatch(self):
        with pytest.raises(EvaluationError):
            clustering_quality([0, 1], ["a"])


def separated_model_and_vectors(n_devices, per_device):
    """Each device owns one byte with a distinct high bit pattern; a D filter per byte."""
    vectors = []
    for d in range(n_devices):
        data = bytearray(223)
        data[d] = 0xFF
        for _ in range(per_device):
            vectors.append(ProbeVector(bytes(data), f"dev{d}", 1, len(vectors)))
    cls = tuple(WeakClassifier(BitmaskFilter("D", 8, 8 * d), 4, 1.0, 0.1) for d in range(n_devices))
    return FingerprintModel(cls), vectors


class TestSubsetProtocol:
    def test_perfectly_separated(self):
        model, vectors = separated_model_and_vectors(6, 5)
        # fingerprints are one-hot, pairwise distance 2; tau = 1 separates all devices
        report = subset_protocol(vectors, model, tau=1, d=4, seed=3)
        assert [r["p"] for r in report.per_p] == [1, 2, 3, 4, 5]
        assert all(r["rmse"] == 0 for r in report.per_p)
        assert report.summary["v_measure_avg"] == 1.0
        assert report.summary["rmse_avg"] == 0.0

    def test_memory_row(self):
        model, vectors = separated_model_and_vectors(3, 2)
        report = subset_protocol(vectors, model, tau=1, d=1, seed=0)
        assert report.summary["memory_bits_per_probe"] == model.M

    def test_deterministic(self, trained):
        vectors, model, _ = trained
        a = subset_protocol(vectors, model, 3, d=3, seed=11)
        b = subset_protocol(vectors, model, 3, d=3, seed=11)
        assert a.rows == b.rows and a.summary == b.summary
        c = subset_protocol(vectors, model, 3, d=3, seed=11, workers=4)
        assert c.rows == a.rows

    def test_rmse_definition(self, trained):
        vectors, model, _ = trained
        report = subset_protocol(vectors, model, 2, d=5, seed=0)
        for row in report.per_p:
            counts = [r["cluster_count"] for r in report.rows if r["p"] == row["p"]]
            assert row["rmse"] == pytest.approx(np.sqrt(np.mean((np.array(counts) - row["p"]) ** 2)))
            assert row["homogeneity"] == pytest.approx(
                np.mean([r["homogeneity"] for r in report.rows if r["p"] == row["p"]]))
        assert report.summary["rmse_avg"] == pytest.approx(np.mean([r["rmse"] for r in report.per_p]))

    def test_p_one_single_device(self):
        model, vectors = separated_model_and_vectors(4, 5)
        report = subset_protocol(vectors, model, 1, d=3, seed=0, p_values=[1])
        assert report.per_p[0]["cluster_count"] == 1 and report.per_p[0]["rmse"] == 0

    def test_errors(self):
        model, vectors = separated_model_and_vectors(3, 2)
        with pytest.raises(ProtocolError):
            subset_protocol(vectors, model, 1, p_values=[4])
        with pytest.raises(ProtocolError):
            subset_protocol(vectors[:2], model, 1)

    def test_write(self, trained, tmp_path):
        vectors, model, _ = trained
        report = subset_protocol(vectors, model, 3, d=2, seed=0)
        report.write(tmp_path / "c.csv", tmp_path / "s.json", tmp_path / "p.csv")
        header = (tmp_path / "c.csv").read_text().splitlines()[0]
        assert header == "p,repetition,homogeneity,completeness,v_measure,cluster_count"
        summary = json.loads((tmp_path / "s.json").read_text())
        assert summary["table"]["memory_bits_per_probe"] == 16
        assert summary["table"]["compression_ratio"] == 111.5


@pytest.mark.parametrize("M,display", [(16, 111.5), (32, 55.7), (64, 27.8)])
def test_memory_report(M, display):
    rep = memory_report(M)
    assert rep["memory_bits_per_probe"] == M
    assert rep["compression_ratio"] * M == 1784
    assert rep["compression_ratio_display"] == display
