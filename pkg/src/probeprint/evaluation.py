"""ROC sweeps, clustering quality scores and the random device-subset protocol."""
import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .clustering import cluster_stream
from .codec import compression_ratio, fingerprint_batch, hamming_rows, weighted_score
from .errors import EvaluationError, ProtocolError
from .ingest import VECTOR_BITS


@dataclass(frozen=True)
class RocPoint:
    tau: float
    tpr: float
    fpr: float


@dataclass(frozen=True)
class ClusterQuality:
    homogeneity: float
    completeness: float
    v_measure: float
    cluster_count: int
    true_device_count: int


def _pair_fingerprints(model, pairs, fps=None):
    if fps is None:
        fps = fingerprint_batch(model, pairs.vectors)
    return fps[pairs.a], fps[pairs.b]


def _check_classes(y):
    if not np.any(y == 1) or not np.any(y == -1):
        raise EvaluationError("test pairs need both matching and non-matching examples")


def roc_curve(model, test_pairs, fps=None):
    """ROC of Hamming matching for ``tau = 0 .. M+1`` on held-out pairs.

    ``fps`` optionally supplies precomputed fingerprints for ``test_pairs.vectors``.
    """
    y = np.asarray(test_pairs.y)
    _check_classes(y)
    fa, fb = _pair_fingerprints(model, test_pairs, fps)
    dist = hamming_rows(fa, fb)
    return roc_from_distances(dist, y, model.M)


def roc_from_distances(dist, y, M):
    pos = y == 1
    neg = ~pos
    points = []
    for tau in range(M + 2):
        pred = dist < tau
        points.append(RocPoint(tau, float(pred[pos].mean()), float(pred[neg].mean())))
    return points


def weighted_roc_curve(model, test_pairs, fps=None):
    """ROC of confidence-weighted matching (``score >= tau_w``) over every distinct score."""
    y = np.asarray(test_pairs.y)
    _check_classes(y)
    fa, fb = _pair_fingerprints(model, test_pairs, fps)
    score = np.atleast_1d(weighted_score(model, fa, fb))
    pos = y == 1
    taus = [math.inf] + sorted(set(score.tolist()), reverse=True)
    points = []
    for tau in taus:
        pred = score >= tau
        points.append(RocPoint(tau, float(pred[pos].mean()), float(pred[~pos].mean())))
    return points


def optimal_tau(curve, tie_tol=1e-12):
    """Threshold of the point closest to (FPR 0, TPR 1); ties go to the smaller threshold."""
    if not curve:
        raise EvaluationError("empty ROC curve")
    best = None
    for pt in sorted(curve, key=lambda p: p.tau):
        d = math.hypot(pt.fpr, 1.0 - pt.tpr)
        if best is None or d < best[0] - tie_tol:
            best = (d, pt.tau)
    return best[1]


def _entropy(counts):
    counts = counts[counts > 0].astype(np.float64)
    total = counts.sum()
    p = counts / total
    return float(-(p * np.log(p)).sum())


def clustering_quality(assignment, truth):
    """Homogeneity, completeness and V-measure (natural-log entropies)."""
    assignment = list(assignment)
    truth = list(truth)
    if len(assignment) != len(truth):
        raise EvaluationError(f"{len(assignment)} assignments for {len(truth)} labels")
    if not truth:
        raise EvaluationError("cannot score an empty clustering")
    _, k_idx = np.unique(np.asarray(assignment), return_inverse=True)
    _, c_idx = np.unique(np.asarray(truth, dtype=object).astype(str), return_inverse=True)
    n = len(truth)
    table = np.zeros((c_idx.max() + 1, k_idx.max() + 1), dtype=np.int64)
    np.add.at(table, (c_idx, k_idx), 1)

    h_c = _entropy(table.sum(axis=1))
    h_k = _entropy(table.sum(axis=0))
    nz = table > 0
    joint = table[nz].astype(np.float64) / n
    marg_k = np.broadcast_to(table.sum(axis=0, keepdims=True), table.shape)[nz] / n
    marg_c = np.broadcast_to(table.sum(axis=1, keepdims=True), table.shape)[nz] / n
    h_c_given_k = float(-(joint * np.log(joint / marg_k)).sum())
    h_k_given_c = float(-(joint * np.log(joint / marg_c)).sum())

    homogeneity = 1.0 if h_c == 0 else 1.0 - h_c_given_k / h_c
    completeness = 1.0 if h_k == 0 else 1.0 - h_k_given_c / h_k
    denom = homogeneity + completeness
    v = 0.0 if denom == 0 else 2.0 * homogeneity * completeness / denom
    return ClusterQuality(homogeneity, completeness, v, table.shape[1], table.shape[0])


def memory_bits(model):
    return model.M


def memory_report(M, raw_bits=VECTOR_BITS):
    """Per-probe storage figures; the ratio is also given truncated to one decimal."""
    ratio = compression_ratio(M, raw_bits)
    return {
        "memory_bits_per_probe": M,
        "compression_ratio": ratio,
        "compression_ratio_display": math.floor(ratio * 10) / 10,
    }


@dataclass
class SubsetReport:
    rows: list
    per_p: list
    summary: dict
    seed: int
    tau: int
    stream_order: str = "dataset"
    extra: dict = field(default_factory=dict)

    def write(self, csv_path, summary_path=None, per_p_path=None):
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["p", "repetition", "homogeneity", "completeness", "v_measure", "cluster_count"])
            for r in self.rows:
                w.writerow([r["p"], r["repetition"], _f(r["homogeneity"]), _f(r["completeness"]),
                            _f(r["v_measure"]), r["cluster_count"]])
        if per_p_path:
            with open(per_p_path, "w", newline="") as fh:
                w = csv.writer(fh)
                keys = ["p", "homogeneity", "completeness", "v_measure", "cluster_count", "rmse"]
                w.writerow(keys)
                for r in self.per_p:
                    w.writerow([r["p"]] + [_f(r[k]) for k in keys[1:]])
        if summary_path:
            Path(summary_path).write_text(json.dumps(self.summary_json(), indent=2, sort_keys=True) + "\n")

    def summary_json(self):
        s = dict(self.summary)
        s["compression_ratio"] = float(s["compression_ratio"])
        return {"table": s, "seed": self.seed, "tau": self.tau, "stream_order": self.stream_order,
                **self.extra}


def _f(x):
    return format(float(x), ".10g")


def _device_index(vectors):
    labels = sorted({v.device_label for v in vectors})
    lookup = {l: k for k, l in enumerate(labels)}
    return labels, np.array([lookup[v.device_label] for v in vectors], dtype=np.int64)


def subset_protocol(vectors, model, tau, d=10, seed=0, p_values=None, fps=None, workers=1):
    """Device-counting protocol over random device subsets.

    For each population size ``p`` (default ``1 .. P-1``) draw ``d`` random
    sets of ``p`` devices, cluster all their probe vectors in dataset order
    and score the result. Per-``p`` means and the RMSE of the cluster count
    against ``p`` are reported, plus uniform averages over ``p``.
    """
    labels, dev = _device_index(vectors)
    P = len(labels)
    if P < 2:
        raise ProtocolError(f"the subset protocol needs at least 2 devices, dataset has {P}")
    if p_values is None:
        p_values = range(1, P)
    p_values = list(p_values)
    for p in p_values:
        if not 1 <= p <= P:
            raise ProtocolError(f"population size {p} outside [1, {P}]")
    if fps is None:
        fps = fingerprint_batch(model, vectors)

    rng = np.random.default_rng(seed)
    cells = [(p, r, np.sort(rng.choice(P, size=p, replace=False))) for p in p_values for r in range(d)]

    def run(cell):
        p, r, chosen = cell
        rows = np.flatnonzero(np.isin(dev, chosen))
        result = cluster_stream(fps[rows], tau)
        q = clustering_quality(result.assignment, dev[rows])
        return {"p": p, "repetition": r, "devices": [labels[k] for k in chosen],
                "homogeneity": q.homogeneity, "completeness": q.completeness,
                "v_measure": q.v_measure, "cluster_count": q.cluster_count}

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            rows = list(ex.map(run, cells))
    else:
        rows = [run(c) for c in cells]

    per_p = []
    for p in p_values:
        cell_rows = [r for r in rows if r["p"] == p]
        counts = np.array([r["cluster_count"] for r in cell_rows], dtype=np.float64)
        per_p.append({
            "p": p,
            "homogeneity": float(np.mean([r["homogeneity"] for r in cell_rows])),
            "completeness": float(np.mean([r["completeness"] for r in cell_rows])),
            "v_measure": float(np.mean([r["v_measure"] for r in cell_rows])),
            "cluster_count": float(counts.mean()),
            "rmse": float(np.sqrt(np.mean((counts - p) ** 2))),
        })
    summary = {
        "v_measure_avg": float(np.mean([r["v_measure"] for r in per_p])),
        "homogeneity_avg": float(np.mean([r["homogeneity"] for r in per_p])),
        "completeness_avg": float(np.mean([r["completeness"] for r in per_p])),
        "rmse_avg": float(np.mean([r["rmse"] for r in per_p])),
        **memory_report(model.M),
    }
    return SubsetReport(rows, per_p, summary, seed, int(tau), extra={"devices": P, "repetitions": d})


def write_roc_csv(path, curve):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tau", "tpr", "fpr"])
        for pt in curve:
            tau = pt.tau if isinstance(pt.tau, int) else _f(pt.tau)
            w.writerow([tau, _f(pt.tpr), _f(pt.fpr)])


def roc_summary(curve, M):
    tau = optimal_tau(curve)
    pt = next(p for p in curve if p.tau == tau)
    return {"M": M, "optimal_tau": tau, "tpr": pt.tpr, "fpr": pt.fpr, "points": [asdict(p) for p in curve]}
