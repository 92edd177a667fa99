"""Time the numba kernels against their numpy counterparts.

    python3 benchmarks/bench_kernels.py [--devices 40] [--per-device 50] [--repeat 5]

Both backends run in the same process through the ``use_numba`` argument each
kernel accepts. Outputs are compared before timing. With
PROBEPRINT_DISABLE_NUMBA=1 only the numpy column is produced.
"""
import argparse
import sys
import time
from pathlib import Path

import numpy as np

from probeprint import _accel
from probeprint.clustering import cluster_stream
from probeprint.filters import generate_bank, response_matrix
from probeprint.ingest import ProbeVector
from probeprint.pairs import build_pairs
from probeprint.trainer import DEFAULT_THRESHOLDS, error_table


def corpus(n_devices, per_device, seed):
    rng = np.random.default_rng(seed)
    vectors = []
    for d in range(n_devices):
        base = rng.random(1784) < rng.uniform(0.2, 0.6)
        for _ in range(per_device):
            bits = base ^ (rng.random(1784) < 0.02)
            vectors.append(ProbeVector(np.packbits(bits).tobytes(), f"d{d}", 1, len(vectors)))
    return vectors


def best_of(fn, repeat):
    fn()  # warm-up, includes jit compilation
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--devices", type=int, default=40)
    ap.add_argument("--per-device", type=int, default=50)
    ap.add_argument("--pairs", type=int, default=2000)
    ap.add_argument("--stream", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    vectors = corpus(args.devices, args.per_device, args.seed)
    bank = generate_bank()
    ds = build_pairs(vectors, args.pairs, seed=args.seed)
    responses = response_matrix(bank, vectors, use_numba=False)
    weights = np.full(len(ds), 1.0 / len(ds))
    ranges = bank.response_ranges()
    rng = np.random.default_rng(args.seed)
    centers = rng.integers(0, 2, (200, 16)).astype(np.uint8)
    fps = centers[rng.integers(0, 200, args.stream)] ^ (rng.random((args.stream, 16)) < 0.05).astype(np.uint8)

    kernels = {
        "response_matrix": lambda nb: response_matrix(bank, vectors, use_numba=nb),
        "error_table": lambda nb: error_table(responses, ds.a, ds.b, ds.y, weights, DEFAULT_THRESHOLDS,
                                              ranges, use_numba=nb),
        "cluster_stream": lambda nb: cluster_stream(fps, 5, use_numba=nb).assignment,
    }
    backends = [False, True] if _accel.USE_NUMBA else [False]

    print(f"{len(vectors)} vectors, {len(bank)} filters, {len(ds)} pairs, stream of {args.stream}")
    print(f"{'kernel':<18}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>10}")
    for name, fn in kernels.items():
        if len(backends) == 2 and not np.array_equal(fn(False), fn(True)):
            print(f"{name}: backends disagree", file=sys.stderr)
            return 1
        t = [best_of(lambda: fn(nb), args.repeat) for nb in backends]
        if len(t) == 2:
            print(f"{name:<18}{t[0]:>12.4f}{t[1]:>12.4f}{t[0] / t[1]:>9.1f}x")
        else:
            print(f"{name:<18}{t[0]:>12.4f}{'-':>12}{'-':>10}")
    return 0


if __name__ == "__main__":
    sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))
    sys.exit(main())
