"""Balanced matching / non-matching pair datasets and stratified splits."""
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import CapacityError, ParameterError, SplitError

RNG_ALGORITHM = "numpy.PCG64"
PAIRS_FORMAT = "probeprint-pairs/1"


class LabeledPair(NamedTuple):
    a: int
    b: int
    y: int


@dataclass
class PairDataset:
    vectors: list
    a: np.ndarray
    b: np.ndarray
    y: np.ndarray
    rng_seed: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=np.int64)
        self.b = np.asarray(self.b, dtype=np.int64)
        self.y = np.asarray(self.y, dtype=np.int8)

    def __len__(self):
        return len(self.y)

    @property
    def pairs(self):
        return [LabeledPair(int(a), int(b), int(y)) for a, b, y in zip(self.a, self.b, self.y)]

    @property
    def n_positive(self):
        return int(np.count_nonzero(self.y == 1))

    @property
    def n_negative(self):
        return int(np.count_nonzero(self.y == -1))

    def take(self, rows):
        rows = np.asarray(rows, dtype=np.int64)
        return PairDataset(self.vectors, self.a[rows], self.b[rows], self.y[rows],
                           self.rng_seed, dict(self.meta))


def _group_by_label(vectors):
    groups = defaultdict(list)
    for i, v in enumerate(vectors):
        groups[v.device_label].append(i)
    return dict(sorted(groups.items()))


def _unrank_pair(c):
    """Map a rank in [0, k*(k-1)/2) to the pair ``(i, j)``, ``i < j``, ordered by j then i."""
    j = (1 + math.isqrt(1 + 8 * c)) // 2
    while j * (j - 1) // 2 > c:
        j -= 1
    while (j + 1) * j // 2 <= c:
        j += 1
    return c - j * (j - 1) // 2, j


def _round_robin_quota(capacities, total):
    quota = [0] * len(capacities)
    remaining = total
    while remaining:
        open_ = [k for k, cap in enumerate(capacities) if quota[k] < cap]
        step = min(remaining // len(open_), min(capacities[k] - quota[k] for k in open_))
        if step == 0:
            for k in open_[:remaining]:
                quota[k] += 1
            remaining -= min(remaining, len(open_))
        else:
            for k in open_:
                quota[k] += step
            remaining -= step * len(open_)
    return quota


def max_matching_pairs(vectors):
    return sum(len(ix) * (len(ix) - 1) // 2 for ix in _group_by_label(vectors).values())


def max_nonmatching_pairs(vectors):
    sizes = [len(ix) for ix in _group_by_label(vectors).values()]
    n = sum(sizes)
    return (n * n - sum(s * s for s in sizes)) // 2


def build_pairs(vectors, n_matching, seed=0):
    """Sample ``n_matching`` same-device pairs and as many cross-device pairs.

    Positive pairs are spread over devices round-robin (in label order) and
    drawn uniformly within each device; negatives pick a device pair uniformly,
    then one vector from each side. No unordered pair is repeated.
    """
    if n_matching < 1:
        raise ParameterError(f"n_matching must be >= 1, got {n_matching}")
    rng = np.random.default_rng(seed)
    groups = _group_by_label(vectors)
    labels = list(groups)
    members = [groups[l] for l in labels]

    pos_cap = [len(m) * (len(m) - 1) // 2 for m in members]
    if sum(pos_cap) < n_matching:
        raise CapacityError(
            f"only {sum(pos_cap)} distinct matching pairs exist, {n_matching} requested", sum(pos_cap))
    neg_cap = max_nonmatching_pairs(vectors)
    if neg_cap < n_matching:
        raise CapacityError(
            f"only {neg_cap} distinct non-matching pairs exist, {n_matching} requested", neg_cap)

    a, b = [], []
    for m, cap, q in zip(members, pos_cap, _round_robin_quota(pos_cap, n_matching)):
        if not q:
            continue
        for c in np.sort(rng.choice(cap, size=q, replace=False)):
            i, j = _unrank_pair(int(c))
            a.append(m[i])
            b.append(m[j])

    dev_pairs = [(d1, d2) for d1 in range(len(members)) for d2 in range(d1 + 1, len(members))]
    used = defaultdict(set)
    seen = 0
    while seen < n_matching:
        k = int(rng.integers(len(dev_pairs)))
        d1, d2 = dev_pairs[k]
        u = used[dev_pairs[k]]
        if len(u) == len(members[d1]) * len(members[d2]):
            dev_pairs.pop(k)
            continue
        i = members[d1][int(rng.integers(len(members[d1])))]
        j = members[d2][int(rng.integers(len(members[d2])))]
        key = (min(i, j), max(i, j))
        if key in u:
            continue
        u.add(key)
        a.append(key[0])
        b.append(key[1])
        seen += 1

    y = [1] * n_matching + [-1] * n_matching
    meta = {"rng": RNG_ALGORITHM, "seed": seed, "n_matching": n_matching}
    return PairDataset(list(vectors), a, b, y, seed, meta)


def split(ds, train_fraction=0.6, seed=0):
    """Stratified split; each class keeps ``round(fraction * n)`` pairs in train."""
    if not 0 < train_fraction < 1:
        raise SplitError(f"train_fraction must be in (0, 1), got {train_fraction}")
    rng = np.random.default_rng(seed)
    train_rows, test_rows = [], []
    for cls in (1, -1):
        rows = np.flatnonzero(ds.y == cls)
        if len(rows) < 2:
            raise SplitError(f"need at least 2 pairs with y={cls:+d} to split, have {len(rows)}")
        rows = rng.permutation(rows)
        k = min(max(int(round(train_fraction * len(rows))), 1), len(rows) - 1)
        train_rows.append(rows[:k])
        test_rows.append(rows[k:])
    train = ds.take(np.sort(np.concatenate(train_rows)))
    test = ds.take(np.sort(np.concatenate(test_rows)))
    for part, name in ((train, "train"), (test, "test")):
        part.meta.update(split=name, train_fraction=train_fraction, split_seed=seed)
    return train, test


def save_pairs(path, ds, extra=None):
    meta = dict(ds.meta, **(extra or {}))
    meta.update(positives=ds.n_positive, negatives=ds.n_negative)
    lines = [f"# {PAIRS_FORMAT}"]
    lines += [f"# {k}={v}" for k, v in sorted(meta.items())]
    lines += [f"{a},{b},{y}" for a, b, y in zip(ds.a.tolist(), ds.b.tolist(), ds.y.tolist())]
    Path(path).write_text("\n".join(lines) + "\n")


def load_pairs(path, vectors=None):
    a, b, y = [], [], []
    meta = {}
    text = Path(path).read_text()
    lines = text.splitlines()
    if not lines or lines[0] != f"# {PAIRS_FORMAT}":
        raise ParameterError(f"{path}: not a {PAIRS_FORMAT} file")
    for lineno, line in enumerate(lines[1:], start=2):
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            meta[key] = value
            continue
        if not line.strip():
            continue
        try:
            ia, ib, iy = (int(t) for t in line.split(","))
        except ValueError:
            raise ParameterError(f"{path}:{lineno}: expected 'a,b,y', got {line!r}") from None
        if iy not in (-1, 1) or ia == ib:
            raise ParameterError(f"{path}:{lineno}: invalid pair {line!r}")
        a.append(ia)
        b.append(ib)
        y.append(iy)
    if vectors is not None and a and max(max(a), max(b)) >= len(vectors):
        raise ParameterError(f"{path}: pair index out of range for {len(vectors)} vectors")
    seed = int(meta.get("seed", 0))
    return PairDataset(list(vectors or []), a, b, y, seed, meta)
