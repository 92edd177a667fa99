"""Asymmetric pairwise boosting over a bank of bitmask filters.

Each weak classifier is a (filter, threshold) pair that calls a pair of
probe vectors a match when both responses sit on the same side of the
threshold. Per round the trainer picks the pair with the smallest weighted
error, then boosts only the misclassified positive pairs and renormalises
the positive weights to unit mass. Negative weights keep their initial
value for the whole run.

Error sweep
-----------
For filter ``i`` and pair ``n`` let ``lo``/``hi`` be the smaller/larger of
the two responses. The classifier says "different" exactly for thresholds
``lo <= t < hi``, an interval. So with ``s_n = +1`` for positive and ``-1``
for negative pairs::

    err(i, t) = W_neg + sum over n with lo <= t < hi of s_n * w_n

which a difference array over the threshold grid gives in O(N + T) per
filter instead of O(N * T).
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import _accel
from ._accel import njit, prange
from .codec import FingerprintModel, WeakClassifier
from .errors import ParameterError, TrainingError
from .filters import response_matrix

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLDS = tuple(range(-15, 16))
EPS_CLAMP = 1e-6
TIE_TOL = 1e-12


@dataclass
class TrainingState:
    weights: np.ndarray
    round: int = 0
    selected: list = field(default_factory=list)

    def positive_mass(self, y):
        return float(self.weights[y == 1].sum())


def thresholds_from_range(t_min, t_max):
    if t_max < t_min:
        raise ParameterError(f"empty threshold range [{t_min}, {t_max}]")
    return tuple(range(int(t_min), int(t_max) + 1))


def check_thresholds(thresholds):
    t = np.asarray(thresholds, dtype=np.int64)
    if t.ndim != 1 or t.size == 0:
        raise ParameterError("threshold set must be a non-empty 1-D sequence")
    if np.any(np.diff(t) <= 0):
        raise ParameterError("thresholds must be strictly increasing")
    return t


def pair_classifier_output(b_a, b_b, t):
    """+1 when both responses fall on the same side of ``t`` (``> t`` vs ``<= t``)."""
    return 1 if (b_a > t) == (b_b > t) else -1


def weighted_error(responses, a, b, y, weights, i, t):
    """Weighted error of (filter ``i``, threshold ``t``), summed pair by pair."""
    err = 0.0
    for n in range(len(y)):
        if pair_classifier_output(int(responses[a[n], i]), int(responses[b[n], i]), t) != y[n]:
            err += float(weights[n])
    return err


def valid_mask(ranges, thresholds):
    """``(B, T)`` mask of thresholds strictly inside each filter's response range."""
    lo = ranges[:, :1]
    hi = ranges[:, 1:]
    t = np.asarray(thresholds)[None, :]
    return (t >= lo) & (t < hi)


def _threshold_positions(thresholds, vmin, vmax):
    """``pos[v - vmin]`` = number of thresholds strictly below response value ``v``."""
    values = np.arange(vmin, vmax + 1)
    return np.searchsorted(thresholds, values, side="left").astype(np.int64)


@njit(parallel=True)
def _sweep_nb(ra, rb, sw, pos, vmin, neg_mass, n_thr, out):
    n_pairs, n_filters = ra.shape
    for i in prange(n_filters):
        diff = np.zeros(n_thr + 1)
        for n in range(n_pairs):
            x = ra[n, i]
            z = rb[n, i]
            if x == z:
                continue
            if x > z:
                x, z = z, x
            diff[pos[x - vmin]] += sw[n]
            diff[pos[z - vmin]] -= sw[n]
        acc = 0.0
        for p in range(n_thr):
            acc += diff[p]
            out[i, p] = neg_mass + acc


def _sweep_np(ra, rb, sw, pos, vmin, neg_mass, n_thr, out):
    n_pairs, n_filters = ra.shape
    lo = np.minimum(ra, rb).astype(np.int64)
    hi = np.maximum(ra, rb).astype(np.int64)
    active = lo != hi
    width = n_thr + 1
    base = np.arange(n_filters, dtype=np.int64)[None, :] * width
    # interleave (lo, hi) per pair so each cell accumulates in pair order,
    # same as the compiled kernel
    idx = np.stack([base + pos[lo - vmin], base + pos[hi - vmin]], axis=1)
    wts = np.stack([np.broadcast_to(sw[:, None], lo.shape), -np.broadcast_to(sw[:, None], lo.shape)], axis=1)
    keep = np.stack([active, active], axis=1)
    diff = np.bincount(idx[keep], weights=wts[keep], minlength=n_filters * width)
    diff = diff.reshape(n_filters, width)
    out[:] = neg_mass + np.cumsum(diff[:, :n_thr], axis=1)


def error_table(responses, a, b, y, weights, thresholds, ranges=None, use_numba=None):
    """``(B, T)`` weighted errors of every (filter, threshold) pair; invalid pairs are inf."""
    thresholds = check_thresholds(thresholds)
    ra = np.ascontiguousarray(responses[a])
    rb = np.ascontiguousarray(responses[b])
    y = np.asarray(y)
    weights = np.asarray(weights, dtype=np.float64)
    sw = np.where(y == 1, weights, -weights)
    neg_mass = 0.0
    for w in weights[y != 1]:
        neg_mass += float(w)
    vmin = int(min(responses.min(initial=0), thresholds[0]))
    vmax = int(max(responses.max(initial=0), thresholds[-1]))
    pos = _threshold_positions(thresholds, vmin, vmax)
    out = np.empty((responses.shape[1], len(thresholds)), dtype=np.float64)
    if use_numba is None:
        use_numba = _accel.USE_NUMBA
    if out.size:
        (_sweep_nb if use_numba else _sweep_np)(ra, rb, sw, pos, vmin, neg_mass, len(thresholds), out)
    if ranges is not None:
        out[~valid_mask(ranges, thresholds)] = np.inf
    return out


def confidence_from_error(eps):
    e = min(max(eps, EPS_CLAMP), 1.0 - EPS_CLAMP)
    return math.log((1.0 - e) / e)


def _select(err, forbidden):
    if forbidden is not None:
        err = np.where(forbidden, np.inf, err)
    best = err.min()
    if not np.isfinite(best):
        raise TrainingError("no admissible (filter, threshold) combination left")
    flat = np.flatnonzero(err.ravel() <= best + TIE_TOL)[0]
    i, p = divmod(int(flat), err.shape[1])
    return i, p, float(err[i, p])


def boost(responses, a, b, y, bank, thresholds, M, forbid_repeat=False, use_numba=None):
    """Run the boosting rounds, yielding ``(WeakClassifier, TrainingState)`` after each one.

    ``responses`` is the ``(n_vectors, B)`` response matrix; ``a``/``b`` index
    its rows. The yielded state is the live object, copy it to keep history.
    """
    thresholds = check_thresholds(thresholds)
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    y = np.asarray(y, dtype=np.int8)
    if len(y) == 0:
        raise ParameterError("no training pairs")
    if not np.any(y == 1):
        raise ParameterError("training pairs contain no matching pair")
    if M < 1 or M >= len(bank):
        raise ParameterError(f"M must satisfy 1 <= M < B={len(bank)}, got {M}")
    ranges = bank.response_ranges()
    forbidden = np.zeros((len(bank), len(thresholds)), dtype=bool) if forbid_repeat else None

    state = TrainingState(np.full(len(y), 1.0 / len(y)))
    pos = y == 1
    for m in range(M):
        err = error_table(responses, a, b, y, state.weights, thresholds, ranges, use_numba)
        i, p, eps = _select(err, forbidden)
        t = int(thresholds[p])
        c = confidence_from_error(eps)
        if eps >= 0.5:
            logger.warning("round %d: best weighted error %.6g >= 0.5, confidence %.6g", m, eps, c)
        if forbidden is not None:
            forbidden[i, p] = True

        ri_a = responses[a, i].astype(np.int64)
        ri_b = responses[b, i].astype(np.int64)
        predicted = np.where((ri_a > t) == (ri_b > t), 1, -1)
        missed = pos & (predicted != y)
        state.weights[missed] *= math.exp(c)
        total = state.weights[pos].sum()
        if not total > 0 or not np.isfinite(total):
            raise TrainingError(f"round {m}: positive weight mass degenerate ({total})")
        state.weights[pos] /= total

        wc = WeakClassifier(bank[i], t, c, eps, i)
        state.round = m + 1
        state.selected.append(wc)
        logger.info("round %d: %s", m + 1, wc.describe())
        yield wc, state


def train(train_pairs, bank, thresholds=DEFAULT_THRESHOLDS, M=16, forbid_repeat=False,
          responses=None, use_numba=None, metadata=None):
    """Learn an M-bit fingerprint model from labeled training pairs."""
    if M >= len(bank):
        raise ParameterError(f"M must be smaller than the bank size {len(bank)}, got {M}")
    a, b = train_pairs.a, train_pairs.b
    if responses is None:
        used = np.unique(np.concatenate([a, b]))
        responses = response_matrix(bank, [train_pairs.vectors[k] for k in used], use_numba)
        remap = np.full(len(train_pairs.vectors), -1, dtype=np.int64)
        remap[used] = np.arange(len(used))
        a, b = remap[a], remap[b]
    classifiers = [wc for wc, _ in boost(responses, a, b, train_pairs.y, bank, thresholds, M,
                                         forbid_repeat, use_numba)]
    meta = {
        "bank": dict(bank.params) or {"lengths": list(bank.lengths), "stride": bank.stride,
                                      "kinds": list(bank.kinds)},
        "bank_size": len(bank),
        "thresholds": [int(thresholds[0]), int(thresholds[-1])] if _is_range(thresholds)
        else [int(t) for t in thresholds],
        "n_train_pairs": len(train_pairs),
        "training_seed": train_pairs.rng_seed,
        "forbid_repeat": forbid_repeat,
    }
    meta.update(metadata or {})
    return FingerprintModel(tuple(classifiers), meta)


def _is_range(thresholds):
    t = list(thresholds)
    return len(t) > 1 and t == list(range(t[0], t[-1] + 1))
