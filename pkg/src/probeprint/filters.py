"""Haar-like bitmask filters over probe vectors.

A filter of kind A/B/C/D covers ``length`` bits starting at bit ``offset``:

    A  first half +1, second half -1
    B  first half -1, second half +1
    C  all -1
    D  all +1

Every filter response can be written with three reads of the per-vector
prefix popcount ``cum`` (``cum[j]`` = number of ones in bits ``[0, j)``)::

    r = c0 * cum[start] + c1 * cum[start + length // 2] + c2 * cum[start + length]

which is what the batch kernels evaluate.
"""
from dataclasses import dataclass, field

import numpy as np

from . import _accel
from ._accel import njit, prange
from .errors import ParameterError
from .ingest import VECTOR_BITS, ProbeVector

KINDS = ("A", "B", "C", "D")
DEFAULT_LENGTHS = (4, 8, 16)
DEFAULT_STRIDE = 8

_COEFS = {
    "A": (-1, 2, -1),
    "B": (1, -2, 1),
    "C": (1, 0, -1),
    "D": (-1, 0, 1),
}


@dataclass(frozen=True, order=True)
class BitmaskFilter:
    kind: str
    length: int
    offset: int

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown filter kind {self.kind!r}")
        if self.length < 1 or self.offset < 0 or self.offset + self.length > VECTOR_BITS:
            raise ParameterError(
                f"filter {self.kind} L={self.length} P={self.offset} does not fit in {VECTOR_BITS} bits")
        if self.kind in "AB" and self.length % 2:
            raise ParameterError(f"kind {self.kind} filters need an even length, got {self.length}")

    @property
    def suffix(self):
        return VECTOR_BITS - self.offset - self.length

    @property
    def mask(self):
        """The non-zero part of the filter, ``length`` entries of +-1."""
        half = self.length // 2
        if self.kind == "A":
            return np.array([1] * half + [-1] * half, dtype=np.int8)
        if self.kind == "B":
            return np.array([-1] * half + [1] * half, dtype=np.int8)
        if self.kind == "C":
            return -np.ones(self.length, dtype=np.int8)
        return np.ones(self.length, dtype=np.int8)

    @property
    def response_range(self):
        """Inclusive ``(min, max)`` attainable response."""
        if self.kind in "AB":
            return -(self.length // 2), self.length // 2
        if self.kind == "C":
            return -self.length, 0
        return 0, self.length

    def describe(self):
        return f"{self.kind} L={self.length} P={self.offset} S={self.suffix}"


@dataclass(frozen=True)
class FilterBank:
    filters: tuple
    lengths: tuple = DEFAULT_LENGTHS
    stride: int = DEFAULT_STRIDE
    kinds: tuple = KINDS
    params: dict = field(default_factory=dict, compare=False)

    def __len__(self):
        return len(self.filters)

    def __getitem__(self, i):
        return self.filters[i]

    def __iter__(self):
        return iter(self.filters)

    def response_ranges(self):
        """``(B, 2)`` int array of inclusive response bounds."""
        return np.array([f.response_range for f in self.filters], dtype=np.int64).reshape(-1, 2)

    def kernel_arrays(self):
        """Index and coefficient arrays consumed by the batch kernels."""
        idx = np.empty((len(self.filters), 3), dtype=np.int64)
        coef = np.empty((len(self.filters), 3), dtype=np.int64)
        for i, f in enumerate(self.filters):
            idx[i] = (f.offset, f.offset + f.length // 2, f.offset + f.length)
            coef[i] = _COEFS[f.kind]
        return idx, coef

    def subset(self, indices):
        return FilterBank(tuple(self.filters[i] for i in indices), self.lengths, self.stride,
                          self.kinds, dict(self.params, subset=len(indices)))


def generate_bank(lengths=DEFAULT_LENGTHS, stride=DEFAULT_STRIDE, kinds=KINDS, max_filters=None, seed=0):
    """Enumerate filters at ``offset = 0, stride, 2*stride, ...``, ordered by kind, length, offset.

    ``max_filters`` keeps a seeded random subset of that size, in bank order.
    """
    if stride < 1:
        raise ParameterError(f"stride must be >= 1, got {stride}")
    kinds = tuple(sorted(set(kinds)))
    lengths = tuple(sorted(set(int(x) for x in lengths)))
    for L in lengths:
        if not 1 <= L <= VECTOR_BITS:
            raise ParameterError(f"filter length {L} outside [1, {VECTOR_BITS}]")
    filters = []
    for kind in kinds:
        if kind not in KINDS:
            raise ParameterError(f"unknown filter kind {kind!r}")
        for L in lengths:
            if kind in "AB" and L % 2:
                continue
            filters.extend(BitmaskFilter(kind, L, p) for p in range(0, VECTOR_BITS - L + 1, stride))
    params = {"lengths": list(lengths), "stride": stride, "kinds": list(kinds)}
    if max_filters is not None and max_filters < len(filters):
        rng = np.random.default_rng(seed)
        keep = np.sort(rng.choice(len(filters), size=max_filters, replace=False))
        filters = [filters[i] for i in keep]
        params.update(max_filters=max_filters, subsample_seed=seed)
    return FilterBank(tuple(filters), lengths, stride, kinds, params)


def response(filt, x):
    """Filter response on one vector: the masked sum over the filter window."""
    bits = x.bits if isinstance(x, ProbeVector) else np.asarray(x)
    window = bits[filt.offset:filt.offset + filt.length].astype(np.int64)
    return int(np.dot(filt.mask.astype(np.int64), window))


def _prefix_counts(bits):
    cum = np.zeros((bits.shape[0], bits.shape[1] + 1), dtype=np.int16)
    np.cumsum(bits, axis=1, dtype=np.int16, out=cum[:, 1:])
    return cum


@njit(parallel=True)
def _response_matrix_nb(bits, idx, coef, out):
    n, nbits = bits.shape
    nf = idx.shape[0]
    for r in prange(n):
        cum = np.empty(nbits + 1, dtype=np.int64)
        cum[0] = 0
        for j in range(nbits):
            cum[j + 1] = cum[j] + bits[r, j]
        for i in range(nf):
            out[r, i] = (coef[i, 0] * cum[idx[i, 0]] + coef[i, 1] * cum[idx[i, 1]]
                         + coef[i, 2] * cum[idx[i, 2]])


def _response_matrix_np(bits, idx, coef, out, chunk=4096):
    for lo in range(0, bits.shape[0], chunk):
        cum = _prefix_counts(bits[lo:lo + chunk]).astype(np.int32)
        r = (coef[:, 0] * cum[:, idx[:, 0]] + coef[:, 1] * cum[:, idx[:, 1]]
             + coef[:, 2] * cum[:, idx[:, 2]])
        out[lo:lo + chunk] = r


def response_matrix(bank, xs, use_numba=None):
    """``(len(xs), len(bank))`` int8 matrix of filter responses.

    ``xs`` is a list of ProbeVector or an ``(n, 1784)`` 0/1 array.
    """
    from .ingest import vectors_to_matrix

    bits = xs if isinstance(xs, np.ndarray) else vectors_to_matrix(list(xs))
    bits = np.ascontiguousarray(bits, dtype=np.uint8)
    if bits.ndim != 2 or bits.shape[1] != VECTOR_BITS:
        raise ParameterError(f"expected an (n, {VECTOR_BITS}) bit matrix, got shape {bits.shape}")
    idx, coef = bank.kernel_arrays()
    out = np.empty((bits.shape[0], len(bank)), dtype=np.int8)
    if use_numba is None:
        use_numba = _accel.USE_NUMBA
    if use_numba and bits.shape[0] and len(bank):
        _response_matrix_nb(bits, idx, coef, out)
    elif bits.shape[0] and len(bank):
        _response_matrix_np(bits, idx, coef, out)
    return out
