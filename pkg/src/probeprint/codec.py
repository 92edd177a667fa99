"""Trained fingerprint models: apply, match, persist.

A fingerprint is a length-M uint8 array of 0/1; bit ``m`` is 1 when the
``m``-th selected filter responds strictly above its threshold. Batches are
``(n, M)`` arrays.

Sign conventions: :func:`hamming` is a distance (``< tau`` means match) while
:func:`weighted_score` sums confidences of agreeing bits minus those of
disagreeing bits, so larger means more alike (``>= tau_w`` means match).
"""
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import MatchingError, ModelFormatError, ModelVersionError, ParameterError
from .filters import BitmaskFilter, FilterBank, response, response_matrix
from .ingest import VECTOR_BITS

MODEL_FORMAT = "probeprint-model"
MODEL_VERSION = 1

FP_MAGIC = b"PRBFPR"
FP_VERSION = 1
_FP_HEADER = struct.Struct("<6sHII")  # magic, version, M, count


@dataclass(frozen=True)
class WeakClassifier:
    filter: BitmaskFilter
    threshold: int
    confidence: float
    epsilon: float
    filter_index: int = -1

    def describe(self):
        f = self.filter
        return (f"{f.kind} t={self.threshold} L={f.length} P={f.offset} S={f.suffix} "
                f"eps={self.epsilon:.6g} c={self.confidence:.6g}")


@dataclass(frozen=True)
class FingerprintModel:
    classifiers: tuple
    metadata: dict = field(default_factory=dict)
    format_version: int = MODEL_VERSION

    def __post_init__(self):
        if not self.classifiers:
            raise ParameterError("a fingerprint model needs at least one classifier")
        object.__setattr__(self, "classifiers", tuple(self.classifiers))

    @property
    def M(self):
        return len(self.classifiers)

    @property
    def confidences(self):
        return np.array([wc.confidence for wc in self.classifiers], dtype=np.float64)

    @property
    def thresholds(self):
        return np.array([wc.threshold for wc in self.classifiers], dtype=np.int64)

    def bank(self):
        return FilterBank(tuple(wc.filter for wc in self.classifiers), params={"from_model": True})

    def by_confidence(self):
        """Classifiers sorted by descending confidence (selection order breaks ties)."""
        return sorted(self.classifiers, key=lambda wc: -wc.confidence)


def fingerprint(model, x):
    """M-bit fingerprint of a single probe vector."""
    return np.array([response(wc.filter, x) > wc.threshold for wc in model.classifiers], dtype=np.uint8)


def fingerprint_batch(model, xs):
    """``(n, M)`` fingerprints of a list of vectors or an ``(n, 1784)`` bit matrix."""
    r = response_matrix(model.bank(), xs)
    return (r > model.thresholds[None, :]).astype(np.uint8)


def _check_pair(f1, f2):
    f1 = np.asarray(f1, dtype=np.uint8)
    f2 = np.asarray(f2, dtype=np.uint8)
    if f1.shape != f2.shape:
        raise MatchingError(f"fingerprint lengths differ: {f1.shape[-1]} vs {f2.shape[-1]}")
    return f1, f2


def hamming(f1, f2):
    f1, f2 = _check_pair(f1, f2)
    return int(np.count_nonzero(f1 != f2))


def hamming_rows(fa, fb):
    """Row-wise Hamming distances between two equally shaped fingerprint batches."""
    fa, fb = _check_pair(fa, fb)
    return np.count_nonzero(fa != fb, axis=-1)


def weighted_score(model, f1, f2):
    """Confidence-weighted agreement: sum of c_m over agreeing bits minus disagreeing ones."""
    f1, f2 = _check_pair(f1, f2)
    c = model.confidences if isinstance(model, FingerprintModel) else np.asarray(model, dtype=np.float64)
    if c.shape[-1] != f1.shape[-1]:
        raise MatchingError(f"model has {c.shape[-1]} confidences, fingerprints have {f1.shape[-1]} bits")
    agree = np.where(f1 == f2, 1.0, -1.0)
    return float(agree @ c) if agree.ndim == 1 else agree @ c


def predict_match(f1, f2, tau):
    """+1 when the Hamming distance is strictly below ``tau``, else -1."""
    return 1 if hamming(f1, f2) < tau else -1


def predict_match_weighted(model, f1, f2, tau_w):
    return 1 if weighted_score(model, f1, f2) >= tau_w else -1


def _fmt_float(x):
    return format(float(x), ".17g")


def model_to_dict(model):
    rows = []
    for wc in model.classifiers:
        f = wc.filter
        rows.append({
            "kind": f.kind, "L": f.length, "P": f.offset, "S": f.suffix,
            "t": wc.threshold,
            "confidence": _fmt_float(wc.confidence),
            "epsilon": _fmt_float(wc.epsilon),
            "filter_index": wc.filter_index,
        })
    return {"format": MODEL_FORMAT, "version": model.format_version, "M": model.M,
            "classifiers": rows, "metadata": model.metadata}


def model_from_dict(doc):
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ModelFormatError("not a probeprint model document")
    version = doc.get("version")
    if version != MODEL_VERSION:
        raise ModelVersionError(version, MODEL_VERSION)
    try:
        classifiers = []
        for row in doc["classifiers"]:
            filt = BitmaskFilter(row["kind"], int(row["L"]), int(row["P"]))
            if "S" in row and int(row["S"]) != filt.suffix:
                raise ModelFormatError(f"inconsistent suffix in {row}")
            classifiers.append(WeakClassifier(filt, int(row["t"]), float(row["confidence"]),
                                              float(row["epsilon"]), int(row.get("filter_index", -1))))
        if int(doc["M"]) != len(classifiers):
            raise ModelFormatError(f"M={doc['M']} but {len(classifiers)} classifiers listed")
        return FingerprintModel(tuple(classifiers), dict(doc.get("metadata", {})), version)
    except (KeyError, TypeError, ValueError, ParameterError) as exc:
        raise ModelFormatError(f"malformed model: {exc}") from exc


def save_model(path, model):
    Path(path).write_text(json.dumps(model_to_dict(model), indent=2, sort_keys=True) + "\n")


def load_model(path):
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ModelFormatError(f"cannot read model {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: corrupt model file: {exc}") from exc
    return model_from_dict(doc)


def save_fingerprints(path, fps):
    fps = np.asarray(fps, dtype=np.uint8)
    if fps.ndim != 2:
        raise ParameterError("fingerprint batch must be 2-D (count, M)")
    count, M = fps.shape
    header = _FP_HEADER.pack(FP_MAGIC, FP_VERSION, M, count)
    Path(path).write_bytes(header + np.packbits(fps, axis=1).tobytes())


def load_fingerprints(path):
    raw = Path(path).read_bytes()
    if len(raw) < _FP_HEADER.size:
        raise ModelFormatError(f"{path}: truncated fingerprint file")
    magic, version, M, count = _FP_HEADER.unpack_from(raw, 0)
    if magic != FP_MAGIC:
        raise ModelFormatError(f"{path}: not a fingerprint batch file")
    if version != FP_VERSION:
        raise ModelVersionError(version, FP_VERSION)
    width = math.ceil(M / 8)
    body = np.frombuffer(raw, dtype=np.uint8, offset=_FP_HEADER.size)
    if body.size != width * count:
        raise ModelFormatError(f"{path}: expected {width * count} payload bytes, found {body.size}")
    if count == 0:
        return np.zeros((0, M), dtype=np.uint8)
    return np.unpackbits(body.reshape(count, width), axis=1, count=M)


def compression_ratio(M, raw_bits=VECTOR_BITS):
    """Raw vector bits per fingerprint bit, as an exact fraction."""
    from fractions import Fraction

    return Fraction(raw_bits, M)
