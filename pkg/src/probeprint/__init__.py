"""Compact binary fingerprints for Wi-Fi probe requests."""

__version__ = "0.1.0"

from .clustering import cluster_stream, count_devices
from .codec import (
    FingerprintModel, WeakClassifier, fingerprint, fingerprint_batch, hamming,
    load_model, predict_match, save_model, weighted_score,
)
from .filters import BitmaskFilter, FilterBank, generate_bank, response, response_matrix
from .ingest import ProbeVector, dissect, export_vectors, load_capture, load_dataset, save_dataset
from .pairs import build_pairs, split
from .trainer import train

__all__ = [
    "BitmaskFilter", "FilterBank", "FingerprintModel", "ProbeVector", "WeakClassifier",
    "build_pairs", "cluster_stream", "count_devices", "dissect", "export_vectors",
    "fingerprint", "fingerprint_batch", "generate_bank", "hamming", "load_capture",
    "load_dataset", "load_model", "predict_match", "response", "response_matrix",
    "save_dataset", "save_model", "split", "train", "weighted_score",
]
