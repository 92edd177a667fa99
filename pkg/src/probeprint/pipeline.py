"""End-to-end experiment: pairs, training, ROC-based tau, subset clustering."""
import logging
from dataclasses import dataclass

from .codec import fingerprint_batch
from .evaluation import optimal_tau, roc_curve, subset_protocol
from .filters import generate_bank, response_matrix
from .pairs import build_pairs, split
from .trainer import thresholds_from_range, train

logger = logging.getLogger(__name__)


@dataclass
class ExperimentResult:
    model: object
    roc: list
    tau: int
    report: object
    train_pairs: object
    test_pairs: object


def make_bank(cfg):
    return generate_bank(cfg.lengths, cfg.stride, cfg.kinds, cfg.max_filters, cfg.bank_seed)


def run_experiment(vectors, cfg, with_clustering=True):
    bank = make_bank(cfg)
    pairs = build_pairs(vectors, cfg.n_matching, cfg.pair_seed)
    train_pairs, test_pairs = split(pairs, cfg.train_fraction, cfg.split_seed)
    responses = response_matrix(bank, vectors)
    model = train(train_pairs, bank, thresholds_from_range(cfg.t_min, cfg.t_max), cfg.M,
                  cfg.forbid_repeat, responses=responses,
                  metadata={"config_hash": cfg.hash()})
    fps = fingerprint_batch(model, vectors)
    roc = roc_curve(model, test_pairs, fps)
    tau = cfg.tau if cfg.tau is not None else optimal_tau(roc)
    logger.info("M=%d optimal tau=%d", model.M, tau)
    report = None
    if with_clustering:
        report = subset_protocol(vectors, model, tau, cfg.repetitions, cfg.subset_seed,
                                 fps=fps, workers=cfg.workers)
    return ExperimentResult(model, roc, tau, report, train_pairs, test_pairs)
