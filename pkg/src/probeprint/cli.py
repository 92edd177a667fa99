"""Command-line entry point.

    probeprint dissect CAPTURE... -o vectors.bin
    probeprint pairs --dataset vectors.bin --out-dir pairs/
    probeprint train --dataset vectors.bin --pairs pairs/train.pairs -o model.json
    probeprint fingerprint --model model.json --dataset vectors.bin -o fps.bin
    probeprint match fps.bin I J --tau T
    probeprint cluster fps.bin --tau T --out-dir clusters/
    probeprint eval-roc --model model.json --dataset vectors.bin --pairs pairs/test.pairs --out-dir roc/
    probeprint eval-clustering --model model.json --dataset vectors.bin --tau T --out-dir clustering/

Exit codes: 0 ok, 2 usage/config, 3 ingest, 4 training, 5 evaluation/matching.
Every command writes ``<output>.manifest.json`` recording inputs, outputs,
seeds and the hash of the effective configuration.
"""
import argparse
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, _accel
from .clustering import cluster_stream
from .codec import (
    FingerprintModel, fingerprint_batch, hamming, load_fingerprints, load_model,
    predict_match, predict_match_weighted, save_fingerprints, save_model, weighted_score,
)
from .config import load_config
from .errors import EvaluationError, IngestError, ParameterError, ProbeprintError
from .evaluation import (
    roc_curve, roc_summary, subset_protocol, weighted_roc_curve, write_roc_csv,
)
from .ingest import export_vectors, load_capture, load_dataset, save_dataset
from .pairs import build_pairs, load_pairs, save_pairs, split
from .pipeline import make_bank
from .trainer import thresholds_from_range, train

logger = logging.getLogger("probeprint")

CAPTURE_SUFFIXES = (".pcap", ".cap", ".dmp")


def _file_digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def write_manifest(output, command, cfg, inputs, outputs, seeds=None):
    doc = {
        "command": command,
        "config": cfg.to_dict(),
        "config_hash": cfg.hash(),
        "inputs": {str(p): _file_digest(p) for p in inputs},
        "outputs": {str(p): _file_digest(p) for p in outputs if Path(p).is_file()},
        "seeds": seeds or {},
        "backend": _accel.backend_name(),
        "version": __version__,
    }
    path = Path(str(output) + ".manifest.json")
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def _capture_files(inputs):
    for item in inputs:
        p = Path(item)
        if p.is_dir():
            yield from sorted(q for q in p.rglob("*") if q.suffix.lower() in CAPTURE_SUFFIXES)
        elif p.exists():
            yield p
        else:
            raise IngestError(f"no such capture: {p}")


def _label_for(path, mode, mapping):
    if mapping is not None:
        for key in (str(path), path.name, path.stem):
            if key in mapping:
                return mapping[key]
        return mapping
    return path.parent.name if mode == "parent" else path.stem


def cmd_dissect(args, cfg):
    mapping = None
    if args.label_map:
        try:
            mapping = json.loads(Path(args.label_map).read_text())
        except (OSError, ValueError) as exc:
            raise IngestError(f"cannot read label map {args.label_map}: {exc}") from exc
    vectors = []
    files = list(_capture_files(args.captures))
    for path in files:
        label = _label_for(path, args.label_from, mapping)
        capture = load_capture(path, label, args.channel)
        for v in export_vectors(capture):
            vectors.append(v)
        logger.info("%s: %d probe requests", path, len(capture))
    save_dataset(args.output, vectors)
    print(f"{len(vectors)} probe vectors from {len(files)} captures -> {args.output}")
    write_manifest(args.output, "dissect", cfg, files, [args.output])


def cmd_pairs(args, cfg):
    vectors = load_dataset(args.dataset)
    ds = build_pairs(vectors, cfg.n_matching, cfg.pair_seed)
    train_ds, test_ds = split(ds, cfg.train_fraction, cfg.split_seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    extra = {"config_hash": cfg.hash(), "dataset": Path(args.dataset).name}
    paths = [out / "all.pairs", out / "train.pairs", out / "test.pairs"]
    for path, part in zip(paths, (ds, train_ds, test_ds)):
        save_pairs(path, part, extra)
    print(f"{ds.n_positive}+{ds.n_negative} pairs; train {len(train_ds)}, test {len(test_ds)} -> {out}")
    write_manifest(out / "pairs", "pairs", cfg, [args.dataset], paths,
                   {"pair_seed": cfg.pair_seed, "split_seed": cfg.split_seed})


def cmd_train(args, cfg):
    vectors = load_dataset(args.dataset)
    pairs = load_pairs(args.pairs, vectors)
    bank = make_bank(cfg)
    model = train(pairs, bank, thresholds_from_range(cfg.t_min, cfg.t_max), cfg.M, cfg.forbid_repeat,
                  metadata={"config_hash": cfg.hash()})
    save_model(args.output, model)
    print(f"trained {model.M} classifiers over {len(bank)} filters -> {args.output}")
    write_manifest(args.output, "train", cfg, [args.dataset, args.pairs], [args.output],
                   {"pair_seed": pairs.rng_seed})


def cmd_fingerprint(args, cfg):
    model = load_model(args.model)
    vectors = load_dataset(args.dataset)
    fps = fingerprint_batch(model, vectors)
    save_fingerprints(args.output, fps)
    print(f"{len(fps)} fingerprints of {model.M} bits -> {args.output}")
    write_manifest(args.output, "fingerprint", cfg, [args.model, args.dataset], [args.output])


def _record(fps, index, path):
    if not 0 <= index < len(fps):
        raise EvaluationError(f"{path}: no fingerprint record {index} (file holds {len(fps)})")
    return fps[index]


def cmd_match(args, cfg):
    fps = load_fingerprints(args.fingerprints)
    other_path = args.against or args.fingerprints
    other = load_fingerprints(other_path) if args.against else fps
    f1 = _record(fps, args.first, args.fingerprints)
    f2 = _record(other, args.second, other_path)
    if args.weighted:
        model = load_model(args.model) if args.model else None
        if model is None:
            raise ParameterError("--weighted needs --model for the confidences")
        tau_w = args.tau if args.tau is not None else 0.0
        label = predict_match_weighted(model, f1, f2, tau_w)
        detail = f"score={weighted_score(model, f1, f2):.6g} tau_w={tau_w}"
    else:
        tau = int(args.tau if args.tau is not None else _default_tau(cfg, args))
        label = predict_match(f1, f2, tau)
        detail = f"hamming={hamming(f1, f2)} tau={tau}"
    print(f"{label:+d}")
    logger.info(detail)


def _default_tau(cfg, args):
    if cfg.tau is not None:
        return cfg.tau
    tau_from = getattr(args, "tau_from", None)
    if tau_from:
        try:
            return int(json.loads(Path(tau_from).read_text())["optimal_tau"])
        except (OSError, ValueError, KeyError) as exc:
            raise ParameterError(f"cannot read optimal tau from {tau_from}: {exc}") from exc
    raise ParameterError("no tau given: pass --tau, --tau-from ROC_SUMMARY.json or set [eval] tau")


def cmd_cluster(args, cfg):
    fps = load_fingerprints(args.fingerprints)
    tau = int(args.tau if args.tau is not None else _default_tau(cfg, args))
    run = cluster_stream(fps, tau)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "assignment.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["input_index", "cluster_id"])
        w.writerows(enumerate(run.assignment.tolist()))
    summary = {"cluster_count": len(run.clusters), "sizes": run.sizes, "tau": tau,
               "inputs": int(len(fps)), "config_hash": cfg.hash()}
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"{len(run.clusters)} clusters from {len(fps)} fingerprints (tau={tau})")
    write_manifest(out / "cluster", "cluster", cfg, [args.fingerprints],
                   [out / "assignment.csv", out / "summary.json"])


def cmd_eval_roc(args, cfg):
    vectors = load_dataset(args.dataset)
    pairs = load_pairs(args.pairs, vectors)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    for model_path in args.model:
        model = load_model(model_path)
        fps = fingerprint_batch(model, vectors)
        curve = roc_curve(model, pairs, fps)
        csv_path = out / f"roc_M{model.M}.csv"
        write_roc_csv(csv_path, curve)
        summary = roc_summary(curve, model.M)
        summary.update(model=str(model_path), config_hash=cfg.hash())
        json_path = out / f"roc_M{model.M}.json"
        json_path.write_text(json.dumps(summary, indent=2) + "\n")
        outputs += [csv_path, json_path]
        if args.weighted:
            wpath = out / f"roc_weighted_M{model.M}.csv"
            write_roc_csv(wpath, weighted_roc_curve(model, pairs, fps))
            outputs.append(wpath)
        print(f"M={model.M}: optimal tau={summary['optimal_tau']} "
              f"(tpr={summary['tpr']:.3f}, fpr={summary['fpr']:.3f}) -> {csv_path}")
    write_manifest(out / "roc", "eval-roc", cfg, [args.dataset, args.pairs, *args.model], outputs)


def cmd_eval_clustering(args, cfg):
    vectors = load_dataset(args.dataset)
    model = load_model(args.model)
    tau = int(args.tau if args.tau is not None else _default_tau(cfg, args))
    report = subset_protocol(vectors, model, tau, cfg.repetitions, cfg.subset_seed, workers=cfg.workers)
    report.extra["config_hash"] = cfg.hash()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "clustering.csv", out / "summary.json", out / "per_p.csv"]
    report.write(*paths)
    s = report.summary
    print(f"V-measure {s['v_measure_avg']:.3f}  homogeneity {s['homogeneity_avg']:.3f}  "
          f"completeness {s['completeness_avg']:.3f}  RMSE {s['rmse_avg']:.3f}  "
          f"memory {s['memory_bits_per_probe']} bits  ratio {s['compression_ratio_display']}")
    write_manifest(out / "clustering", "eval-clustering", cfg, [args.dataset, args.model], paths,
                   {"subset_seed": cfg.subset_seed})


def _csv_ints(text):
    return tuple(int(t) for t in text.replace(",", " ").split())


def _csv_kinds(text):
    return tuple(t.upper() for t in text.replace(",", " ").split())


def build_parser():
    p = argparse.ArgumentParser(prog="probeprint", description=__doc__.split("\n\n")[0])
    p.add_argument("--config", help="INI configuration file")
    p.add_argument("-v", "--verbose", action="count", default=0)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("dissect", help="pcap captures -> probe vector dataset")
    s.add_argument("captures", nargs="+", help="pcap files or directories")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--label-from", choices=("stem", "parent"), default="stem",
                   help="device label from the file name or its directory")
    s.add_argument("--label-map", help="JSON object mapping file names or MACs to labels")
    s.add_argument("--channel", type=int, help="force the channel of every frame")
    s.set_defaults(func=cmd_dissect)

    s = sub.add_parser("pairs", help="balanced pair sets with a stratified split")
    s.add_argument("--dataset", required=True)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--n-matching", type=int)
    s.add_argument("--train-fraction", type=float)
    s.add_argument("--seed", dest="pair_seed", type=int)
    s.add_argument("--split-seed", type=int)
    s.set_defaults(func=cmd_pairs)

    s = sub.add_parser("train", help="asymmetric pairwise boosting")
    s.add_argument("--dataset", required=True)
    s.add_argument("--pairs", required=True)
    s.add_argument("-o", "--output", required=True)
    s.add_argument("-M", dest="M", type=int)
    s.add_argument("--lengths", type=_csv_ints)
    s.add_argument("--stride", type=int)
    s.add_argument("--kinds", type=_csv_kinds)
    s.add_argument("--max-filters", type=int)
    s.add_argument("--t-min", type=int)
    s.add_argument("--t-max", type=int)
    s.add_argument("--forbid-repeat", action="store_true", default=None)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("fingerprint", help="apply a model to a dataset")
    s.add_argument("--model", required=True)
    s.add_argument("--dataset", required=True)
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_fingerprint)

    s = sub.add_parser("match", help="match two fingerprint records (prints +1 or -1)")
    s.add_argument("fingerprints")
    s.add_argument("first", type=int)
    s.add_argument("second", type=int)
    s.add_argument("--against", help="take the second record from this file")
    s.add_argument("--tau", type=float,
                   help="Hamming: match when distance < tau; weighted: match when score >= tau")
    s.add_argument("--tau-from", help="ROC summary JSON providing optimal_tau")
    s.add_argument("--weighted", action="store_true")
    s.add_argument("--model", help="model file, needed with --weighted")
    s.set_defaults(func=cmd_match)

    s = sub.add_parser("cluster", help="online clustering of a fingerprint stream")
    s.add_argument("fingerprints")
    s.add_argument("--tau", type=int)
    s.add_argument("--tau-from")
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_cluster)

    s = sub.add_parser("eval-roc", help="ROC sweep over tau on test pairs")
    s.add_argument("--model", action="append", required=True, help="repeatable, one per M")
    s.add_argument("--dataset", required=True)
    s.add_argument("--pairs", required=True)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--weighted", action="store_true", help="also write the weighted-score ROC")
    s.set_defaults(func=cmd_eval_roc)

    s = sub.add_parser("eval-clustering", help="random device-subset clustering protocol")
    s.add_argument("--model", required=True)
    s.add_argument("--dataset", required=True)
    s.add_argument("--tau", type=int)
    s.add_argument("--tau-from")
    s.add_argument("--repetitions", type=int)
    s.add_argument("--seed", dest="subset_seed", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_eval_clustering)
    return p


_OVERRIDES = ("n_matching", "train_fraction", "pair_seed", "split_seed", "M", "lengths", "stride",
              "kinds", "max_filters", "t_min", "t_max", "forbid_repeat", "repetitions",
              "subset_seed", "workers")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = {k: getattr(args, k) for k in _OVERRIDES if hasattr(args, k)}
        cfg = load_config(args.config, overrides)
        args.func(args, cfg)
    except ProbeprintError as exc:
        print(f"probeprint {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
