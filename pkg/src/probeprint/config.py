"""Run configuration: defaults, INI loading, stable hashing.

Config files are INI with one section per stage::

    [bank]
    lengths = 4, 8, 16
    stride = 8
    kinds = A, B, C, D
    max_filters =

    [train]
    M = 16
    t_min = -15
    t_max = 15
    forbid_repeat = false

    [pairs]
    n_matching = 1000
    train_fraction = 0.6
    seed = 0
    split_seed = 0

    [eval]
    tau =
    repetitions = 10
    seed = 0
    workers = 1

Empty values mean "use the default". Command-line flags override the file.
"""
import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, fields

from .errors import ParameterError


@dataclass
class RunConfig:
    lengths: tuple = (4, 8, 16)
    stride: int = 8
    kinds: tuple = ("A", "B", "C", "D")
    max_filters: int | None = None
    bank_seed: int = 0
    M: int = 16
    t_min: int = -15
    t_max: int = 15
    forbid_repeat: bool = False
    n_matching: int = 1000
    train_fraction: float = 0.6
    pair_seed: int = 0
    split_seed: int = 0
    tau: int | None = None
    repetitions: int = 10
    subset_seed: int = 0
    workers: int = 1

    def validate(self):
        if self.M < 1:
            raise ParameterError(f"M must be positive, got {self.M}")
        if self.stride < 1:
            raise ParameterError(f"stride must be positive, got {self.stride}")
        if not 0 < self.train_fraction < 1:
            raise ParameterError(f"train_fraction must be in (0, 1), got {self.train_fraction}")
        if self.t_max < self.t_min:
            raise ParameterError("t_max < t_min")
        if self.repetitions < 1:
            raise ParameterError("repetitions must be >= 1")
        return self

    def hash(self):
        blob = json.dumps(asdict(self), sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def to_dict(self):
        d = asdict(self)
        d["lengths"] = list(self.lengths)
        d["kinds"] = list(self.kinds)
        return d


# (section, key) -> field name
_KEYS = {
    ("bank", "lengths"): "lengths",
    ("bank", "stride"): "stride",
    ("bank", "kinds"): "kinds",
    ("bank", "max_filters"): "max_filters",
    ("bank", "seed"): "bank_seed",
    ("train", "m"): "M",
    ("train", "t_min"): "t_min",
    ("train", "t_max"): "t_max",
    ("train", "forbid_repeat"): "forbid_repeat",
    ("pairs", "n_matching"): "n_matching",
    ("pairs", "train_fraction"): "train_fraction",
    ("pairs", "seed"): "pair_seed",
    ("pairs", "split_seed"): "split_seed",
    ("eval", "tau"): "tau",
    ("eval", "repetitions"): "repetitions",
    ("eval", "seed"): "subset_seed",
    ("eval", "workers"): "workers",
}


def _convert(name, raw):
    raw = raw.strip()
    if raw == "":
        return None
    if name == "lengths":
        return tuple(int(t) for t in raw.replace(",", " ").split())
    if name == "kinds":
        return tuple(t.strip().upper() for t in raw.replace(",", " ").split())
    if name == "forbid_repeat":
        return raw.lower() in ("1", "true", "yes", "on")
    if name == "train_fraction":
        return float(raw)
    return int(raw)


def load_config(path=None, overrides=None):
    cfg = RunConfig()
    if path is not None:
        parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ParameterError(f"cannot read config {path}: {exc}") from exc
        for section in parser.sections():
            for key, raw in parser.items(section):
                name = _KEYS.get((section.lower(), key.lower()))
                if name is None:
                    raise ParameterError(f"{path}: unknown key [{section}] {key}")
                try:
                    value = _convert(name, raw)
                except ValueError as exc:
                    raise ParameterError(f"{path}: bad value for [{section}] {key}: {raw!r}") from exc
                if value is not None or name in ("tau", "max_filters"):
                    setattr(cfg, name, value)
    known = {f.name for f in fields(RunConfig)}
    for name, value in (overrides or {}).items():
        if name not in known:
            raise ParameterError(f"unknown setting {name}")
        if value is not None:
            setattr(cfg, name, value)
    return cfg.validate()
