"""
Run configuration files.

A config is INI-style text with a single ``[run]`` section::

    [run]
    version = 1
    search_space = transformer
    metrics = attention_confidence, parameter_count
    seeds = 0-9
    minibatches = 0
    benchmark = bench.tsv
    output = out

Relative paths resolve against the config file's directory.
"""
import configparser
import os
from dataclasses import dataclass, field

from ..errors import ParseError
from ..genome import DEFAULT_RNN_HIDDEN, DEFAULT_SEQ_LEN, DEFAULT_VOCAB
from ..metrics import REGISTRY, metrics_for

CONFIG_VERSION = 1
NORMALIZATION = {"true": (True,), "false": (False,), "both": (True, False)}


@dataclass
class RunConfig:
    search_space: str
    metrics: list
    seeds: list = field(default_factory=lambda: [0])
    minibatches: list = field(default_factory=lambda: [0])
    batch_size: int = 128
    seq_len: int = DEFAULT_SEQ_LEN
    vocab_size: int = DEFAULT_VOCAB
    rnn_hidden: int = DEFAULT_RNN_HIDDEN
    normalization: str = "both"
    corpus: str = "synthetic"
    vocab: str = None
    benchmark: str = None
    genomes: str = None
    output: str = "tfnas-out"
    workers: int = 1
    data_seed: int = 0
    performance_sign: int = None

    def __post_init__(self):
        if self.search_space not in ("rnn", "transformer"):
            raise ParseError(f"search_space must be rnn or transformer, got {self.search_space!r}",
                             field="search_space")
        if not self.metrics:
            raise ParseError("at least one metric is required", field="metrics")
        for m in self.metrics:
            if m not in REGISTRY:
                raise ParseError(f"unknown metric {m!r}", field="metrics")
            if not REGISTRY[m].applies(self.search_space):
                raise ParseError(f"metric {m!r} does not apply to {self.search_space}", field="metrics")
        if not self.seeds:
            raise ParseError("at least one seed is required", field="seeds")
        if not self.minibatches:
            raise ParseError("at least one minibatch id is required", field="minibatches")
        if self.batch_size < 2:
            raise ParseError("batch_size must be >= 2", field="batch_size")
        if self.normalization not in NORMALIZATION:
            raise ParseError("normalization must be true, false or both", field="normalization")
        if self.performance_sign is None:
            self.performance_sign = -1 if self.search_space == "rnn" else 1
        if self.performance_sign not in (1, -1):
            raise ParseError("performance_sign must be 1 or -1", field="performance_sign")
        if self.benchmark is None and self.genomes is None:
            raise ParseError("either benchmark or genomes must be given", field="benchmark")

    @property
    def normalizations(self):
        return NORMALIZATION[self.normalization]

    @property
    def minibatch_mode(self):
        return "next_token" if self.search_space == "rnn" else "masked"


def _int_list(text, key):
    out = []
    for part in filter(None, (p.strip() for p in text.split(","))):
        lo, sep, hi = part.partition("-")
        try:
            if sep and lo:
                out.extend(range(int(lo), int(hi) + 1))
            else:
                out.append(int(part))
        except ValueError:
            raise ParseError(f"bad integer list entry {part!r}", field=key) from None
    return out


_INT_KEYS = ("batch_size", "seq_len", "vocab_size", "rnn_hidden", "workers", "data_seed", "performance_sign")
_PATH_KEYS = ("vocab", "benchmark", "genomes", "output")


def load_config(path):
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ParseError(f"malformed config: {exc}") from None
    if not parser.has_section("run"):
        raise ParseError("config needs a [run] section")
    raw = dict(parser.items("run"))
    if raw.pop("version", None) != str(CONFIG_VERSION):
        raise ParseError(f"config version must be {CONFIG_VERSION}", field="version")
    base = os.path.dirname(os.path.abspath(path))
    kwargs = {}
    for key, value in raw.items():
        value = value.strip()
        if key == "metrics":
            kind = raw.get("search_space", "").strip()
            kwargs[key] = metrics_for(kind) if value == "all" else [m.strip() for m in value.split(",") if m.strip()]
        elif key in ("seeds", "minibatches"):
            kwargs[key] = _int_list(value, key)
        elif key in _INT_KEYS:
            try:
                kwargs[key] = int(value)
            except ValueError:
                raise ParseError(f"{key} must be an integer", field=key) from None
        elif key in _PATH_KEYS:
            kwargs[key] = os.path.join(base, value)
        elif key == "corpus":
            kwargs[key] = value if value == "synthetic" else os.path.join(base, value)
        elif key in ("search_space", "normalization"):
            kwargs[key] = value
        else:
            raise ParseError(f"unknown config key {key!r}", field=key)
    if "search_space" not in kwargs or "metrics" not in kwargs:
        raise ParseError("config needs search_space and metrics")
    return RunConfig(**kwargs)
