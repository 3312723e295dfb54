"""Tokenized corpora and minibatch sampling."""
import logging
from dataclasses import dataclass

import numpy as np

from ..errors import ContractError, ParseError
from ..netbuild import Minibatch

logger = logging.getLogger(__name__)

UNK = "<unk>"
MASK = "<mask>"
MASK_RATE = 0.15


@dataclass
class Corpus:
    """A flat stream of token ids plus its vocabulary."""

    ids: np.ndarray
    vocab: dict
    unk_id: int
    mask_id: int
    oov_rate: float = 0.0

    @property
    def vocab_size(self):
        return max(self.vocab.values()) + 1

    def __len__(self):
        return len(self.ids)


def load_vocab(path):
    """
    Read a vocabulary: one ``token`` per line (id = line order) or ``token<TAB>id``.

    ``<unk>`` and ``<mask>`` are appended when the file does not define them.
    """
    vocab = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) > 2 or not cols[0] or any(ch.isspace() for ch in cols[0]):
                raise ParseError(f"malformed vocabulary entry {line!r}", lineno)
            token = cols[0]
            if len(cols) == 2:
                try:
                    idx = int(cols[1])
                except ValueError:
                    raise ParseError(f"token id {cols[1]!r} is not an integer", lineno, "id") from None
                if idx < 0:
                    raise ParseError("token id must be non-negative", lineno, "id")
            else:
                idx = len(vocab)
            if token in vocab:
                raise ParseError(f"duplicate token {token!r}", lineno, "token")
            if idx in vocab.values():
                raise ParseError(f"duplicate token id {idx}", lineno, "id")
            vocab[token] = idx
    if not vocab:
        raise ParseError(f"vocabulary {path} is empty")
    for special in (UNK, MASK):
        if special not in vocab:
            vocab[special] = max(vocab.values()) + 1
    return vocab


def load_corpus(path, vocab_path):
    """Tokenize a whitespace-separated text file against a vocabulary file."""
    vocab = load_vocab(vocab_path)
    unk = vocab[UNK]
    ids, oov = [], 0
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            for token in raw.split():
                idx = vocab.get(token)
                if idx is None:
                    oov += 1
                    idx = unk
                ids.append(idx)
    if not ids:
        raise ParseError(f"corpus {path} contains no tokens")
    corpus = Corpus(np.asarray(ids, dtype=np.int64), vocab, unk, vocab[MASK], oov / len(ids))
    logger.info("loaded corpus %s: %d tokens, vocabulary %d, OOV rate %.4f", path, len(ids), corpus.vocab_size,
                corpus.oov_rate)
    return corpus


def synthetic_corpus(vocab_size=2000, length=200_000, seed=0):
    """Zipf-distributed token stream for runs without a real corpus."""
    if vocab_size < 4:
        raise ContractError("synthetic corpus needs a vocabulary of at least 4")
    vocab = {UNK: 0, MASK: 1}
    vocab.update({f"w{i}": i for i in range(2, vocab_size)})
    rng = np.random.default_rng(seed)
    ranks = np.arange(1, vocab_size - 1)
    p = 1.0 / ranks
    ids = rng.choice(np.arange(2, vocab_size), size=length, p=p / p.sum())
    return Corpus(ids.astype(np.int64), vocab, 0, 1)


def sample_minibatch(corpus, rng, n=128, t=32, mode="next_token", minibatch_id=0):
    """
    Draw ``n`` random windows of length ``t``.

    ``next_token`` targets are the following tokens; ``masked`` mode hides
    ``round(0.15 * t)`` positions per sequence (at least one) behind the mask
    id and targets only those positions.
    """
    if len(corpus) < t + 1:
        raise ContractError(f"corpus of {len(corpus)} tokens is too short for windows of {t}")
    starts = rng.integers(0, len(corpus) - t, size=n)
    windows = corpus.ids[starts[:, None] + np.arange(t + 1)[None, :]]
    if mode == "next_token":
        return Minibatch(windows[:, :t], windows[:, 1:], mode, minibatch_id)
    if mode != "masked":
        raise ValueError(f"unknown minibatch mode {mode!r}")
    tokens = windows[:, :t].copy()
    targets = np.full((n, t), -1, dtype=np.int64)
    n_mask = max(1, int(round(MASK_RATE * t)))
    for row in range(n):
        pos = rng.choice(t, size=n_mask, replace=False)
        targets[row, pos] = tokens[row, pos]
        tokens[row, pos] = corpus.mask_id
    return Minibatch(tokens, targets, mode, minibatch_id)
