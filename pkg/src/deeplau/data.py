"""Corpora, vocabularies, length-bucketed batches and synthetic tasks."""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .model import Batch
from .numerics import make_rng

PAD, BOS, EOS, UNK = 0, 1, 2, 3
SPECIALS = ("<pad>", "<s>", "</s>", "<unk>")


class DataError(ValueError):
    """Unusable input data (empty corpus, mismatched files, ...)."""


class Vocab:
    """Token <-> id map; ids 0-3 are PAD, BOS, EOS, UNK."""

    def __init__(self, tokens: Iterable[str] = ()):
        self.itos: list[str] = list(SPECIALS)
        self.stoi: dict[str, int] = {t: i for i, t in enumerate(SPECIALS)}
        for tok in tokens:
            if tok in self.stoi:
                raise ValueError(f"duplicate vocabulary entry {tok!r}")
            self.stoi[tok] = len(self.itos)
            self.itos.append(tok)

    def __len__(self) -> int:
        return len(self.itos)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self.itos == other.itos

    def __contains__(self, tok: str) -> bool:
        return tok in self.stoi

    @property
    def tokens(self) -> list[str]:
        """Non-reserved entries in id order."""
        return self.itos[len(SPECIALS):]

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.stoi.get(t, UNK) for t in tokens]

    def decode(self, ids: Iterable[int], strip: bool = True) -> list[str]:
        out = []
        for i in ids:
            i = int(i)
            if strip and i in (PAD, BOS):
                continue
            if strip and i == EOS:
                break
            out.append(self.itos[i])
        return out

    def save(self, path) -> None:
        Path(path).write_text("".join(t + "\n" for t in self.tokens), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocab":
        text = Path(path).read_text(encoding="utf-8")
        return cls(line for line in text.split("\n") if line)


def build_vocab(sentences: Iterable[Sequence[str]], max_size: int) -> Vocab:
    """Most frequent ``max_size - 4`` tokens; ties go to the earlier first occurrence."""
    if max_size < len(SPECIALS):
        raise ValueError("max_size must leave room for the four reserved entries")
    counts: Counter = Counter()
    first: dict[str, int] = {}
    for sent in sentences:
        for tok in sent:
            if tok in SPECIALS:
                continue
            counts[tok] += 1
            first.setdefault(tok, len(first))
    if not counts:
        raise DataError("cannot build a vocabulary from an empty corpus")
    ranked = sorted(counts, key=lambda t: (-counts[t], first[t]))
    return Vocab(ranked[:max_size - len(SPECIALS)])


@dataclass
class ParallelCorpus:
    pairs: list[tuple[list[str], list[str]]]

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def sources(self) -> list[list[str]]:
        return [s for s, _ in self.pairs]

    @property
    def targets(self) -> list[list[str]]:
        return [t for _, t in self.pairs]

    def split(self, n_first: int) -> tuple["ParallelCorpus", "ParallelCorpus"]:
        return ParallelCorpus(self.pairs[:n_first]), ParallelCorpus(self.pairs[n_first:])


def read_lines(path) -> list[list[str]]:
    with open(path, encoding="utf-8") as fh:
        return [line.split() for line in fh.read().splitlines()]


def read_parallel(src_path, tgt_path) -> ParallelCorpus:
    """Whitespace-tokenized parallel files; pairs with an empty side are dropped."""
    src, tgt = read_lines(src_path), read_lines(tgt_path)
    if len(src) != len(tgt):
        raise DataError(f"{src_path} has {len(src)} lines but {tgt_path} has {len(tgt)}")
    return ParallelCorpus([(s, t) for s, t in zip(src, tgt) if s and t])


def write_lines(path, sentences: Iterable[Sequence[str]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sent in sentences:
            fh.write(" ".join(sent) + "\n")


def write_parallel(corpus: ParallelCorpus, src_path, tgt_path) -> None:
    write_lines(src_path, corpus.sources)
    write_lines(tgt_path, corpus.targets)


def make_batch(src_ids: Sequence[Sequence[int]], tgt_ids: Sequence[Sequence[int]]) -> Batch:
    src = np.array([list(s) + [EOS] for s in src_ids], dtype=np.int64)
    tgt_in = np.array([[BOS] + list(t) for t in tgt_ids], dtype=np.int64)
    tgt_out = np.array([list(t) + [EOS] for t in tgt_ids], dtype=np.int64)
    return Batch(src, tgt_in, tgt_out)


def make_batches(corpus: ParallelCorpus, vocab_src: Vocab, vocab_tgt: Vocab,
                 batch_size: int = 128, max_len: int = 80) -> list[Batch]:
    """Drop over-long pairs, bucket by exact (source, target) length, chunk.

    Buckets come out in increasing length order and keep corpus order
    inside, so the result is deterministic.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    buckets: dict[tuple[int, int], list] = defaultdict(list)
    for s, t in corpus.pairs:
        if len(s) > max_len or len(t) > max_len or not s or not t:
            continue
        buckets[(len(s), len(t))].append((vocab_src.encode(s), vocab_tgt.encode(t)))
    batches = []
    for key in sorted(buckets):
        items = buckets[key]
        for i in range(0, len(items), batch_size):
            chunk = items[i:i + batch_size]
            batches.append(make_batch([s for s, _ in chunk], [t for _, t in chunk]))
    if not batches:
        raise DataError("no sentence pairs left after length filtering")
    return batches


def epoch_order(n_batches: int, seed: int, epoch: int) -> np.ndarray:
    """Batch visiting order for one epoch, a pure function of (seed, epoch)."""
    rng = np.random.Generator(np.random.PCG64([int(seed), int(epoch)]))
    return rng.permutation(n_batches)


# --- synthetic tasks ------------------------------------------------------

TASKS = ("copy", "reverse", "lexicon_swap")


@dataclass(frozen=True)
class SyntheticTaskSpec:
    kind: str = "copy"
    vocab_size: int = 20  # number of content symbols (specials excluded)
    min_len: int = 3
    max_len: int = 12
    num_samples: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.kind not in TASKS:
            raise ValueError(f"unknown task {self.kind!r}; choose from {TASKS}")
        if self.vocab_size < 1 or not 1 <= self.min_len <= self.max_len or self.num_samples < 0:
            raise ValueError("invalid synthetic task spec")


def source_symbols(n: int) -> list[str]:
    return [f"s{i}" for i in range(n)]


def lexicon(spec: SyntheticTaskSpec) -> dict[str, str]:
    """The fixed random source->target bijection of a lexicon-swap task."""
    perm = make_rng(spec.seed ^ 0x5EED).permutation(spec.vocab_size)
    return {f"s{i}": f"t{int(j)}" for i, j in enumerate(perm)}


def lexicon_swap(tokens: Sequence[str], mapping: dict[str, str]) -> list[str]:
    """Relabel every token through ``mapping`` and reverse the order."""
    return [mapping[t] for t in reversed(tokens)]


def generate_synthetic(spec: SyntheticTaskSpec) -> ParallelCorpus:
    rng = make_rng(spec.seed)
    symbols = source_symbols(spec.vocab_size)
    mapping = lexicon(spec) if spec.kind == "lexicon_swap" else None
    pairs = []
    for _ in range(spec.num_samples):
        n = int(rng.integers(spec.min_len, spec.max_len + 1))
        src = [symbols[i] for i in rng.integers(0, spec.vocab_size, n)]
        if spec.kind == "copy":
            tgt = list(src)
        elif spec.kind == "reverse":
            tgt = src[::-1]
        else:
            tgt = lexicon_swap(src, mapping)
        pairs.append((src, tgt))
    return ParallelCorpus(pairs)


def encode_sources(sentences: Sequence[Sequence[str]], vocab: Vocab,
                   max_len: Optional[int] = None) -> list[list[int]]:
    """Source ids with the trailing EOS the encoder expects."""
    out = []
    for s in sentences:
        ids = vocab.encode(s if max_len is None else s[:max_len])
        out.append(ids + [EOS])
    return out
