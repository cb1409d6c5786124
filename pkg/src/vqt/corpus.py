"""Word-level tokenizer for plain-text corpora."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

OOV = "<oov>"
_TOKEN = re.compile(r"[a-z']+|[.,!?;]")


def toy_corpus_path() -> Path:
    return Path(str(resources.files("vqt.data").joinpath("toy_corpus.txt")))


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


@dataclass(frozen=True)
class Corpus:
    vocab: tuple[str, ...]  # id -> word; the last entry is OOV
    tokens: np.ndarray  # int64 ids

    @property
    def oov_id(self) -> int:
        return len(self.vocab) - 1

    def decode(self, ids) -> list[str]:
        return [self.vocab[int(i)] for i in ids]


def build_vocab(words: list[str], V: int) -> tuple[str, ...]:
    """Top ``V - 1`` words by frequency (ties broken alphabetically), then OOV."""
    if V < 2:
        raise ValueError(f"vocabulary size must be >= 2, got {V}")
    counts = Counter(words)
    ranked = sorted(counts, key=lambda w: (-counts[w], w))
    return tuple(ranked[: V - 1]) + (OOV,)


def ingest_corpus(path, V: int) -> Corpus:
    """Lowercased word tokens of a UTF-8 file, mapped into a ``V``-word vocabulary."""
    text = Path(path).read_text(encoding="utf-8")
    words = tokenize(text)
    if not words:
        raise ValueError(f"corpus {path} contains no tokens")
    vocab = build_vocab(words, V)
    index = {w: i for i, w in enumerate(vocab)}
    oov = len(vocab) - 1
    ids = np.fromiter((index.get(w, oov) for w in words), dtype=np.int64, count=len(words))
    return Corpus(vocab, ids)
