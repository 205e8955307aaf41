"""Core sequence types: vocabularies, fixed-length sequences, datasets.

Sequences are dense ``int64`` index arrays. Batches of sequences are 2-D
arrays of shape ``(n, M)``; most of the package passes those around rather
than lists of :class:`Sequence` objects.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Iterable, Sequence as _Seq

import numpy as np


class SequenceError(ValueError):
    """Raised for malformed sequences, vocabularies or datasets."""


@dataclass(frozen=True)
class Vocabulary:
    """Ordered alphabet of distinct tokens."""

    symbols: tuple[str, ...]

    def __post_init__(self):
        symbols = tuple(self.symbols)
        object.__setattr__(self, "symbols", symbols)
        if len(symbols) < 2:
            raise SequenceError("vocabulary needs at least 2 symbols")
        if len(set(symbols)) != len(symbols):
            raise SequenceError("vocabulary symbols must be unique")
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(symbols)})

    @classmethod
    def from_string(cls, chars: str) -> "Vocabulary":
        return cls(tuple(chars))

    @classmethod
    def of_size(cls, size: int) -> "Vocabulary":
        """Default alphabet ``A, B, C, ...`` of the given size."""
        if size <= 26:
            return cls(tuple(chr(ord("A") + i) for i in range(size)))
        return cls(tuple(f"t{i}" for i in range(size)))

    @property
    def size(self) -> int:
        return len(self.symbols)

    def __len__(self) -> int:
        return len(self.symbols)

    def index(self, symbol: str) -> int:
        try:
            return self._index[symbol]
        except KeyError:
            raise SequenceError(f"symbol {symbol!r} not in vocabulary") from None

    def symbol(self, index: int) -> str:
        return self.symbols[index]

    def encode(self, text: str | _Seq[str]) -> np.ndarray:
        """Map a string (one char per token) or token list to indices."""
        return np.array([self.index(s) for s in text], dtype=np.int64)

    def decode(self, tokens: Iterable[int]) -> str:
        sep = "" if all(len(s) == 1 for s in self.symbols) else " "
        return sep.join(self.symbols[int(t)] for t in tokens)


@dataclass(frozen=True)
class Sequence:
    """A fixed-length token string stored as vocabulary indices."""

    tokens: tuple[int, ...]

    def __post_init__(self):
        tokens = tuple(int(t) for t in self.tokens)
        if len(tokens) < 1:
            raise SequenceError("sequence length must be >= 1")
        object.__setattr__(self, "tokens", tokens)

    def __len__(self) -> int:
        return len(self.tokens)

    def validate(self, vocab_size: int, length: int | None = None) -> None:
        if length is not None and len(self.tokens) != length:
            raise SequenceError(
                f"sequence length {len(self.tokens)} != declared length {length}")
        if any(t < 0 or t >= vocab_size for t in self.tokens):
            raise SequenceError("token index out of vocabulary range")

    def as_array(self) -> np.ndarray:
        return np.asarray(self.tokens, dtype=np.int64)


def as_batch(seqs, length: int | None = None) -> np.ndarray:
    """Coerce sequences (array, list of Sequence, list of tuples) to ``(n, M)``."""
    if isinstance(seqs, np.ndarray):
        arr = seqs
    elif isinstance(seqs, Sequence):
        arr = np.asarray([seqs.tokens])
    else:
        arr = np.asarray([s.tokens if isinstance(s, Sequence) else tuple(s)
                          for s in seqs])
    arr = np.asarray(arr, dtype=np.int64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise SequenceError("expected a 2-D batch of sequences")
    if length is not None and arr.shape[1] != length:
        raise SequenceError(f"sequence length {arr.shape[1]} != {length}")
    return arr


def enumerate_space(vocab_size: int, length: int) -> np.ndarray:
    """All ``vocab_size**length`` sequences in lexicographic (index) order."""
    n = vocab_size ** length
    idx = np.arange(n, dtype=np.int64)
    out = np.empty((n, length), dtype=np.int64)
    for m in range(length - 1, -1, -1):
        out[:, m] = idx % vocab_size
        idx //= vocab_size
    return out


def rank(batch: np.ndarray, vocab_size: int) -> np.ndarray:
    """Lexicographic rank of each sequence; inverse of :func:`enumerate_space`."""
    batch = np.asarray(batch, dtype=np.int64)
    weights = vocab_size ** np.arange(batch.shape[1] - 1, -1, -1, dtype=np.int64)
    return batch @ weights


@dataclass(frozen=True)
class LabeledDataset:
    """Observations ``(x_n, y_n)`` sharing one length and vocabulary size."""

    sequences: np.ndarray
    fitness: np.ndarray
    vocab_size: int

    def __post_init__(self):
        seqs = as_batch(self.sequences)
        y = np.asarray(self.fitness, dtype=float).reshape(-1)
        if seqs.shape[0] != y.shape[0]:
            raise SequenceError("sequences and fitness differ in length")
        if not np.all(np.isfinite(y)):
            raise SequenceError("fitness values must be finite")
        if seqs.size and (seqs.min() < 0 or seqs.max() >= self.vocab_size):
            raise SequenceError("token index out of vocabulary range")
        seqs.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "sequences", seqs)
        object.__setattr__(self, "fitness", y)

    def __len__(self) -> int:
        return self.fitness.shape[0]

    @property
    def length(self) -> int:
        return self.sequences.shape[1]

    def extend(self, sequences, fitness) -> "LabeledDataset":
        seqs = as_batch(sequences, self.length)
        return LabeledDataset(np.vstack([self.sequences, seqs]),
                              np.concatenate([self.fitness, np.asarray(fitness, float)]),
                              self.vocab_size)


@dataclass(frozen=True)
class BinaryDataset:
    """Thresholded labels ``z_n = 1[y_n > tau]``."""

    sequences: np.ndarray
    labels: np.ndarray
    threshold: float
    vocab_size: int

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def length(self) -> int:
        return self.sequences.shape[1]


def relabel(dataset: LabeledDataset, tau: float) -> BinaryDataset:
    """Binary labels with the strict inequality ``y > tau``; order preserved."""
    if len(dataset) == 0:
        raise SequenceError("empty dataset")
    labels = (dataset.fitness > tau).astype(np.int64)
    return BinaryDataset(dataset.sequences, labels, float(tau), dataset.vocab_size)


def empirical_quantile(values, gamma: float) -> float:
    """Linear-interpolation quantile at one-based rank ``gamma*(n-1)+1``."""
    if not 0.0 < gamma < 1.0:
        raise SequenceError(f"gamma must lie in (0, 1), got {gamma}")
    v = np.sort(np.asarray(values, dtype=float).reshape(-1))
    if v.size == 0:
        raise SequenceError("empty list")
    h = gamma * (v.size - 1)
    lo = int(np.floor(h))
    hi = min(lo + 1, v.size - 1)
    return float(v[lo] + (h - lo) * (v[hi] - v[lo]))


@dataclass
class QuerySet:
    """Set of queried sequences keyed by their exact index tuple.

    Reads are lock-free; inserts take a lock so a single writer can run
    alongside concurrent readers.
    """

    seen: set = field(default_factory=set)

    def __post_init__(self):
        self._lock = threading.Lock()

    @staticmethod
    def _key(x) -> tuple[int, ...]:
        if isinstance(x, Sequence):
            return x.tokens
        return tuple(int(t) for t in np.asarray(x).reshape(-1))

    def contains(self, x) -> bool:
        return self._key(x) in self.seen

    __contains__ = contains

    def insert(self, x) -> bool:
        """Add ``x``; returns True when it was not already present."""
        key = self._key(x)
        with self._lock:
            if key in self.seen:
                return False
            self.seen.add(key)
            return True

    def __len__(self) -> int:
        return len(self.seen)

    def copy(self) -> "QuerySet":
        return QuerySet(set(self.seen))
