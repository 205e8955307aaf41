"""Black-box fitness functions and the noisy measurement channel.

A black box is any callable mapping an ``(n, M)`` index batch to ``n``
fitness values that also carries ``length`` and ``vocab_size`` attributes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import log_ndtr

from .seqcore import SequenceError, Vocabulary, as_batch, enumerate_space, rank

MAX_TABULATED = 2 ** 24
MAX_ENUMERATED = 2 ** 20


class LandscapeError(ValueError):
    pass


@dataclass(frozen=True)
class NoisyChannel:
    """Additive Gaussian measurement noise ``y = f(x) + eps``."""

    noise_std: float = 0.0

    def __post_init__(self):
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")


def _check_domain(fn, batch) -> np.ndarray:
    try:
        x = as_batch(batch, fn.length)
    except SequenceError as exc:
        raise LandscapeError(str(exc)) from None
    if x.size and (x.min() < 0 or x.max() >= fn.vocab_size):
        raise LandscapeError("sequence outside the landscape vocabulary")
    return x


def evaluate(fn, channel: NoisyChannel, batch, rng: np.random.Generator | None = None) -> np.ndarray:
    x = _check_domain(fn, batch)
    if x.shape[0] == 0:
        raise LandscapeError("empty batch")
    y = np.asarray(fn(x), dtype=float)
    if channel.noise_std > 0:
        if rng is None:
            raise ValueError("noisy evaluation needs an rng")
        y = y + rng.normal(0.0, channel.noise_std, size=y.shape)
    return y


@dataclass(frozen=True)
class TabulatedLandscape:
    """Complete lookup table over ``V**M`` indexed by lexicographic rank."""

    values: np.ndarray
    length: int
    vocabulary: Vocabulary
    fill_value: float = -1.0
    n_filled: int = 0

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.vocabulary.size ** self.length,):
            raise LandscapeError("table size does not match V**M")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def vocab_size(self) -> int:
        return self.vocabulary.size

    def __call__(self, batch) -> np.ndarray:
        x = _check_domain(self, batch)
        return self.values[rank(x, self.vocab_size)]

    def domain(self) -> np.ndarray:
        return enumerate_space(self.vocab_size, self.length)

    @property
    def max_value(self) -> float:
        return float(self.values.max())

    def superlevel_size(self, tau: float) -> int:
        return int(np.sum(self.values > tau))


def load_landscape(csv_path, fill_value: float = -1.0,
                   vocabulary: Vocabulary | str | None = None) -> TabulatedLandscape:
    """Read a ``sequence,fitness`` CSV; rows missing from ``V**M`` get ``fill_value``."""
    rows = []
    with open(Path(csv_path), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["sequence", "fitness"]:
            raise LandscapeError("line 1: expected header 'sequence,fitness'")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < 2:
                raise LandscapeError(f"line {lineno}: malformed row {row!r}")
            seq, fit = row[0].strip(), row[1].strip()
            if fit == "":
                rows.append((lineno, seq, None))
                continue
            try:
                value = float(fit)
            except ValueError:
                raise LandscapeError(f"line {lineno}: bad fitness {fit!r}") from None
            if not np.isfinite(value):
                raise LandscapeError(f"line {lineno}: non-finite fitness")
            rows.append((lineno, seq, value))
    if not rows:
        raise LandscapeError("no data rows")
    length = len(rows[0][1])
    for lineno, seq, _ in rows:
        if len(seq) != length:
            raise LandscapeError(
                f"line {lineno}: sequence length {len(seq)} != {length}")
    if vocabulary is None:
        vocabulary = Vocabulary(tuple(sorted({c for _, s, _ in rows for c in s})))
    elif isinstance(vocabulary, str):
        vocabulary = Vocabulary.from_string(vocabulary)
    size = vocabulary.size ** length
    if size > MAX_TABULATED:
        raise LandscapeError(f"V**M = {size} too large to tabulate")
    values = np.full(size, np.nan)
    for lineno, seq, value in rows:
        try:
            r = int(rank(vocabulary.encode(seq)[None, :], vocabulary.size)[0])
        except SequenceError as exc:
            raise LandscapeError(f"line {lineno}: {exc}") from None
        if not np.isnan(values[r]):
            raise LandscapeError(f"line {lineno}: duplicate key {seq!r}")
        values[r] = np.inf if value is None else value
    missing = np.isnan(values) | np.isinf(values)
    values[missing] = fill_value
    return TabulatedLandscape(values, length, vocabulary, fill_value, int(missing.sum()))


def save_landscape(landscape: TabulatedLandscape, csv_path) -> None:
    with open(Path(csv_path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sequence", "fitness"])
        for x, y in zip(landscape.domain(), landscape.values):
            writer.writerow([landscape.vocabulary.decode(x), repr(float(y))])


def synthetic_landscape(vocab_size: int = 4, length: int = 8, seed: int = 0,
                        epistasis: float = 0.5) -> TabulatedLandscape:
    """Random additive-plus-neighbour-epistasis landscape scaled to ``[0, 1]``."""
    rng = np.random.default_rng(seed)
    if vocab_size ** length > MAX_TABULATED:
        raise LandscapeError("synthetic landscape too large to tabulate")
    x = enumerate_space(vocab_size, length)
    site = rng.normal(size=(length, vocab_size))
    pair = rng.normal(size=(length - 1, vocab_size, vocab_size)) * epistasis
    f = site[np.arange(length)[None, :], x].sum(axis=1)
    for m in range(length - 1):
        f += pair[m, x[:, m], x[:, m + 1]]
    f = (f - f.min()) / (f.max() - f.min())
    return TabulatedLandscape(f, length, Vocabulary.of_size(vocab_size), fill_value=0.0)


@dataclass(frozen=True)
class EhrlichStyleFn:
    """Quantised motif-presence score in ``[0, 1]``.

    Each motif ``c`` is a token pattern ``motifs[c]`` placed at relative
    offsets ``offsets[c]`` (first offset 0). The motif's quality is the best
    fraction of its positions matched over all valid start positions,
    quantised down to a multiple of ``1/quantization``. The score is the
    product over motifs.
    """

    motifs: np.ndarray
    offsets: np.ndarray
    length: int
    vocab_size: int
    quantization: int = 4

    def __post_init__(self):
        motifs = np.atleast_2d(np.asarray(self.motifs, dtype=np.int64))
        offsets = np.atleast_2d(np.asarray(self.offsets, dtype=np.int64))
        if motifs.shape != offsets.shape:
            raise LandscapeError("motifs and offsets must have equal shapes")
        if np.any(offsets[:, 0] != 0) or np.any(np.diff(offsets, axis=1) <= 0):
            raise LandscapeError("offsets must start at 0 and strictly increase")
        if np.any(offsets[:, -1] >= self.length):
            raise LandscapeError("motif longer than M")
        if motifs.min() < 0 or motifs.max() >= self.vocab_size:
            raise LandscapeError("motif token outside vocabulary")
        if self.quantization < 1:
            raise LandscapeError("quantization must be >= 1")
        object.__setattr__(self, "motifs", motifs)
        object.__setattr__(self, "offsets", offsets)

    def motif_quality(self, batch) -> np.ndarray:
        """``(n, C)`` best matched fraction per motif before quantisation."""
        x = _check_domain(self, batch)
        n_motifs, motif_len = self.motifs.shape
        out = np.zeros((x.shape[0], n_motifs))
        for c in range(n_motifs):
            span = self.offsets[c, -1]
            for start in range(self.length - span):
                hits = (x[:, start + self.offsets[c]] == self.motifs[c][None, :]).sum(axis=1)
                np.maximum(out[:, c], hits / motif_len, out=out[:, c])
        return out

    def __call__(self, batch) -> np.ndarray:
        q = self.quantization
        quality = np.floor(q * self.motif_quality(batch) + 1e-9) / q
        return np.prod(quality, axis=1)

    def optimal_sequence(self) -> np.ndarray | None:
        """A sequence scoring 1.0 when motifs fit in disjoint segments, else None."""
        n_motifs = self.motifs.shape[0]
        seg = self.length // n_motifs
        if np.any(self.offsets[:, -1] >= seg):
            return None
        x = np.zeros(self.length, dtype=np.int64)
        for c in range(n_motifs):
            x[c * seg + self.offsets[c]] = self.motifs[c]
        return x


def ehrlich_score(fn: EhrlichStyleFn, x) -> float | np.ndarray:
    out = fn(x)
    return float(out[0]) if np.ndim(x) == 1 else out


def make_ehrlich(vocab_size: int = 20, length: int = 15, n_motifs: int = 2,
                 motif_length: int = 4, quantization: int = 4, seed: int = 0) -> EhrlichStyleFn:
    """Random motifs with spacings small enough that all motifs fit disjointly."""
    seg = length // n_motifs
    if seg < motif_length:
        raise LandscapeError("motifs cannot fit in the sequence")
    rng = np.random.default_rng(seed)
    motifs = np.stack([rng.choice(vocab_size, size=motif_length, replace=False)
                       for _ in range(n_motifs)])
    offsets = []
    for _ in range(n_motifs):
        gaps = np.sort(rng.choice(np.arange(1, seg), size=motif_length - 1, replace=False))
        offsets.append(np.concatenate([[0], gaps]))
    return EhrlichStyleFn(motifs, np.array(offsets), length, vocab_size, quantization)


@dataclass(frozen=True)
class OraclePosterior:
    """Enumerated ``p(x | y > tau, f)`` over all of ``V**M``."""

    probs: np.ndarray
    length: int
    vocab_size: int
    tau: float
    log_probs: np.ndarray = field(repr=False, default=None)

    def prob(self, x) -> np.ndarray:
        return self.probs[rank(as_batch(x, self.length), self.vocab_size)]

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        idx = rng.choice(self.probs.size, size=count, p=self.probs)
        return enumerate_space(self.vocab_size, self.length)[idx]


def oracle_posterior(fn, channel: NoisyChannel, tau: float, prior_probs=None) -> OraclePosterior:
    """``p(x | y > tau, f) ∝ p(x) Phi((f(x) - tau) / noise_std)`` by enumeration.

    With zero noise the likelihood is the hard indicator ``1[f(x) > tau]``.
    ``prior_probs`` is a vector over the enumerated domain (uniform if None).
    """
    n = fn.vocab_size ** fn.length
    if n > MAX_ENUMERATED:
        raise LandscapeError("domain too large to enumerate")
    domain = enumerate_space(fn.vocab_size, fn.length)
    f = np.asarray(fn(domain), dtype=float)
    if channel.noise_std > 0:
        loglik = log_ndtr((f - tau) / channel.noise_std)
    else:
        with np.errstate(divide="ignore"):
            loglik = np.log((f > tau).astype(float))
    if prior_probs is None:
        logprior = np.full(n, -np.log(n))
    else:
        with np.errstate(divide="ignore"):
            logprior = np.log(np.asarray(prior_probs, dtype=float))
    logp = loglik + logprior
    top = np.max(logp)
    if not np.isfinite(top):
        raise LandscapeError("zero normalizer")
    logz = top + np.log(np.sum(np.exp(logp - top)))
    logp = logp - logz
    return OraclePosterior(np.exp(logp), fn.length, fn.vocab_size, float(tau), logp)
