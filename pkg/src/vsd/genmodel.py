"""Variational families over fixed-length token sequences.

Two families are provided:

* :class:`MeanFieldParams` -- independent categoricals per position.
* :class:`AutoregressiveParams` -- a first-order chain where the token at
  position ``m`` is drawn conditioned on the token at ``m - 1``.

Both expose the same contract that score-function VI needs: sampling, exact
log-probabilities and gradients of the log-probability with respect to a flat
parameter vector. The same objects double as priors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax, softmax

from .seqcore import Sequence, SequenceError, as_batch

SMOOTHING = 0.1


class ShapeError(SequenceError):
    """Sequence or parameter shapes do not agree."""


@dataclass(frozen=True)
class MeanFieldParams:
    """Per-position logits of shape ``(M, V)``."""

    logits: np.ndarray

    family = "meanfield"

    def __post_init__(self):
        logits = np.array(self.logits, dtype=float)
        if logits.ndim != 2 or logits.shape[1] < 2:
            raise ShapeError("mean-field logits must have shape (M, V>=2)")
        if not np.all(np.isfinite(logits)):
            raise ValueError("logits must be finite")
        logits.setflags(write=False)
        object.__setattr__(self, "logits", logits)

    @classmethod
    def uniform(cls, length: int, vocab_size: int) -> "MeanFieldParams":
        return cls(np.zeros((length, vocab_size)))

    @property
    def length(self) -> int:
        return self.logits.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.logits.shape[1]

    @property
    def num_params(self) -> int:
        return self.logits.size

    def probs(self) -> np.ndarray:
        return softmax(self.logits, axis=1)

    def log_probs(self) -> np.ndarray:
        return log_softmax(self.logits, axis=1)

    def flat(self) -> np.ndarray:
        return self.logits.reshape(-1).copy()

    def with_flat(self, flat) -> "MeanFieldParams":
        return MeanFieldParams(np.asarray(flat, float).reshape(self.logits.shape))

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        if count < 1:
            raise ValueError("count must be >= 1")
        cdf = np.cumsum(self.probs(), axis=1)
        u = rng.random((count, self.length))
        idx = (u[:, :, None] >= cdf[None, :, :]).sum(axis=2)
        return np.minimum(idx, self.vocab_size - 1).astype(np.int64)

    def log_prob(self, batch) -> np.ndarray:
        x = _check(batch, self)
        lp = self.log_probs()
        return lp[np.arange(self.length)[None, :], x].sum(axis=1)

    def score_grad(self, batch) -> np.ndarray:
        """Rows of ``onehot(x_m) - softmax(phi_m)`` flattened to ``(n, M*V)``."""
        x = _check(batch, self)
        onehot = np.zeros((x.shape[0], self.length, self.vocab_size))
        np.put_along_axis(onehot, x[:, :, None], 1.0, axis=2)
        return (onehot - self.probs()[None]).reshape(x.shape[0], -1)

    def weighted_score(self, batch, weights) -> np.ndarray:
        """``sum_s w_s * score_grad(x_s)`` without materialising every row."""
        x = _check(batch, self)
        w = np.asarray(weights, float).reshape(-1)
        counts = np.zeros((self.length, self.vocab_size))
        for m in range(self.length):
            counts[m] = np.bincount(x[:, m], weights=w, minlength=self.vocab_size)
        return (counts - w.sum() * self.probs()).reshape(-1)


@dataclass(frozen=True)
class AutoregressiveParams:
    """First-order chain: ``initial_logits`` (V,) and ``transition_logits`` (M-1, V, V).

    ``transition_logits[m - 1, a, b]`` scores token ``b`` at position ``m``
    given token ``a`` at position ``m - 1``.
    """

    initial_logits: np.ndarray
    transition_logits: np.ndarray

    family = "autoregressive"

    def __post_init__(self):
        init = np.array(self.initial_logits, dtype=float)
        trans = np.array(self.transition_logits, dtype=float)
        v = init.shape[0]
        if init.ndim != 1 or v < 2 or trans.ndim != 3 or trans.shape[1:] != (v, v):
            raise ShapeError("autoregressive logits must have shapes (V,) and (M-1, V, V)")
        if not (np.all(np.isfinite(init)) and np.all(np.isfinite(trans))):
            raise ValueError("logits must be finite")
        init.setflags(write=False)
        trans.setflags(write=False)
        object.__setattr__(self, "initial_logits", init)
        object.__setattr__(self, "transition_logits", trans)

    @classmethod
    def uniform(cls, length: int, vocab_size: int) -> "AutoregressiveParams":
        return cls(np.zeros(vocab_size), np.zeros((length - 1, vocab_size, vocab_size)))

    @property
    def length(self) -> int:
        return self.transition_logits.shape[0] + 1

    @property
    def vocab_size(self) -> int:
        return self.initial_logits.shape[0]

    @property
    def num_params(self) -> int:
        return self.initial_logits.size + self.transition_logits.size

    def flat(self) -> np.ndarray:
        return np.concatenate([self.initial_logits, self.transition_logits.reshape(-1)])

    def with_flat(self, flat) -> "AutoregressiveParams":
        flat = np.asarray(flat, float)
        v = self.vocab_size
        return AutoregressiveParams(flat[:v], flat[v:].reshape(self.transition_logits.shape))

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        if count < 1:
            raise ValueError("count must be >= 1")
        u = rng.random((count, self.length))
        out = np.empty((count, self.length), dtype=np.int64)
        cdf0 = np.cumsum(softmax(self.initial_logits))
        out[:, 0] = np.minimum((u[:, 0, None] >= cdf0[None]).sum(1), self.vocab_size - 1)
        trans_cdf = np.cumsum(softmax(self.transition_logits, axis=2), axis=2)
        for m in range(1, self.length):
            cdf = trans_cdf[m - 1, out[:, m - 1]]
            out[:, m] = np.minimum((u[:, m, None] >= cdf).sum(1), self.vocab_size - 1)
        return out

    def log_prob(self, batch) -> np.ndarray:
        x = _check(batch, self)
        lp = log_softmax(self.initial_logits)[x[:, 0]]
        ltrans = log_softmax(self.transition_logits, axis=2)
        for m in range(1, self.length):
            lp = lp + ltrans[m - 1, x[:, m - 1], x[:, m]]
        return lp

    def score_grad(self, batch) -> np.ndarray:
        x = _check(batch, self)
        n = x.shape[0]
        out = np.zeros((n, self.num_params))
        for s in range(n):
            w = np.zeros(n)
            w[s] = 1.0
            out[s] = self.weighted_score(x, w)
        return out

    def weighted_score(self, batch, weights) -> np.ndarray:
        x = _check(batch, self)
        w = np.asarray(weights, float).reshape(-1)
        v = self.vocab_size
        g0 = np.bincount(x[:, 0], weights=w, minlength=v) - w.sum() * softmax(self.initial_logits)
        probs = softmax(self.transition_logits, axis=2)
        gt = np.zeros_like(self.transition_logits)
        for m in range(1, self.length):
            pair = np.bincount(x[:, m - 1] * v + x[:, m], weights=w, minlength=v * v)
            prev = np.bincount(x[:, m - 1], weights=w, minlength=v)
            gt[m - 1] = pair.reshape(v, v) - prev[:, None] * probs[m - 1]
        return np.concatenate([g0, gt.reshape(-1)])


Params = MeanFieldParams | AutoregressiveParams


def _check(batch, params) -> np.ndarray:
    try:
        x = as_batch(batch, params.length)
    except SequenceError as exc:
        raise ShapeError(str(exc)) from None
    if x.size and (x.min() < 0 or x.max() >= params.vocab_size):
        raise ShapeError("token index out of vocabulary range")
    return x


def sample(params: Params, rng: np.random.Generator, count: int) -> np.ndarray:
    """``count`` i.i.d. draws as an ``(count, M)`` index array."""
    return params.sample(rng, count)


def _is_single(x) -> bool:
    return isinstance(x, Sequence) or np.ndim(x) == 1


def log_prob(params: Params, x) -> float | np.ndarray:
    """Exact ``log q(x)``; scalar for a single sequence, array for a batch."""
    out = params.log_prob(x)
    return float(out[0]) if _is_single(x) else out


def score_grad(params: Params, x) -> np.ndarray:
    """Gradient of ``log q(x)`` with respect to ``params.flat()``."""
    out = params.score_grad(x)
    return out[0] if _is_single(x) else out


def kl_divergence(q: Params, p: Params, rng: np.random.Generator | None = None,
                  samples: int = 4096) -> float:
    """``KL(q || p)``.

    Closed form when both are mean-field; otherwise a Monte Carlo estimate
    from ``samples`` draws of ``q``.
    """
    if (q.length, q.vocab_size) != (p.length, p.vocab_size):
        raise ShapeError("q and p have different shapes")
    if isinstance(q, MeanFieldParams) and isinstance(p, MeanFieldParams):
        qp = q.probs()
        return float(np.sum(qp * (q.log_probs() - p.log_probs())))
    if rng is None:
        raise ValueError("Monte Carlo KL needs an rng")
    x = q.sample(rng, samples)
    return float(np.mean(q.log_prob(x) - p.log_prob(x)))


def kl_grad_meanfield(q: MeanFieldParams, p: MeanFieldParams) -> np.ndarray:
    """Gradient of the closed-form ``KL(q || p)`` with respect to q's logits."""
    qp = q.probs()
    d = q.log_probs() - p.log_probs()
    per_pos = np.sum(qp * d, axis=1, keepdims=True)
    return (qp * (d - per_pos)).reshape(-1)


def fit_ml(sequences, family: str = "meanfield", vocab_size: int | None = None,
           smoothing: float = SMOOTHING) -> Params:
    """Maximum-likelihood fit with Laplace smoothing of ``smoothing`` counts."""
    x = as_batch(sequences)
    if x.shape[0] == 0:
        raise SequenceError("cannot fit to an empty corpus")
    v = int(vocab_size if vocab_size is not None else x.max() + 1)
    m_len = x.shape[1]
    if family == "meanfield":
        counts = np.stack([np.bincount(x[:, m], minlength=v) for m in range(m_len)])
        return MeanFieldParams(np.log(counts + smoothing))
    if family == "autoregressive":
        init = np.log(np.bincount(x[:, 0], minlength=v) + smoothing)
        trans = np.empty((m_len - 1, v, v))
        for m in range(1, m_len):
            pair = np.bincount(x[:, m - 1] * v + x[:, m], minlength=v * v).reshape(v, v)
            trans[m - 1] = np.log(pair + smoothing)
        return AutoregressiveParams(init, trans)
    raise ValueError(f"unknown family {family!r}")


def uniform(family: str, length: int, vocab_size: int) -> Params:
    if family == "meanfield":
        return MeanFieldParams.uniform(length, vocab_size)
    if family == "autoregressive":
        return AutoregressiveParams.uniform(length, vocab_size)
    raise ValueError(f"unknown family {family!r}")


def dumps(params: Params) -> str:
    """Text snapshot: header ``family,M,V`` then one value per line."""
    lines = [f"{params.family},{params.length},{params.vocab_size}"]
    lines.extend(repr(float(v)) for v in params.flat())
    return "\n".join(lines) + "\n"


def loads(text: str) -> Params:
    lines = text.strip().splitlines()
    family, m_len, v = lines[0].split(",")
    flat = np.array([float(s) for s in lines[1:]])
    template = uniform(family, int(m_len), int(v))
    if flat.size != template.num_params:
        raise ShapeError("parameter count does not match header")
    return template.with_flat(flat)
