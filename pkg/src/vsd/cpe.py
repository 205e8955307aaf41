"""Class-probability estimators trained by log-loss on thresholded labels.

Inputs are one-hot encodings of dimension ``M * V``. Three architectures:

``logistic``
    ``pi(x) = sigmoid(w . onehot(x) + b)``.
``mlp``
    One hidden LeakyReLU layer of width ``hidden``.
``additive``
    ``pi(x) = prod_m sigmoid(a[m, x_m])``, so ``log pi`` is a sum of
    per-position terms. With a factorised prior the implied target
    ``p(x) pi(x)`` is itself factorised.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_expit

from .genmodel import ShapeError
from .optim import AdamState
from .seqcore import BinaryDataset, as_batch

log = logging.getLogger(__name__)

ARCHITECTURES = ("logistic", "mlp", "additive")
LEAK = 0.01


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    iterations: int = 1000
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clamp: float = 1e-6
    architecture: str = "mlp"
    hidden: int = 32

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not 0 < self.clamp < 0.5:
            raise ValueError("clamp must lie in (0, 0.5)")
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"architecture must be one of {ARCHITECTURES}")


@dataclass(frozen=True)
class CpeModel:
    architecture: str
    length: int
    vocab_size: int
    weights: np.ndarray
    hidden: int = 0
    clamp: float = 1e-6
    warning: str | None = None
    loss_trace: tuple = field(default=(), repr=False, compare=False)

    @property
    def additive_mode(self) -> bool:
        return self.architecture == "additive"

    @property
    def n_features(self) -> int:
        return self.length * self.vocab_size


def num_weights(architecture: str, length: int, vocab_size: int, hidden: int = 0) -> int:
    d = length * vocab_size
    if architecture == "logistic":
        return d + 1
    if architecture == "mlp":
        return d * hidden + hidden + hidden + 1
    if architecture == "additive":
        return d
    raise ValueError(f"unknown architecture {architecture!r}")


def zeros(architecture: str, length: int, vocab_size: int, hidden: int = 32,
          clamp: float = 1e-6) -> CpeModel:
    hidden = hidden if architecture == "mlp" else 0
    return CpeModel(architecture, length, vocab_size,
                    np.zeros(num_weights(architecture, length, vocab_size, hidden)),
                    hidden, clamp)


def _onehot(x: np.ndarray, vocab_size: int) -> np.ndarray:
    n, m = x.shape
    out = np.zeros((n, m * vocab_size))
    out[np.arange(n)[:, None], np.arange(m)[None, :] * vocab_size + x] = 1.0
    return out


def _unpack_mlp(w: np.ndarray, d: int, h: int):
    w1 = w[: d * h].reshape(d, h)
    b1 = w[d * h: d * h + h]
    w2 = w[d * h + h: d * h + 2 * h]
    b2 = w[-1]
    return w1, b1, w2, b2


def _forward(model: CpeModel, w: np.ndarray, x: np.ndarray):
    """Returns ``(log pi, log(1 - pi), cache)`` without clamping."""
    if model.architecture == "additive":
        a = w.reshape(model.length, model.vocab_size)[np.arange(model.length)[None, :], x]
        lp = log_expit(a).sum(axis=1)
        return lp, _log1mexp(lp), a
    feats = _onehot(x, model.vocab_size)
    if model.architecture == "logistic":
        logit = feats @ w[:-1] + w[-1]
        cache = feats
    else:
        w1, b1, w2, b2 = _unpack_mlp(w, model.n_features, model.hidden)
        pre = feats @ w1 + b1
        hid = np.where(pre > 0, pre, LEAK * pre)
        logit = hid @ w2 + b2
        cache = (feats, pre, hid)
    return log_expit(logit), log_expit(-logit), (logit, cache)


def _log1mexp(lp: np.ndarray) -> np.ndarray:
    # log(1 - exp(lp)) for lp <= 0
    lp = np.minimum(lp, -1e-300)
    return np.where(lp > -0.693, np.log(-np.expm1(lp)), np.log1p(-np.exp(lp)))


def logloss(model: CpeModel, data: BinaryDataset, weights: np.ndarray | None = None) -> float:
    """Mean negative log-likelihood of the labels (unclamped)."""
    w = model.weights if weights is None else weights
    x = as_batch(data.sequences, model.length)
    lp, l1mp, _ = _forward(model, w, x)
    z = data.labels.astype(float)
    return float(-np.mean(z * lp + (1 - z) * l1mp))


def logloss_grad(model: CpeModel, data: BinaryDataset, weights: np.ndarray | None = None) -> np.ndarray:
    w = model.weights if weights is None else weights
    x = as_batch(data.sequences, model.length)
    z = data.labels.astype(float)
    n = x.shape[0]
    lp, l1mp, cache = _forward(model, w, x)
    if model.architecture == "additive":
        a = cache
        pi = np.exp(lp)
        odds = pi / np.maximum(1.0 - pi, 1e-300)
        # dL/dlp per sample, then d lp / d a = 1 - sigmoid(a)
        dlp = -(z - (1 - z) * odds) / n
        da = dlp[:, None] * expit(-a)
        grad = np.zeros((model.length, model.vocab_size))
        for m in range(model.length):
            grad[m] = np.bincount(x[:, m], weights=da[:, m], minlength=model.vocab_size)
        return grad.reshape(-1)
    logit, inner = cache
    dlogit = (expit(logit) - z) / n
    if model.architecture == "logistic":
        feats = inner
        return np.concatenate([feats.T @ dlogit, [dlogit.sum()]])
    feats, pre, hid = inner
    _, _, w2, _ = _unpack_mlp(w, model.n_features, model.hidden)
    g_w2 = hid.T @ dlogit
    g_b2 = dlogit.sum()
    dhid = np.outer(dlogit, w2) * np.where(pre > 0, 1.0, LEAK)
    g_w1 = feats.T @ dhid
    g_b1 = dhid.sum(axis=0)
    return np.concatenate([g_w1.reshape(-1), g_b1, g_w2, [g_b2]])


def _init_weights(model: CpeModel, rng: np.random.Generator) -> np.ndarray:
    d = model.n_features
    if model.architecture == "mlp":
        h = model.hidden
        w1 = rng.normal(0, 1 / np.sqrt(model.length), size=(d, h))
        w2 = rng.normal(0, 1 / np.sqrt(h), size=h)
        return np.concatenate([w1.reshape(-1), np.zeros(h), w2, [0.0]])
    return rng.normal(0, 0.01, size=model.weights.size)


def fit_logloss(data: BinaryDataset, config: TrainConfig | None = None,
                rng: np.random.Generator | None = None) -> CpeModel:
    """Minimise mean log-loss with full-batch Adam from a random start."""
    config = config or TrainConfig()
    if len(data) == 0:
        raise ValueError("empty dataset")
    rng = rng if rng is not None else np.random.default_rng(0)
    model = zeros(config.architecture, data.length, data.vocab_size,
                  config.hidden, config.clamp)
    base_rate = float(np.mean(data.labels))
    if base_rate in (0.0, 1.0):
        log.debug("single-class CPE training data (base rate %s)", base_rate)
        return _constant_model(model, base_rate, config.clamp)

    w = _init_weights(model, rng)
    adam = AdamState(lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.eps)
    trace = []
    for _ in range(config.iterations):
        g = logloss_grad(model, data, w)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite CPE gradient")
        w = adam.step(w, g)
        trace.append(logloss(model, data, w))
    return CpeModel(model.architecture, model.length, model.vocab_size, w,
                    model.hidden, config.clamp, None, tuple(trace))


def _constant_model(model: CpeModel, base_rate: float, clamp: float) -> CpeModel:
    target = 1 - clamp if base_rate == 1.0 else clamp
    w = np.zeros_like(model.weights)
    if model.architecture == "additive":
        # prod_m sigmoid(a) == target
        w[:] = -np.log(np.expm1(-np.log(target) / model.length))
    else:
        w[-1] = np.log(target / (1 - target))
    return CpeModel(model.architecture, model.length, model.vocab_size, w,
                    model.hidden, clamp, f"single-class data (base rate {base_rate:g})")


def predict_prob(model: CpeModel, x) -> np.ndarray:
    xb = _check(model, x)
    lp, _, _ = _forward(model, model.weights, xb)
    out = np.clip(np.exp(lp), model.clamp, 1 - model.clamp)
    return float(out[0]) if np.ndim(x) == 1 else out


def predict_logprob(model: CpeModel, x) -> np.ndarray:
    """``log(clamp(pi(x)))``."""
    xb = _check(model, x)
    lp, _, _ = _forward(model, model.weights, xb)
    out = np.clip(lp, np.log(model.clamp), np.log1p(-model.clamp))
    return float(out[0]) if np.ndim(x) == 1 else out


def _check(model: CpeModel, x) -> np.ndarray:
    try:
        xb = as_batch(x, model.length)
    except ValueError as exc:
        raise ShapeError(str(exc)) from None
    if xb.size and (xb.min() < 0 or xb.max() >= model.vocab_size):
        raise ShapeError("token index out of vocabulary range")
    return xb


def dumps(model: CpeModel) -> str:
    lines = [f"{model.architecture},{model.length},{model.vocab_size}"]
    lines.extend(repr(float(v)) for v in model.weights)
    return "\n".join(lines) + "\n"


def loads(text: str, clamp: float = 1e-6) -> CpeModel:
    lines = text.strip().splitlines()
    arch, m_len, v = lines[0].split(",")
    m_len, v = int(m_len), int(v)
    w = np.array([float(s) for s in lines[1:]])
    hidden = (w.size - 1) // (m_len * v + 2) if arch == "mlp" else 0
    if w.size != num_weights(arch, m_len, v, hidden):
        raise ShapeError("weight count does not match header")
    return CpeModel(arch, m_len, v, w, hidden, clamp)
