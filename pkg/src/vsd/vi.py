"""Black-box variational inference with score-function gradients.

The central estimator is

    g = (1/S) sum_s (w(x_s) - b) * grad log q(x_s | phi),   x_s ~ q(. | phi')

where the weight ``w`` and the sampling parameters ``phi'`` select the
method (VSD, CbAS, DbAS, BORE*), and ``b`` is an optional exponentially
smoothed baseline.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import cpe as cpe_mod
from . import gp as gp_mod
from .genmodel import MeanFieldParams, Params, kl_grad_meanfield, kl_divergence
from .optim import AdamState, BaselineState
from .seqcore import as_batch, rank

DENSE_CACHE_LIMIT = 2 ** 20


class ScoreBackend:
    """Log-score ``log pi(x)`` (CPE) or ``log PI(x)`` (GP) with memoisation.

    Scores are cached by the sequence's lexicographic rank, in a dense table
    for domains up to ``DENSE_CACHE_LIMIT`` and a dict otherwise.
    """

    def __init__(self, log_score_fn: Callable[[np.ndarray], np.ndarray], length: int,
                 vocab_size: int, kind: str = "callable", model=None, tau: float | None = None):
        self._fn = log_score_fn
        self.length = length
        self.vocab_size = vocab_size
        self.kind = kind
        self.model = model
        self.tau = tau
        size = vocab_size ** length
        self._dense = np.full(size, np.nan) if size <= DENSE_CACHE_LIMIT else None
        self._sparse: dict[int, float] = {}
        self.evaluations = 0

    def log_score(self, x) -> np.ndarray:
        xb = as_batch(x, self.length)
        if self.length * np.log2(self.vocab_size) >= 62:
            return self._eval(xb)
        r = rank(xb, self.vocab_size)
        if self._dense is not None:
            vals = self._dense[r]
            missing = np.isnan(vals)
            if missing.any():
                ur, first = np.unique(r[missing], return_index=True)
                self._dense[ur] = self._eval(xb[missing][first])
                vals = self._dense[r]
            return vals
        out = np.empty(r.shape[0])
        todo = []
        for i, key in enumerate(r.tolist()):
            v = self._sparse.get(key)
            if v is None:
                todo.append(i)
            else:
                out[i] = v
        if todo:
            idx = np.asarray(todo)
            ur, first, inv = np.unique(r[idx], return_index=True, return_inverse=True)
            vals = self._eval(xb[idx][first])
            self._sparse.update(zip(ur.tolist(), vals.tolist()))
            out[idx] = vals[inv]
        return out

    def score(self, x) -> np.ndarray:
        return np.exp(self.log_score(x))

    def _eval(self, xb: np.ndarray) -> np.ndarray:
        self.evaluations += xb.shape[0]
        out = np.asarray(self._fn(xb), dtype=float).reshape(-1)
        if not np.all(np.isfinite(out)):
            raise FloatingPointError("non-finite log score")
        return out


def cpe_backend(model: cpe_mod.CpeModel) -> ScoreBackend:
    return ScoreBackend(lambda x: cpe_mod.predict_logprob(model, x), model.length,
                        model.vocab_size, "cpe", model)


def gp_backend(model: gp_mod.GpModel, tau: float, vocab_size: int, noisy: bool = True,
               floor: float = -700.0) -> ScoreBackend:
    def fn(x):
        return np.maximum(gp_mod.log_pi_acquisition(model, x, tau, noisy), floor)
    return ScoreBackend(fn, model.params.length, vocab_size, "gp-pi", model, tau)


@dataclass
class SampleAudit:
    """Counts how each estimator call obtained its samples."""

    live_draws: int = 0
    fixed_batch_uses: int = 0
    fixed_batches_drawn: int = 0


@dataclass
class ElboEstimate:
    value: float
    samples: int
    weights: np.ndarray = field(repr=False)
    stderr: float = 0.0


def _vsd_weights(q: Params, backend: ScoreBackend, prior: Params, x: np.ndarray,
                 analytic_kl: bool) -> np.ndarray:
    w = backend.log_score(x)
    if not analytic_kl:
        w = w - q.log_prob(x) + prior.log_prob(x)
    return w


def _analytic(q: Params, prior: Params, analytic_kl: bool) -> bool:
    if not analytic_kl:
        return False
    if not (isinstance(q, MeanFieldParams) and isinstance(prior, MeanFieldParams)):
        raise ValueError("closed-form KL needs mean-field q and prior")
    return True


def estimate_elbo(q: Params, backend: ScoreBackend, prior: Params, samples: int,
                  rng: np.random.Generator, analytic_kl: bool = False) -> ElboEstimate:
    """Monte Carlo ``E_q[log score - log q + log p]``."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    analytic = _analytic(q, prior, analytic_kl)
    x = q.sample(rng, samples)
    w = _vsd_weights(q, backend, prior, x, analytic)
    value = float(np.mean(w))
    if analytic:
        value -= kl_divergence(q, prior)
    stderr = float(np.std(w, ddof=1) / np.sqrt(samples)) if samples > 1 else 0.0
    return ElboEstimate(value, samples, w, stderr)


def elbo_grad(q: Params, backend: ScoreBackend, prior: Params, samples: int,
              baseline: BaselineState | None, rng: np.random.Generator,
              analytic_kl: bool = False, audit: SampleAudit | None = None,
              info: dict | None = None) -> np.ndarray:
    """Score-function ELBO gradient with an optional EMA baseline.

    The baseline used is the one stored *before* this call; it is updated
    with this batch's mean weight afterwards.
    """
    if samples < 2:
        raise ValueError("samples must be >= 2")
    analytic = _analytic(q, prior, analytic_kl)
    x = q.sample(rng, samples)
    if audit is not None:
        audit.live_draws += 1
    w = _vsd_weights(q, backend, prior, x, analytic)
    b = baseline.value if baseline is not None else 0.0
    grad = q.weighted_score(x, w - b) / samples
    if analytic:
        grad = grad - kl_grad_meanfield(q, prior)
    if baseline is not None:
        baseline.update(float(np.mean(w)))
    if info is not None:
        kl = kl_divergence(q, prior) if analytic else 0.0
        info.update(elbo=float(np.mean(w)) - kl, baseline=b)
    return grad


WeightFn = Callable[[np.ndarray, Params], np.ndarray]


def general_weighted_grad(q: Params, weight_fn: WeightFn, sample_source: str, samples: int,
                          rng: np.random.Generator | None = None, batch=None,
                          baseline: BaselineState | None = None,
                          audit: SampleAudit | None = None) -> np.ndarray:
    """``E_{q(x|phi')}[w(x) grad log q(x|phi)]``.

    ``sample_source='current'`` draws ``samples`` fresh sequences from ``q``;
    ``'fixed-batch'`` uses the frozen ``batch`` (drawn earlier from another
    parameter setting) and ignores ``samples``.
    """
    if sample_source == "current":
        x = q.sample(rng, samples)
        if audit is not None:
            audit.live_draws += 1
    elif sample_source == "fixed-batch":
        if batch is None or len(batch) == 0:
            raise ValueError("empty fixed batch")
        x = as_batch(batch, q.length)
        if audit is not None:
            audit.fixed_batch_uses += 1
    else:
        raise ValueError(f"unknown sample source {sample_source!r}")
    w = np.asarray(weight_fn(x, q), dtype=float)
    if not np.all(np.isfinite(w)):
        raise FloatingPointError("non-finite weights")
    b = baseline.value if baseline is not None else 0.0
    grad = q.weighted_score(x, w - b) / x.shape[0]
    if baseline is not None:
        baseline.update(float(np.mean(w)))
    return grad


def vsd_weight(backend: ScoreBackend, prior: Params) -> WeightFn:
    return lambda x, q: backend.log_score(x) - q.log_prob(x) + prior.log_prob(x)


def bore_weight(backend: ScoreBackend) -> WeightFn:
    return lambda x, q: backend.score(x)


def dbas_weight(backend: ScoreBackend) -> WeightFn:
    return lambda x, q: backend.score(x)


def cbas_weight(backend: ScoreBackend, prior: Params, q_prev: Params,
                normalize: bool = True) -> WeightFn:
    """``pi(x) p(x) / q(x | phi_prev)``, self-normalised to mean one by default."""
    def fn(x, q):
        logw = backend.log_score(x) + prior.log_prob(x) - q_prev.log_prob(x)
        w = np.exp(logw - np.max(logw))
        if normalize:
            return w / np.mean(w)
        return np.exp(logw)
    return fn


@dataclass
class VIConfig:
    samples: int = 1024
    iterations: int = 3000
    lr: float = 0.01
    ema_decay: float = 0.7
    analytic_kl: bool = True
    use_baseline: bool = True


def optimize(q: Params, grad_fn: Callable[[Params, int], np.ndarray], adam: AdamState,
             iterations: int, trace: list | None = None) -> Params:
    """Adam ascent on ``grad_fn``; ``trace`` collects ``(iter, grad_norm)`` rows."""
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    flat = q.flat()
    for it in range(iterations):
        g = grad_fn(q, it)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(
                f"non-finite gradient at iteration {it} (|phi|max={np.abs(flat).max():.3g})")
        if trace is not None:
            trace.append((it, float(np.linalg.norm(g))))
        flat = adam.step(flat, g, maximize=True)
        q = q.with_flat(flat)
    return q


def maximize_elbo(q0: Params, backend: ScoreBackend, prior: Params, config: VIConfig,
                  rng: np.random.Generator, audit: SampleAudit | None = None,
                  trace: list | None = None) -> Params:
    """Run the VSD objective from ``q0`` for ``config.iterations`` Adam steps."""
    analytic = config.analytic_kl and isinstance(q0, MeanFieldParams) \
        and isinstance(prior, MeanFieldParams)
    baseline = BaselineState(config.ema_decay) if config.use_baseline else None
    adam = AdamState(lr=config.lr)

    def grad_fn(q, it):
        info = {} if trace is not None else None
        g = elbo_grad(q, backend, prior, config.samples, baseline, rng, analytic, audit, info)
        if trace is not None:
            trace.append((it, info["elbo"], float(np.linalg.norm(g)), info["baseline"]))
        return g

    return optimize(q0, grad_fn, adam, config.iterations)


def write_trace(rows, path) -> None:
    """Write ``iter,elbo,grad_norm,baseline`` rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "elbo", "grad_norm", "baseline"])
        for it, elbo, gnorm, base in rows:
            writer.writerow([it, repr(elbo), repr(gnorm), repr(base)])
