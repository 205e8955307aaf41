"""Gaussian-process surrogate with a categorical (Hamming) ARD kernel.

    k(x, x') = scale * exp(-(1/M) * sum_m 1[x_m != x'_m] / l_m)

The posterior is computed from a Cholesky factor of ``K + noise * I``, and
the probability-of-improvement score is ``Phi((mu - tau) / s)`` where
``s**2 = var + noise`` by default (``noisy=False`` drops the noise term).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.special import log_ndtr, ndtr

from . import kernels
from .seqcore import SequenceError, as_batch

LENGTHSCALE_GRID = (0.25, 0.5, 1.0, 2.0, 4.0)


@dataclass(frozen=True)
class CategoricalKernelParams:
    lengthscales: np.ndarray
    scale: float = 1.0
    noise_variance: float = 0.1

    def __post_init__(self):
        ls = np.array(self.lengthscales, dtype=float).reshape(-1)
        if ls.size < 1 or np.any(ls <= 0) or self.scale <= 0 or self.noise_variance <= 0:
            raise ValueError("kernel hyperparameters must be positive")
        ls.setflags(write=False)
        object.__setattr__(self, "lengthscales", ls)

    @classmethod
    def default(cls, length: int, lengthscale: float = 1.0, scale: float = 1.0,
                noise_variance: float = 0.1) -> "CategoricalKernelParams":
        return cls(np.full(length, lengthscale), scale, noise_variance)

    @property
    def length(self) -> int:
        return self.lengthscales.size


def kernel_matrix(params: CategoricalKernelParams, x, y) -> np.ndarray:
    xb = as_batch(x, params.length)
    yb = as_batch(y, params.length)
    w = 1.0 / (params.length * params.lengthscales)
    return params.scale * np.exp(-kernels.weighted_mismatch(xb, yb, w))


def kernel_eval(params: CategoricalKernelParams, x, x_prime) -> float:
    a = np.asarray(x).reshape(-1)
    b = np.asarray(x_prime).reshape(-1)
    if a.size != b.size or a.size != params.length:
        raise SequenceError("sequences must share the kernel's length")
    return float(kernel_matrix(params, a, b)[0, 0])


@dataclass(frozen=True)
class GpModel:
    params: CategoricalKernelParams
    sequences: np.ndarray
    targets: np.ndarray
    chol: np.ndarray | None
    alpha: np.ndarray

    @property
    def n(self) -> int:
        return self.targets.shape[0]


def fit(params: CategoricalKernelParams, sequences=None, targets=None) -> GpModel:
    """Condition the GP on ``(sequences, targets)``; empty data gives the prior."""
    if sequences is None or len(sequences) == 0:
        return GpModel(params, np.zeros((0, params.length), np.int64), np.zeros(0), None, np.zeros(0))
    x = as_batch(sequences, params.length)
    y = np.asarray(targets, float).reshape(-1)
    k = kernel_matrix(params, x, x)
    k[np.diag_indices_from(k)] += params.noise_variance
    chol = cholesky(k, lower=True)
    alpha = cho_solve((chol, True), y)
    return GpModel(params, x, y, chol, alpha)


def posterior(model: GpModel, x) -> tuple:
    """Posterior mean and (clamped non-negative) latent variance."""
    single = np.ndim(x) == 1
    xb = as_batch(x, model.params.length)
    prior_var = np.full(xb.shape[0], model.params.scale)
    if model.n == 0:
        mean, var = np.zeros(xb.shape[0]), prior_var
    else:
        kx = kernel_matrix(model.params, xb, model.sequences)
        mean = kx @ model.alpha
        v = solve_triangular(model.chol, kx.T, lower=True)
        var = np.maximum(prior_var - np.sum(v * v, axis=0), 0.0)
    if single:
        return float(mean[0]), float(var[0])
    return mean, var


def _pi_arg(model: GpModel, x, tau: float, noisy: bool):
    mean, var = posterior(model, as_batch(x, model.params.length))
    denom = np.sqrt(var + model.params.noise_variance) if noisy else np.sqrt(np.maximum(var, 1e-300))
    return (mean - tau) / denom


def pi_acquisition(model: GpModel, x, tau: float, noisy: bool = True):
    out = ndtr(_pi_arg(model, x, tau, noisy))
    return float(out[0]) if np.ndim(x) == 1 else out


def log_pi_acquisition(model: GpModel, x, tau: float, noisy: bool = True):
    out = log_ndtr(_pi_arg(model, x, tau, noisy))
    return float(out[0]) if np.ndim(x) == 1 else out


def variance_bound(model: GpModel, x, n_at_x: int) -> float:
    """Independent-observation upper bound on the posterior variance at ``x``."""
    s0 = kernel_eval(model.params, x, x)
    noise = model.params.noise_variance
    return noise * s0 / (noise + n_at_x * s0)


def variance_bound_check(model: GpModel, x, n_at_x: int) -> bool:
    _, var = posterior(model, np.asarray(x).reshape(-1))
    return var <= variance_bound(model, x, n_at_x) + 1e-9


def log_marginal_likelihood(model: GpModel) -> float:
    if model.n == 0:
        return 0.0
    return float(-0.5 * model.targets @ model.alpha
                 - np.sum(np.log(np.diag(model.chol)))
                 - 0.5 * model.n * np.log(2 * np.pi))


def fit_grid(sequences, targets, scale: float = 1.0, noise_variance: float = 0.1,
             grid=LENGTHSCALE_GRID) -> GpModel:
    """Pick one shared lengthscale from ``grid`` by log marginal likelihood."""
    x = as_batch(sequences)
    best = None
    for ls in grid:
        params = CategoricalKernelParams.default(x.shape[1], ls, scale, noise_variance)
        model = fit(params, x, targets)
        lml = log_marginal_likelihood(model)
        if best is None or lml > best[0]:
            best = (lml, model)
    return best[1]
