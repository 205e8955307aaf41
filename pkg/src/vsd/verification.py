"""Executable property checks on tiny, fully enumerable domains.

Each check returns a :class:`Report` with a machine-readable ``passed`` flag
and the measured ``statistic``. ``passed`` is None when a check only records
a value without asserting it.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_ndtr, logsumexp

from . import cpe as cpe_mod
from . import genmodel
from . import gp as gp_mod
from . import vi
from .genmodel import MeanFieldParams
from .rng import stream
from .seqcore import enumerate_space, rank


@dataclass
class Report:
    name: str
    passed: bool | None
    statistic: float
    threshold: float
    details: dict = field(default_factory=dict)
    runtime: float = 0.0

    def line(self) -> str:
        status = {True: "PASS", False: "FAIL", None: "INFO"}[self.passed]
        return f"{status} {self.name}: statistic={self.statistic:.6g} threshold={self.threshold:.6g}"


@dataclass
class TinyDomainFixture:
    """Enumerated domain with a tabulated fitness and log-score table."""

    length: int
    vocab_size: int
    values: np.ndarray
    noise_std: float = 0.0
    log_score: np.ndarray | None = None
    cpe_model: cpe_mod.CpeModel | None = None
    domain: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not 1 <= self.length <= 4 or self.vocab_size not in (2, 3):
            raise ValueError("fixture needs M <= 4 and |V| in {2, 3}")
        self.domain = enumerate_space(self.vocab_size, self.length)
        self.values = np.asarray(self.values, float)
        if self.values.shape != (self.domain.shape[0],):
            raise ValueError("values must cover the enumerated domain")
        if self.log_score is None:
            self.log_score = np.zeros(self.domain.shape[0])
        self.log_score = np.asarray(self.log_score, float)

    @property
    def size(self) -> int:
        return self.domain.shape[0]

    def __call__(self, batch) -> np.ndarray:
        return self.values[rank(np.atleast_2d(batch), self.vocab_size)]

    def backend(self) -> vi.ScoreBackend:
        table = self.log_score
        return vi.ScoreBackend(lambda x: table[rank(x, self.vocab_size)],
                               self.length, self.vocab_size, "table")

    @classmethod
    def random(cls, length: int = 3, vocab_size: int = 2, seed: int = 0,
               noise_std: float = 0.0, architecture: str = "logistic") -> "TinyDomainFixture":
        """Random fitness, with log scores from a randomly weighted CPE."""
        rng = np.random.default_rng(seed)
        n = vocab_size ** length
        model = cpe_mod.zeros(architecture, length, vocab_size, hidden=8)
        scale = 1.0 if architecture != "mlp" else 1.0 / np.sqrt(length)
        model = cpe_mod.CpeModel(model.architecture, length, vocab_size,
                                 rng.normal(0, 1.5 * scale, size=model.weights.size),
                                 model.hidden, 1e-6)
        domain = enumerate_space(vocab_size, length)
        return cls(length, vocab_size, rng.normal(size=n), noise_std,
                   cpe_mod.predict_logprob(model, domain), model)

    @classmethod
    def two_level(cls, length: int = 3, vocab_size: int = 2, high: float = 1.0,
                  low: float = -1.0, noise_std: float = np.sqrt(0.1),
                  optimum_index: int | None = None) -> "TinyDomainFixture":
        """One sequence at ``high``, all others at ``low``."""
        n = vocab_size ** length
        values = np.full(n, low)
        values[n - 1 if optimum_index is None else optimum_index] = high
        return cls(length, vocab_size, values, noise_std)

    @classmethod
    def constant(cls, length: int = 3, vocab_size: int = 2, value: float = 1.0,
                 noise_std: float = 0.0) -> "TinyDomainFixture":
        return cls(length, vocab_size, np.full(vocab_size ** length, value), noise_std)


def _timed(fn):
    def wrapper(*args, **kwargs):
        start = time.perf_counter()
        report = fn(*args, **kwargs)
        report.runtime = time.perf_counter() - start
        return report
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


# ---------------------------------------------------------------- gradients

def exact_elbo_grad(fixture: TinyDomainFixture, q: genmodel.Params, prior: genmodel.Params,
                    log_score: np.ndarray | None = None) -> np.ndarray:
    """``sum_x q(x) (log score - log q + log p) grad log q(x)`` by enumeration."""
    x = fixture.domain
    logq = q.log_prob(x)
    ls = fixture.log_score if log_score is None else log_score
    w = ls - logq + prior.log_prob(x)
    return q.weighted_score(x, np.exp(logq) * w)


def exact_elbo(fixture: TinyDomainFixture, q: genmodel.Params, prior: genmodel.Params) -> float:
    x = fixture.domain
    logq = q.log_prob(x)
    return float(np.sum(np.exp(logq) * (fixture.log_score - logq + prior.log_prob(x))))


@_timed
def check_gradient_unbiasedness(fixture: TinyDomainFixture, q_params: genmodel.Params,
                                samples: int = 200_000, repeats: int = 20, seed: int = 0,
                                prior: genmodel.Params | None = None,
                                estimator: str = "reinforce", bias_offset: float = 1.0) -> Report:
    """Mean of ``repeats`` calls to :func:`vi.elbo_grad` vs. the enumerated gradient.

    Passes iff every coordinate lies within 3 standard errors of the mean of
    the repeats. ``estimator='log-baseline'`` is a deliberately biased variant
    that moves a constant inside the log score, ``log(score + c)``.
    """
    prior = prior or genmodel.uniform("meanfield" if isinstance(q_params, MeanFieldParams)
                                      else "autoregressive", fixture.length, fixture.vocab_size)
    exact = exact_elbo_grad(fixture, q_params, prior)
    if estimator == "log-baseline":
        table = np.logaddexp(fixture.log_score, np.log(bias_offset))
    elif estimator == "reinforce":
        table = fixture.log_score
    else:
        raise ValueError(f"unknown estimator {estimator!r}")
    backend = vi.ScoreBackend(lambda x: table[rank(x, fixture.vocab_size)],
                              fixture.length, fixture.vocab_size, "table")
    rng = stream(seed, "gradient-check")
    est = np.array([vi.elbo_grad(q_params, backend, prior, samples, None, rng)
                    for _ in range(repeats)])
    mean = est.mean(axis=0)
    se = est.std(axis=0, ddof=1) / np.sqrt(repeats)
    diff = np.abs(mean - exact)
    z = np.where(se > 0, diff / np.where(se > 0, se, 1.0), np.where(diff > 1e-12, np.inf, 0.0))
    stat = float(np.max(z))
    return Report("gradient_unbiasedness", stat <= 3.0, stat, 3.0,
                  {"exact": exact, "estimate": mean, "stderr": se, "estimator": estimator})


# ------------------------------------------------------- posterior recovery

def enumerated_target(fixture: TinyDomainFixture, prior: genmodel.Params) -> np.ndarray:
    """``log p(x) + log score(x)`` normalised over the domain."""
    logt = prior.log_prob(fixture.domain) + fixture.log_score
    return logt - logsumexp(logt)


def enumerated_kl(q: genmodel.Params, log_target: np.ndarray, domain: np.ndarray) -> float:
    logq = q.log_prob(domain)
    return float(max(np.sum(np.exp(logq) * (logq - log_target)), 0.0))


@_timed
def check_posterior_recovery(fixture: TinyDomainFixture, config: vi.VIConfig | None = None,
                             seed: int = 0, tolerance: float = 1e-2,
                             q0: MeanFieldParams | None = None) -> Report:
    """Run VI against ``fixture.log_score`` and measure KL(q || target).

    Asserted only when the fixture's CPE is additive, in which case the
    target factorises and lies inside the mean-field family.
    """
    config = config or vi.VIConfig()
    prior = MeanFieldParams.uniform(fixture.length, fixture.vocab_size)
    log_target = enumerated_target(fixture, prior)
    q = vi.maximize_elbo(q0 or prior, fixture.backend(), prior, config,
                         stream(seed, "posterior-recovery"))
    kl = enumerated_kl(q, log_target, fixture.domain)
    additive = fixture.cpe_model is not None and fixture.cpe_model.additive_mode
    constant = bool(np.ptp(fixture.log_score) == 0)
    asserted = additive or constant
    return Report("posterior_recovery", (kl < tolerance) if asserted else None, kl, tolerance,
                  {"q": q, "log_target": log_target, "asserted": asserted})


def additive_fixture(length: int = 4, vocab_size: int = 3, seed: int = 0,
                     scale: float = 1.5) -> TinyDomainFixture:
    """Fixture whose log score comes from a random additive CPE."""
    rng = np.random.default_rng(seed)
    model = cpe_mod.CpeModel("additive", length, vocab_size,
                             rng.normal(0, scale, size=length * vocab_size), 0, 1e-6)
    domain = enumerate_space(vocab_size, length)
    return TinyDomainFixture(length, vocab_size, rng.normal(size=vocab_size ** length), 0.0,
                             cpe_mod.predict_logprob(model, domain), model)


# -------------------------------------------------------- GP-PI simulation

class _AggregatedGp:
    """Exact GP posterior on a small domain from per-point sufficient statistics.

    Repeated noisy observations at one input are equivalent to a single
    observation of their mean with noise variance ``noise / count``.
    """

    def __init__(self, params: gp_mod.CategoricalKernelParams, domain: np.ndarray):
        self.params = params
        self.domain = domain
        self.k = gp_mod.kernel_matrix(params, domain, domain)
        self.counts = np.zeros(domain.shape[0])
        self.sums = np.zeros(domain.shape[0])

    def add(self, index: int, y: float) -> None:
        self.counts[index] += 1
        self.sums[index] += y

    def posterior(self):
        seen = self.counts > 0
        prior_var = np.diag(self.k).copy()
        if not seen.any():
            return np.zeros_like(prior_var), prior_var
        kss = self.k[np.ix_(seen, seen)] + np.diag(self.params.noise_variance / self.counts[seen])
        ybar = self.sums[seen] / self.counts[seen]
        kxs = self.k[:, seen]
        chol = np.linalg.cholesky(kss)
        alpha = np.linalg.solve(chol.T, np.linalg.solve(chol, ybar))
        v = np.linalg.solve(chol, kxs.T)
        return kxs @ alpha, np.maximum(prior_var - np.sum(v * v, axis=0), 0.0)

    def log_pi(self, tau: float, noisy: bool = True) -> np.ndarray:
        mean, var = self.posterior()
        denom = np.sqrt(var + self.params.noise_variance) if noisy else np.sqrt(np.maximum(var, 1e-300))
        return log_ndtr((mean - tau) / denom)


def _normalise(logp: np.ndarray) -> np.ndarray:
    p = np.exp(logp - logsumexp(logp))
    return p / p.sum()


@_timed
def check_variance_rate(fixture: TinyDomainFixture, rounds: int = 500, tau: float = 0.0,
                        noise_variance: float = 0.1, explore: float = 0.05,
                        min_frequency: float = 0.05, burn_in: int = 200, factor: float = 1.5,
                        seed: int = 0) -> Report:
    """Simulate one-sample rounds of GP-PI guided search and track the variance.

    Each round samples from ``(1 - explore) * target_t + explore * uniform``
    where ``target_t ∝ p(x) PI_t(x)`` is enumerated exactly (the mean-field
    family is assumed to reach it). Checked:

    (a) ``var_t(x) <= noise * s0 / (noise + n_t(x) * s0)`` at every x, every round;
    (b) ``t * var_t(x) <= factor * noise`` for t >= ``burn_in`` at every x whose
        average sampling probability so far is at least ``min_frequency``.

    The frequency-normalised form ``B_t(x) * var_t(x)`` with ``B_t`` the
    cumulative sampling probability is reported alongside.
    """
    params = gp_mod.CategoricalKernelParams.default(fixture.length, noise_variance=noise_variance)
    model = _AggregatedGp(params, fixture.domain)
    rng = stream(seed, "variance-rate")
    n = fixture.size
    noise_std = fixture.noise_std if fixture.noise_std > 0 else np.sqrt(noise_variance)
    s0 = np.diag(model.k)
    cum_prob = np.zeros(n)
    bound_violations = 0
    rate_violations = 0
    worst_rate = 0.0
    worst_normalised = 0.0
    for t in range(1, rounds + 1):
        target = _normalise(model.log_pi(tau))
        probs = (1 - explore) * target + explore / n
        idx = int(rng.choice(n, p=probs))
        model.add(idx, float(fixture.values[idx] + rng.normal(0, noise_std)))
        cum_prob += probs
        _, var = model.posterior()
        bound = noise_variance * s0 / (noise_variance + model.counts * s0)
        bound_violations += int(np.sum(var > bound + 1e-9))
        if t >= burn_in:
            frequent = cum_prob / t >= min_frequency
            if frequent.any():
                rate = t * var[frequent] / noise_variance
                normalised = cum_prob[frequent] * var[frequent] / noise_variance
                worst_rate = max(worst_rate, float(rate.max()))
                worst_normalised = max(worst_normalised, float(normalised.max()))
                rate_violations += int(np.sum(rate > factor))
    passed = bound_violations == 0 and rate_violations == 0 and worst_rate > 0
    return Report("variance_rate", passed, worst_rate, factor,
                  {"bound_violations": bound_violations, "rate_violations": rate_violations,
                   "worst_normalised_rate": worst_normalised,
                   "frequency": cum_prob / rounds, "counts": model.counts.copy()})


def _hits_trajectory(fixture: TinyDomainFixture, horizon: int, tau: float, rng,
                     noise_variance: float, oracle_probs: np.ndarray | None,
                     prior_logp: np.ndarray) -> np.ndarray:
    """Per-round hit indicators for one B=1 campaign."""
    n = fixture.size
    noise_std = fixture.noise_std if fixture.noise_std > 0 else np.sqrt(noise_variance)
    model = None
    if oracle_probs is None:
        params = gp_mod.CategoricalKernelParams.default(fixture.length, noise_variance=noise_variance)
        model = _AggregatedGp(params, fixture.domain)
    out = np.zeros(horizon, dtype=np.int64)
    for t in range(horizon):
        probs = oracle_probs if model is None else _normalise(prior_logp + model.log_pi(tau))
        idx = int(rng.choice(n, p=probs))
        y = float(fixture.values[idx] + rng.normal(0, noise_std))
        out[t] = y > tau
        if model is not None:
            model.add(idx, y)
    return out


@_timed
def check_hits_gap(fixture: TinyDomainFixture, horizons=(64, 128), pairs: int = 100,
                   tau: float = 0.0, noise_variance: float = 0.1, seed: int = 0,
                   max_ratio: float = 1.8, mode: str = "vsd") -> Report:
    """Average ``|H_T - H*_T|`` for paired runs, and its growth between horizons.

    ``mode='vsd'`` pairs GP-PI-guided sampling against the true level-set
    posterior; ``mode='oracle'`` pairs the oracle against itself.
    """
    short, long_ = horizons
    noise_std = fixture.noise_std if fixture.noise_std > 0 else np.sqrt(noise_variance)
    prior_logp = np.full(fixture.size, -np.log(fixture.size))
    oracle = _normalise(prior_logp + log_ndtr((fixture.values - tau) / noise_std))
    gaps = np.zeros((pairs, 2))
    signed = np.zeros(pairs)
    for i in range(pairs):
        h_star = np.cumsum(_hits_trajectory(fixture, long_, tau, stream(seed, "oracle", i),
                                            noise_variance, oracle, prior_logp))
        other = oracle if mode == "oracle" else None
        h = np.cumsum(_hits_trajectory(fixture, long_, tau, stream(seed, mode, i),
                                       noise_variance, other, prior_logp))
        gaps[i] = [abs(h[short - 1] - h_star[short - 1]), abs(h[long_ - 1] - h_star[long_ - 1])]
        signed[i] = h[long_ - 1] - h_star[long_ - 1]
    mean_gap = gaps.mean(axis=0)
    if mean_gap[0] == 0:
        ratio = 0.0 if mean_gap[1] == 0 else np.inf
    else:
        ratio = float(mean_gap[1] / mean_gap[0])
    return Report("hits_gap", ratio <= max_ratio, ratio, max_ratio,
                  {"gap_short": float(mean_gap[0]), "gap_long": float(mean_gap[1]),
                   "signed_gap_long": float(signed.mean()),
                   "signed_gap_se": float(signed.std(ddof=1) / np.sqrt(pairs)) if pairs > 1 else 0.0,
                   "horizons": (short, long_), "pairs": pairs, "mode": mode})


# ------------------------------------------------------------- ELBO bound

def check_elbo_bound(fixture: TinyDomainFixture, q: genmodel.Params) -> Report:
    """``E_q[log score] <= max_x log score`` by enumeration."""
    qx = np.exp(q.log_prob(fixture.domain))
    expected = float(qx @ fixture.log_score)
    top = float(fixture.log_score.max())
    return Report("elbo_bound", expected <= top + 1e-12, expected - top, 0.0)


def run_suite(quick: bool = False, seed: int = 0) -> list[Report]:
    """The full property suite; ``quick`` shrinks sample sizes for smoke runs."""
    reports = []
    fx = TinyDomainFixture.random(3, 2, seed=seed)
    q = MeanFieldParams(stream(seed, "q").normal(size=(3, 2)))
    reports.append(check_gradient_unbiasedness(
        fx, q, samples=20_000 if quick else 200_000, repeats=20, seed=seed))
    cfg = vi.VIConfig(samples=256 if quick else 1024, iterations=1000 if quick else 3000)
    reports.append(check_posterior_recovery(additive_fixture(seed=seed), cfg, seed=seed))
    two = TinyDomainFixture.two_level(3, 2)
    reports.append(check_variance_rate(two, rounds=300 if quick else 500, seed=seed))
    reports.append(check_hits_gap(two, pairs=30 if quick else 100, seed=seed))
    rng = stream(seed, "elbo-bound")
    violations = 0
    for i in range(100):
        f = TinyDomainFixture.random(3, 3, seed=seed * 1000 + i)
        qi = MeanFieldParams(rng.normal(size=(3, 3)) * 2)
        violations += not check_elbo_bound(f, qi).passed
    reports.append(Report("elbo_bound", violations == 0, float(violations), 0.0))
    return reports
