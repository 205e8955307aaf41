"""Round-level search strategies and the campaign loop.

Each round computes a threshold, refits the class-probability estimator (or
GP), updates the search distribution according to the method, then samples
and evaluates a batch. Methods differ only in how ``q`` is updated:

========  =====================================  ===========================
method    weight                                 samples
========  =====================================  ===========================
vsd       log pi + log p - log q                 fresh each step
bore      pi                                     fresh each step
dbas      pi                                     frozen batch from q_{t-1}
cbas      pi * p / q_{t-1} (self-normalised)     frozen batch from q_{t-1}
random    (no update, samples the prior)         --
========  =====================================  ===========================
"""

from __future__ import annotations

import copy
import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import blackbox as bb
from . import cpe as cpe_mod
from . import genmodel
from . import gp as gp_mod
from . import vi
from .optim import AdamState, BaselineState
from .rng import StreamFactory
from .seqcore import LabeledDataset, QuerySet, empirical_quantile, relabel

log = logging.getLogger(__name__)

METHODS = ("vsd", "dbas", "cbas", "bore", "random")
BACKENDS = ("cpe", "gp-pi")


class RoundError(RuntimeError):
    """A round failed; the dataset was left unchanged."""


@dataclass
class ThresholdSchedule:
    """``fixed`` tau, constant ``quantile`` gamma, or ``annealed`` p_t = p_{t-1}**eta."""

    kind: str = "fixed"
    tau: float | None = None
    gamma: float | None = None
    p: float | None = None
    eta: float | None = None
    last_gamma: float | None = None

    def __post_init__(self):
        if self.kind == "fixed":
            if self.tau is None or not np.isfinite(self.tau):
                raise ValueError("fixed schedule needs a finite tau")
        elif self.kind == "quantile":
            if self.gamma is None or not 0 < self.gamma < 1:
                raise ValueError("quantile schedule needs gamma in (0, 1)")
        elif self.kind == "annealed":
            if self.p is None or not 0 < self.p < 1 or self.eta is None or not 0 <= self.eta <= 1:
                raise ValueError("annealed schedule needs p0 in (0, 1) and eta in [0, 1]")
        else:
            raise ValueError(f"unknown schedule kind {self.kind!r}")

    @classmethod
    def fixed(cls, tau: float) -> "ThresholdSchedule":
        return cls("fixed", tau=tau)

    @classmethod
    def quantile(cls, gamma: float) -> "ThresholdSchedule":
        return cls("quantile", gamma=gamma)

    @classmethod
    def annealed(cls, p0: float, eta: float) -> "ThresholdSchedule":
        return cls("annealed", p=p0, eta=eta)


def next_threshold(schedule: ThresholdSchedule, observed_fitness=None) -> float:
    """Threshold for the next round; advances an annealed schedule."""
    if schedule.kind == "fixed":
        return float(schedule.tau)
    if observed_fitness is None or len(observed_fitness) == 0:
        raise ValueError("empty data for a data-dependent threshold")
    if schedule.kind == "quantile":
        gamma = schedule.gamma
    else:
        gamma = schedule.p ** schedule.eta
        schedule.p = gamma
    schedule.last_gamma = gamma
    return empirical_quantile(observed_fitness, gamma)


def final_threshold(schedule: ThresholdSchedule, observed_fitness, gamma_star=None) -> float:
    """Threshold for the closing refit; reuses the last gamma unless given."""
    if schedule.kind == "fixed":
        return float(schedule.tau)
    gamma = gamma_star if gamma_star is not None else (
        schedule.last_gamma if schedule.last_gamma is not None
        else (schedule.gamma if schedule.kind == "quantile" else schedule.p))
    return empirical_quantile(observed_fitness, gamma)


@dataclass
class StrategyConfig:
    method: str = "vsd"
    backend: str = "cpe"
    family: str = "meanfield"
    batch_size: int = 128
    rounds: int = 10
    seed: int = 0
    schedule: ThresholdSchedule = field(default_factory=lambda: ThresholdSchedule.fixed(0.0))
    prior: str = "uniform"
    cpe: cpe_mod.TrainConfig = field(default_factory=cpe_mod.TrainConfig)
    vi: vi.VIConfig = field(default_factory=vi.VIConfig)
    wml_steps: int = 500
    gp_lengthscale: float = 1.0
    gp_noise_variance: float = 0.1
    gp_scale: float = 1.0
    gp_noisy_pi: bool = True
    gamma_star: float | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; supported: {', '.join(METHODS)}")
        if self.backend not in BACKENDS:
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.family not in ("meanfield", "autoregressive"):
            raise ValueError(f"unknown family {self.family!r}")
        if self.batch_size < 1 or self.rounds < 0:
            raise ValueError("batch_size must be >= 1 and rounds >= 0")


@dataclass
class RoundLog:
    round: int
    tau: float
    batch: np.ndarray
    fitness: np.ndarray
    novel: np.ndarray
    unique_hits: int
    wall_time: float = 0.0
    q_params: object = field(default=None, repr=False)

    @property
    def hits(self) -> int:
        return int(np.sum(self.fitness > self.tau))


@dataclass
class CampaignState:
    config: StrategyConfig
    dataset: LabeledDataset
    queryset: QuerySet
    prior: genmodel.Params
    q: genmodel.Params
    schedule: ThresholdSchedule
    streams: StreamFactory
    audit: vi.SampleAudit = field(default_factory=vi.SampleAudit)
    round: int = 0


@dataclass
class CampaignResult:
    config: StrategyConfig
    logs: list
    dataset: LabeledDataset
    q: genmodel.Params
    model: object
    final_tau: float
    audit: vi.SampleAudit
    initial_size: int = 0


def _fit_backend(state: CampaignState, tau: float, rng: np.random.Generator) -> vi.ScoreBackend:
    cfg = state.config
    data = state.dataset
    if cfg.backend == "cpe":
        model = cpe_mod.fit_logloss(relabel(data, tau), cfg.cpe, rng)
        return vi.cpe_backend(model)
    params = gp_mod.CategoricalKernelParams.default(
        data.length, cfg.gp_lengthscale, cfg.gp_scale, cfg.gp_noise_variance)
    model = gp_mod.fit(params, data.sequences, data.fitness)
    return vi.gp_backend(model, tau, data.vocab_size, cfg.gp_noisy_pi)


def _update_q(state: CampaignState, backend: vi.ScoreBackend, rng: np.random.Generator):
    cfg = state.config
    q_prev = state.q
    if cfg.method == "vsd":
        return vi.maximize_elbo(q_prev, backend, state.prior, cfg.vi, rng, state.audit)
    if cfg.method == "bore":
        baseline = BaselineState(cfg.vi.ema_decay) if cfg.vi.use_baseline else None
        weight = vi.bore_weight(backend)
        return vi.optimize(
            q_prev,
            lambda q, it: vi.general_weighted_grad(q, weight, "current", cfg.vi.samples, rng,
                                                   baseline=baseline, audit=state.audit),
            AdamState(lr=cfg.vi.lr), cfg.vi.iterations)
    # dbas / cbas: one frozen batch from q_{t-1}, then weighted maximum likelihood
    frozen = q_prev.sample(rng, cfg.vi.samples)
    state.audit.fixed_batches_drawn += 1
    if cfg.method == "dbas":
        weight = vi.dbas_weight(backend)
    else:
        weight = vi.cbas_weight(backend, state.prior, q_prev)
    return vi.optimize(
        q_prev,
        lambda q, it: vi.general_weighted_grad(q, weight, "fixed-batch", 0, batch=frozen,
                                               audit=state.audit),
        AdamState(lr=cfg.vi.lr), cfg.wml_steps)


def _fit_models(state: CampaignState, tau: float, streams: StreamFactory):
    if state.config.method == "random":
        return state.q, None
    backend = _fit_backend(state, tau, streams("cpe"))
    return _update_q(state, backend, streams("vi")), backend


def init_campaign(config: StrategyConfig, initial: LabeledDataset) -> CampaignState:
    if len(initial) == 0:
        raise ValueError("empty dataset")
    if config.prior == "uniform":
        prior = genmodel.uniform(config.family, initial.length, initial.vocab_size)
    elif config.prior == "fit":
        prior = genmodel.fit_ml(initial.sequences, config.family, initial.vocab_size)
    else:
        raise ValueError(f"unknown prior {config.prior!r}")
    queryset = QuerySet()
    for x in initial.sequences:
        queryset.insert(x)
    return CampaignState(config, initial, queryset, prior, prior,
                         copy.deepcopy(config.schedule), StreamFactory(config.seed, "campaign"))


def run_round(state: CampaignState, blackbox, channel: bb.NoisyChannel) -> RoundLog:
    """One round; on failure the state is left exactly as it was."""
    cfg = state.config
    t = state.round + 1
    start = time.perf_counter()
    streams = state.streams.child("round", t)
    schedule = copy.deepcopy(state.schedule)
    tau = next_threshold(schedule, state.dataset.fitness)
    q, _ = _fit_models(state, tau, streams)
    batch = q.sample(streams("batch"), cfg.batch_size)
    try:
        y = bb.evaluate(blackbox, channel, batch, streams("noise"))
    except Exception as exc:
        raise RoundError(f"round {t}: black-box evaluation failed: {exc}") from exc
    if y.shape[0] != batch.shape[0] or not np.all(np.isfinite(y)):
        raise RoundError(f"round {t}: black box returned invalid values")
    seen = state.queryset.copy()
    novel = np.array([seen.insert(x) for x in batch], dtype=bool)
    unique_hits = int(np.sum(novel & (y > tau)))
    state.queryset = seen
    state.dataset = state.dataset.extend(batch, y)
    state.schedule = schedule
    state.q = q
    state.round = t
    return RoundLog(t, tau, batch, y, novel, unique_hits, time.perf_counter() - start, q)


def run_campaign(config: StrategyConfig, initial: LabeledDataset, blackbox,
                 channel: bb.NoisyChannel | None = None) -> CampaignResult:
    channel = channel or bb.NoisyChannel(0.0)
    state = init_campaign(config, initial)
    logs = []
    for _ in range(config.rounds):
        logs.append(run_round(state, blackbox, channel))
        log.debug("%s round %d tau=%.4g hits=%d", config.method, logs[-1].round,
                  logs[-1].tau, logs[-1].unique_hits)
    tau_star = final_threshold(state.schedule, state.dataset.fitness, config.gamma_star)
    q, backend = _fit_models(state, tau_star, state.streams.child("final"))
    model = backend.model if backend is not None else None
    return CampaignResult(config, logs, state.dataset, q, model, tau_star,
                          state.audit, len(initial))


def initial_dataset(blackbox, size: int, rng: np.random.Generator,
                    channel: bb.NoisyChannel | None = None, max_fitness: float | None = None,
                    prior: genmodel.Params | None = None) -> LabeledDataset:
    """Random starting data; with ``max_fitness`` only sequences at or below it are kept.

    Sequences are distinct. Candidates come from ``prior`` (uniform if None).
    """
    channel = channel or bb.NoisyChannel(0.0)
    prior = prior or genmodel.MeanFieldParams.uniform(blackbox.length, blackbox.vocab_size)
    seen = QuerySet()
    xs, ys = [], []
    for _ in range(1000):
        cand = prior.sample(rng, max(size, 64))
        f = np.asarray(blackbox(cand), float)
        for x, fx in zip(cand, f):
            if max_fitness is not None and fx > max_fitness:
                continue
            if seen.insert(x):
                xs.append(x)
                ys.append(fx)
                if len(xs) == size:
                    break
        if len(xs) == size:
            break
    if len(xs) < size:
        raise ValueError("could not draw enough distinct initial sequences")
    x = np.array(xs)
    y = np.array(ys)
    if channel.noise_std > 0:
        y = y + rng.normal(0, channel.noise_std, size=y.shape)
    return LabeledDataset(x, y, blackbox.vocab_size)


def with_method(config: StrategyConfig, method: str, seed: int | None = None) -> StrategyConfig:
    return replace(config, method=method, seed=config.seed if seed is None else seed,
                   schedule=copy.deepcopy(config.schedule))
