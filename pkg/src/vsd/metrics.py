"""Campaign evaluation metrics computed from round logs.

Every function takes plain arrays or objects with ``batch``, ``fitness``,
``novel`` and ``tau`` attributes (``strategies.RoundLog`` qualifies), so the
metrics can be checked against hand-built logs.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .blackbox import OraclePosterior
from .seqcore import as_batch, enumerate_space

CSV_HEADER = ("round", "precision", "recall", "performance", "regret",
              "diversity", "hits", "kl_oracle")


class MetricError(ValueError):
    pass


def precision_recall_performance(round_logs, tau: float, s_size: int, batch_size: int,
                                 rounds: int | None = None):
    """Per-round ``(precision, recall, performance)`` arrays.

    Only candidates flagged novel count. Precision divides the cumulative
    novel hits by ``min(t*B, |S|)``, recall by ``min(T*B, |S|)``, and
    performance is the cumulative fitness of novel candidates.
    """
    if s_size <= 0:
        raise MetricError("|S| = 0: precision and recall are undefined")
    total = len(round_logs) if rounds is None else rounds
    hits = 0
    perf = 0.0
    prec, rec, pf = [], [], []
    for t, lg in enumerate(round_logs, start=1):
        y = np.asarray(lg.fitness, float)
        novel = np.asarray(lg.novel, bool)
        hits += int(np.sum(novel & (y > tau)))
        perf += float(np.sum(y[novel]))
        prec.append(hits / min(t * batch_size, s_size))
        rec.append(hits / min(total * batch_size, s_size))
        pf.append(perf)
    return np.array(prec), np.array(rec), np.array(pf)


def simple_regret(round_logs, y_star: float) -> np.ndarray:
    """``y* - max`` of all fitness observed up to each round."""
    if not np.isfinite(y_star):
        raise MetricError("y_star must be finite")
    best = -np.inf
    out = []
    for lg in round_logs:
        best = max(best, float(np.max(lg.fitness)))
        out.append(y_star - best)
    return np.array(out)


def levenshtein(a, b) -> int:
    return kernels.levenshtein(np.asarray(a).reshape(-1), np.asarray(b).reshape(-1))


def batch_diversity(batch) -> float:
    """Mean Levenshtein distance over ordered pairs of distinct batch positions."""
    xb = as_batch(batch)
    n = xb.shape[0]
    if n < 2:
        raise MetricError("diversity needs a batch of at least 2")
    d = kernels.pairwise_levenshtein(xb)
    return float(d.sum()) / (n * (n - 1))


def kl_to_oracle(q, oracle: OraclePosterior) -> float:
    """``sum_x q(x) (log q(x) - log oracle(x))`` by enumeration."""
    domain = enumerate_space(oracle.vocab_size, oracle.length)
    logq = q.log_prob(domain)
    qx = np.exp(logq)
    support = qx > 0
    if np.any(oracle.probs[support] <= 0):
        raise MetricError("absolute continuity violated: q puts mass where the oracle has none")
    logo = oracle.log_probs if oracle.log_probs is not None else np.log(oracle.probs)
    return float(max(np.sum(qx[support] * (logq[support] - logo[support])), 0.0))


def hits(round_logs) -> np.ndarray:
    """Cumulative ``H_t = sum_s 1[y_s > tau_s]`` over every candidate queried."""
    per_round = [int(np.sum(np.asarray(lg.fitness) > lg.tau)) for lg in round_logs]
    return np.cumsum(per_round, dtype=np.int64)


@dataclass
class MetricTrace:
    precision: np.ndarray
    recall: np.ndarray
    performance: np.ndarray
    regret: np.ndarray
    diversity: np.ndarray
    hits: np.ndarray
    kl_oracle: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.kl_oracle is None:
            self.kl_oracle = np.full(len(self.precision), np.nan)

    def __len__(self) -> int:
        return len(self.precision)

    def rows(self):
        for t in range(len(self)):
            yield (t + 1, self.precision[t], self.recall[t], self.performance[t],
                   self.regret[t], self.diversity[t], int(self.hits[t]), self.kl_oracle[t])


def compute_trace(round_logs, tau: float, s_size: int, batch_size: int, y_star: float,
                  rounds: int | None = None, kl_values=None) -> MetricTrace:
    prec, rec, perf = precision_recall_performance(round_logs, tau, s_size, batch_size, rounds)
    div = np.array([batch_diversity(lg.batch) if len(lg.batch) > 1 else 0.0
                    for lg in round_logs])
    kl = None if kl_values is None else np.asarray(kl_values, float)
    return MetricTrace(prec, rec, perf, simple_regret(round_logs, y_star), div,
                       hits(round_logs), kl)


def _fmt(v) -> str:
    v = float(v)
    return "nan" if np.isnan(v) else repr(v)


def trace_to_csv(trace: MetricTrace) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in trace.rows():
        writer.writerow([row[0]] + [_fmt(v) for v in row[1:6]] + [row[6], _fmt(row[7])])
    return buf.getvalue()


def read_trace_csv(path) -> dict:
    """Column name -> float array."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    return {k: np.array([float(r[k]) for r in rows]) for k in CSV_HEADER}
