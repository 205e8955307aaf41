"""Acceptance criteria A1-A10.

Each test prints one ``A<k> PASS|FAIL ...`` line (bypassing capture) before
asserting. Run on its own with ``pytest tests/test_acceptance.py -v``.
"""

import textwrap
import time

import numpy as np
import pytest

from vsd import cli, gp, metrics
from vsd import blackbox as bb
from vsd import strategies as st
from vsd import verification as ver
from vsd.genmodel import MeanFieldParams
from vsd.rng import stream
from vsd.seqcore import enumerate_space


@pytest.fixture
def report(capsys):
    def emit(tag, ok, text):
        with capsys.disabled():
            print(f"\n{tag} {'PASS' if ok else 'FAIL'} {text}")
        return ok
    return emit


def test_a1_gradient_oracle(report):
    fx = ver.TinyDomainFixture.random(3, 2, seed=0)
    q = MeanFieldParams(stream(0, "q").normal(size=(3, 2)))
    r = ver.check_gradient_unbiasedness(fx, q, samples=200_000, repeats=20, seed=0)
    ok = bool(r.passed) and r.runtime < 60
    report("A1", ok, f"max |z| = {r.statistic:.3f} (<= 3), runtime {r.runtime:.1f}s (< 60s)")
    assert ok


def test_a2_posterior_recovery(report):
    fx = ver.additive_fixture(4, 3, seed=0)
    r = ver.check_posterior_recovery(fx, seed=0)
    ok = r.details["asserted"] and bool(r.passed) and r.runtime < 120
    report("A2", ok, f"KL(q||target) = {r.statistic:.3g} (< 1e-2), runtime {r.runtime:.1f}s (< 120s)")
    assert ok


def test_a3_gp_closed_forms(report):
    params = gp.CategoricalKernelParams.default(3, scale=1.0, noise_variance=1.0)
    x = np.array([0, 1, 2])
    _, var = gp.posterior(gp.fit(params, x[None], [0.3]), x)
    one_obs = abs(var - 0.5) <= 1e-10
    rng = np.random.default_rng(0)
    violations = checked = 0
    for _ in range(100):
        m, v = int(rng.integers(2, 5)), int(rng.integers(2, 4))
        n = int(rng.integers(1, 51))
        p = gp.CategoricalKernelParams(rng.uniform(0.2, 3.0, size=m), float(rng.uniform(0.5, 2.0)),
                                       float(rng.uniform(0.01, 1.0)))
        xs = rng.integers(0, v, size=(n, m))
        model = gp.fit(p, xs, rng.normal(size=n))
        for cand in enumerate_space(v, m):
            count = int(np.sum(np.all(xs == cand, axis=1)))
            checked += 1
            violations += not gp.variance_bound_check(model, cand, count)
    ok = one_obs and violations == 0
    report("A3", ok, f"one-obs variance {var:.12f} (0.5), bound violations {violations}/{checked}")
    assert ok


def test_a4_variance_rate(report):
    fx = ver.TinyDomainFixture.two_level(3, 2)
    r = ver.check_variance_rate(fx, rounds=500, burn_in=200, seed=0)
    ok = bool(r.passed) and r.runtime < 300
    report("A4", ok, f"max t*var/noise = {r.statistic:.3f} (<= 1.5), variance-bound violations "
                     f"{r.details['bound_violations']}, runtime {r.runtime:.1f}s (< 300s)")
    assert ok


def test_a5_threshold_schedule(report):
    out = []
    for p0, eta, t, target in ((0.5, 0.87, 32, 0.992), (0.8, 0.7, 10, 0.994)):
        s = st.ThresholdSchedule.annealed(p0, eta)
        for _ in range(t):
            st.next_threshold(s, np.arange(1000.0))
        out.append((s.p, target))
    ok = all(abs(p - target) <= 1e-3 for p, target in out)
    report("A5", ok, ", ".join(f"p = {p:.4f} (target {tg} +/- 0.001)" for p, tg in out))
    assert ok


A6_SEEDS = (0, 1, 2, 3, 4)


@pytest.mark.slow
def test_a6_campaign_ordering(report, tmp_path):
    land = bb.synthetic_landscape(4, 8, seed=1)
    tau = float(np.quantile(land.values, 0.985))
    frac = land.superlevel_size(tau) / land.values.size
    cfg_path = tmp_path / "a6.yaml"
    cfg_path.write_text(textwrap.dedent(f"""
        landscape: {{synthetic: {{vocab_size: 4, length: 8, seed: 1}}}}
        methods: [vsd, bore, random]
        seeds: {list(A6_SEEDS)}
        batch_size: 128
        rounds: 10
        schedule: {{kind: fixed, tau: {tau!r}}}
        initial: {{size: 2000, max_fitness: {tau!r}}}
    """))
    cfg = cli.parse_config(cfg_path)
    start = time.perf_counter()
    assert cli.run(cfg, tmp_path / "out") == 0
    runtime = time.perf_counter() - start
    tab = {m: [metrics.read_trace_csv(tmp_path / "out" / cli.cell_filename(m, s)) for s in A6_SEEDS]
           for m in cfg.methods}
    recall = {m: np.mean([t["recall"][-1] for t in tab[m]]) for m in tab}
    div5 = {m: np.mean([t["diversity"][4] for t in tab[m]]) for m in tab}
    ok = (0.01 <= frac <= 0.02 and recall["vsd"] > recall["random"]
          and div5["bore"] < 0.1 * div5["vsd"] and runtime < 1800)
    report("A6", ok, f"|S|/|X| = {frac:.4f}, recall@10 vsd {recall['vsd']:.3f} > random "
                     f"{recall['random']:.3f}, diversity@5 bore {div5['bore']:.3f} < 0.1 x vsd "
                     f"{div5['vsd']:.3f}, runtime {runtime:.0f}s (< 1800s)")
    assert ok


def test_a7_hits_gap(report):
    fx = ver.TinyDomainFixture.two_level(3, 2)
    r = ver.check_hits_gap(fx, horizons=(64, 128), pairs=100, seed=0)
    ok = bool(r.passed) and r.runtime < 600
    report("A7", ok, f"gap(128)/gap(64) = {r.statistic:.3f} (<= 1.8; gaps {r.details['gap_short']:.2f}"
                     f" -> {r.details['gap_long']:.2f}), runtime {r.runtime:.1f}s (< 600s)")
    assert ok


def test_a8_metric_oracles(report):
    fails = []
    # duplicate discount: 2 novel hits, 1 repeated hit, 1 miss
    from types import SimpleNamespace as NS
    logs = [NS(fitness=np.array([1.0, 1.0, 1.0, -1.0]), novel=np.array([1, 1, 0, 1], bool),
               tau=0.0, batch=np.array([[0, 1], [1, 0], [0, 1], [1, 1]]))]
    p, r, perf = metrics.precision_recall_performance(logs, 0.0, 100, 4)
    if not (p[0] == 0.5 and r[0] == 0.5 and perf[0] == 1.0):
        fails.append("precision/recall/performance")
    if metrics.simple_regret(logs, 1.5)[0] != 0.5:
        fails.append("regret")
    # diversity vs brute force
    b = logs[0].batch
    brute = sum(metrics.levenshtein(b[i], b[j]) for i in range(4) for j in range(4) if i != j) / 12
    if metrics.batch_diversity(b) != brute or metrics.batch_diversity(np.zeros((3, 2), int)) != 0:
        fails.append("diversity")
    if metrics.hits(logs).tolist() != [3]:
        fails.append("hits")
    rng = np.random.default_rng(0)
    axiom_fail = 0
    for _ in range(10_000):
        x, y, z = (rng.integers(0, 4, size=rng.integers(0, 8)) for _ in range(3))
        dxy = metrics.levenshtein(x, y)
        axiom_fail += (dxy != metrics.levenshtein(y, x)
                       or metrics.levenshtein(x, z) > dxy + metrics.levenshtein(y, z)
                       or (dxy == 0) != (len(x) == len(y) and bool(np.all(x == y))))
    if axiom_fail:
        fails.append(f"levenshtein axioms ({axiom_fail})")
    ok = not fails
    report("A8", ok, "metric oracles exact, Levenshtein axioms on 10^4 triples"
           + ("" if ok else f"; failed: {', '.join(fails)}"))
    assert ok


def test_a9_determinism(report, tmp_path):
    cfg_path = tmp_path / "a9.yaml"
    cfg_path.write_text(textwrap.dedent("""
        landscape: {synthetic: {vocab_size: 3, length: 5, seed: 2}}
        methods: [vsd, cbas, dbas, bore, random]
        seeds: [0, 1]
        batch_size: 16
        rounds: 3
        noise_std: 0.05
        metric_tau: 0.7
        schedule: {kind: annealed, p0: 0.5, eta: 0.87}
        initial: {size: 40, max_fitness: 0.7}
        cpe: {iterations: 100, hidden: 8}
        vi: {samples: 64, iterations: 50}
        wml_steps: 30
    """))
    cfg = cli.parse_config(cfg_path)
    codes = [cli.run(cfg, tmp_path / d) for d in ("a", "b")]
    files = sorted(p.name for p in (tmp_path / "a").glob("*.csv"))
    same = [(tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in files]
    ok = codes == [0, 0] and len(files) == 11 and all(same)
    report("A9", ok, f"{sum(same)}/{len(files)} CSVs byte-identical across reruns")
    assert ok


def test_a10_elbo_bound(report):
    rng = np.random.default_rng(0)
    violations = 0
    for i in range(100):
        m, v = int(rng.integers(1, 5)), int(rng.integers(2, 4))
        fx = ver.TinyDomainFixture.random(m, v, seed=i)
        q = MeanFieldParams(rng.normal(size=(m, v)) * 3)
        violations += not ver.check_elbo_bound(fx, q).passed
    ok = violations == 0
    report("A10", ok, f"E_q[log score] <= max log score on 100 fixtures, violations {violations}")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
