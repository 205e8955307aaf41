"""Command-line campaign runner.

    vsd run CONFIG [--jobs N] [--out DIR] [--seed-offset K] [--plot]
    vsd verify [--quick]

Exit codes: 0 success, 1 usage or configuration error, 2 a cell (or a
verification check) failed.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import tempfile
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import blackbox as bb
from . import cpe as cpe_mod
from . import metrics
from . import strategies as st
from . import vi
from .rng import seed_sequence, stream

log = logging.getLogger("vsd")

OUTPUT_ENV = "VSD_OUTPUT_DIR"
DEFAULT_BATCH = 128
DEFAULT_ROUNDS = 10


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    landscape: dict
    methods: list
    seeds: list = field(default_factory=lambda: [0])
    batch_size: int = DEFAULT_BATCH
    rounds: int = DEFAULT_ROUNDS
    schedule: dict = field(default_factory=dict)
    backend: str = "cpe"
    family: str = "meanfield"
    prior: str = "uniform"
    noise_std: float = 0.0
    initial: dict = field(default_factory=dict)
    metric_tau: float | None = None
    master_seed: int = 0
    output: str | None = None
    cpe: dict = field(default_factory=dict)
    vi: dict = field(default_factory=dict)
    wml_steps: int = 500
    gp: dict = field(default_factory=dict)
    base_dir: str = "."


_SCHEMA = {
    "landscape": dict, "methods": list, "seeds": list, "batch_size": int, "rounds": int,
    "schedule": dict, "backend": str, "family": str, "prior": str, "noise_std": (int, float),
    "initial": dict, "metric_tau": (int, float), "master_seed": int, "output": str,
    "cpe": dict, "vi": dict, "wml_steps": int, "gp": dict,
}
_REQUIRED = ("landscape", "methods")
_SUBKEYS = {
    "landscape": {"csv": str, "fill_value": (int, float), "vocabulary": str,
                  "synthetic": dict, "ehrlich": dict},
    "landscape.synthetic": {"vocab_size": int, "length": int, "seed": int,
                            "epistasis": (int, float)},
    "landscape.ehrlich": {"vocab_size": int, "length": int, "n_motifs": int,
                          "motif_length": int, "quantization": int, "seed": int},
    "schedule": {"kind": str, "tau": (int, float), "gamma": (int, float),
                 "p0": (int, float), "eta": (int, float), "gamma_star": (int, float)},
    "initial": {"size": int, "max_fitness": (int, float), "max_quantile": (int, float)},
    "cpe": {"lr": (int, float), "iterations": int, "architecture": str, "hidden": int,
            "clamp": (int, float)},
    "vi": {"samples": int, "iterations": int, "lr": (int, float), "ema_decay": (int, float),
           "analytic_kl": bool, "use_baseline": bool},
    "gp": {"lengthscale": (int, float), "noise_variance": (int, float), "scale": (int, float),
           "noisy_pi": bool},
}


def _check_keys(section: dict, schema: dict, path: str) -> None:
    for key in list(section):
        value = section[key]
        where = f"{path}.{key}" if path else str(key)
        if key not in schema:
            raise ConfigError(f"{where}: unknown key")
        expected = schema[key]
        number = isinstance(expected, tuple)
        if number and isinstance(value, str):
            # YAML 1.1 reads "1e-3" as a string
            try:
                value = section[key] = float(value)
            except ValueError:
                pass
        if isinstance(value, bool) and expected is not bool:
            raise ConfigError(f"{where}: expected {_typename(expected)}, got bool")
        if not isinstance(value, expected):
            raise ConfigError(f"{where}: expected {_typename(expected)}, got {type(value).__name__}")
        if where in _SUBKEYS:
            _check_keys(value, _SUBKEYS[where], where)


def _typename(t) -> str:
    if isinstance(t, tuple):
        return "number"
    return {dict: "mapping", list: "list"}.get(t, t.__name__)


def parse_config(path) -> RunConfig:
    """Read and validate a YAML run configuration."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    for key in _REQUIRED:
        if key not in raw:
            raise ConfigError(f"{key}: missing required key")
    _check_keys(raw, _SCHEMA, "")
    cfg = RunConfig(**raw, base_dir=str(path.parent))
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    land = cfg.landscape
    sources = [k for k in ("csv", "synthetic", "ehrlich") if k in land]
    if len(sources) != 1:
        raise ConfigError("landscape: exactly one of csv, synthetic, ehrlich is required")
    if "csv" in land and not _resolve(cfg, land["csv"]).is_file():
        raise ConfigError(f"landscape.csv: file not found: {land['csv']}")
    if not cfg.methods:
        raise ConfigError("methods: at least one method is required")
    for i, m in enumerate(cfg.methods):
        if m not in st.METHODS:
            raise ConfigError(f"methods[{i}]: unknown method {m!r}; supported: {', '.join(st.METHODS)}")
    if len(set(cfg.methods)) != len(cfg.methods):
        raise ConfigError("methods: duplicate methods")
    if not cfg.seeds:
        cfg.seeds = [0]
    for i, s in enumerate(cfg.seeds):
        if not isinstance(s, int) or isinstance(s, bool):
            raise ConfigError(f"seeds[{i}]: expected int")
    if len(set(cfg.seeds)) != len(cfg.seeds):
        raise ConfigError("seeds: duplicate seeds")
    if cfg.batch_size < 1:
        raise ConfigError("batch_size: must be >= 1")
    if cfg.rounds < 1:
        raise ConfigError("rounds: must be >= 1")
    if cfg.backend not in st.BACKENDS:
        raise ConfigError(f"backend: unknown backend {cfg.backend!r}; supported: {', '.join(st.BACKENDS)}")
    if cfg.family not in ("meanfield", "autoregressive"):
        raise ConfigError(f"family: unknown family {cfg.family!r}")
    if cfg.prior not in ("uniform", "fit"):
        raise ConfigError(f"prior: unknown prior {cfg.prior!r}")
    if cfg.noise_std < 0:
        raise ConfigError("noise_std: must be >= 0")
    try:
        _schedule(cfg)
        _strategy_config(cfg, cfg.methods[0], 0)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    if cfg.metric_tau is None and cfg.schedule.get("kind", "fixed") != "fixed":
        raise ConfigError("metric_tau: required when the schedule is not fixed")


def _resolve(cfg: RunConfig, p: str) -> Path:
    path = Path(p)
    return path if path.is_absolute() else Path(cfg.base_dir) / path


def _schedule(cfg: RunConfig) -> st.ThresholdSchedule:
    s = cfg.schedule
    kind = s.get("kind", "fixed")
    if kind == "fixed":
        if "tau" not in s:
            raise ConfigError("schedule.tau: missing required key")
        return st.ThresholdSchedule.fixed(float(s["tau"]))
    if kind == "quantile":
        return st.ThresholdSchedule.quantile(float(s.get("gamma", -1)))
    if kind == "annealed":
        return st.ThresholdSchedule.annealed(float(s.get("p0", -1)), float(s.get("eta", -1)))
    raise ConfigError(f"schedule.kind: unknown kind {kind!r}; supported: fixed, quantile, annealed")


def cell_seed(master_seed: int, method: str, seed: int) -> int:
    """Cell stream key derived from (master seed, method name, seed index)."""
    return int(seed_sequence(master_seed, "cell", method, seed).generate_state(1, np.uint64)[0] >> 1)


def _strategy_config(cfg: RunConfig, method: str, seed: int) -> st.StrategyConfig:
    gp = cfg.gp
    return st.StrategyConfig(
        method=method, backend=cfg.backend, family=cfg.family, batch_size=cfg.batch_size,
        rounds=cfg.rounds, seed=cell_seed(cfg.master_seed, method, seed),
        schedule=_schedule(cfg), prior=cfg.prior, cpe=cpe_mod.TrainConfig(**cfg.cpe),
        vi=vi.VIConfig(**cfg.vi), wml_steps=cfg.wml_steps,
        gp_lengthscale=float(gp.get("lengthscale", 1.0)),
        gp_noise_variance=float(gp.get("noise_variance", 0.1)),
        gp_scale=float(gp.get("scale", 1.0)), gp_noisy_pi=bool(gp.get("noisy_pi", True)),
        gamma_star=cfg.schedule.get("gamma_star"))


def build_landscape(cfg: RunConfig):
    land = cfg.landscape
    if "csv" in land:
        return bb.load_landscape(_resolve(cfg, land["csv"]), float(land.get("fill_value", -1.0)),
                                 land.get("vocabulary"))
    if "synthetic" in land:
        return bb.synthetic_landscape(**land["synthetic"])
    return bb.make_ehrlich(**land["ehrlich"])


@dataclass
class Problem:
    """Landscape-level quantities shared by every cell."""

    blackbox: object
    metric_tau: float
    s_size: int | None
    y_star: float


def build_problem(cfg: RunConfig) -> Problem:
    fn = build_landscape(cfg)
    tau = cfg.metric_tau if cfg.metric_tau is not None else float(cfg.schedule["tau"])
    if isinstance(fn, bb.TabulatedLandscape):
        return Problem(fn, tau, fn.superlevel_size(tau), fn.max_value)
    s_size = None
    if fn.vocab_size ** fn.length <= bb.MAX_ENUMERATED:
        from .seqcore import enumerate_space
        s_size = int(np.sum(fn(enumerate_space(fn.vocab_size, fn.length)) > tau))
    return Problem(fn, tau, s_size, 1.0)


def _initial(cfg: RunConfig, problem: Problem, seed: int):
    spec = cfg.initial
    fn = problem.blackbox
    max_fit = spec.get("max_fitness")
    if "max_quantile" in spec:
        if not isinstance(fn, bb.TabulatedLandscape):
            raise ConfigError("initial.max_quantile: needs a tabulated landscape")
        max_fit = float(np.quantile(fn.values, spec["max_quantile"]))
    return st.initial_dataset(fn, int(spec.get("size", cfg.batch_size)),
                              stream(cfg.master_seed, "initial", seed),
                              bb.NoisyChannel(cfg.noise_std), max_fit)


def run_cell(cfg: RunConfig, method: str, seed: int) -> str:
    """Run one (method, seed) campaign and return its metric CSV text."""
    problem = build_problem(cfg)
    initial = _initial(cfg, problem, seed)
    channel = bb.NoisyChannel(cfg.noise_std)
    scfg = _strategy_config(cfg, method, seed)
    result = st.run_campaign(scfg, initial, problem.blackbox, channel)
    kl = _kl_trace(result, problem, channel)
    if problem.s_size:
        trace = metrics.compute_trace(result.logs, problem.metric_tau, problem.s_size,
                                      cfg.batch_size, problem.y_star, cfg.rounds, kl)
    else:
        nan = np.full(len(result.logs), np.nan)
        div = np.array([metrics.batch_diversity(lg.batch) if cfg.batch_size > 1 else 0.0
                        for lg in result.logs])
        perf = np.cumsum([float(np.sum(lg.fitness[lg.novel])) for lg in result.logs])
        trace = metrics.MetricTrace(nan, nan, perf, metrics.simple_regret(result.logs, problem.y_star),
                                    div, metrics.hits(result.logs), kl)
    return metrics.trace_to_csv(trace)


def _kl_trace(result, problem: Problem, channel: bb.NoisyChannel):
    fn = problem.blackbox
    if channel.noise_std == 0 or fn.vocab_size ** fn.length > bb.MAX_ENUMERATED:
        return None
    oracle = bb.oracle_posterior(fn, channel, problem.metric_tau)
    return [metrics.kl_to_oracle(lg.q_params, oracle) for lg in result.logs]


def _cell_job(args):
    cfg, method, seed = args
    try:
        return method, seed, run_cell(cfg, method, seed), None
    except Exception:
        return method, seed, None, traceback.format_exc()


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def cell_filename(method: str, seed: int) -> str:
    return f"{method}_seed{seed}.csv"


def summarize(out_dir: Path, methods, seeds) -> str:
    """Per-round mean and sample standard deviation across seeds, per method."""
    cols = metrics.CSV_HEADER[1:]
    lines = ["method,round," + ",".join(f"{c}_mean,{c}_std" for c in cols) + ",n_seeds"]
    for method in methods:
        tables = [metrics.read_trace_csv(out_dir / cell_filename(method, s)) for s in seeds
                  if (out_dir / cell_filename(method, s)).is_file()]
        if not tables:
            continue
        rounds = min(len(t["round"]) for t in tables)
        for r in range(rounds):
            parts = [method, str(r + 1)]
            for c in cols:
                vals = np.array([t[c][r] for t in tables])
                mean = float(np.mean(vals))
                std = float(np.std(vals, ddof=1)) if len(vals) > 1 else float("nan")
                parts += [metrics._fmt(mean), metrics._fmt(std)]
            parts.append(str(len(tables)))
            lines.append(",".join(parts))
    return "\n".join(lines) + "\n"


def plot_summary(out_dir: Path, methods, seeds) -> list:
    """One SVG per method with mean recall and regret over rounds."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    paths = []
    for method in methods:
        tables = [metrics.read_trace_csv(out_dir / cell_filename(method, s)) for s in seeds
                  if (out_dir / cell_filename(method, s)).is_file()]
        if not tables:
            continue
        fig, axes = plt.subplots(1, 2, figsize=(8, 3))
        for ax, col in zip(axes, ("recall", "regret")):
            vals = np.array([t[col] for t in tables])
            ax.plot(tables[0]["round"], vals.mean(axis=0), marker="o")
            ax.set_xlabel("round")
            ax.set_ylabel(col)
        fig.suptitle(method)
        fig.tight_layout()
        path = out_dir / f"{method}.svg"
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        paths.append(path)
    return paths


def run(cfg: RunConfig, out_dir: Path, jobs: int = 1, seed_offset: int = 0,
        plot: bool = False) -> int:
    seeds = [s + seed_offset for s in cfg.seeds]
    cells = [(cfg, m, s) for m in cfg.methods for s in seeds]
    out_dir.mkdir(parents=True, exist_ok=True)
    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_cell_job, cells))
    else:
        results = [_cell_job(c) for c in cells]
    errors = []
    for method, seed, text, err in results:
        if err is None:
            atomic_write(out_dir / cell_filename(method, seed), text)
            log.info("finished %s seed %d", method, seed)
        else:
            errors.append(f"[{method} seed={seed}]\n{err}")
            log.error("cell %s seed %d failed", method, seed)
    atomic_write(out_dir / "summary.csv", summarize(out_dir, cfg.methods, seeds))
    if errors:
        atomic_write(out_dir / "errors.log", "\n".join(errors))
    elif (out_dir / "errors.log").exists():
        (out_dir / "errors.log").unlink()
    if plot:
        plot_summary(out_dir, cfg.methods, seeds)
    return 2 if errors else 0


def verify(quick: bool = False) -> int:
    from .verification import run_suite

    ok = True
    for report in run_suite(quick=quick):
        print(report.line())
        ok &= report.passed is not False
    return 0 if ok else 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vsd", description="Active generation campaigns")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run all (method, seed) cells of a config")
    p_run.add_argument("config")
    p_run.add_argument("--jobs", type=int, default=1)
    p_run.add_argument("--out", default=None,
                       help=f"output directory (default: ${OUTPUT_ENV}, config 'output', or ./results)")
    p_run.add_argument("--seed-offset", type=int, default=0)
    p_run.add_argument("--plot", action="store_true", help="also write per-method SVG charts")
    p_ver = sub.add_parser("verify", help="run the property verification suite")
    p_ver.add_argument("--quick", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command == "verify":
        return verify(args.quick)
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return 1
    try:
        cfg = parse_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    out = args.out or os.environ.get(OUTPUT_ENV) or cfg.output or "results"
    return run(cfg, Path(out), args.jobs, args.seed_offset, args.plot)


if __name__ == "__main__":
    sys.exit(main())
