"""Experiment harness: parameter sweeps over repeated seeded trials, with
fraction-stable and relative-error statistics written to CSV.

Reproducibility contract: a run is a pure function of (config, base_seed).
Each trial's seed is base_seed XOR trial_index XOR stable_hash(axis, value),
where stable_hash is the first 8 little-endian bytes of sha256 over
"axis=repr(value)". Workers only parallelize trials; aggregation order is
fixed, so the CSV bytes do not depend on the worker count. The wall_time_s
column is left empty unless timing is requested, because criterion-grade
reproducibility and wall clocks do not mix.
"""

import csv
import hashlib
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .lqr import CostParams, LinearSystem, solve_are
from .olspi import (
    OlspiConfig,
    UNSTABLE,
    build_regression,
    load_rollout,
    olspi_run,
    relative_error,
    save_rollout,
    simulate,
)
from .robustpi import DisturbanceSpec, inexact_pi

THREADS_ENV = "LQRPI_THREADS"

SWEEP_AXES = ("rollout_M", "inner_T", "exploration_var", "disturbance_mag")

CSV_COLUMNS = [
    "sweep_axis",
    "sweep_value",
    "trials",
    "n_stable",
    "fraction_stable",
    "rel_err_mean",
    "rel_err_var",
    "wall_time_s",
    "seed",
]


class ConfigError(ValueError):
    """Bad experiment configuration or config file."""


def preset(name):
    """Named benchmark system + cost. Returns (LinearSystem, CostParams)."""
    if name == "paper-sec5":
        A = np.array([[0.95, 0.01, 0.0], [0.01, 0.95, 0.01], [0.0, 0.01, 0.95]])
        B = np.array([[1.0, 0.1], [0.0, 0.1], [0.0, 0.1]])
        return LinearSystem(A=A, B=B, C=np.eye(3)), CostParams(S=np.eye(3), R=np.eye(2))
    raise ConfigError("unknown preset %r" % name)


@dataclass
class ExperimentConfig:
    """A sweep over exactly one axis, everything else held fixed."""

    system: LinearSystem
    cost: CostParams
    sweep_axis: str
    sweep_values: list
    N: int = 5
    T: int = 45
    M: int = 100000
    sigma_u2: float = 1.0
    trials: int = 20
    base_seed: int = 0
    output_path: str | None = None
    burn_in: int = 1000
    timing: bool = False
    cache_dir: str | None = None
    K1: np.ndarray | None = None

    def __post_init__(self):
        if self.sweep_axis not in SWEEP_AXES:
            raise ConfigError("sweep_axis must be one of %s" % (SWEEP_AXES,))
        if not self.sweep_values:
            raise ConfigError("sweep_values must be nonempty")
        if any(v <= 0 for v in self.sweep_values):
            raise ConfigError("swept values must be positive")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")

    def initial_gain(self):
        if self.K1 is None:
            return np.zeros((self.system.m, self.system.n))
        return np.atleast_2d(np.asarray(self.K1, dtype=float))


@dataclass(frozen=True)
class TrialStats:
    sweep_value: object
    fraction_stable: float
    rel_err_mean: float | None
    rel_err_var: float | None
    n_stable_trials: int
    wall_time_s: float


def trial_seed(base_seed, trial_index, axis, value):
    """base_seed XOR trial_index XOR stable 64-bit hash of (axis, value)."""
    h = hashlib.sha256(("%s=%r" % (axis, value)).encode()).digest()
    mix = int.from_bytes(h[:8], "little")
    return (int(base_seed) ^ int(trial_index) ^ mix) & (2**64 - 1)


def _cache_key(system, K1, sigma_u2, M, seed, burn_in):
    h = hashlib.sha256()
    for arr in (system.A, system.B, system.C, K1):
        h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        h.update(b"|")
    h.update(("%r|%d|%d|%d" % (float(sigma_u2), int(M), int(seed), int(burn_in))).encode())
    return h.hexdigest()


def _get_rollout(system, K1, sigma_u2, M, seed, burn_in, cache_dir):
    if cache_dir is None:
        return simulate(system, K1, sigma_u2, M, seed, burn_in=burn_in)
    key = _cache_key(system, K1, sigma_u2, M, seed, burn_in)
    path = os.path.join(cache_dir, key + ".lqpi")
    if os.path.exists(path):
        return load_rollout(path)
    rollout = simulate(system, K1, sigma_u2, M, seed, burn_in=burn_in)
    os.makedirs(cache_dir, exist_ok=True)
    tmp = path + ".tmp.%d" % os.getpid()
    save_rollout(tmp, rollout)
    os.replace(tmp, path)
    return rollout


def _olspi_trial(args):
    """One end-to-end trial; module level so process pools can pickle it.

    Returns (stable, rel_err). Stable means every gain along the run,
    including the last, is stabilizing against the true system.
    """
    (system, cost, K1, N, T, M, sigma_u2, burn_in, seed, Pstar, cache_dir) = args
    rollout = _get_rollout(system, K1, sigma_u2, M, seed, burn_in, cache_dir)
    reg = build_regression(rollout, cost)
    cfg = OlspiConfig(N=N, T=T, M=M, sigma_u2=sigma_u2, seed=seed, burn_in=burn_in)
    result = olspi_run(reg, cost, K1, cfg, sys=system)
    stable = all(it.stabilizing_wrt_truth for it in result.iterations)
    rel = relative_error(system, cost, result.K_N, Pstar) if stable else UNSTABLE
    return stable, rel


def _robust_trial(args):
    """One disturbed-iteration trial. Stable means no recorded failure."""
    (system, cost, K1, n_iter, magnitude, seed, Pstar) = args
    spec = DisturbanceSpec(kind="iid_bounded", magnitude=magnitude, seed=seed)
    trace = inexact_pi(system, cost, K1, spec, n_iter)
    if trace.failure is not None or not trace.iterations:
        return False, UNSTABLE
    last_gain = trace.iterations[-1].gain
    return True, relative_error(system, cost, last_gain, Pstar)


def _resolve_threads(threads):
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError("%s must be an integer, got %r" % (THREADS_ENV, env))
    return 1


def _stats_for(value, results, trials, wall):
    rels = [r for stable, r in results if stable and np.isfinite(r)]
    n_stable = sum(1 for stable, _ in results if stable)
    mean = float(np.mean(rels)) if rels else None
    var = float(np.var(rels, ddof=1)) if len(rels) >= 2 else None
    return TrialStats(
        sweep_value=value,
        fraction_stable=n_stable / trials,
        rel_err_mean=mean,
        rel_err_var=var,
        n_stable_trials=n_stable,
        wall_time_s=wall,
    )


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _csv_row(cfg, stats):
    return [
        cfg.sweep_axis,
        _fmt(stats.sweep_value),
        _fmt(cfg.trials),
        _fmt(stats.n_stable_trials),
        _fmt(stats.fraction_stable),
        _fmt(stats.rel_err_mean),
        _fmt(stats.rel_err_var),
        _fmt(stats.wall_time_s) if cfg.timing else "",
        _fmt(cfg.base_seed),
    ]


def _run_sweep(cfg, make_tasks, trial_fn, threads):
    threads = _resolve_threads(threads)
    out = None
    writer = None
    if cfg.output_path:
        out = open(cfg.output_path, "w", newline="")
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        out.flush()
    all_stats = []
    try:
        pool = ProcessPoolExecutor(max_workers=threads) if threads > 1 else None
        try:
            for value in cfg.sweep_values:
                tasks = make_tasks(value)
                t0 = time.perf_counter()
                if pool is None:
                    results = [trial_fn(t) for t in tasks]
                else:
                    # map preserves task order, so aggregation is
                    # completion-order independent
                    results = list(pool.map(trial_fn, tasks))
                wall = time.perf_counter() - t0
                stats = _stats_for(value, results, cfg.trials, wall)
                all_stats.append(stats)
                if writer is not None:
                    writer.writerow(_csv_row(cfg, stats))
                    out.flush()
        finally:
            if pool is not None:
                pool.shutdown()
    finally:
        if out is not None:
            out.close()
    return all_stats


def run_experiment(cfg, threads=None):
    """Sweep one data-driven-run parameter; per value, `trials` independent
    end-to-end trials. Returns the per-value statistics and, when
    cfg.output_path is set, appends CSV rows as sweep values complete."""
    if cfg.sweep_axis == "disturbance_mag":
        return run_robustness(cfg, threads=threads)
    K1 = cfg.initial_gain()
    Pstar = solve_are(cfg.system, cfg.cost).Pstar

    def make_tasks(value):
        N, T, M, s2 = cfg.N, cfg.T, cfg.M, cfg.sigma_u2
        if cfg.sweep_axis == "rollout_M":
            M = int(value)
        elif cfg.sweep_axis == "inner_T":
            T = int(value)
        elif cfg.sweep_axis == "exploration_var":
            s2 = float(value)
        return [
            (
                cfg.system,
                cfg.cost,
                K1,
                N,
                T,
                M,
                s2,
                cfg.burn_in,
                trial_seed(cfg.base_seed, t, cfg.sweep_axis, value),
                Pstar,
                cfg.cache_dir,
            )
            for t in range(cfg.trials)
        ]

    return _run_sweep(cfg, make_tasks, _olspi_trial, threads)


def run_robustness(cfg, threads=None):
    """Sweep the disturbance magnitude of the disturbed iteration; the fixed
    block's N doubles as the iteration count."""
    if cfg.sweep_axis != "disturbance_mag":
        raise ConfigError("run_robustness needs the disturbance_mag axis")
    K1 = cfg.initial_gain()
    Pstar = solve_are(cfg.system, cfg.cost).Pstar

    def make_tasks(value):
        return [
            (
                cfg.system,
                cfg.cost,
                K1,
                cfg.N,
                float(value),
                trial_seed(cfg.base_seed, t, cfg.sweep_axis, value),
                Pstar,
            )
            for t in range(cfg.trials)
        ]

    return _run_sweep(cfg, make_tasks, _robust_trial, threads)


# ---------------------------------------------------------------------------
# JSON config, schema 1
# ---------------------------------------------------------------------------


def _matrix(doc, key):
    try:
        return np.array(doc[key], dtype=float)
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError("bad or missing matrix %r: %s" % (key, e))


def config_from_dict(doc, output_path=None):
    if not isinstance(doc, dict):
        raise ConfigError("config root must be an object")
    if doc.get("schema") != 1:
        raise ConfigError("unsupported config schema %r, expected 1" % doc.get("schema"))
    if "preset" in doc:
        system, cost = preset(doc["preset"])
    elif "system" in doc and "cost" in doc:
        system = LinearSystem(
            A=_matrix(doc["system"], "A"),
            B=_matrix(doc["system"], "B"),
            C=_matrix(doc["system"], "C"),
        )
        cost = CostParams(S=_matrix(doc["cost"], "S"), R=_matrix(doc["cost"], "R"))
    else:
        raise ConfigError("config needs either a preset or inline system+cost")
    sweep = doc.get("sweep")
    if not isinstance(sweep, dict) or "axis" not in sweep or "values" not in sweep:
        raise ConfigError("config needs sweep: {axis, values}")
    fixed = doc.get("fixed", {})
    kwargs = dict(
        system=system,
        cost=cost,
        sweep_axis=sweep["axis"],
        sweep_values=list(sweep["values"]),
        trials=int(doc.get("trials", 20)),
        base_seed=int(doc.get("seed", 0)),
        output_path=output_path or doc.get("out"),
        burn_in=int(doc.get("burn_in", 1000)),
        timing=bool(doc.get("timing", False)),
        cache_dir=doc.get("cache_dir"),
    )
    for key, attr in (("N", "N"), ("T", "T"), ("M", "M"), ("sigma_u2", "sigma_u2")):
        if key in fixed:
            kwargs[attr] = fixed[key]
    if "K1" in doc:
        kwargs["K1"] = np.array(doc["K1"], dtype=float)
    try:
        return ExperimentConfig(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e))


def load_config(path, output_path=None):
    try:
        with open(path) as f:
            doc = json.load(f)
    except OSError as e:
        raise ConfigError("cannot read config %s: %s" % (path, e))
    except json.JSONDecodeError as e:
        raise ConfigError("config %s is not valid JSON: %s" % (path, e))
    return config_from_dict(doc, output_path=output_path)
