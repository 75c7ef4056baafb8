"""Command line front end.

Subcommands: are, pi, inexact-pi, olspi, bench, probe. Exit codes: 0 on
success, 1 on configuration or usage errors, 2 on numeric failures.
"""

import argparse
import json
import sys

import numpy as np

from .matops import NotStabilizingError, NumericError
from .lqr import SingularBlockError, exact_pi, solve_are
from .olspi import OlspiConfig, build_regression, olspi_run, relative_error, simulate
from .robustpi import (
    DegenerateProbeError,
    DisturbanceSpec,
    contraction_probe,
    inexact_pi,
    iss_gain_curve,
)
from . import bench as bench_mod
from .bench import ConfigError


class UsageError(Exception):
    def __init__(self, parser, message):
        self.parser = parser
        super().__init__(message)


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad flags; usage problems are exit 1 here, so
    # surface them as exceptions instead
    def error(self, message):
        raise UsageError(self, message)


def _fmt_mat(M):
    return np.array2string(np.asarray(M, dtype=float), precision=10, suppress_small=False)


def _load_system(args):
    if getattr(args, "config", None):
        try:
            with open(args.config) as f:
                doc = json.load(f)
        except OSError as e:
            raise ConfigError("cannot read config %s: %s" % (args.config, e))
        except json.JSONDecodeError as e:
            raise ConfigError("config %s is not valid JSON: %s" % (args.config, e))
        if not isinstance(doc, dict) or doc.get("schema") != 1:
            raise ConfigError("unsupported config schema, expected 1")
        if "preset" in doc:
            return bench_mod.preset(doc["preset"])
        if "system" in doc and "cost" in doc:
            from .lqr import CostParams, LinearSystem

            return (
                LinearSystem(
                    A=np.array(doc["system"]["A"], dtype=float),
                    B=np.array(doc["system"]["B"], dtype=float),
                    C=np.array(doc["system"]["C"], dtype=float),
                ),
                CostParams(
                    S=np.array(doc["cost"]["S"], dtype=float),
                    R=np.array(doc["cost"]["R"], dtype=float),
                ),
            )
        raise ConfigError("config needs either a preset or inline system+cost")
    if getattr(args, "preset", None):
        return bench_mod.preset(args.preset)
    raise ConfigError("need --preset or --config to define the system")


def _cmd_are(args):
    system, cost = _load_system(args)
    sol = solve_are(system, cost)
    print("Pstar =")
    print(_fmt_mat(sol.Pstar))
    print("Kstar =")
    print(_fmt_mat(sol.Kstar))
    print("residual = %.6e" % sol.residual)
    return 0


def _cmd_pi(args):
    system, cost = _load_system(args)
    trace = exact_pi(system, cost, tol=args.tol, max_iter=args.max_iter)
    print("iter  rho_closed_loop     are_residual")
    for it in trace.iterations:
        print("%4d  %.12f  %.6e" % (it.index, it.rho_closed_loop, it.are_residual))
    print("converged = %s" % trace.converged)
    return 0


def _cmd_inexact_pi(args):
    system, cost = _load_system(args)
    spec = DisturbanceSpec(
        kind=args.kind,
        magnitude=args.magnitude,
        decay_rate=args.decay_rate,
        seed=args.seed,
    )
    K1 = np.zeros((system.m, system.n))
    trace = inexact_pi(system, cost, K1, spec, args.n_iter)
    print("iter  delta_g_norm   p_error")
    for it in trace.iterations:
        print("%4d  %.6e  %.6e" % (it.index, it.delta_g_norm, it.p_error_to_Pstar))
    if trace.failure is not None:
        print("failure at iteration %d: %s" % (trace.failure.iteration, trace.failure.cause))
    else:
        print("completed %d iterations" % len(trace.iterations))
    return 0


def _cmd_olspi(args):
    system, cost = _load_system(args)
    K1 = np.zeros((system.m, system.n))
    rollout = simulate(
        system, K1, args.sigma_u2, args.rollout_m, args.seed, burn_in=args.burn_in
    )
    reg = build_regression(rollout, cost)
    cfg = OlspiConfig(
        N=args.n_outer,
        T=args.inner_t,
        M=args.rollout_m,
        sigma_u2=args.sigma_u2,
        seed=args.seed,
        burn_in=args.burn_in,
    )
    result = olspi_run(reg, cost, K1, cfg, sys=system)
    Pstar = solve_are(system, cost).Pstar
    rel = relative_error(system, cost, result.K_N, Pstar)
    print("K_N =")
    print(_fmt_mat(result.K_N))
    stable = all(it.stabilizing_wrt_truth for it in result.iterations)
    print("stable = %s" % stable)
    print("relative_error = %s" % (repr(rel) if np.isfinite(rel) else "unstable"))
    return 0


def _cmd_bench(args):
    if not args.config:
        raise ConfigError("bench needs --config pointing at a JSON experiment file")
    cfg = bench_mod.load_config(args.config, output_path=args.out)
    if args.seed is not None:
        cfg.base_seed = args.seed
    if args.timing:
        cfg.timing = True
    if cfg.sweep_axis == "disturbance_mag":
        stats = bench_mod.run_robustness(cfg, threads=args.threads)
    else:
        stats = bench_mod.run_experiment(cfg, threads=args.threads)
    for st in stats:
        mean = "" if st.rel_err_mean is None else repr(st.rel_err_mean)
        var = "" if st.rel_err_var is None else repr(st.rel_err_var)
        print(
            "%s=%r fraction_stable=%r n_stable=%d rel_err_mean=%s rel_err_var=%s"
            % (cfg.sweep_axis, st.sweep_value, st.fraction_stable, st.n_stable_trials, mean, var)
        )
        print("  wall_time_s=%.3f" % st.wall_time_s, file=sys.stderr)
    if cfg.output_path:
        print("csv written to %s" % cfg.output_path)
    return 0


def _cmd_probe(args):
    system, cost = _load_system(args)
    if args.mode == "contraction":
        res = contraction_probe(system, cost, args.radius, args.samples, args.seed)
        print("sigma_hat = %r" % res["sigma_hat"])
        print("samples_kept = %d" % len(res["samples"]))
        print("samples_discarded = %d" % res["n_discarded"])
        return 0
    mags = [float(tok) for tok in args.magnitudes.split(",") if tok]
    K1 = np.zeros((system.m, system.n))
    curve = iss_gain_curve(system, cost, K1, mags, args.n_iter, args.trials, args.seed)
    print("magnitude  fraction_no_failure  sup_tail_error")
    for pt in curve:
        tail = "" if pt.sup_tail_error is None else "%.6e" % pt.sup_tail_error
        print("%9.3e  %19r  %s" % (pt.magnitude, pt.fraction_no_failure, tail))
    return 0


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="base RNG seed")
    common.add_argument("--preset", default=None, help="named system, e.g. paper-sec5")
    common.add_argument("--config", default=None, help="JSON config path")
    common.add_argument("--out", default=None, help="output path")
    common.add_argument("--threads", type=int, default=None, help="worker processes")

    parser = _Parser(prog="lqrpi", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("are", parents=[common], help="solve the Riccati equation")
    p.set_defaults(fn=_cmd_are)

    p = sub.add_parser("pi", parents=[common], help="exact policy iteration trace")
    p.add_argument("--tol", type=float, default=1e-11)
    p.add_argument("--max-iter", type=int, default=100)
    p.set_defaults(fn=_cmd_pi)

    p = sub.add_parser("inexact-pi", parents=[common], help="disturbed policy iteration")
    p.add_argument("--kind", choices=["zero", "constant", "iid_bounded", "decaying"], default="iid_bounded")
    p.add_argument("--magnitude", type=float, default=1e-3)
    p.add_argument("--decay-rate", type=float, default=None)
    p.add_argument("--n-iter", type=int, default=30)
    p.set_defaults(fn=_cmd_inexact_pi)

    p = sub.add_parser("olspi", parents=[common], help="one data-driven run")
    p.add_argument("--rollout-m", type=int, default=100000, help="rollout length M")
    p.add_argument("--n-outer", type=int, default=5, help="outer iterations N")
    p.add_argument("--inner-t", type=int, default=45, help="inner iterations T")
    p.add_argument("--sigma-u2", type=float, default=1.0, help="exploration variance")
    p.add_argument("--burn-in", type=int, default=1000)
    p.set_defaults(fn=_cmd_olspi)

    p = sub.add_parser("bench", parents=[common], help="run a sweep from a config file")
    p.add_argument("--timing", action="store_true", help="fill the wall_time_s CSV column (breaks byte reproducibility)")
    p.set_defaults(fn=_cmd_bench)

    p = sub.add_parser("probe", parents=[common], help="robustness probes")
    p.add_argument("mode", choices=["contraction", "iss"])
    p.add_argument("--radius", type=float, default=1e-2)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--magnitudes", default="1e-4,1e-3,1e-2")
    p.add_argument("--n-iter", type=int, default=50)
    p.add_argument("--trials", type=int, default=20)
    p.set_defaults(fn=_cmd_probe)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            parser.print_usage(sys.stderr)
            return 1
        if args.fn is not _cmd_bench and args.seed is None:
            args.seed = 0
        return args.fn(args)
    except UsageError as e:
        e.parser.print_usage(sys.stderr)
        print("error: %s" % e, file=sys.stderr)
        return 1
    except ConfigError as e:
        print("config error: %s" % e, file=sys.stderr)
        return 1
    except (NotStabilizingError, SingularBlockError, NumericError, DegenerateProbeError) as e:
        print("numeric failure: %s" % e, file=sys.stderr)
        return 2


def entry():
    sys.exit(main())
