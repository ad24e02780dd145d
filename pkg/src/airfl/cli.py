"""Batch runner: ``airfl simulate | solve | oracle --config cfg.json``.

Exit codes are a stable contract: 0 success, 1 runtime failure,
2 configuration error. ``AIRFL_THREADS`` caps both the number of
(scheme, seed) pairs trained concurrently and the BLAS thread pools.
"""

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import baselines
from ._io import fmt, write_atomic, write_csv
from ._validation import ConfigurationError
from .channel import LOS_MA, AntennaLayout, build_los_channel, build_rayleigh_channel, draw_links
from .config import ConfigError, load_config
from .fltrain.train import METRIC_COLUMNS, train, write_metrics
from .pdd import solve, write_diagnostics

logger = logging.getLogger("airfl")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2
THREADS_ENV = "AIRFL_THREADS"
SUMMARY_COLUMNS = ("seed",) + METRIC_COLUMNS
SOLVE_RESULT = "solve.json"
DIAGNOSTICS = "solve_diagnostics.csv"


def thread_cap():
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw == "":
        return 1
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer; got {raw!r}")
    return n


def metrics_name(scheme, seed):
    return f"metrics_{scheme}_seed{seed}.csv"


def _run_pair(cfg, scheme, seed, out_dir, threads):
    with threadpool_limits(limits=threads):
        rows = train(cfg.to_train(scheme, seed))
    write_metrics(rows, out_dir / metrics_name(scheme, seed))
    return rows[-1]


def cmd_simulate(cfg, out_dir):
    """Train every (scheme, seed) pair; one metrics CSV each plus ``summary.csv``."""
    threads = thread_cap()
    pairs = [(scheme, seed) for scheme in cfg.schemes for seed in cfg.seeds]
    for scheme, seed in pairs:
        cfg.to_train(scheme, seed)          # surface configuration errors before any work
    out_dir = Path(out_dir or cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if threads > 1 and len(pairs) > 1:
        with ProcessPoolExecutor(max_workers=min(threads, len(pairs))) as pool:
            futures = [pool.submit(_run_pair, cfg, s, k, out_dir, 1) for s, k in pairs]
            finals = [f.result() for f in futures]
    else:
        finals = [_run_pair(cfg, s, k, out_dir, threads) for s, k in pairs]
    rows = [[seed] + last.as_row() for (_, seed), last in zip(pairs, finals)]
    write_csv(out_dir / "summary.csv", SUMMARY_COLUMNS, rows)
    for (scheme, seed), last in zip(pairs, finals):
        print(f"{scheme} seed={seed} test_acc={fmt(last.test_acc)} "
              f"test_loss={fmt(last.test_loss)} selected={last.selected}")
    return EXIT_OK


def build_instance(cfg, seed):
    """Seeded channels and sample counts for ``solve`` and ``oracle``."""
    inst = cfg.instance
    if inst.sample_counts is None:
        S = np.full(inst.users, 270.0)
    else:
        S = np.asarray(inst.sample_counts, dtype=float)
        if S.size != inst.users or np.any(S <= 0) or np.any(S != np.round(S)):
            raise ConfigError(f"field 'instance.sample_counts': need {inst.users} positive "
                              "integers")
    lo, hi = inst.distance_range
    if not 0 < lo <= hi:
        raise ConfigError("field 'instance.distance_range': need 0 < lo <= hi")
    lam = cfg.ota.wavelength
    layout = AntennaLayout.default(inst.n_antennas, lam)
    rng = np.random.default_rng(seed)
    links = draw_links(inst.users, rng, (lo, hi), S.astype(int))
    if inst.channel == LOS_MA:
        channels = build_los_channel(layout, links, lam)
    else:
        channels = build_rayleigh_channel(links, inst.n_antennas, rng, lam, layout)
    return channels, S


def _print_result(label, res):
    print(f"{label}.r = {fmt(float(res.r_value))}")
    print(f"{label}.selected = {res.selected_count}")
    print(f"{label}.mask = {''.join('1' if s else '0' for s in res.selection)}")


def cmd_solve(cfg, out_dir):
    """Solve the seeded instance and print the result summary."""
    seed = cfg.seeds[0]
    channels, S = build_instance(cfg, seed)
    with threadpool_limits(limits=thread_cap()):
        res = solve(channels, S, cfg.to_ota(), cfg.to_pdd(), record=cfg.instance.diagnostics)
    _print_result("pdd", res)
    print(f"pdd.violation = {fmt(float(res.violation))}")
    print(f"pdd.iterations = {res.iterations[0]} outer, {res.iterations[1]} inner")
    print(f"pdd.converged = {str(res.converged).lower()}")
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        summary = dict(res.summary(), seed=seed, users=channels.n_users,
                       n_antennas=channels.n_antennas)
        write_atomic(out_dir / SOLVE_RESULT, json.dumps(summary, indent=2) + "\n")
        if cfg.instance.diagnostics:
            write_diagnostics(res.history, out_dir / DIAGNOSTICS)
    return EXIT_OK


def cmd_oracle(cfg, out_dir, result_path=None):
    """Brute-force optimum of the seeded instance and, optionally, the PDD ratio."""
    seed = cfg.seeds[0]
    channels, S = build_instance(cfg, seed)
    prior = None
    if result_path is not None:
        try:
            prior = json.loads(Path(result_path).read_text())
            r_pdd = float(prior["r"])
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"{result_path}: not a solve result ({exc})") from exc
        key = (prior.get("seed"), prior.get("users"), prior.get("n_antennas"))
        if key != (seed, channels.n_users, channels.n_antennas):
            raise ConfigError(f"{result_path}: solved a different instance "
                              f"(seed, users, n_antennas) = {key}")
    opt = baselines.brute_force_oracle(channels, S, cfg.to_ota(), cfg.instance.oracle_step)
    _print_result("oracle", opt)
    if prior is not None:
        ratio = r_pdd / opt.r_value if opt.r_value > 0 else float("nan")
        print(f"pdd.r = {fmt(r_pdd)}")
        print(f"ratio = {fmt(ratio)}")
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        summary = {"r": float(opt.r_value), "selected": opt.selected_count,
                   "mask": "".join("1" if s else "0" for s in opt.selection), "seed": seed}
        if prior is not None:
            summary["ratio"] = ratio
        write_atomic(out_dir / "oracle.json", json.dumps(summary, indent=2) + "\n")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="airfl", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("simulate", "train every (scheme, seed) pair and write metrics CSVs"),
                        ("solve", "solve one seeded scheduling instance"),
                        ("oracle", "brute-force optimum of the seeded instance")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="JSON experiment configuration")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed list")
        if name == "oracle":
            p.add_argument("--result", default=None,
                           help="solve.json from a previous solve, to report r_pdd / r_opt")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be non-negative")
            cfg = cfg.model_copy(update={"seeds": [args.seed]})
        if args.command == "simulate":
            return cmd_simulate(cfg, args.out)
        if args.command == "solve":
            return cmd_solve(cfg, args.out)
        return cmd_oracle(cfg, args.out, args.result)
    except (ConfigError, ConfigurationError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:       # noqa: BLE001 - any other failure is a runtime error
        logger.debug("runtime failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
