"""Command-line entry points: calibrate, simulate, exit-chart, trajectory.

Exit codes: 0 success, 2 config error, 3 numerical failure (any flagged
divergence), 4 I/O error.
"""

import argparse
import sys
import time
from dataclasses import replace

from .exit_chart import default_sigma_grid, exit_curve_app, exit_curve_mpdq, measure_trajectory
from .harness import (
    ConfigError,
    OutputError,
    ensure_schedule,
    load_config,
    quick_overrides,
    run_monte_carlo,
    write_results,
)
from .turbo import cached_trellis
from . import streams

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def _add_common(parser):
    parser.add_argument("--config", required=True, help="flat key=value config file")
    parser.add_argument("--seed", type=int, default=None, help="override the master seed")
    parser.add_argument("--out", default=None, help="override the output directory")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="turbocs",
        description="1-bit compressed-sensing turbo decoder experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="fit per-iteration tuning factors for every SNR")
    _add_common(p)

    p = sub.add_parser("simulate", help="Monte Carlo RSNR sweep over the configured SNRs")
    _add_common(p)
    p.add_argument("--quick", action="store_true",
                   help="desk-scale run: N=200, M=100, 50 trials")
    p.add_argument("--fixed-phi", action="store_true",
                   help="share one measurement matrix across trials")

    p = sub.add_parser("exit-chart", help="measure per-decoder EXIT curves")
    _add_common(p)
    p.add_argument("--trials-per-point", type=int, default=50)

    p = sub.add_parser("trajectory", help="measure actual-loop decoding trajectories")
    _add_common(p)
    p.add_argument("--trajectories", type=int, default=50)
    p.add_argument("--iters", type=int, default=3)
    return parser


def _load(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = replace(cfg, out_dir=args.out)
    if getattr(args, "quick", False):
        cfg = quick_overrides(cfg)
    if getattr(args, "fixed_phi", False):
        cfg = replace(cfg, fixed_phi=True)
    return cfg


def _cmd_calibrate(cfg):
    t0 = time.time()
    for snr_idx in range(len(cfg.snr_db_list)):
        ensure_schedule(cfg, snr_idx, log=print)
    write_results(None, cfg.out_dir, cfg=cfg, wall_time_s=time.time() - t0)
    print(f"schedules written under {cfg.out_dir}/calibration")
    return EXIT_OK


def _cmd_simulate(cfg):
    t0 = time.time()
    results = run_monte_carlo(cfg, log=print)
    write_results(results, cfg.out_dir, cfg=cfg, wall_time_s=time.time() - t0)
    print(f"results written to {cfg.out_dir}/results.csv")
    if results.interrupted:
        print("interrupted: partial results flushed", file=sys.stderr)
    if results.n_diverged:
        print(f"{results.n_diverged} trial(s) flagged divergent", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def _cmd_exit_chart(cfg, trials_per_point):
    t0 = time.time()
    grid = default_sigma_grid()
    trellis = cached_trellis(cfg.polynomials())
    curves = {}
    rng = streams.substream(cfg.seed, streams.CTX_EXIT, 0)
    curves["mpdq"] = exit_curve_mpdq(
        (cfg.m, cfg.n), cfg.rho, cfg.mpdq_config(), grid, trials_per_point, rng,
        clip=cfg.llr_clip,
    )
    for snr_idx, snr_db in enumerate(cfg.snr_db_list):
        rng = streams.substream(cfg.seed, streams.CTX_EXIT, 1 + snr_idx)
        curves[f"app_snr{snr_db:g}"] = exit_curve_app(
            snr_db, trellis, grid, trials_per_point, rng, m=cfg.m, clip=cfg.llr_clip,
        )
    write_results(None, cfg.out_dir, cfg=cfg, curves=curves, wall_time_s=time.time() - t0)
    print(f"EXIT curves written under {cfg.out_dir}")
    return EXIT_OK


def _cmd_trajectory(cfg, n_trajectories, n_iters):
    t0 = time.time()
    trajectories = {}
    for snr_idx, snr_db in enumerate(cfg.snr_db_list):
        system = cfg.system(snr_db)
        rng = streams.substream(cfg.seed, streams.CTX_TRAJECTORY, snr_idx, 0)
        trajectories[f"uncal_snr{snr_db:g}"] = measure_trajectory(
            system, None, n_iters, n_trajectories, rng
        )
        if cfg.use_calibration:
            schedule = ensure_schedule(cfg, snr_idx, log=print)
            rng = streams.substream(cfg.seed, streams.CTX_TRAJECTORY, snr_idx, 1)
            trajectories[f"cal_snr{snr_db:g}"] = measure_trajectory(
                system, schedule, n_iters, n_trajectories, rng
            )
    write_results(None, cfg.out_dir, cfg=cfg, trajectories=trajectories,
                  wall_time_s=time.time() - t0)
    print(f"trajectories written under {cfg.out_dir}")
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
        if args.command == "calibrate":
            return _cmd_calibrate(cfg)
        if args.command == "simulate":
            return _cmd_simulate(cfg)
        if args.command == "exit-chart":
            return _cmd_exit_chart(cfg, args.trials_per_point)
        if args.command == "trajectory":
            return _cmd_trajectory(cfg, args.trajectories, args.iters)
        raise AssertionError(f"unhandled command {args.command}")
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except OutputError as err:
        print(f"output error: {err}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
