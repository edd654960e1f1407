"""Command-line entry point: ``hybridbf <subcommand> --config FILE``."""

from __future__ import annotations

import argparse
import logging
import sys

from . import harness
from .exceptions import ConfigError

log = logging.getLogger("hybridbf")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hybridbf",
        description="Multiuser beamforming simulator for partially-connected mmWave massive MIMO.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "beampattern": "A-MM vs quiescent beam patterns and nulling depths",
        "sumrate-snr": "mean sum-rate of each scheme versus SNR",
        "sumrate-nbs": "mean sum-rate of each scheme versus the number of BS antennas",
        "convergence": "per-iteration objective traces on one channel draw",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="experiment INI file")
        p.add_argument("--out", default=".", help="output directory (default: cwd)")
        p.add_argument("--seed", type=int, help="override [experiment] root_seed")
        p.add_argument("--trials", type=int, help="override [experiment] trials")
        p.add_argument("--workers", type=int, help="override [experiment] workers")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = harness.with_overrides(harness.load_config(args.config), args.seed,
                                        args.trials, args.workers)
        if args.command == "beampattern":
            depths = harness.cmd_beampattern(config, args.out)
            for (user, beam, j), depth in depths.items():
                print(f"user {user} {beam:9s} range {j}: max gain {depth:8.2f} dB")
            return 0
        if args.command == "convergence":
            series = harness.cmd_convergence(config, args.out)
            for name, trace in series.items():
                print(f"{name}: {len(trace)} iterations, final objective {trace[-1]:.9g}")
            return 0
        axis = "snr_db" if args.command == "sumrate-snr" else "n_bs"
        result = harness.cmd_sumrate(config, args.out, axis=axis)
    except (ConfigError, OSError) as exc:
        print(f"hybridbf: error: {exc}", file=sys.stderr)
        return 2
    for scheme, value, mean, n_ok, n_fail in result.summary():
        print(f"{scheme:14s} {axis}={value:<8g} mean sum-rate {mean:8.4f} "
              f"({n_ok} ok, {n_fail} failed)")
    return 1 if result.n_failed else 0


if __name__ == "__main__":
    sys.exit(main())
