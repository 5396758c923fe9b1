"""Command-line entry point: ``cellfree simulate --config FILE --out DIR``."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import MODES, SystemConfig, load_config, parse_limit
from .errors import CellFreeError
from .sim import emit_results, run_trials

logger = logging.getLogger("cellfree")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cellfree", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sim = sub.add_parser("simulate", help="run Monte-Carlo trials and write CDF/EE tables")
    sim.add_argument("--config", help="JSON or YAML config file (defaults when omitted)")
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--trials", type=int)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--mode", choices=MODES)
    sim.add_argument("--bits", type=parse_limit, help="DAC resolution or 'inf'")
    sim.add_argument("--fronthaul", type=parse_limit, dest="fronthaul_bpshz",
                     help="fronthaul capacity in bps/Hz or 'inf'")
    sim.add_argument("--format", choices=("csv", "structured"), default="csv")
    sim.add_argument("--workers", type=int)
    sim.add_argument("-v", "--verbose", action="store_true")
    return parser


def _resolve(args) -> SystemConfig:
    config = load_config(args.config) if args.config else SystemConfig()
    overrides = {k: getattr(args, k) for k in ("trials", "seed", "mode", "bits", "fronthaul_bpshz", "workers")
                 if getattr(args, k) is not None}
    return config.replace(**overrides) if overrides else config


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = _resolve(args)
        result = run_trials(config)
        paths = emit_results(result, args.out, args.format)
    except (CellFreeError, OSError) as exc:
        logger.error("%s", exc)
        return 1
    for path in paths:
        logger.info("wrote %s", path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
