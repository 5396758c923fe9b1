"""Rate-CDF sweep over DAC resolution and fronthaul capacity.

Writes one result directory per (mode, B, C) point plus ``medians.csv``
summarizing the median per-user rate bound of each point.

    python3 scripts/rate_cdf_sweep.py --out results/cdf --trials 50
"""

import argparse
import csv
import logging
import math
import warnings
from pathlib import Path

import numpy as np

from cellfree.config import SystemConfig, load_config, parse_limit
from cellfree.sim import format_number, emit_results, run_trials


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--config")
    parser.add_argument("--out", default="results/cdf")
    parser.add_argument("--trials", type=int, default=50)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--bits", nargs="+", type=parse_limit, default=[1, 2, 3, 4, 5, 6, 7, 8, math.inf])
    parser.add_argument("--fronthaul", nargs="+", type=parse_limit, default=[4, 16, 64, 256])
    parser.add_argument("--workers", type=int, default=1)
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    warnings.simplefilter("ignore")

    base = load_config(args.config) if args.config else SystemConfig()
    base = base.replace(trials=args.trials, seed=args.seed, workers=args.workers)
    points = [("cellfree", b, c) for c in args.fronthaul for b in args.bits]
    points += [(mode, b, math.inf) for mode in ("smallcell-mrt", "smallcell-zf", "smallcell-rzf")
               for b in args.bits]

    out = Path(args.out)
    rows = []
    for mode, bits, cap in points:
        config = base.replace(mode=mode, bits=bits, fronthaul_bpshz=cap)
        result = run_trials(config)
        emit_results(result, out / f"{mode}_B{format_number(bits)}_C{format_number(cap)}")
        median = float(np.median(result.rates))
        rows.append((mode, format_number(bits), format_number(cap), format_number(median)))
        logging.info("%-14s B=%-4s C=%-4s median %.3f bps/Hz", mode, format_number(bits), format_number(cap), median)

    with (out / "medians.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mode", "bits", "fronthaul_bpshz", "median_rate_bpshz"])
        writer.writerows(rows)


if __name__ == "__main__":
    main()
