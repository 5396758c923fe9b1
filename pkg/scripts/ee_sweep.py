"""Energy efficiency of the cell-free system versus DAC resolution.

    python3 scripts/ee_sweep.py --out results/ee --fronthaul 32
"""

import argparse
import csv
import logging
import warnings
from pathlib import Path

from cellfree.config import SystemConfig, load_config, parse_limit
from cellfree.sim import EE_COLUMNS, format_number, ee_rows, run_trials


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--config")
    parser.add_argument("--out", default="results/ee")
    parser.add_argument("--trials", type=int, default=50)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--bits", nargs="+", type=int, default=list(range(1, 11)))
    parser.add_argument("--fronthaul", nargs="+", type=parse_limit, default=[32])
    parser.add_argument("--workers", type=int, default=1)
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    warnings.simplefilter("ignore")

    base = load_config(args.config) if args.config else SystemConfig()
    base = base.replace(trials=args.trials, seed=args.seed, workers=args.workers, mode="cellfree")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "ee_vs_bits.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EE_COLUMNS)
        for cap in args.fronthaul:
            for bits in args.bits:
                row = ee_rows(run_trials(base.replace(bits=bits, fronthaul_bpshz=cap)))[0]
                writer.writerow([format_number(row[c]) for c in EE_COLUMNS])
                logging.info("C=%s B=%d  EE %.4g bits/J", format_number(cap), bits, row["ee_bits_per_joule"])


if __name__ == "__main__":
    main()
