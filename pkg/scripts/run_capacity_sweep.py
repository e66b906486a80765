#!/usr/bin/env python3
"""Sweep the carpool lane's unused capacity and report the match rates."""
import argparse
from pathlib import Path

from ridesim.config import bundled_data_path, load_config
from ridesim.experiments import run_capacity_sweep


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", type=Path,
                        default=bundled_data_path("sweep.yaml"))
    parser.add_argument("--levels", type=str, default="1.0,0.75,0.5,0.25")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--replications", type=int, default=None)
    parser.add_argument("--out", type=Path, default=Path("out/sweep"))
    args = parser.parse_args()

    config = load_config(args.config)
    levels = tuple(float(x) for x in args.levels.split(","))
    report = run_capacity_sweep(config, levels=levels,
                                replications=args.replications, seed=args.seed)
    report.write_csv(args.out / "sweep.csv")
    report.write_meta(args.out / "sweep_meta.json")

    print(f"{'unused':>7} {'match rate':>11} {'std':>7} {'riders':>7}")
    for row in report.rows:
        print(f"{row.unused_fraction:>7.2f} {row.mean_match_rate:>11.3f} "
              f"{row.std_match_rate:>7.3f} {row.riders:>7}"
              + (f"  [{row.warning}]" if row.warning else ""))


if __name__ == "__main__":
    main()
