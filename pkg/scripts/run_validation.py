#!/usr/bin/env python3
"""Reproduce the flow-distribution validation table on the bundled testbed."""
import argparse
from pathlib import Path

from ridesim.config import bundled_data_path, load_config
from ridesim.experiments import run_validation


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", type=Path,
                        default=bundled_data_path("validation.yaml"))
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--replications", type=int, default=None)
    parser.add_argument("--out", type=Path, default=Path("out/validation"))
    args = parser.parse_args()

    config = load_config(args.config)
    report = run_validation(config, replications=args.replications,
                            seed=args.seed)
    report.write_csv(args.out / "validation.csv")
    report.write_meta(args.out / "validation_meta.json")

    print(f"{'link':>4} {'real':>8} {'simulated':>10} {'error':>8}")
    for link_id, real, sim, err in report.rows():
        print(f"{link_id:>4} {real:>8.3f} {sim:>10.3f} {err:>8.3f}")
    print(f"mean absolute error: {report.mean_absolute_error:.4f}")
    print(f"chi-squared {report.chi_squared:.3f} vs critical "
          f"{report.critical_value:.3f} at alpha={report.alpha}: "
          f"{'reject' if report.reject else 'cannot reject'} H0")


if __name__ == "__main__":
    main()
