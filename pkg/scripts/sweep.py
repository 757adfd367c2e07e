"""Sweep one hardware parameter of a scenario and write mean fidelity per value.

Example:
    python scripts/sweep.py --config listing3_noisy \
        --param hardware.connection.werner_fidelity --values 0.8 0.85 0.9 0.95 1.0
"""

import argparse
import csv
import sys

from dqcsim.config import apply_overrides, build_scenario, load_config, run_settings
from dqcsim.runtime import run_shots


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config", required=True)
    ap.add_argument("--param", required=True, help="dotted config path")
    ap.add_argument("--values", nargs="+", required=True)
    ap.add_argument("--shots", type=int)
    ap.add_argument("--out", help="CSV file (default stdout)")
    args = ap.parse_args()

    base = load_config(args.config)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    w = csv.writer(out, lineterminator="\n")
    w.writerow([args.param, "mean_fidelity", "final_time_ns"])
    for v in args.values:
        data = apply_overrides(base, [f"{args.param}={v}"])
        seed, shots = run_settings(data)
        res = run_shots(build_scenario(data), args.shots or shots, seed)
        w.writerow([v, format(res.mean_fidelity(), ".17g"), format(res.rows[0].final_time, ".17g")])
    if args.out:
        out.close()


if __name__ == "__main__":
    main()
