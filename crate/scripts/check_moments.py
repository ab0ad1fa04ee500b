#!/usr/bin/env python3
"""Compare the sample variance of an exported path column with the OU closed form.

The column is read as X(t) = value - level (or log(value / level) with --log),
which is a pure OU factor when the config has no spike factor and a constant
seasonal level. Exits 0 when the sample variance is within 4 standard errors.
"""

import argparse
import csv
import math
import statistics
import sys


def main() -> int:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("csv")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--level", type=float, required=True)
    p.add_argument("--column", type=int, default=-1, help="grid index, default last")
    p.add_argument("--log", action="store_true", help="factor enters through exp")
    args = p.parse_args()

    with open(args.csv, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        times = [float(t) for t in header[1:]]
        col = args.column if args.column >= 0 else len(times) + args.column
        values = [float(row[1 + col]) for row in reader]

    t = times[col] - times[0]
    if args.log:
        xs = [math.log(v / args.level) for v in values]
    else:
        xs = [v - args.level for v in values]
    n = len(xs)
    if n < 3:
        print("FAIL need at least 3 paths", file=sys.stderr)
        return 1
    exact = args.sigma**2 * -math.expm1(-2.0 * args.alpha * t) / (2.0 * args.alpha)
    sample = statistics.variance(xs)
    # Gaussian factor: Var(s^2) = 2 var^2 / (n - 1).
    se = exact * math.sqrt(2.0 / (n - 1))
    z = (sample - exact) / se if se > 0 else 0.0
    ok = abs(z) <= 4.0
    print(f"{'PASS' if ok else 'FAIL'} t={t:.6g} n={n} sample={sample:.6g} exact={exact:.6g} z={z:.3f}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
