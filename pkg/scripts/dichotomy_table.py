#!/usr/bin/env python3
"""Print the extrapolated L(alpha, s) at a periodic and at a non-periodic point.

The periodic rows should approach 1 - theta, the Thue-Morse rows 1.
"""

import argparse
import csv
import sys

from hitlab.measures import builtin_measures
from hitlab.recurrence import l_alpha_s, localized_escape_rate, theta
from hitlab.symbolic import PointSpec, SymbolicSystem

CASES = [
    ("0^inf", PointSpec.periodic([0]), 1, "bernoulli-3/10"),
    ("(01)^inf", PointSpec.periodic([0, 1]), 2, "bernoulli-1/2"),
    ("(01)^inf", PointSpec.periodic([0, 1]), 2, "markov"),
    ("thue-morse", PointSpec.stream("thue-morse"), None, "bernoulli-1/2"),
]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-max", type=int, default=14)
    ap.add_argument("--alpha", type=float, nargs="+", default=[0.5, 1.0, 2.0])
    ap.add_argument("--s", type=float, nargs="+", default=[1.0, 2.0])
    ap.add_argument("--csv", help="also write the table here")
    args = ap.parse_args(argv)

    system = SymbolicSystem.full_shift(2)
    mus = builtin_measures()
    rows = []
    for label, z, p, mname in CASES:
        mu = mus[mname]
        target = 1.0 if p is None else 1 - float(theta(z, p, mu, range(p, args.n_max + 1)).limit)
        ns = range(1, args.n_max + 1)
        for alpha in args.alpha:
            for s in args.s:
                c = l_alpha_s(z, alpha, s, mu, system, ns)
                rows.append((label, mname, alpha, s, c.extrapolated, target, c.converged))
        c = localized_escape_rate(z, mu, system, ns)
        rows.append((label, mname, "inf", "-", c.extrapolated, target, c.converged))

    print(f"{'point':<11} {'measure':<15} {'alpha':>5} {'s':>4} {'L':>9} {'target':>8} conv")
    for r in rows:
        print(f"{r[0]:<11} {r[1]:<15} {r[2]!s:>5} {r[3]!s:>4} {r[4]:9.5f} {r[5]:8.4f} {r[6]}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["point", "measure", "alpha", "s", "L", "target", "converged"])
            w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
