#!/usr/bin/env python3
"""Escape rates of shrinking cylinders and their ratio to the hole measure."""

import argparse
import sys

from hitlab.engine import NonConvergenceError, compile_hole, escape_rate
from hitlab.measures import builtin_measures
from hitlab.symbolic import HoleSpec, PointSpec, SymbolicSystem


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--measure", default="bernoulli-3/10", choices=sorted(builtin_measures()))
    ap.add_argument("--period", default="0", help="digits of the periodic point")
    ap.add_argument("--n-max", type=int, default=14)
    args = ap.parse_args(argv)

    system = SymbolicSystem.full_shift(2)
    mu = builtin_measures()[args.measure].to_float()
    z = PointSpec.periodic([int(c) for c in args.period])
    print(f"{'n':>3} {'mu(U_n)':>12} {'rho':>14} {'rho/mu':>10} {'iters':>7}")
    for n in range(1, args.n_max + 1):
        chain = compile_hole(system, mu, HoleSpec(frozenset([z.prefix(n)])))
        try:
            er = escape_rate(chain)
        except NonConvergenceError as exc:
            print(f"{n:3d} {float(chain.hole_measure):12.4e}  {exc}")
            continue
        print(f"{n:3d} {er.hole_measure:12.4e} {er.rho:14.6e} {er.rho / er.hole_measure:10.6f} {er.iterations:7d}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
