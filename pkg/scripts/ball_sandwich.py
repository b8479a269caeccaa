#!/usr/bin/env python3
"""Bracket L(alpha, s) for metric balls of the doubling map between two cylinder unions."""

import argparse
import sys
from fractions import Fraction

from hitlab.balls import l_ball, theta_ball, doubling_period, thue_morse_real
from hitlab.measures import MeasureModel


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--center", default="0", help="rational centre, or 'thue-morse'")
    ap.add_argument("--q", default="3/10", help="weight of digit 0 in the coding measure")
    ap.add_argument("--alpha", type=float, default=1.0)
    ap.add_argument("--s", type=float, default=1.0)
    ap.add_argument("--k-min", type=int, default=3)
    ap.add_argument("--k-max", type=int, default=10, help="finest radius is 2^-k_max")
    ap.add_argument("--mc-trials", type=int, default=0)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args(argv)

    z = thue_morse_real() if args.center == "thue-morse" else Fraction(args.center)
    q = Fraction(args.q)
    mu = MeasureModel.bernoulli([q, 1 - q])
    radii = [Fraction(1, 2 ** k) for k in range(args.k_min, args.k_max + 1)]
    curve = l_ball(z, radii, args.alpha, args.s, mu, mc_trials=args.mc_trials, master_seed=args.seed)

    print(f"{'r':>8} {'n':>3} {'mu(B)':>10} {'t':>9} {'L_low':>8} {'L_high':>8} {'Monte Carlo':>22} ok")
    for p in curve.per_r:
        mc = "" if p.mc is None else f"{p.mc[0]:.4f} [{p.mc[1]:.3f},{p.mc[2]:.3f}]"
        low = "   -    " if p.low is None else f"{p.low:8.4f}"
        print(f"{str(p.r):>8} {p.n:3d} {p.ball_mass:10.3e} {p.t:9d} {low} {p.high:8.4f} {mc:>22} {p.contained}")
    per = doubling_period(z)
    if per is not None:
        est = theta_ball(z, per, radii, mu)
        print(f"period {per}: ball theta -> {float(est.limit):.6f}, so L should tend to {1 - float(est.limit):.6f}")
    for w in curve.warnings:
        print("warning:", w)
    return 0


if __name__ == "__main__":
    sys.exit(main())
