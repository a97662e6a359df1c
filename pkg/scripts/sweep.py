"""Rounds versus n on G(n, q), next to the reference growth curve."""
import argparse
from fractions import Fraction

from congestlab.harness import SWEEP_HEADER, reference_curve, sweep
from congestlab.listing import ListingParams


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--ns", default="16,24,32,48,64")
    ap.add_argument("--q", type=Fraction, default=Fraction(2, 5))
    ap.add_argument("--p", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--scale", type=Fraction, default=Fraction(1))
    args = ap.parse_args()

    ns = [int(x) for x in args.ns.split(",")]
    rows = sweep(ns, args.q, args.p, args.seed, ListingParams.defaults(args.p, scale=args.scale))
    print(SWEEP_HEADER + f" {'curve':>7}")
    for r in rows:
        print(r.line() + f" {reference_curve(r.n, args.p):>7.2f}")


if __name__ == "__main__":
    main()
