"""Run the full listing pipeline on every corpus graph and print one row per (graph, p)."""
import argparse
import sys
import time
from fractions import Fraction

from congestlab.generators import corpus
from congestlab.harness import check_all
from congestlab.listing import ListingParams


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--p", type=int, nargs="+", default=[3, 4, 5])
    ap.add_argument("--scale", type=Fraction, default=Fraction(1))
    ap.add_argument("--only", help="substring filter on graph names")
    args = ap.parse_args()

    print(f"{'graph':<16} {'p':>2} {'n':>4} {'m':>6} {'cliques':>8} {'rounds':>7} {'depth':>5} {'sec':>6}  verdict")
    failed = 0
    for name, g in corpus():
        if args.only and args.only not in name:
            continue
        for p in args.p:
            t0 = time.perf_counter()
            verdict, res = check_all(g, p, ListingParams.defaults(p, scale=args.scale))
            dt = time.perf_counter() - t0
            bad = [c.name for c in verdict.checks if not c.ok]
            failed += bool(bad)
            rounds = res.accountant.report().rounds if res else -1
            cl = len(res.cliques) if res else -1
            depth = res.depth if res else -1
            print(f"{name:<16} {p:>2} {g.n:>4} {g.m:>6} {cl:>8} {rounds:>7} {depth:>5} {dt:>6.2f}  "
                  + ("pass" if not bad else "FAIL " + ",".join(bad)))
    print(f"failures: {failed}")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
