"""Brute-force ordering chain on finite-dimensional toy problems.

For each n_plus + n_minus toy prints inf over the small sphere, the identity
homotopy bound c_upper and the Nehari-Pankov infimum, plus the (A4) and key
inequality violation counts.

    python3 scripts/toy_chain.py [--cases 1+1 2+2 3+3] [--samples 10000]
"""

import argparse
import time

from linkvar.toylink import ToyProblem, toy_chain


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cases", nargs="+", default=["1+1", "2+2"])
    ap.add_argument("--samples", type=int, default=10_000)
    ap.add_argument("--directions", type=int, default=64)
    ap.add_argument("--density", type=int, default=64)
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args()
    for i, case in enumerate(args.cases):
        n_plus, n_minus = (int(s) for s in case.split("+"))
        t0 = time.perf_counter()
        ch = toy_chain(ToyProblem(n_plus, n_minus), args.directions, args.samples, args.density,
                       rng=[args.seed, i])
        print(f"{case}: {ch.inf_sphere:.10g} <= {ch.c_upper:.10g} <= {ch.nehari_inf:.10g} "
              f"[{'holds' if ch.chain_holds else 'VIOLATED'}] r = {ch.r:.4g}; "
              f"A4 violations {ch.a4['violations']}/{ch.a4['samples']}, "
              f"key inequality violations {ch.key_inequality['violations']}/{ch.key_inequality['samples']}; "
              f"{time.perf_counter() - t0:.1f} s")


if __name__ == "__main__":
    main()
