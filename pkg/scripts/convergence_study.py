"""Grid refinement study on the reference problem.

For Nr = Nz in a list of resolutions prints n_minus, mu0, the lowest and
highest-negative eigenvalues and, with --solve, the solved level J(u*).
Observed orders use successive differences of three resolutions r, 2r, 4r.

    python3 scripts/convergence_study.py [--sizes 24 48 96] [--solve]
"""

import argparse
import dataclasses
import math
import warnings

from linkvar.config import load_config
from linkvar.pipeline import build_context, constants_stage, solve_stage


def _orders(vals):
    d = [abs(a - b) for a, b in zip(vals, vals[1:])]
    return [math.log2(a / b) if b > 0 else math.inf for a, b in zip(d, d[1:])]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="configs/reference.ini")
    ap.add_argument("--sizes", type=int, nargs="+", default=[24, 48, 96])
    ap.add_argument("--solve", action="store_true", help="also solve at each resolution (slow)")
    args = ap.parse_args()
    base = load_config(args.config)
    rows = []
    for n in args.sizes:
        cfg = dataclasses.replace(base, grid=dataclasses.replace(base.grid, Nr=n, Nz=n))
        ctx = build_context(cfg)
        ev = ctx.split.eigvals
        row = {"n": n, "n_minus": ctx.split.n_minus, "mu0": ctx.split.mu0, "lam0": ev[0],
               "lam_neg": ev[ctx.split.n_minus - 1]}
        if args.solve:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                _, consts = constants_stage(cfg, ctx)
                row["J"] = solve_stage(cfg, ctx, consts).solve.J_value
        rows.append(row)
        print("  ".join(f"{k} = {v:.10g}" if isinstance(v, float) else f"{k} = {v}" for k, v in row.items()))
    if len(rows) >= 3:
        for key in ("lam0", "lam_neg") + (("J",) if args.solve else ()):
            print(f"observed order of {key}: " + ", ".join(f"{o:.2f}" for o in _orders([r[key] for r in rows])))


if __name__ == "__main__":
    main()
