"""Table of the Cerami-boundedness constant K over (eps, rho) for a config.

Prints K / mu0 for every rho = 2^-j at the chosen lambda and eps, marks the
triples that pass, and reports the first passing triple of the search order.

    python3 scripts/k_search.py [--config configs/reference.ini] [--lam-frac 1.0]
"""

import argparse
import warnings

from linkvar.config import load_config
from linkvar.errors import RhoTooLarge
from linkvar.geometry import boundedness_K, k_search
from linkvar.pipeline import build_context, constants_stage


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="configs/reference.ini")
    ap.add_argument("--lam-frac", type=float, default=1.0, help="lambda as a fraction of lambda_max")
    ap.add_argument("--n-rho", type=int, default=12)
    args = ap.parse_args()
    cfg = load_config(args.config)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        ctx = build_context(cfg)
        _, c = constants_stage(cfg, ctx)
    nls = cfg.problem.nonlinearity
    lam = args.lam_frac * c.lambda_max
    print(f"mu0 = {c.mu0:.6g}, kappa = {c.kappa:.6g}, lambda_max = {c.lambda_max:.6g}, lambda = {lam:.6g}")
    eps_list = [c.mu0 / 12 * 2.0 ** -j for j in range(1, 4)]
    print("rho".rjust(12) + "".join(f"eps={e:.3g}".rjust(16) for e in eps_list))
    for j in range(args.n_rho):
        rho = 2.0 ** -j
        row = []
        for eps in eps_list:
            try:
                r = boundedness_K(nls, c.mu0, c.kappa, eps, rho, lam)
                row.append(f"{r.K / c.mu0:.4f}{'*' if r.passed else ' '}")
            except RhoTooLarge:
                row.append("1-lam*g/f<=0")
        print(f"{rho:12.6g}" + "".join(x.rjust(16) for x in row))
    print("(entries are K / mu0; * marks K < mu0)")
    for squared in (False, True):
        res, tried = k_search(nls, c.mu0, c.kappa, c.lambda_max, squared=squared)
        crit = "K < mu0^2" if squared else "K < mu0"
        if res is None:
            print(f"{crit}: no passing triple in {tried} tried")
        else:
            print(f"{crit}: K = {res.K:.6g} at eps = {res.eps:.4g}, rho = {res.rho:.4g}, "
                  f"lambda = {res.lam:.4g} after {tried} triples")


if __name__ == "__main__":
    main()
