"""End-to-end run on the bundled reference configurations (lambda = 0 and lambda_max / 2).

Runs the ``maxwell`` subcommand (which includes the solve) for both configs and
prints wall times with the headline numbers from the JSON reports.

    python3 scripts/run_reference.py [--out out/reference]
"""

import argparse
import json
import time
from pathlib import Path

from linkvar import cli

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = {"lambda_0": ROOT / "configs" / "reference.ini",
           "lambda_half": ROOT / "configs" / "reference_half_lambda.ini"}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="out/reference")
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args()
    for name, path in CONFIGS.items():
        out = Path(args.out) / name
        t0 = time.perf_counter()
        code = cli.run("maxwell", path, out, seed=args.seed, quiet=True)
        secs = time.perf_counter() - t0
        rep = json.loads((out / "maxwell.json").read_text())
        if code != 0:
            print(f"{name}: exit {code}: {rep.get('error')}")
            continue
        s = rep["solution"]["solve"]
        g = rep["solution"]["geometry_summary"]
        m = rep["maxwell"]
        print(f"{name}: lambda = {s['lambda']:.6g} (lambda_max = {g['lambda_max']:.6g}), {secs:.1f} s")
        print(f"  J(u*) = {s['J_value']:.12g} in [{g['sphere_inf_estimate']:.6g}, {s['c_upper']:.12g}]")
        print(f"  cerami = {s['cerami_residual']:.2e}, pde_rel = {s['pde_residual_rel']:.2e}, "
              f"|||u*||| = {s['tau_norm']:.6g} >= delta/2 = {g['delta'] / 2:.6g}")
        print(f"  r = {g['r_link']:g}, R = {g['R_link']:g}, (A3) margin = {g['a3_margin']:.4g}")
        print(f"  energy gap = {m['energy_match']['relative_gap']:.2e}, divergence orders = "
              f"{', '.join(f'{o:.3f}' for o in m['divergence']['observed_orders'])}")


if __name__ == "__main__":
    main()
