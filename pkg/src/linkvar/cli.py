"""Command line entry point: ``linkvar <subcommand> --config PATH``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path
from typing import Optional

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from . import pipeline as pl
from .config import RunConfig, load_config
from .errors import GeometryFailure, LinkvarError, SolverFailure, ValidationError
from .grid import write_field_csv
from .io import write_json, write_snapshot
from .maxwell import write_field3_csv, write_L_csv

log = logging.getLogger("linkvar")

COMMANDS = ("spectrum", "verify-nonlinearity", "constants", "check-geometry", "solve", "maxwell", "toy")
EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER, EXIT_GEOMETRY = 0, 2, 3, 4


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, ValidationError):
        return EXIT_VALIDATION
    if isinstance(exc, GeometryFailure):
        return EXIT_GEOMETRY
    if isinstance(exc, SolverFailure):
        return EXIT_SOLVER
    return EXIT_VALIDATION


def _say(quiet: bool, msg: str):
    if not quiet:
        print(msg)


def _execute(cmd: str, cfg: RunConfig, out: Path, quiet: bool) -> tuple[dict, int]:
    """Run one subcommand; returns (report body, exit code)."""
    if cmd == "verify-nonlinearity":
        rep, ax = pl.nonlinearity_stage(cfg)
        for name, ok in ax.checks.items():
            _say(quiet, f"{name:32s} {'PASS' if ok else 'FAIL'}")
        return rep, EXIT_OK if ax.all_passed else EXIT_VALIDATION
    if cmd == "toy":
        rep = pl.toy_stage(cfg)
        for ch in rep["chains"]:
            _say(quiet, f"toy {ch['n_plus']}+{ch['n_minus']}: inf_S J = {ch['inf_sphere']:.10g} <= "
                        f"c_upper = {ch['c_upper']:.10g} <= inf_N J = {ch['nehari_inf']:.10g}  "
                        f"[{'holds' if ch['chain_holds'] else 'VIOLATED'}]")
        return rep, EXIT_OK if rep["all_hold"] else EXIT_SOLVER

    rep_spec, ctx = pl.spectrum_stage(cfg)
    if cmd == "spectrum":
        ev = ctx.split.eigvals
        path = out / "eigenvalues.csv"
        np.savetxt(path, np.column_stack([np.arange(len(ev)), ev]), delimiter=",",
                   header="index,eigenvalue", comments="", fmt=["%d", "%.17g"])
        m = rep_spec["spectrum"]
        _say(quiet, f"{m['n_modes']} modes, {m['n_minus']} negative, mu0 = {m['mu0']:.6g}")
        return rep_spec, EXIT_OK

    rep_c, consts = pl.constants_stage(cfg, ctx)
    body = {"spectrum": rep_spec["spectrum"], "constants": rep_c}
    if cmd == "constants":
        found = rep_c["k_search"]["found"]
        _say(quiet, f"kappa = {consts.kappa:.6g}, lambda_max = {consts.lambda_max:.6g}")
        _say(quiet, "K-search: " + (f"K = {found['K']:.6g} < mu0 = {consts.mu0:.6g} at "
                                    f"(eps, rho, lambda) = ({found['eps']:.4g}, {found['rho']:.4g}, {found['lam']:.4g})"
                                    if found else "no passing triple"))
        return body, EXIT_OK if found else EXIT_GEOMETRY
    if cmd == "check-geometry":
        grep, _ = pl.geometry_stage(cfg, ctx, consts)
        body["geometry"] = grep.to_dict()
        _say(quiet, f"r = {grep.link.r_link:g}, R = {grep.boundary.R_link:g}, delta = {grep.delta.delta:.6g}, "
                    f"(A3) margin = {grep.margin:.6g}")
        return body, EXIT_OK

    outcome = pl.solve_stage(cfg, ctx, consts)
    u = outcome.solve.u_star.values
    body["solution"] = outcome.report
    write_field_csv(out / "solution.csv", ctx.grid, u, name="u")
    write_snapshot(out / "solution.lnkv", u)
    s = outcome.solve
    _say(quiet, f"J(u*) = {s.J_value:.12g}, cerami = {s.cerami_residual:.3e}, |||u*||| = {s.tau_norm_value:.6g}, "
                f"accepted = {s.accepted}")
    for w in outcome.report["decay_warnings"]:
        log.warning(w)
    if cmd == "solve":
        return body, EXIT_OK if s.accepted else EXIT_SOLVER
    rep_m, field3, L = pl.maxwell_stage(cfg, outcome.ctx, u)
    body["maxwell"] = rep_m
    write_field3_csv(out / "field3d.csv", field3, stride=cfg.maxwell.export_stride)
    write_L_csv(out / "L.csv", L)
    em = rep_m["energy_match"]
    _say(quiet, f"E(E) = {em['E_value']:.12g}, J(u) = {em['J_value']:.12g}, gap = {em['relative_gap']:.2e}; "
                f"div residuals {', '.join(f'{d:.2e}' for d in rep_m['divergence']['residuals'])}")
    return body, EXIT_OK


def run(cmd: str, config_path, out=None, seed: Optional[int] = None, threads: Optional[int] = None,
        quiet: bool = False) -> int:
    if cmd not in COMMANDS:
        print(f"unknown subcommand {cmd!r}", file=sys.stderr)
        return EXIT_VALIDATION
    env_out = os.environ.get("LINKVAR_OUT")
    out = Path(env_out or out or "out")
    out.mkdir(parents=True, exist_ok=True)
    report_path = out / f"{cmd.replace('-', '_')}.json"
    report = {"command": cmd, "version": __version__}
    try:
        cfg = load_config(config_path)
        if seed is not None:
            cfg = cfg.with_seed(seed)
        if threads is not None:
            cfg = dataclasses.replace(cfg, threads=threads)
        report["config_hash"] = cfg.config_hash()
        report["config"] = cfg.canonical()
        with threadpool_limits(limits=cfg.threads):
            body, code = _execute(cmd, cfg, out, quiet)
        report.update(body)
    except LinkvarError as exc:
        code = exit_code_for(exc)
        report["error"] = {"type": type(exc).__name__, "message": str(exc)}
        print(f"linkvar {cmd}: {type(exc).__name__}: {exc}", file=sys.stderr)
    report["exit_code"] = code
    write_json(report_path, report)
    return code


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="linkvar", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="INI run configuration")
        p.add_argument("--out", default="out", help="output directory (LINKVAR_OUT overrides)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--quiet", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return run(args.command, args.config, args.out, args.seed, args.threads, args.quiet)


if __name__ == "__main__":
    raise SystemExit(main())
