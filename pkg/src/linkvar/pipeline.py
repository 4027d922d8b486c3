"""Stage functions shared by the CLI, scripts and tests.

Each stage returns a JSON-ready dict (no timings, so reports are reproducible)
plus any arrays the caller may want to export.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import geometry as geo
from . import maxwell as mx
from . import toylink as toy
from .config import RunConfig
from .errors import GeometryFailure, ValidationError
from .functional import FunctionalContext, pde_residual, pde_residual_scale
from .grid import assemble_operator, build_grid, check_decay, hardy_check
from .nonlinearity import nonlinearity_constants, phi_sup_ratio, verify_axioms
from .solver import MinimaxSolver, SolveReport
from .spectral import eigendecompose

log = logging.getLogger(__name__)


def build_context(cfg: RunConfig) -> FunctionalContext:
    spec = cfg.problem
    g = build_grid(spec, cfg.grid.Nr, cfg.grid.Nz, cfg.grid.Rmax, cfg.grid.Zhalf)
    op = assemble_operator(spec, g)
    split = eigendecompose(op, g)
    return FunctionalContext(g, split, spec, op)


def spectrum_stage(cfg: RunConfig, ctx: Optional[FunctionalContext] = None):
    ctx = ctx or build_context(cfg)
    rep = {"spectrum": ctx.split.metadata()}
    if ctx.spec.K > 2:
        hardy = hardy_check(ctx.grid, ctx.spec.K, rng=np.random.default_rng(cfg.seed))
        rep["hardy"] = dataclasses.asdict(hardy)
    return rep, ctx


def nonlinearity_stage(cfg: RunConfig):
    spec = cfg.problem
    ax = verify_axioms(spec.nonlinearity, lam=spec.lam, N=spec.N)
    return {"axioms": ax.to_dict(), "all_passed": ax.all_passed}, ax


def constants_stage(cfg: RunConfig, ctx: FunctionalContext):
    c = geo.compute_constants(ctx, kappa_samples=cfg.geometry.kappa_samples, seed=cfg.seed)
    nls = cfg.problem.nonlinearity
    ks, n_tried = geo.k_search(nls, c.mu0, c.kappa, c.lambda_max)
    ks2, n_tried2 = geo.k_search(nls, c.mu0, c.kappa, c.lambda_max, squared=True)
    phi = [{"rho": 2.0 ** -j, "sup_ratio": phi_sup_ratio(nls, c.lambda_max, 2.0 ** -j)} for j in range(9)]
    rep = {
        "geometry_constants": c.to_dict(),
        "nonlinearity_constants_at_mu0_over_8": nonlinearity_constants(nls, c.eps).to_dict(),
        "k_search": {"found": ks.to_dict() if ks else None, "triples_tried": n_tried,
                     "criterion": "K < mu0"},
        "k_search_squared": {"found": ks2.to_dict() if ks2 else None, "triples_tried": n_tried2,
                             "criterion": "K < mu0^2"},
        "phi_sup_ratio_halving": phi,
    }
    return rep, c


def resolve_lambda(cfg: RunConfig, consts: geo.GeometryConstants) -> float:
    lam = cfg.problem.lam if cfg.lambda_fraction is None else cfg.lambda_fraction * consts.lambda_max
    if lam != 0.0 and not lam < consts.lambda_max:
        raise ValidationError(f"lambda = {lam:g} is not below lambda_max = {consts.lambda_max:g}")
    return float(lam)


def geometry_stage(cfg: RunConfig, ctx: FunctionalContext, consts: geo.GeometryConstants):
    lam = resolve_lambda(cfg, consts)
    ctx_l = ctx.with_lambda(lam)
    rep = geo.check_geometry(ctx_l, consts, dataclasses.replace(cfg.geometry))
    if not rep.a3_pass:
        raise GeometryFailure(f"(A3) margin {rep.margin:g} below {cfg.geometry.margin:g}")
    return rep, ctx_l


@dataclass
class SolveOutcome:
    report: dict
    solve: SolveReport
    geometry: geo.GeometryReport
    ctx: FunctionalContext


def solve_stage(cfg: RunConfig, ctx: FunctionalContext, consts: geo.GeometryConstants) -> SolveOutcome:
    grep, ctx_l = geometry_stage(cfg, ctx, consts)
    solver = MinimaxSolver(ctx_l, dataclasses.replace(cfg.solver))
    sr = solver.solve(grep.boundary.R_link, grep.delta.delta, inf_sphere=grep.link.inf_estimate)
    u = sr.u_star.values
    res_neg = pde_residual(ctx_l, -u) / pde_residual_scale(ctx_l, -u)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        frac = check_decay(ctx_l.grid, u)
    rep = {
        "solve": sr.to_dict(),
        "geometry_summary": {
            "r_link": grep.link.r_link, "R_link": grep.boundary.R_link, "delta": grep.delta.delta,
            "sphere_inf_estimate": grep.link.inf_estimate, "a3_margin": grep.margin,
            "lambda_max": consts.lambda_max,
        },
        "sign_symmetry_pde_residual_rel": res_neg,
        "boundary_mass_fraction": frac,
        "decay_warnings": [str(w.message) for w in caught],
        "max_abs_u": float(np.max(np.abs(u))),
    }
    return SolveOutcome(rep, sr, grep, ctx_l)


def maxwell_stage(cfg: RunConfig, ctx_l: FunctionalContext, u):
    mc = cfg.maxwell
    em = mx.energy_match(ctx_l, u)
    spacings = [4 * mc.spacing, 2 * mc.spacing, mc.spacing]
    div = [mx.divergence_residual(mx.reconstruct_E(ctx_l.grid, u, ctx_l.spec, h=h, box_frac=mc.box_frac))
           for h in spacings]
    orders = [math.log2(div[i] / div[i + 1]) if div[i + 1] > 0 else math.inf for i in range(2)]
    L = mx.em_energy_L(ctx_l, u, mc.omega, np.linspace(0.0, math.pi / mc.omega, mc.t_samples))
    tol = 1e-8 * abs(L.L[0]) + L.slack
    rep = {
        "energy_match": em.to_dict(),
        "divergence": {"spacings": spacings, "residuals": div, "observed_orders": orders,
                       "default_lattice_residual": div[-1]},
        "L": {"omega": mc.omega, "L0": float(L.L[0]), "max_deviation": L.max_deviation,
              "variation_coefficient": L.variation_coefficient, "slack": L.slack,
              "constant_within_tolerance": L.max_deviation <= tol,
              "cos_term": L.cos_term, "sin_term": L.sin_term},
    }
    field_rot = mx.reconstruct_E(ctx_l.grid, u, ctx_l.spec, n_phi=mc.n_phi, omega=mc.omega)
    return rep, field_rot, L


def toy_stage(cfg: RunConfig):
    tc = cfg.toy
    out = []
    for i, (n_plus, n_minus) in enumerate(tc.parsed_cases()):
        tp = toy.ToyProblem(n_plus, n_minus)
        ch = toy.toy_chain(tp, tc.n_directions, tc.samples, tc.grid_density, tc.R,
                           rng=np.random.default_rng([cfg.seed, i]))
        out.append(ch.to_dict())
    return {"chains": out, "all_hold": all(c["chain_holds"] for c in out)}
