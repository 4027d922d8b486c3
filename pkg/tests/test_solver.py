import dataclasses
import math

import numpy as np
import pytest

from linkvar.errors import CollapseToZero, InnerDivergence, ValidationError
from linkvar.functional import FunctionalContext, J, pde_residual, pde_residual_scale
from linkvar.geometry import GeometrySettings, check_geometry, compute_constants
from linkvar.solver import MinimaxSolver, SolverConfig, inner_maximize, refine

FAST = GeometrySettings(n_starts=8, delta_samples=2000, ray_samples=200, resample=200)


@pytest.fixture(scope="module")
def small_geometry(small_ctx):
    consts = compute_constants(small_ctx, kappa_samples=200)
    return check_geometry(small_ctx, consts, FAST), consts


@pytest.fixture(scope="module")
def small_solution(small_ctx, small_geometry):
    rep = small_geometry[0]
    return MinimaxSolver(small_ctx).solve(rep.boundary.R_link, rep.delta.delta, inf_sphere=rep.link.inf_estimate)


def _e_plus(ctx, k=0):
    e = np.zeros(len(ctx.split.eigvals))
    e[ctx.split.n_minus + k] = 1.0
    return e


def test_inner_quadratic_hook(small_ctx):
    c = small_ctx
    quad = FunctionalContext(c.grid, c.split, c.spec, c.op, quadratic_only=True)
    R = 3.0
    res = inner_maximize(quad, _e_plus(quad), R)
    # J = t^2/2 - |y|^2/2 on the ball: the maximum sits at t = R, y = 0
    assert res.value == pytest.approx(R * R / 2, rel=1e-12)
    assert res.t == pytest.approx(R, rel=1e-12)
    assert np.abs(res.y).max() < 1e-10
    assert res.on_boundary and res.outward


def test_inner_dominates_ray_closed_form(small_ctx):
    # along y = 0, J(t e) = t^2/2 - A t^4/4 with A = int |u_e|^4, maximal value 1/(4A)
    e = _e_plus(small_ctx)
    ue = small_ctx.grid_from_x(e)
    A = float(np.sum(small_ctx.w * ue ** 4))
    res = inner_maximize(small_ctx, e, 100.0)
    assert res.value >= 1.0 / (4 * A) * (1 - 1e-12)
    assert not res.on_boundary
    assert res.proj_grad_norm < 1e-9


def test_inner_point_is_slice_critical(small_ctx):
    solver = MinimaxSolver(small_ctx)
    res = solver.inner_maximize(_e_plus(small_ctx, 2), 100.0)
    g = small_ctx.gradient_x(res.x, res.u)
    m = small_ctx.split.n_minus
    # stationary in the X- directions and along e
    assert np.abs(g[:m]).max() < 1e-8
    assert abs(g[m + 2]) < 1e-8


def test_inner_value_bound(small_ctx):
    with pytest.raises(InnerDivergence):
        inner_maximize(small_ctx, _e_plus(small_ctx), 100.0, value_bound=1e-6)


@pytest.mark.parametrize("bad", ["minus", "scale"])
def test_inner_rejects_bad_direction(small_ctx, bad):
    e = _e_plus(small_ctx)
    if bad == "minus":
        e[0] = 0.1
        e /= np.linalg.norm(e)
    else:
        e *= 2.0
    with pytest.raises(ValidationError):
        inner_maximize(small_ctx, e, 10.0)


def test_refine_from_zero_collapses(small_ctx):
    with pytest.raises(CollapseToZero):
        refine(small_ctx, np.zeros(small_ctx.grid.shape), delta=0.1)


def test_small_solve_accepted(small_solution, small_geometry):
    rep = small_solution
    assert rep.accepted, rep.checks
    assert rep.cerami_residual < 1e-8
    assert rep.tau_norm_value >= small_geometry[0].delta.delta / 2
    assert 0 < rep.J_value <= rep.c_upper + 1e-8 * rep.c_upper
    assert rep.J_value >= small_geometry[0].link.inf_estimate


def test_phi_monotone_and_short(small_solution):
    h = np.asarray(small_solution.phi_history)
    assert np.all(np.diff(h) <= 1e-12 * abs(h[0]))
    assert small_solution.iterations["outer"] < 500


def test_refine_at_solution_is_idle(small_ctx, small_solution):
    rep = refine(small_ctx, small_solution.u_star.values, delta=small_solution.delta)
    assert rep.iterations["refine"] == 0
    assert rep.J_value == pytest.approx(small_solution.J_value, rel=1e-12)


def test_sign_symmetry(small_ctx, small_solution):
    u = small_solution.u_star.values
    assert J(small_ctx, -u) == pytest.approx(J(small_ctx, u), rel=1e-13)
    assert pde_residual(small_ctx, -u) / pde_residual_scale(small_ctx, -u) < 1e-6


def test_nehari_pankov_identities(small_solution):
    ic = small_solution.identity_checks
    scale = 1 + small_solution.norm_X ** 2
    assert abs(ic["dJ_u_u"]) < 1e-8 * scale
    assert abs(ic["dJ_u_u_direct"]) < 1e-8 * scale
    assert ic["max_abs_dJ_u_ek"] < 1e-8 * scale
    assert ic["quadratic_form_identity_gap"] < 1e-10


def test_gradient_direction_same_level(small_ctx, small_geometry, small_solution):
    rep = small_geometry[0]
    cfg = dataclasses.replace(SolverConfig(), direction="gradient")
    alt = MinimaxSolver(small_ctx, cfg).solve(rep.boundary.R_link, rep.delta.delta)
    assert alt.J_value == pytest.approx(small_solution.J_value, rel=1e-8)


@pytest.mark.parametrize("which", ["solved_zero", "solved_half"])
def test_reference_solutions(which, request):
    out, _ = request.getfixturevalue(which)
    sr = out.solve
    assert sr.accepted, sr.checks
    assert sr.cerami_residual < 1e-8
    assert sr.pde_residual_rel < 1e-6
    assert sr.tau_norm_value >= sr.delta / 2
    assert out.report["sign_symmetry_pde_residual_rel"] < 1e-6
    assert out.geometry.link.inf_estimate <= sr.J_value <= sr.c_upper * (1 + 1e-8)


def test_reference_levels(solved_zero, solved_half):
    j0, jh = solved_zero[0].solve.J_value, solved_half[0].solve.J_value
    assert j0 == pytest.approx(56.0547140157, rel=1e-9)
    # the -lambda g term raises the level
    assert jh > j0
    assert math.isfinite(jh)
