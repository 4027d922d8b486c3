import dataclasses
import math

import numpy as np
import pytest

from linkvar.errors import GeometryFailure, RhoTooLarge, ValidationError
from linkvar.geometry import (
    GeometryConstants, GeometrySettings, boundedness_K, check_geometry, compute_constants, energy_batch,
    find_R, find_delta, k_search, lambda_threshold, minus_ray_sup, ray_values,
    sphere_infimum, sphere_optimize, tau_ball_samples,
)
from linkvar.nonlinearity import NonlinearitySpec, phi_sup_ratio
from linkvar.spectral import tau_norm_coeffs

FAST = GeometrySettings(n_starts=8, delta_samples=2000, ray_samples=200, resample=200)


@pytest.fixture(scope="module")
def small_consts(small_ctx):
    return compute_constants(small_ctx, kappa_samples=200)


@pytest.fixture(scope="module")
def small_report(small_ctx, small_consts):
    return check_geometry(small_ctx, small_consts, FAST)


def _consts(kappa=1.1, q=3.0, CF=0.5, CG=0.5):
    return GeometryConstants(1.0, kappa, q, 0.125, CF, CG, 0.0, 0)


def test_lambda_threshold_arithmetic():
    assert lambda_threshold(_consts()) == pytest.approx(1 / (1.1 * 8), rel=1e-15)
    assert lambda_threshold(_consts()) == pytest.approx(0.1136, abs=1e-4)


def test_lambda_threshold_monotone():
    base = lambda_threshold(_consts())
    assert lambda_threshold(_consts(kappa=1.3)) < base
    assert lambda_threshold(_consts(q=3.5)) < base


def test_constants_formula_exact(small_consts):
    c = small_consts
    assert c.lambda_max == c.C_F / (c.kappa * 2 ** c.q * c.C_G)
    assert c.eps == c.mu0 / 8
    assert c.C_G >= c.C_F


def test_sphere_optimize_on_quadratic():
    # minimize x^T D x on the unit sphere: the smallest diagonal entry wins
    D = np.array([3.0, 1.0, 2.0, 5.0])
    fg = lambda x: (float(x @ (D * x)), 2 * D * x)
    retract = lambda y: y / np.linalg.norm(y)
    x, v, _ = sphere_optimize(fg, np.ones(4) / 2, 1.0, retract, maxit=200, tol=1e-12)
    assert v == pytest.approx(1.0, abs=1e-10)
    assert abs(abs(x[1]) - 1) < 1e-5


def test_tiny_sphere_passes(small_ctx):
    r = 1e-4
    v, _ = sphere_infimum(small_ctx, r, FAST, np.random.default_rng(0))
    assert v >= r * r / 4


def test_link_radius_resampled(small_report):
    link = small_report.link
    assert link.inf_estimate >= link.r_link ** 2 / 4
    assert link.resample_min >= link.r_link ** 2 / 4
    assert link.resample_min >= link.inf_estimate - 1e-12


def test_delta_needs_positive_level(small_ctx):
    with pytest.raises(GeometryFailure):
        find_delta(small_ctx, 1.0, 0.0, FAST)


def test_boundary_pieces_nonpositive(small_report):
    b = small_report.boundary
    assert b.sup_ball <= 0.0 and b.sup_sphere <= 0.0
    assert b.R_link > small_report.link.r_link


def test_find_R_rejects_minus_direction(small_ctx):
    e = np.zeros(len(small_ctx.split.eigvals))
    e[0] = 1.0
    with pytest.raises(ValidationError):
        find_R(small_ctx, e, 1.0, FAST)


def test_rays_go_to_minus_infinity(small_ctx):
    e = np.zeros(len(small_ctx.split.eigvals))
    e[small_ctx.split.n_minus] = 1.0
    vals = ray_values(small_ctx, e, n_rays=8, rng=0)
    assert np.all(vals[:, -1] < -1e3)
    assert np.all(np.diff(vals[:, -4:], axis=1) < 0)


def test_delta_bound_and_guard(small_report):
    d, link = small_report.delta, small_report.link
    assert d.delta == pytest.approx(min(math.sqrt(link.inf_estimate / 3), link.r_link / 2))
    assert d.delta <= link.r_link / 2
    assert d.sup_sampled < d.bound
    assert 0.75 * d.delta ** 2 < d.bound


def test_tau_ball_samples_inside_ball(small_ctx):
    X = tau_ball_samples(small_ctx, 0.3, 500, np.random.default_rng(1))
    s = small_ctx.split
    taus = [tau_norm_coeffs(s, s.from_x(x)) for x in X]
    assert max(taus) <= 0.3 * (1 + 1e-12)


def test_energy_batch_matches_single(small_ctx, rng):
    X = rng.standard_normal((5, len(small_ctx.split.eigvals))) * 0.1
    ref = [small_ctx.energy_x(x) for x in X]
    assert np.allclose(energy_batch(small_ctx, X, chunk=2), ref, rtol=1e-12)


def test_minus_ray_sup(small_ctx, small_consts):
    for lam in (0.0, small_consts.lambda_max):
        assert minus_ray_sup(small_ctx.with_lambda(lam), 300, rng=0) <= 0.0


def test_a3_composite(small_report):
    assert small_report.a3_pass
    assert small_report.margin >= 1e-6
    d = small_report.to_dict()
    assert d["a3_pass"] and "note" in d


def test_a3_half_lambda(small_ctx, small_consts):
    rep = check_geometry(small_ctx.with_lambda(small_consts.lambda_max / 2), small_consts, FAST)
    assert rep.a3_pass and rep.lambda_ok
    assert math.isfinite(rep.boundary.R_link)


def test_K_limit_structure():
    spec = NonlinearitySpec()
    eps = 0.3 / 24
    Ks = [boundedness_K(spec, 0.3, 1.2, eps, 2.0 ** -j, 0.0).K for j in range(2, 12)]
    assert all(b < a for a, b in zip(Ks, Ks[1:]))
    assert Ks[-1] == pytest.approx(eps, rel=1e-2)


def test_K_terms_sum():
    r = boundedness_K(NonlinearitySpec(), 0.3, 1.2, 0.01, 0.125, 0.01)
    t = r.terms
    assert r.K == pytest.approx(t["eps_term"] + t["f_growth_term"] + t["g_growth_term"] + t["D_term"])
    assert t["phi_sup_ratio"] == pytest.approx(phi_sup_ratio(NonlinearitySpec(), 0.01, 0.125))


def test_rho_too_large():
    with pytest.raises(RhoTooLarge):
        boundedness_K(NonlinearitySpec(), 0.3, 1.2, 0.01, 0.01, 10.0)


def test_phi_ratio_nondecreasing_in_rho():
    s = NonlinearitySpec()
    vals = [phi_sup_ratio(s, 0.01, r) for r in np.geomspace(1e-3, 1, 20)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_reference_k_search(ref_constants):
    rep, c, _ = ref_constants
    found = rep["k_search"]["found"]
    assert found is not None and found["K"] < c.mu0
    assert found["eps"] == pytest.approx(c.mu0 / 24)


def test_reference_constants_regression(ref_constants):
    c = ref_constants[1]
    assert c.mu0 == pytest.approx(0.3056526, rel=1e-6)
    assert c.C_F == pytest.approx(0.19547, abs=1e-4)
    assert c.C_G == pytest.approx(1.0, abs=1e-9)
    assert 1.0 <= c.kappa / 1.1 <= 1.2


def test_k_search_prefers_large_lambda(small_consts):
    c = small_consts
    res, tried = k_search(NonlinearitySpec(), c.mu0, c.kappa, c.lambda_max)
    assert res is not None and res.passed and tried >= 1
    assert res.lam == c.lambda_max
