import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from linkvar.errors import ValidationError
from linkvar.toylink import (
    ToyProblem, nehari_point, sphere_grid, toy_c_upper, toy_chain, toy_check_A4, toy_key_inequality,
    toy_link_radius, toy_nehari_infimum, toy_sphere_inf,
)


@pytest.mark.parametrize("d,half", [(1, False), (2, False), (2, True), (3, False), (3, True), (4, True)])
def test_sphere_grid_unit_and_nested(d, half):
    coarse, fine = sphere_grid(d, 8, half), sphere_grid(d, 16, half)
    assert np.allclose(np.linalg.norm(fine, axis=1), 1.0)
    if half:
        assert np.all(fine[:, 0] >= -1e-15)
    # every coarse node reappears on the refined grid
    dist = np.min(np.linalg.norm(coarse[:, None, :] - fine[None, :, :], axis=2), axis=1)
    assert dist.max() < 1e-12


@given(arrays(np.float64, 4, elements=st.floats(-3, 3)), arrays(np.float64, 4, elements=st.floats(-1, 1)),
       st.floats(0.0, 0.5))
def test_toy_gradient_matches_difference(x, v, lam):
    tp = ToyProblem(2, 2, lam=lam)
    h = 1e-6
    fd = (tp.energy(x + h * v) - tp.energy(x - h * v)) / (2 * h)
    assert abs(fd - tp.dJ(x, v)) <= 1e-6 * (1 + abs(tp.dJ(x, v)))


def test_one_plus_one_closed_form():
    tp = ToyProblem(1, 1)
    assert abs(toy_c_upper(tp, np.array([1.0])) - 0.25) < 1e-8


def test_one_plus_zero_nehari():
    tp = ToyProblem(1, 0)
    neh = toy_nehari_infimum(tp, 4, rng=0)
    assert abs(neh.infimum - 0.25) < 1e-8
    assert neh.max_stationarity < 1e-10


def test_nehari_point_stationary():
    tp = ToyProblem(2, 2)
    e = np.array([0.6, 0.8])
    w = nehari_point(tp, e)
    g = tp.gradient(w)
    assert abs(g @ w) < 1e-10
    assert np.abs(g[2:]).max() < 1e-10


def test_c_upper_refinement_monotone():
    tp = ToyProblem(1, 2)
    e = np.array([1.0])
    vals = [toy_c_upper(tp, e, grid_density=n, polish=False) for n in (64, 128, 256)]
    assert vals[0] <= vals[1] <= vals[2]


def test_c_upper_density_guard():
    with pytest.raises(ValidationError):
        toy_c_upper(ToyProblem(1, 1), np.array([1.0]), grid_density=32)


@pytest.mark.parametrize("dims", [(1, 1), (2, 2)])
def test_sphere_inf_below_c_upper(dims):
    tp = ToyProblem(*dims)
    r, b = toy_link_radius(tp)
    assert b >= r * r / 4
    e = np.zeros(tp.n_plus)
    e[0] = 1.0
    assert toy_c_upper(tp, e) >= b
    assert toy_sphere_inf(tp, r) == pytest.approx(b)


def test_A4_identity_case():
    tp = ToyProblem(1, 1)
    u = nehari_point(tp, np.array([1.0]))
    assert tp.energy(1.0 * u + 0.0) == tp.energy(u)


@pytest.mark.parametrize("dims", [(1, 1), (2, 2)])
def test_A4_zero_violations(dims):
    tp = ToyProblem(*dims)
    neh = toy_nehari_infimum(tp, 16, rng=0)
    rep = toy_check_A4(tp, neh.points, 10_000, rng=1)
    assert rep.samples == 10_000
    assert rep.violations == 0
    assert rep.max_identity_residual < 1e-9


def test_A4_with_lambda_only_counted():
    tp = ToyProblem(1, 1, lam=0.8)
    neh = toy_nehari_infimum(tp, 4, rng=0)
    rep = toy_check_A4(tp, neh.points, 2000, rng=1)
    assert rep.samples == 2000 and rep.violations >= 0


@pytest.mark.parametrize("dims", [(1, 1), (2, 2), (1, 0)])
def test_key_inequality_toys(dims):
    rep = toy_key_inequality(ToyProblem(*dims), 10_000, rng=3)
    assert rep.violations == 0


@pytest.mark.parametrize("dims", [(1, 1), (2, 2)])
def test_chain(dims):
    ch = toy_chain(ToyProblem(*dims), 16, 2000, rng=0)
    assert ch.chain_holds
    assert ch.inf_sphere <= ch.c_upper + 1e-6 <= ch.nehari_inf + 2e-6
    assert abs(ch.c_upper - 0.25) < 1e-8 and abs(ch.nehari_inf - 0.25) < 1e-8


@pytest.mark.slow
def test_chain_three_plus_three():
    ch = toy_chain(ToyProblem(3, 3), 8, 2000, rng=0)
    assert ch.chain_holds


@pytest.mark.parametrize("kw", [dict(n_plus=0), dict(n_minus=4), dict(p=3.0, q=3.5), dict(lam=-1.0)])
def test_toy_validation(kw):
    with pytest.raises(ValidationError):
        ToyProblem(**kw)
