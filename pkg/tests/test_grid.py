import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.linalg import eigh
from scipy.special import jn_zeros

from linkvar.errors import InvalidResolution, ShapeMismatch, ValidationError
from linkvar.grid import (
    Potential, ProblemSpec, assemble_operator, boundary_mass_fraction, build_grid, check_decay, hardy_check,
    inner_L2w, load_potential_csv, norm_Lk, quadratic_form_parts, read_field_csv, write_field_csv,
)

SPEC = ProblemSpec()
UNIT = build_grid(SPEC, 8, 8, 1.0, 1.0)


def test_cell_centers():
    assert np.allclose(UNIT.r, np.arange(1, 16, 2) / 16)
    assert np.all(UNIT.r > 0)


def test_total_weight_is_cylinder_measure():
    assert UNIT.weights.sum() == pytest.approx(2 * math.pi, rel=1e-12)
    assert np.all(UNIT.weights > 0)


@pytest.mark.parametrize("K", [2, 3, 4])
def test_weights_sum_to_volume(K):
    spec = ProblemSpec(N=K + 1, K=K, a=1.0)
    g = build_grid(spec, 13, 9, 2.5, 1.5)
    assert g.weights.sum() == pytest.approx(g.volume, rel=1e-12)


@pytest.mark.parametrize("Nr,Nz", [(4, 16), (16, 4), (7, 8)])
def test_invalid_resolution(Nr, Nz):
    with pytest.raises(InvalidResolution):
        build_grid(SPEC, Nr, Nz, 1.0, 1.0)


def test_hardy_admissibility_enforced():
    with pytest.raises(ValidationError):
        ProblemSpec(K=2, a=0.0)
    ProblemSpec(N=4, K=3, a=-0.2)
    with pytest.raises(ValidationError):
        ProblemSpec(N=4, K=3, a=-0.3)


def test_only_codimension_one():
    with pytest.raises(ValidationError):
        ProblemSpec(N=4, K=2)


def test_inner_product_examples():
    one = np.ones(UNIT.shape)
    assert inner_L2w(UNIT, one, one) == pytest.approx(2 * math.pi, rel=1e-12)
    u = np.random.default_rng(0).standard_normal(UNIT.shape)
    assert norm_Lk(UNIT, u, 2) ** 2 == pytest.approx(inner_L2w(UNIT, u, u), rel=1e-12)


def test_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        inner_L2w(UNIT, np.ones((8, 8)), np.ones((8, 9)))


@given(arrays(np.float64, (8, 8), elements=st.floats(-1e3, 1e3)),
       arrays(np.float64, (8, 8), elements=st.floats(-1e3, 1e3)))
def test_cauchy_schwarz(u, v):
    lhs = abs(inner_L2w(UNIT, u, v))
    assert lhs <= norm_Lk(UNIT, u) * norm_Lk(UNIT, v) * (1 + 1e-12) + 1e-300


@given(arrays(np.float64, (8, 8), elements=st.floats(-1e2, 1e2)), st.floats(1.0, 6.0))
def test_lk_norm_homogeneous(u, k):
    assert norm_Lk(UNIT, 3.0 * u, k) == pytest.approx(3.0 * norm_Lk(UNIT, u, k), rel=1e-10, abs=1e-300)


def test_constant_interior_action():
    spec = ProblemSpec(a=1.0, potential=Potential.constant(-2.0))
    g = build_grid(spec, 32, 32, 4.0, 4.0)
    Au = assemble_operator(spec, g).apply(np.ones(g.shape))
    interior = (slice(1, -1), slice(1, -1))
    expected = 1.0 / g.r[:, None] ** 2 - 2.0 + np.zeros(g.shape)
    assert np.allclose(Au[interior], expected[interior], rtol=0, atol=1e-10)


@pytest.mark.parametrize("kind", ["constant", "periodic"])
def test_weight_symmetry(kind, rng):
    if kind == "constant":
        spec = ProblemSpec(potential=Potential.constant(-3.0))
        Zhalf = 2.5
    else:
        rt, zt = np.linspace(0, 6, 7), np.linspace(0, 0.75, 4)
        spec = ProblemSpec(potential=Potential("periodic", -3.0, rt, zt, np.cos(rt[:, None] + 2 * np.pi * zt[None, :])))
        Zhalf = 2.0
    g = build_grid(spec, 20, 24, 5.0, Zhalf)
    op = assemble_operator(spec, g)
    for _ in range(50):
        u, v = rng.standard_normal((2,) + g.shape)
        lhs = inner_L2w(g, op.apply(u), v)
        rhs = inner_L2w(g, u, op.apply(v))
        assert abs(lhs - rhs) / (norm_Lk(g, u) * norm_Lk(g, v)) < 1e-12


def test_quadratic_form_identity(rng):
    spec = ProblemSpec(a=2.0, potential=Potential.constant(0.5))
    g = build_grid(spec, 16, 20, 3.0, 2.0)
    op = assemble_operator(spec, g)
    for _ in range(20):
        u = rng.standard_normal(g.shape)
        parts = quadratic_form_parts(spec, g, u)
        assert inner_L2w(g, op.apply(u), u) == pytest.approx(parts["total"], rel=1e-12)
        # positivity case a >= 0, V >= 0
        assert parts["total"] >= parts["potential"] >= 0


def test_separable_z_mode():
    spec = ProblemSpec(N=4, K=3, a=0.0, potential=Potential.constant(0.0))
    g = build_grid(spec, 32, 256, 2.0, 2.0)
    op = assemble_operator(spec, g)
    Ar = op.factors[0].toarray()
    lam_r, vec_r = eigh(np.diag(g.m_r) @ Ar, np.diag(g.m_r))
    R, Z = g.mesh()
    u = vec_r[:, 0][:, None] * np.sin(math.pi * Z / g.Zhalf)
    Au = op.apply(u)
    mask = np.abs(u) > 1e-3 * np.abs(u).max()
    z_part = Au[mask] / u[mask] - lam_r[0]
    assert np.allclose(z_part, (math.pi / g.Zhalf) ** 2, rtol=1e-3)


def _lowest(op):
    Ar, Az, m_r, _, _ = op.factors
    er = eigh(np.diag(m_r) @ Ar.toarray(), np.diag(m_r), eigvals_only=True)
    return er[0] + np.linalg.eigvalsh(Az.toarray())[0]


@pytest.mark.parametrize("N,K,a,exact", [
    (3, 2, 1.0, (jn_zeros(1, 1)[0] / 2) ** 2 + (math.pi / 4) ** 2),  # J_1 Bessel mode
    (4, 3, 0.0, (math.pi / 2) ** 2 + (math.pi / 4) ** 2),  # sin(kr)/r mode
])
def test_second_order_refinement(N, K, a, exact):
    spec = ProblemSpec(N, K, a, Potential.constant(0.0))
    errs = [abs(_lowest(assemble_operator(spec, build_grid(spec, n, n, 2.0, 2.0))) - exact) for n in (16, 32, 64)]
    for coarse, fine in zip(errs, errs[1:]):
        assert 3.5 < coarse / fine < 4.5


def test_hardy_constant_K3(rng):
    spec = ProblemSpec(N=4, K=3, a=1.0)
    g = build_grid(spec, 128, 128, 6.0, 4.0)
    rep = hardy_check(g, 3, samples=100, rng=rng)
    assert rep.constant == 4.0
    assert rep.passed and rep.worst_ratio <= 4 * 1.05


def test_hardy_away_from_axis():
    spec = ProblemSpec(N=4, K=3, a=1.0)
    g = build_grid(spec, 32, 32, 4.0, 2.0)
    R, Z = g.mesh()
    u = np.exp(-8 * (R - 2.0) ** 2) * np.cos(math.pi * Z / 4)
    parts = quadratic_form_parts(ProblemSpec(N=4, K=3, a=0.0, potential=Potential.constant(0.0)), g, u)
    assert 0 < parts["singular"] / parts["gradient"] < 4.0


def test_hardy_needs_K_above_two():
    with pytest.raises(ValidationError):
        hardy_check(UNIT, 2)


def test_periodic_needs_integer_zhalf():
    rt, zt = np.linspace(0, 6, 4), np.array([0.0, 0.5])
    spec = ProblemSpec(potential=Potential("periodic", 0.0, rt, zt, np.zeros((4, 2))))
    with pytest.raises(ValidationError):
        build_grid(spec, 16, 16, 6.0, 2.5)


def test_periodic_potential_is_periodic():
    rt, zt = np.linspace(0, 6, 5), np.linspace(0, 0.8, 5)
    pot = Potential("periodic", 1.0, rt, zt, np.sin(2 * np.pi * zt)[None, :] * (1 + rt[:, None]))
    r = np.linspace(0.1, 5.9, 7)
    z = np.linspace(-2, 2, 9)
    assert np.allclose(pot.sample(r, z), pot.sample(r, z + 1.0))
    assert pot.sup_norm() < np.inf


def test_potential_csv_roundtrip(tmp_path):
    p = tmp_path / "V.csv"
    rows = ["r,z,V"] + [f"{r},{z},{r * z}" for r in (0.0, 1.0, 2.0) for z in (0.0, 0.5)]
    p.write_text("\n".join(rows) + "\n")
    pot = load_potential_csv(p)
    assert pot.values.shape == (3, 2)
    assert pot.values[2, 1] == pytest.approx(1.0)
    bad = tmp_path / "bad.csv"
    bad.write_text("x,y,V\n0,0,1\n")
    with pytest.raises(ValidationError):
        load_potential_csv(bad)


def test_field_csv_roundtrip(tmp_path, rng):
    u = rng.standard_normal(UNIT.shape)
    path = write_field_csv(tmp_path / "u.csv", UNIT, u)
    assert path.read_text().splitlines()[0] == "r,z,value"
    assert np.array_equal(read_field_csv(path, UNIT), u)


def test_decay_diagnostic():
    g = build_grid(SPEC, 32, 32, 6.0, 4.0)
    R, Z = g.mesh()
    assert check_decay(g, np.exp(-4 * (R ** 2 + Z ** 2)) * R) < 1e-6
    with pytest.warns(RuntimeWarning):
        check_decay(g, np.ones(g.shape))
    assert 0 < boundary_mass_fraction(g, np.ones(g.shape)) < 1
