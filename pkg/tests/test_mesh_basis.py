import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.polynomial import legendre as npleg

from ostrovsky_hdg.errors import ConfigurationError
from ostrovsky_hdg.mesh_basis import (
    build_mesh,
    eval_field,
    eval_field_grid,
    gauss_legendre_rule,
    integrate_field,
    l2_error,
    l2_norm,
    l2_project,
    legendre_eval,
    legendre_table,
    make_basis,
    mesh_from_nodes,
)


def test_build_mesh_uniform():
    mesh = build_mesh(0.0, 80.0, 256)
    assert mesh.n_elements == 256
    assert np.allclose(mesh.element_sizes, 0.3125, rtol=0, atol=1e-14)
    assert mesh.nodes[0] == 0.0 and mesh.nodes[-1] == 80.0
    assert not mesh.periodic


def test_build_mesh_rejects_bad_arguments():
    with pytest.raises(ConfigurationError):
        build_mesh(0.0, 1.0, 1)
    with pytest.raises(ConfigurationError):
        build_mesh(1.0, 1.0, 4)
    with pytest.raises(ConfigurationError):
        build_mesh(0.0, -1.0, 4)
    with pytest.raises(ConfigurationError):
        build_mesh(0.0, 1.0, 2.5)


def test_mesh_from_nodes_nonuniform():
    mesh = mesh_from_nodes([0.0, 0.25, 1.0, 1.5], periodic=True)
    assert mesh.n_elements == 3
    assert np.allclose(mesh.element_sizes, [0.25, 0.75, 0.5])
    with pytest.raises(ConfigurationError):
        mesh_from_nodes([0.0, 0.5, 0.4])


def test_gauss_rule_closed_forms():
    r1 = gauss_legendre_rule(1)
    assert np.allclose(r1.points, [0.0], atol=1e-15)
    assert np.allclose(r1.weights, [2.0], atol=1e-15)
    r2 = gauss_legendre_rule(2)
    assert np.allclose(r2.points, [-1 / np.sqrt(3), 1 / np.sqrt(3)], atol=1e-15)
    assert np.allclose(r2.weights, [1.0, 1.0], atol=1e-15)
    r3 = gauss_legendre_rule(3)
    assert np.allclose(r3.points, [-np.sqrt(0.6), 0.0, np.sqrt(0.6)], atol=1e-15)
    assert np.allclose(r3.weights, [5 / 9, 8 / 9, 5 / 9], atol=1e-15)


def test_gauss_rule_against_numpy_oracle():
    for n in (4, 7, 8, 16, 25, 32):
        rule = gauss_legendre_rule(n)
        x_ref, w_ref = npleg.leggauss(n)
        assert np.max(np.abs(rule.points - x_ref)) < 1e-13
        assert np.max(np.abs(rule.weights - w_ref)) < 1e-13


def test_gauss_rule_weight_sum_and_range_check():
    for n in range(1, 33):
        rule = gauss_legendre_rule(n)
        assert abs(rule.weights.sum() - 2.0) < 1e-13
    for bad in (0, 33, -2, 2.5):
        with pytest.raises(ConfigurationError):
            gauss_legendre_rule(bad)


@given(n=st.integers(min_value=1, max_value=32), d=st.integers(min_value=0, max_value=63))
@settings(max_examples=120, deadline=None)
def test_gauss_rule_polynomial_exactness(n, d):
    # exact through degree 2n - 1; analytic moment of x^d on (-1, 1)
    if d > 2 * n - 1:
        return
    rule = gauss_legendre_rule(n)
    approx = np.dot(rule.weights, rule.points**d)
    exact = 0.0 if d % 2 == 1 else 2.0 / (d + 1)
    assert abs(approx - exact) < 1e-13


def test_legendre_eval_values():
    val, der = legendre_eval(2, 0.5)
    assert abs(val - (-0.125)) < 1e-15
    assert abs(der - 1.5) < 1e-15
    val0, der0 = legendre_eval(0, -0.3)
    assert val0 == 1.0 and der0 == 0.0


def test_legendre_eval_against_numpy_oracle():
    rng = np.random.default_rng(7)
    for deg in range(0, 9):
        coeff = np.zeros(deg + 1)
        coeff[deg] = 1.0
        for x in rng.uniform(-1, 1, size=5):
            val, der = legendre_eval(deg, x)
            assert abs(val - npleg.legval(x, coeff)) < 1e-13
            assert abs(der - npleg.legval(x, npleg.legder(coeff))) < 1e-12


def test_basis_mass_matrix_diagonal():
    for k in (1, 2, 3, 4):
        basis = make_basis(k)
        mass = (basis.val * basis.quad.weights) @ basis.val.T
        assert np.max(np.abs(mass - np.diag(basis.mass_diag))) < 1e-13


def test_projection_reproduces_polynomials():
    mesh = build_mesh(-1.0, 2.0, 5)
    for k in (1, 2, 3):
        basis = make_basis(k)
        coeffs = l2_project(lambda x: 0.3 * x**k - x + 0.25, mesh, basis)
        again = l2_project(
            lambda x: eval_grid_interp(coeffs, mesh, x), mesh, basis)
        # exactness and idempotence
        for xi in np.linspace(-1, 1, 7):
            xs = mesh.midpoints() + 0.5 * mesh.element_sizes * xi
            vals = eval_field_grid(coeffs, [xi])[:, 0]
            assert np.max(np.abs(vals - (0.3 * xs**k - xs + 0.25))) < 1e-13
        assert np.max(np.abs(again - coeffs)) < 1e-13


def eval_grid_interp(coeffs, mesh, x):
    """Evaluate a discrete field at arbitrary physical points (test helper)."""
    x = np.asarray(x)
    idx = np.clip(
        np.searchsorted(mesh.nodes, x, side="right") - 1, 0, mesh.n_elements - 1)
    xi = (x - mesh.midpoints()[idx]) / (0.5 * mesh.element_sizes[idx])
    vals, _ = legendre_table(coeffs.shape[1] - 1, np.ravel(xi))
    out = np.einsum("ej,je->e", coeffs[np.ravel(idx)], vals)
    return out.reshape(x.shape)


def test_projection_against_normal_equation_oracle():
    # independent route: dense normal equations with numpy's own Gauss rule
    # of the same order, since the projection is defined through that quadrature
    mesh = build_mesh(0.0, 2 * np.pi, 6)
    basis = make_basis(3)
    f = np.sin
    coeffs = l2_project(f, mesh, basis)
    x_ref, w_ref = npleg.leggauss(basis.quad.n_points)
    vals, _ = legendre_table(3, x_ref)
    for i in range(mesh.n_elements):
        xs = mesh.midpoints()[i] + 0.5 * mesh.element_sizes[i] * x_ref
        gram = (vals * w_ref) @ vals.T
        rhs = (f(xs) * w_ref) @ vals.T
        expected = np.linalg.solve(gram, rhs)
        assert np.max(np.abs(coeffs[i] - expected)) < 1e-12


def test_projection_is_best_approximation():
    mesh = build_mesh(0.0, 3.0, 4)
    basis = make_basis(2)
    rng = np.random.default_rng(42)
    for _ in range(50):
        a, b, c = rng.uniform(-2, 2, size=3)
        f = lambda x: a * np.sin(x) + b * np.cos(2 * x) + c * x
        coeffs = l2_project(f, mesh, basis)
        err = l2_error(coeffs, f, mesh, basis)
        bumped = coeffs.copy()
        i = rng.integers(0, mesh.n_elements)
        j = rng.integers(0, basis.n_modes)
        bumped[i, j] += rng.choice([-1.0, 1.0]) * 1e-3
        assert l2_error(bumped, f, mesh, basis) > err


def test_galerkin_orthogonality():
    mesh = build_mesh(0.0, 1.0, 4)
    basis = make_basis(3)
    f = lambda x: np.exp(x) * np.sin(3 * x)
    coeffs = l2_project(f, mesh, basis)
    rng = np.random.default_rng(3)
    x_ref, w_ref = npleg.leggauss(32)
    vals, _ = legendre_table(3, x_ref)
    for _ in range(10):
        w_coef = rng.standard_normal(coeffs.shape)
        total = 0.0
        for i in range(mesh.n_elements):
            xs = mesh.midpoints()[i] + 0.5 * mesh.element_sizes[i] * x_ref
            resid = f(xs) - coeffs[i] @ vals
            total += 0.5 * mesh.element_sizes[i] * np.dot(
                w_ref, resid * (w_coef[i] @ vals))
        assert abs(total) < 1e-12


def test_eval_field_values_and_index_error():
    coeffs = np.array([[1.0, 2.0, 0.5], [0.0, -1.0, 0.0]])
    # P0 + 2 P1 + 0.5 P2 at xi = 0.5
    expected = 1.0 + 2.0 * 0.5 + 0.5 * (-0.125)
    assert abs(eval_field(coeffs, 0, 0.5) - expected) < 1e-15
    assert abs(eval_field(coeffs, 1, 1.0) - (-1.0)) < 1e-15
    with pytest.raises(IndexError):
        eval_field(coeffs, 2, 0.0)


def test_l2_error_against_simpson_oracle():
    mesh = build_mesh(0.0, 2.0, 5)
    basis = make_basis(2)
    coeffs = l2_project(np.sin, mesh, basis)
    exact = np.cos
    got = l2_error(coeffs, exact, mesh, basis)
    # composite Simpson, 2000 intervals per element so panels avoid the kinks;
    # sample element-wise so interface points take the one-sided value
    xi = np.linspace(-1.0, 1.0, 2001)
    uq = eval_field_grid(coeffs, xi)
    simpson = 0.0
    for i in range(mesh.n_elements):
        xs = mesh.midpoints()[i] + 0.5 * mesh.element_sizes[i] * xi
        diff2 = (uq[i] - exact(xs)) ** 2
        h = xs[1] - xs[0]
        simpson += h / 3 * (diff2[0] + diff2[-1]
                            + 4 * diff2[1:-1:2].sum() + 2 * diff2[2:-1:2].sum())
    assert abs(got - np.sqrt(simpson)) < 1e-8


def test_l2_error_oversample_validation():
    mesh = build_mesh(0.0, 1.0, 2)
    basis = make_basis(3)
    coeffs = l2_project(np.sin, mesh, basis)
    with pytest.raises(ConfigurationError):
        l2_error(coeffs, np.sin, mesh, basis, oversample=3)


def test_l2_norm_matches_error_against_zero():
    mesh = build_mesh(-1.0, 4.0, 7)
    basis = make_basis(3)
    rng = np.random.default_rng(11)
    coeffs = rng.standard_normal((7, 4))
    direct = l2_norm(coeffs, mesh)
    via_error = l2_error(coeffs, lambda x: 0.0 * x, mesh, basis)
    assert abs(direct - via_error) < 1e-12


def test_integrate_field_exact():
    mesh = build_mesh(0.0, 2.0, 4)
    basis = make_basis(3)
    coeffs = l2_project(lambda x: x**2 - 0.5, mesh, basis)
    assert abs(integrate_field(coeffs, mesh) - (8.0 / 3.0 - 1.0)) < 1e-13
