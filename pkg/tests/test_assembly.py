import numpy as np
import pytest
from types import SimpleNamespace

from westervelt.assembly import (absorbing_matrix, lower_order_damping, neumann_load,
                                 qgrad_damping, qstiffness, stiffness, weighted_mass)
from westervelt.errors import DegeneracyError
from westervelt.geometry import BoundaryTag, build_interval_mesh, build_rect_mesh

rng = np.random.default_rng(7)


def dense(A):
    return A.toarray()


def test_mass_row_sums():
    mesh = build_interval_mesh(1.0, 2)
    np.testing.assert_allclose(dense(weighted_mass(mesh)).sum(axis=1), [0.25, 0.5, 0.25])


def test_mass_linear_in_weight():
    mesh = build_rect_mesh(1, 1, 3, 3)
    np.testing.assert_allclose(dense(weighted_mass(mesh, 2.0)), 2 * dense(weighted_mass(mesh)))
    np.testing.assert_array_equal(dense(weighted_mass(mesh, 1 - 2 * 0.7 * np.zeros(mesh.n_nodes))),
                                  dense(weighted_mass(mesh)))


def test_mass_guards_degeneracy():
    mesh = build_interval_mesh(1.0, 4)
    with pytest.raises(DegeneracyError) as info:
        weighted_mass(mesh, np.array([1, 1, -0.1, 1, 1.0]))
    assert info.value.node == 2


def test_stiffness_hand_values():
    mesh = build_interval_mesh(1.0, 2)
    np.testing.assert_allclose(dense(stiffness(mesh)), [[2, -2, 0], [-2, 4, -2], [0, -2, 2]])
    np.testing.assert_allclose(stiffness(build_rect_mesh(1, 1, 3, 3)) @ np.ones(16), 0, atol=1e-12)


def test_stiffness_piecewise_interface_row():
    mesh = build_interval_mesh(1.0, 2)
    K = dense(stiffness(mesh, np.array([1.0, 4.0])))
    np.testing.assert_allclose(K[1], [-2, 2 + 8, -8])


def params(**kw):
    base = dict(b=1.5, delta=0.4, q=1.0, c2=2.0, epsilon=0.0, beta=0.0, gamma=0.0)
    base.update(kw)
    return SimpleNamespace(**base)


def test_qgrad_q1_is_linear():
    mesh = build_rect_mesh(1, 1, 3, 3)
    v = rng.normal(size=mesh.n_nodes)
    term = qgrad_damping(mesh, params())
    np.testing.assert_allclose(term.residual(v), 1.5 * (stiffness(mesh) @ v), atol=1e-12)


def test_qgrad_zero_state_jacobian():
    mesh = build_interval_mesh(1.0, 5)
    term = qgrad_damping(mesh, params(q=3.0))
    np.testing.assert_allclose(term.residual(np.zeros(6)), 0)
    np.testing.assert_allclose(dense(term.jacobian(np.zeros(6))), 1.5 * 0.6 * dense(stiffness(mesh)),
                               atol=1e-12)


def test_qgrad_single_element_closed_form():
    mesh = build_interval_mesh(1.0, 1)
    s = 0.7
    r = qgrad_damping(mesh, params(q=3.0)).residual(np.array([0.0, s]))
    flux = 1.5 * (0.6 + 0.4 * s ** 2) * s
    np.testing.assert_allclose(r, [-flux, flux], rtol=1e-14)


def test_qstiffness_limits():
    mesh = build_interval_mesh(2.0, 6)
    u = rng.normal(size=7)
    np.testing.assert_allclose(qstiffness(mesh, params(q=3.0)).residual(u),
                               2.0 * (stiffness(mesh) @ u), atol=1e-12)
    np.testing.assert_allclose(qstiffness(mesh, params(q=3.0, epsilon=1.0)).residual(np.full(7, 3.0)),
                               0, atol=1e-12)
    one = build_interval_mesh(1.0, 1)
    s = -0.3
    flux = 2.0 * (1 + 0.5 * s ** 2) * s
    np.testing.assert_allclose(qstiffness(one, params(q=3.0, epsilon=0.5)).residual(np.array([0, s])),
                               [-flux, flux], rtol=1e-14)


def test_lower_order_damping():
    mesh = build_interval_mesh(1.0, 4)
    v = rng.normal(size=5)
    assert lower_order_damping(mesh, params()).is_zero
    np.testing.assert_allclose(lower_order_damping(mesh, params(beta=1.0)).residual(v),
                               weighted_mass(mesh) @ v, atol=1e-14)
    c0 = 0.8
    r = lower_order_damping(mesh, params(gamma=1.0, q=3.0)).residual(np.full(5, c0))
    np.testing.assert_allclose(r[2], c0 ** 3 * dense(weighted_mass(mesh))[2].sum(), rtol=1e-12)


def test_absorbing_matrix():
    mesh = build_interval_mesh(1.0, 4)
    assert absorbing_matrix(mesh, 0.0).nnz == 0 or not dense(absorbing_matrix(mesh, 0.0)).any()
    B = dense(absorbing_matrix(mesh, 3.0))
    expected = np.zeros((5, 5))
    expected[4, 4] = 3.0
    np.testing.assert_allclose(B, expected)
    square = build_rect_mesh(1, 1, 4, 4, {"left", "bottom", "top"})
    one = np.ones(square.n_nodes)
    assert one @ absorbing_matrix(square, 1.0) @ one == pytest.approx(1.0, abs=1e-12)


def test_neumann_load():
    mesh = build_interval_mesh(1.0, 4)
    assert not neumann_load(mesh, 0.0).any()
    t = 0.9
    F = neumann_load(mesh, lambda x, t: np.sin(t) + 0 * x[..., 0], t)
    expected = np.zeros(5)
    expected[0] = np.sin(t)
    np.testing.assert_allclose(F, expected)
    square = build_rect_mesh(1, 2, 3, 4, {"left", "top"})
    assert neumann_load(square, 1.0).sum() == pytest.approx(
        square.boundary_measure(BoundaryTag.GAMMA_NEUMANN), abs=1e-12)


def test_q_flux():
    from westervelt.assembly import q_flux
    g = np.array([[3.0, 4.0], [0.0, 0.0]])
    np.testing.assert_allclose(q_flux(g, 3.0), [[75.0, 100.0], [0.0, 0.0]])
    np.testing.assert_array_equal(q_flux(g, 1.0), g)
