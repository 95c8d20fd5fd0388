import numpy as np
import pytest

from westervelt.errors import DegeneracyError, InvalidArgument, NonConvergence
from westervelt.evolution import Trajectory, prepare, solve_nonlinear_monolithic
from westervelt.fixedpoint import (BallSpec, apply_T, ball_membership, freeze_coefficients,
                                   picard_solve, triple_norm)
from westervelt.geometry import build_interval_mesh
from westervelt.norms import spatial_norms
from westervelt.parameters import Formulation

from conftest import make_spec


def constant_traj(mesh, u, v, steps=4):
    times = np.linspace(0, 1, steps + 1)
    N = mesh.n_nodes
    return Trajectory(mesh, times, np.full((steps + 1, N), u), np.full((steps + 1, N), v))


def test_freeze_pressure_form():
    setup = prepare(make_spec(k=1.0))
    a, f = freeze_coefficients(Formulation.W1, constant_traj(setup.mesh, 0.1, 0.0), setup.material)
    np.testing.assert_allclose(a, 0.8)
    np.testing.assert_allclose(f, 0.0)
    setup0 = prepare(make_spec(k=0.0))
    a, f = freeze_coefficients(Formulation.W1, constant_traj(setup0.mesh, 0.4, 0.3), setup0.material)
    np.testing.assert_allclose(a, 1.0)
    np.testing.assert_allclose(f, 0.0)


def test_freeze_potential_form():
    setup = prepare(make_spec(Formulation.W3, k_tilde=1.0, c2=1.0))
    a, f = freeze_coefficients(Formulation.W3, constant_traj(setup.mesh, 0.0, 0.25), setup.material)
    np.testing.assert_allclose(a, 2.0)
    assert f is None


def test_freeze_reports_location():
    setup = prepare(make_spec(k=1.0))
    traj = constant_traj(setup.mesh, 0.0, 0.0)
    traj.u[3, 5] = 0.6
    with pytest.raises(DegeneracyError) as info:
        freeze_coefficients(Formulation.W1, traj, setup.material)
    assert (info.value.node, info.value.step) == (5, 3)


def test_linear_map_is_constant():
    setup = prepare(make_spec(k=0.0))
    rng = np.random.default_rng(1)
    S, N = len(setup.times), setup.mesh.n_nodes
    v1 = Trajectory(setup.mesh, setup.times, rng.normal(size=(S, N)), rng.normal(size=(S, N)))
    v2 = Trajectory(setup.mesh, setup.times, rng.normal(size=(S, N)), rng.normal(size=(S, N)))
    a, b = apply_T(setup, v1), apply_T(setup, v2)
    np.testing.assert_array_equal(a.u, b.u)
    _, log = picard_solve(setup)
    assert len(log) == 1


def test_picard_matches_monolithic_and_fixed_point_residual():
    setup = prepare(make_spec(k=0.5))
    traj, log = picard_solve(setup)
    mono = solve_nonlinear_monolithic(setup)
    assert triple_norm(apply_T(setup, mono), mono) <= 1e-9
    assert (traj - mono).norm("u", "L2", "Linf") <= 1e-8
    assert all(r < 1 for r in log.ratios[1:])


def test_picard_nonconvergence_report():
    setup = prepare(make_spec(k=0.5, data={"u0": "0.2*cos(pi*x)", "u1": "cos(pi*x)", "g": 0.0}))
    with pytest.raises(NonConvergence) as info:
        picard_solve(setup, max_iter=2)
    assert len(info.value.distances) == 2 and "ratios" in info.value.record()


def test_triple_norm():
    mesh = build_interval_mesh(1.0, 8)
    rng = np.random.default_rng(3)
    times = np.linspace(0, 1, 6)
    u, v = rng.normal(size=(6, 9)), rng.normal(size=(6, 9))
    a = Trajectory(mesh, times, u, v)
    assert triple_norm(a, a) == 0.0
    grad = np.linspace(0, 2, 9)
    still = Trajectory(mesh, times, np.tile(grad, (6, 1)), np.zeros((6, 9)))
    assert triple_norm(still) == pytest.approx(2.0, rel=1e-12)
    sn = spatial_norms(mesh)
    expected = np.sqrt(sn.l2(v).max() ** 2 + np.trapezoid(sn.grad_l2(v) ** 2, times)
                       + sn.grad_l2(u).max() ** 2)
    assert triple_norm(a) == pytest.approx(expected, rel=1e-12)
    with pytest.raises(InvalidArgument):
        triple_norm(a, Trajectory(mesh, times[:3], u[:3], v[:3]))


def test_ball_membership():
    mesh = build_interval_mesh(1.0, 8)
    zero = constant_traj(mesh, 0.0, 0.0)
    ball = BallSpec(1.0, 1.0, Formulation.W1, 3.0)
    result = ball_membership(zero, ball)
    assert result.inside and all(v == 0 for v in result.measured.values())
    times = np.linspace(0, 1, 5)
    x = mesh.nodes[:, 0]
    steep = Trajectory(mesh, times, np.outer(times, 0.5 * x ** 2), np.tile(0.5 * x ** 2, (5, 1)))
    tight = BallSpec(10.0, 0.05, Formulation.W1, 3.0)
    assert ball_membership(steep, tight).failed() == ["grad_ut_Lq1_Lq1"]
    w2 = ball_membership(steep, BallSpec(10.0, 10.0, Formulation.W2, 3.0))
    assert "grad_u_Linf_Lq1" in w2.measured
    with pytest.raises(InvalidArgument):
        BallSpec(0.0, 1.0, Formulation.W1, 3.0)
