from dataclasses import replace

import numpy as np
import pytest

from westervelt.errors import DegeneracyError
from westervelt.evolution import (Trajectory, difference_quotient_accel, discrete_energy, prepare,
                                  solve_linearized, solve_nonlinear_monolithic)
from westervelt.geometry import build_interval_mesh
from westervelt.manufactured import l2_error_at_final_time, manufactured_spec
from westervelt.parameters import Formulation, PhysicalParams

from conftest import make_spec


def test_constant_state_is_stationary():
    spec = make_spec(q=1.0, alpha=0.0, data={"u0": 0.3, "u1": 0.0, "g": 0.0})
    setup = prepare(spec)
    traj = solve_linearized(setup.linearized(), setup.mesh, setup.times)
    np.testing.assert_allclose(traj.u, 0.3, atol=1e-14)
    np.testing.assert_allclose(traj.v, 0.0, atol=1e-14)


def test_linear_energy_is_non_increasing():
    spec = make_spec(q=1.0, alpha=0.0, c2=2.0, n_steps=80,
                     data={"u0": "cos(pi*x)", "u1": "sin(2*pi*x)", "g": 0.0})
    setup = prepare(spec)
    traj = solve_linearized(setup.linearized(), setup.mesh, setup.times)
    energy = discrete_energy(traj, 1.0, 2.0)
    assert np.all(np.diff(energy) <= 1e-13 * energy[0])
    assert energy[-1] < energy[0]


@pytest.mark.parametrize("form, extra", [(Formulation.W1, {"q": 3.0}),
                                         (Formulation.W3, {"q": 3.0, "c2": 0.5})])
def test_monolithic_without_nonlinearity_matches_linear(form, extra):
    spec = make_spec(form, k=0.0, k_tilde=0.0, n_steps=20, **extra)
    setup = prepare(spec)
    lin = solve_linearized(setup.linearized(), setup.mesh, setup.times)
    mono = solve_nonlinear_monolithic(setup)
    np.testing.assert_allclose(mono.u, lin.u, atol=1e-13)
    np.testing.assert_allclose(mono.v, lin.v, atol=1e-13)


def test_large_data_aborts_at_step_zero():
    spec = make_spec(k=1.0, data={"u0": "0.6*cos(pi*x)", "u1": 0.0, "g": 0.0})
    with pytest.raises(DegeneracyError) as info:
        solve_nonlinear_monolithic(spec)
    assert info.value.step == 0 and info.value.node in (0, 32)


def test_w3_degeneracy_abort():
    spec = make_spec(Formulation.W3, k_tilde=1.0, c2=1.0, data={"u0": 0.0, "u1": 0.7, "g": 0.0})
    with pytest.raises(DegeneracyError):
        solve_nonlinear_monolithic(spec)


def test_difference_quotient():
    mesh = build_interval_mesh(1.0, 2)
    times = np.linspace(0, 1, 11)
    linear = Trajectory(mesh, times, np.zeros((11, 3)), np.outer(2 * times + 1, np.ones(3)))
    np.testing.assert_allclose(difference_quotient_accel(linear), 2.0, rtol=1e-12)
    const = Trajectory(mesh, times, np.zeros((11, 3)), np.ones((11, 3)))
    np.testing.assert_array_equal(difference_quotient_accel(const), 0.0)
    errors = []
    for n in (20, 40):
        t = np.linspace(0, 1, n + 1)
        sine = Trajectory(mesh, t, np.zeros((n + 1, 3)), np.outer(np.sin(t), np.ones(3)))
        mid = 0.5 * (t[1:] + t[:-1])
        errors.append(np.abs(difference_quotient_accel(sine)[:, 0] - np.cos(mid)).max())
    assert errors[0] / errors[1] == pytest.approx(4.0, rel=0.05)


def test_manufactured_error_small():
    params = PhysicalParams(b=1.0, delta=0.5, q=3.0, k=0.1)
    spec = manufactured_spec(params, 64, 64, 0.5)
    assert l2_error_at_final_time(spec) < 1e-3


def test_trajectory_norms():
    spec = make_spec(q=1.0, k=0.0)
    setup = prepare(spec)
    traj = solve_linearized(setup.linearized(), setup.mesh, setup.times)
    assert traj.norm("ut", "L2", "Linf") == pytest.approx(traj.step_norm("ut", "L2").max())
    assert traj.norm("utt", "L2", "Lp") > 0
    zero = replace(spec, u0=0.0, u1=0.0, g=0.0)
    s0 = prepare(zero)
    z = solve_linearized(s0.linearized(), s0.mesh, s0.times)
    assert z.norm("u", "H1", "Linf") == 0.0
