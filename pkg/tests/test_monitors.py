import numpy as np
import pytest

from westervelt.analysis import degeneracy_margin, linf_bound
from westervelt.errors import InvalidArgument
from westervelt.evolution import Trajectory, prepare
from westervelt.fixedpoint import picard_solve
from westervelt.geometry import build_interval_mesh
from westervelt.parameters import Formulation

from conftest import make_spec


def traj_of(u, v=None, steps=3, n=8):
    mesh = build_interval_mesh(1.0, n)
    times = np.linspace(0, 1, steps + 1)
    u = np.broadcast_to(u, (steps + 1, n + 1)).copy()
    v = np.zeros_like(u) if v is None else np.broadcast_to(v, u.shape).copy()
    return Trajectory(mesh, times, u, v)


def test_margin_examples():
    t = traj_of(0.2)
    assert degeneracy_margin(t, Formulation.W1, 0.0).value == 1.0
    u = np.zeros((4, 9))
    u[2, 4] = 0.3
    m = degeneracy_margin(traj_of(u), "W1", 1.0)
    assert (m.value, m.step, m.node) == (pytest.approx(0.4), 2, 4)
    w3 = degeneracy_margin(traj_of(0.0, v=0.25), Formulation.W3, 1.0)
    assert w3.value == pytest.approx(0.5)


def test_margin_with_element_k():
    u = np.zeros((4, 9))
    u[1, 4] = 0.1
    k = np.array([0, 0, 0, 0, 2.0, 2.0, 2.0, 2.0])
    assert degeneracy_margin(traj_of(u), Formulation.COUPLED, k).value == pytest.approx(0.6)


def test_linf_constant_and_zero(constants_q3):
    zero = linf_bound(traj_of(0.0, n=32), "on_u_W1", constants_q3)
    assert zero.bound == 0.0 and zero.measured == 0.0
    const = linf_bound(traj_of(0.7, n=32), "on_u_W1", constants_q3)
    assert const.measured == pytest.approx(0.7)
    assert const.bound == pytest.approx(constants_q3.W1q1_Linf * constants_q3.C1_omega * 0.7)
    assert const.holds


@pytest.mark.parametrize("variant", ["on_u_W1", "on_u_W2", "on_ut_W3"])
def test_linf_on_small_run(constants_q3, variant):
    setup = prepare(make_spec(k=0.5, data={"u0": "0.05*cos(pi*x)", "u1": "0.1*cos(pi*x)",
                                           "g": "0.1*sin(3*t)"}))
    traj, _ = picard_solve(setup)
    assert linf_bound(traj, variant, constants_q3).holds


def test_linf_rejects_unknown_variant(constants_q3):
    with pytest.raises(InvalidArgument):
        linf_bound(traj_of(0.0, n=32), "on_u_W9", constants_q3)
