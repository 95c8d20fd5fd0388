import pytest

from westervelt.analysis import interface_flux_balance
from westervelt.errors import InvalidArgument
from westervelt.evolution import Trajectory, prepare
from westervelt.fixedpoint import picard_solve
from westervelt.parameters import Formulation

from conftest import make_spec

FIELDS = {"lam": "1+0.5*Heaviside(x-0.5)", "rho": "1+Heaviside(x-0.5)",
          "b": "1-0.5*Heaviside(x-0.5)"}
DATA = {"u0": "0.05*cos(pi*x)", "u1": "0.1*cos(pi*x)", "g": "0.1*sin(3*t)"}


@pytest.fixture(scope="module")
def coupled():
    setup = prepare(make_spec(Formulation.COUPLED, q=1.0, k=0.5, data=DATA, fields=FIELDS))
    return setup, picard_solve(setup)[0]


def test_balance_holds_and_flux_jumps(coupled):
    setup, traj = coupled
    fb = interface_flux_balance(traj, setup, 0.5)
    assert fb.node == 16 and fb.relative_imbalance < 1e-10
    assert abs(fb.flux_right - fb.flux_left).max() > 1e-3  # nodal inertia is not negligible


def test_balance_rejects_boundary_node(coupled):
    setup, traj = coupled
    with pytest.raises(InvalidArgument):
        interface_flux_balance(traj, setup, 0.0)


def test_balance_detects_a_perturbed_state(coupled):
    setup, traj = coupled
    u = traj.u.copy()
    u[5, 16] += 1e-3
    perturbed = Trajectory(traj.mesh, traj.times, u, traj.v)
    assert interface_flux_balance(perturbed, setup, 0.5).relative_imbalance > 1e-6
