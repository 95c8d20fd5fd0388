import numpy as np
import pytest

from westervelt.analysis import reflection_coefficient, window_energy
from westervelt.errors import InvalidArgument
from westervelt.evolution import Trajectory
from westervelt.geometry import build_interval_mesh


def test_zero_pulse_flags_degenerate():
    mesh = build_interval_mesh(4.0, 40)
    traj = Trajectory(mesh, np.linspace(0, 1, 3), np.zeros((3, 41)), np.zeros((3, 41)))
    r = reflection_coefficient(traj, (1.0, 3.0))
    assert r.coefficient == 0.0 and r.degenerate


def test_window_outside_grid():
    mesh = build_interval_mesh(1.0, 10)
    traj = Trajectory(mesh, np.linspace(0, 1, 3), np.zeros((3, 11)), np.zeros((3, 11)))
    with pytest.raises(InvalidArgument):
        reflection_coefficient(traj, (0.5, 2.0))


def test_window_energy_of_linear_profile():
    mesh = build_interval_mesh(1.0, 10)
    x = mesh.nodes[:, 0]
    traj = Trajectory(mesh, np.array([0.0, 1.0]), np.tile(x, (2, 1)), np.ones((2, 11)))
    np.testing.assert_allclose(window_energy(traj, (0.0, 1.0), c2=2.0), 0.5 * (1 + 2), rtol=1e-12)
