"""Reflection diagnostic for one-dimensional pulse runs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgument
from ..evolution import Trajectory


@dataclass(frozen=True)
class Reflection:
    coefficient: float
    incident_energy: float
    reflected_energy: float
    degenerate: bool = False  # True when no incident energy was present


def window_energy(traj: Trajectory, window: tuple[float, float], c2: float = 1.0) -> np.ndarray:
    """Acoustic energy (|u_t|^2 + c^2 |u_x|^2) / 2 inside ``window`` at every time node.

    Elements count when their centroid lies in the window.
    """
    mesh = traj.mesh
    if mesh.dim != 1:
        raise InvalidArgument("window energies are defined for one-dimensional meshes")
    lo, hi = window
    x_min, x_max = float(mesh.nodes.min()), float(mesh.nodes.max())
    if not (x_min <= lo < hi <= x_max):
        raise InvalidArgument(f"probe window {window} lies outside the grid [{x_min}, {x_max}]")
    centers = mesh.centroids[:, 0]
    sel = (centers >= lo) & (centers <= hi)
    el, vol = mesh.elements[sel], mesh.volumes[sel]
    a, b = traj.v[:, el[:, 0]], traj.v[:, el[:, 1]]
    kinetic = (a * a + a * b + b * b) / 3.0 @ vol
    slope = (traj.u[:, el[:, 1]] - traj.u[:, el[:, 0]]) / vol
    potential = c2 * (slope ** 2) @ vol
    return 0.5 * (kinetic + potential)


def reflection_coefficient(traj: Trajectory, window: tuple[float, float], c2: float = 1.0,
                           *, drop: float = 1e-2) -> Reflection:
    """Ratio of reflected to incident pulse energy seen in a probe window.

    The incident energy is the window energy at the first time node. Once the window
    energy has fallen below ``drop`` times that value (the pulse has left), the largest
    later window energy is taken as the reflected energy.
    """
    energy = window_energy(traj, window, c2)
    incident = float(energy[0])
    if incident <= 0.0:
        return Reflection(0.0, 0.0, 0.0, degenerate=True)
    below = np.flatnonzero(energy < drop * incident)
    if below.size == 0:
        raise InvalidArgument("the pulse never leaves the probe window; lengthen the run")
    reflected = float(energy[below[0]:].max())
    return Reflection(min(reflected / incident, 1.0), incident, reflected)
