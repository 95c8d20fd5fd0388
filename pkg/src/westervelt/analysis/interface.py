"""Weak flux balance at a material interface node of a 1D pressure-form run.

On P1 elements the row of the step equations belonging to node i reads

    rest_i + sigma_left - sigma_right = 0,

where sigma is the total flux stiff * u' + b((1 - delta) + delta |u_t'|^(q-1)) u_t' of the
element on either side, evaluated at the step midpoint, and rest_i collects the nodal
inertia, absorption, lower-order damping and load terms. The jump in flux across the
interface must therefore equal rest_i; the imbalance is the solver residual.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..assembly import (absorbing_matrix, element_gradients, element_local, lower_order_damping,
                        mass_from_local, neumann_load, source_load)
from ..errors import InvalidArgument
from ..evolution import Setup, Trajectory


@dataclass(frozen=True)
class FluxBalance:
    node: int
    flux_left: np.ndarray   # per step
    flux_right: np.ndarray
    nodal_rest: np.ndarray

    @property
    def imbalance(self) -> np.ndarray:
        return (self.flux_right - self.flux_left) - self.nodal_rest

    @property
    def scale(self) -> float:
        return float(max(np.max(np.abs(self.flux_left)), np.max(np.abs(self.flux_right)),
                         np.max(np.abs(self.nodal_rest)), np.finfo(float).tiny))

    @property
    def relative_imbalance(self) -> float:
        return float(np.max(np.abs(self.imbalance)) / self.scale)


def interface_flux_balance(traj: Trajectory, setup: Setup, x_interface: float) -> FluxBalance:
    """Flux balance at the mesh node nearest ``x_interface``, using the full nonlinear
    coefficients (inertia weight 1 - 2k u) at every step midpoint."""
    mesh = traj.mesh
    if mesh.dim != 1 or not setup.formulation.pressure_form:
        raise InvalidArgument("interface flux balance needs a 1D pressure-form run")
    x = mesh.nodes[:, 0]
    node = int(np.argmin(np.abs(x - x_interface)))
    left = np.flatnonzero((mesh.elements == node).any(axis=1) & (x[mesh.elements].max(axis=1)
                                                               <= x[node]))
    right = np.flatnonzero((mesh.elements == node).any(axis=1) & (x[mesh.elements].min(axis=1)
                                                                >= x[node]))
    if left.size != 1 or right.size != 1:
        raise InvalidArgument(f"x = {x_interface} is not an interior mesh node")
    eL, eR = int(left[0]), int(right[0])

    m = setup.material
    scale = element_local(mesh, m.mass_scale)
    k_local = element_local(mesh, m.k)
    absorbing = absorbing_matrix(mesh, m.alpha)
    lod = lower_order_damping(mesh, m)
    S = len(traj.times)
    flux_left, flux_right, rest = (np.empty(S - 1) for _ in range(3))
    for s in range(S - 1):
        dt = traj.times[s + 1] - traj.times[s]
        t_mid = 0.5 * (traj.times[s] + traj.times[s + 1])
        w = 0.5 * (traj.v[s] + traj.v[s + 1])
        um = 0.5 * (traj.u[s] + traj.u[s + 1])
        z = (traj.v[s + 1] - traj.v[s]) / dt
        A = scale * (1.0 - 2.0 * k_local * um[mesh.elements])
        Fw = -2.0 * k_local * scale * w[mesh.elements]
        load = neumann_load(mesh, setup.g, t_mid)
        if setup.source is not None:
            load = load + source_load(mesh, setup.source, t_mid)
        row = (mass_from_local(mesh, A) @ z + mass_from_local(mesh, Fw) @ w
               + absorbing @ w + lod.residual(w) - load)
        rest[s] = row[node]
        du = element_gradients(mesh, um)[:, 0]
        dw = element_gradients(mesh, w)[:, 0]
        power = np.ones_like(dw) if m.q == 1 else np.abs(dw) ** (m.q - 1)
        sigma = m.stiff * du + m.b * ((1.0 - m.delta) + m.delta * power) * dw
        flux_left[s], flux_right[s] = sigma[eL], sigma[eR]
    return FluxBalance(node, flux_left, flux_right, rest)
