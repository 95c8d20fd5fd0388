"""Measured quantities that the estimates and certificates are instantiated with.

``data_norms`` measures the initial and boundary data; ``field_stats`` measures the
frozen coefficient fields (a, f) of a linearized problem. Fractional boundary norms of
the excitation are replaced by Lebesgue norms on the excitation boundary.
"""

from __future__ import annotations

from types import MappingProxyType

import numpy as np

from ..evolution import Setup, Trajectory
from ..fixedpoint import freeze_coefficients
from ..geometry import BoundaryTag, Mesh
from ..norms import midpoint_lp, spatial_norms, time_linf, time_lp
from ..parameters import Formulation
from ..quadrature import norm_rule


class _Values:
    """Read-only name -> float mapping with attribute access."""

    def __init__(self, values: dict[str, float]):
        object.__setattr__(self, "values", MappingProxyType(dict(values)))

    def __getattr__(self, name):
        try:
            return self.values[name]
        except KeyError:
            raise AttributeError(name) from None

    def __setattr__(self, name, value):
        raise AttributeError("measured values are read-only")

    def as_dict(self) -> dict[str, float]:
        return dict(self.values)


class DataNorms(_Values):
    """Norms of u0, u1 and the excitation g.

    Excitation norms (suffix ``_Lr`` for L^{(q+1)/q}(Gamma), ``_L2`` for L^2(Gamma)) are
    space-time norms of the half-step samples used by the integrator.
    """


class FieldStats(_Values):
    """Bounds and norms of the frozen fields a and f."""


def _excitation_samples(setup: Setup) -> tuple[np.ndarray, np.ndarray]:
    """g at the half steps and at the time nodes, as nodal vectors."""
    nodes, n = setup.mesh.nodes, setup.mesh.n_nodes

    def sample(ts):
        return np.array([np.broadcast_to(np.asarray(setup.g(nodes, t), float), (n,))
                         for t in ts])

    times = setup.times
    return sample(0.5 * (times[1:] + times[:-1])), sample(times)


def data_norms(setup: Setup) -> DataNorms:
    mesh, q = setup.mesh, float(setup.material.q)
    p, r = q + 1.0, (q + 1.0) / q
    sn = spatial_norms(mesh)
    u0, u1 = setup.u0, setup.u1
    out = {
        "u0_L1": sn.l1(u0),
        "grad_u0_L2": sn.grad_l2(u0),
        "grad_u0_Lq1": sn.grad_lp(u0, p),
        "grad_u0_L4": sn.grad_lp(u0, 4.0),
        "u1_L2": sn.l2(u1),
        "grad_u1_L2": sn.grad_l2(u1),
        "u1_H1": sn.h1(u1),
        "u1_W1q1": sn.w1p(u1, p),
        "u1_hat_L2": sn.boundary_l2(u1, BoundaryTag.GAMMA_HAT_ABSORBING),
    }
    dt = setup.dt
    half, full = _excitation_samples(setup)
    gamma = BoundaryTag.GAMMA_NEUMANN
    g_r = np.atleast_1d(sn.boundary_lp(half, r, gamma))
    g_2 = np.atleast_1d(sn.boundary_l2(half, gamma))
    g_full_r = np.atleast_1d(sn.boundary_lp(full, r, gamma))
    gt_r = np.atleast_1d(sn.boundary_lp(np.diff(full, axis=0) / dt, r, gamma))
    out.update({
        "g_Lr_Lr": midpoint_lp(dt, g_r, r),
        "g_L1_Lr": midpoint_lp(dt, g_r, 1.0),
        "g_Linf_Lr": max(time_linf(g_r), time_linf(g_full_r)),
        "g0_Lr": float(g_full_r[0]),
        "gt_Lr_Lr": midpoint_lp(dt, gt_r, r),
        "gt_L1_Lr": midpoint_lp(dt, gt_r, 1.0),
        "g_L1_L2": midpoint_lp(dt, g_2, 1.0),
        "g_L2_L2": midpoint_lp(dt, g_2, 2.0),
    })
    out["C_Gamma"] = (out["g_L1_Lr"] ** 2 + out["gt_L1_Lr"] ** 2 + out["g_Lr_Lr"] ** r
                      + out["gt_Lr_Lr"] ** r + out["g_Linf_Lr"] ** 2 + out["g_Linf_Lr"] ** r)
    out["C_Gamma_gamma"] = out["g_Lr_Lr"] ** r + out["gt_Lr_Lr"] ** r + out["g_Linf_Lr"] ** r
    out["initial_bracket"] = (out["u1_H1"] ** 2 + out["grad_u0_L2"] ** 2 + out["u1_W1q1"] ** p
                              + out["u1_hat_L2"] ** 2)
    out["kappa_sq"] = (out["C_Gamma"] + out["u0_L1"] ** 2 + out["grad_u0_Lq1"] ** 2
                       + out["initial_bracket"])
    return DataNorms(out)


# ---------------------------------------------------------------- frozen fields


def _element_values(mesh: Mesh, F: np.ndarray) -> np.ndarray:
    """Quadrature-point values of element-local P1 fields, (S, E, nq)."""
    return F @ norm_rule(mesh.dim).bary.T


def _lp(mesh: Mesh, F: np.ndarray, p: float) -> np.ndarray:
    """Spatial L^p norm of each element-local field in the stack F (S, E, d+1)."""
    w = norm_rule(mesh.dim).weights
    integ = np.einsum("seq,q,e->s", np.abs(_element_values(mesh, F)) ** p, w, mesh.volumes)
    return integ ** (1.0 / p)


def _grad_lp(mesh: Mesh, F: np.ndarray, p: float) -> np.ndarray:
    g = np.einsum("eid,sei->sed", mesh.grads, F)
    return (np.linalg.norm(g, axis=2) ** p @ mesh.volumes) ** (1.0 / p)


def field_stats(formulation: Formulation, a: np.ndarray, f: np.ndarray | None, mesh: Mesh,
                times: np.ndarray, q: float) -> FieldStats:
    """Measure the frozen fields on the time grid.

    Time derivatives are difference quotients at half steps, where f is averaged over
    the two step ends. Pressure forms report b_hat = max ||f - a_t/2||_{L2} and
    b_tilde = max ||f||_{H1}; W3 reports the stiffness-weight norms.
    """
    dt = float(times[1] - times[0])
    a_t = np.diff(a, axis=0) / dt
    out = {"a_lo": float(a.min()), "a_hi": float(a.max()),
           "a_Linf_Linf": float(np.abs(a).max())}
    if formulation is Formulation.W3:
        out.update({
            "a_L2_Linf": time_lp(times, np.abs(a).max(axis=(1, 2)), 2.0),
            "grad_a_L2_L2": time_lp(times, _grad_lp(mesh, a, 2.0), 2.0),
            "grad_a_L2_L4": time_lp(times, _grad_lp(mesh, a, 4.0), 2.0),
            "at_L43_L2": midpoint_lp(dt, _lp(mesh, a_t, 2.0), 4.0 / 3.0),
            "at_L2_L2": midpoint_lp(dt, _lp(mesh, a_t, 2.0), 2.0),
        })
        return FieldStats(out)
    f = np.zeros_like(a) if f is None else f
    drift = 0.5 * (f[1:] + f[:-1]) - 0.5 * a_t
    f_h1 = np.sqrt(_lp(mesh, f, 2.0) ** 2 + _grad_lp(mesh, f, 2.0) ** 2)
    out.update({"b_hat": time_linf(_lp(mesh, drift, 2.0)), "b_tilde": time_linf(f_h1)})
    if q > 1:
        r = (q + 1.0) / (q - 1.0)
        out["drift_Lr_Lr"] = midpoint_lp(dt, _lp(mesh, drift, r), r)
        out["f_L2r_H1"] = time_lp(times, f_h1, 2.0 * r)
    return FieldStats(out)


def frozen_fields(traj: Trajectory, setup: Setup, iterate: Trajectory | None = None):
    """(a, f) frozen at ``iterate`` (default: the trajectory itself, i.e. its fixed point)."""
    return freeze_coefficients(setup.formulation, iterate if iterate is not None else traj,
                               setup.material, setup.settings.degeneracy_margin)
