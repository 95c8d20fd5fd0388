"""Pointwise monitors: a priori L-infinity bounds and the degeneracy margin."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..assembly import element_local
from ..errors import InvalidArgument
from ..evolution import Trajectory
from ..norms import spatial_norms
from ..parameters import Formulation
from .constants import ConstantsTable

LINF_VARIANTS = ("on_u_W1", "on_u_W2", "on_ut_W3")


@dataclass(frozen=True)
class LinfBound:
    bound: float
    measured: float

    @property
    def slack(self) -> float:
        return self.bound - self.measured

    @property
    def holds(self) -> bool:
        return self.measured <= self.bound


def linf_bound(traj: Trajectory, variant: str, constants: ConstantsTable) -> LinfBound:
    """Evaluate an a priori sup-norm bound on the trajectory and compare with the sup.

    ``on_u_W1`` bounds sup|u| through the initial gradient and the space-time
    L^{q+1} norm of grad u_t; ``on_u_W2`` through sup_t |grad u|_{L^{q+1}}; ``on_ut_W3``
    bounds sup|u_t| through sup_t |grad u_t|_{L^{q+1}} and sup_t |u_t|_{L^2}.
    """
    if variant not in LINF_VARIANTS:
        raise InvalidArgument(f"unknown bound {variant!r}; choose from {LINF_VARIANTS}")
    q = constants.q
    if not q > traj.mesh.dim - 1:
        raise InvalidArgument(f"sup-norm bounds need q > d - 1 (q={q}, d={traj.mesh.dim})")
    C_W, C_P, C1, C2 = constants.require("W1q1_Linf", "C_P", "C1_omega", "C2_omega")
    p = q + 1.0
    T = float(traj.times[-1] - traj.times[0])
    sn = spatial_norms(traj.mesh)
    ut_sup = traj.norm("ut", "L2", "Linf")
    if variant == "on_ut_W3":
        bound = C_W * ((1 + C_P) * traj.norm("ut", "grad_Lp", "Linf", p_space=p) + C2 * ut_sup)
        return LinfBound(bound, float(np.max(np.abs(traj.v))))
    u0 = traj.u[0]
    tail = C1 * sn.l1(u0) + C2 * T * ut_sup
    if variant == "on_u_W1":
        grad_part = sn.grad_lp(u0, p) + T ** (q / p) * traj.norm("ut", "grad_Lp", "Lp", p, p)
    else:
        grad_part = traj.norm("u", "grad_Lp", "Linf", p_space=p)
    return LinfBound(C_W * ((1 + C_P) * grad_part + tail), float(np.max(np.abs(traj.u))))


@dataclass(frozen=True)
class DegeneracyMargin:
    """Minimum of the coefficient that must stay positive, with its location."""

    value: float
    step: int
    node: int


def degeneracy_margin(traj: Trajectory, formulation: Formulation | str, k) -> DegeneracyMargin:
    """min of 1 - 2k u (pressure forms) or 1 - 2 k_tilde u_t (potential form).

    ``k`` may be a scalar or a per-element array (coupled media); with a per-element ``k``
    a node shared by elements of different k reports the smallest value.
    """
    formulation = Formulation.parse(formulation)
    field = traj.v if formulation is Formulation.W3 else traj.u
    k_arr = np.asarray(k, dtype=float)
    if k_arr.ndim == 0:
        values = 1.0 - 2.0 * float(k_arr) * field
        s, node = np.unravel_index(np.argmin(values), values.shape)
        return DegeneracyMargin(float(values[s, node]), int(s), int(node))
    el = traj.mesh.elements
    local = 1.0 - 2.0 * element_local(traj.mesh, k_arr)[None] * field[:, el]
    s, e, i = np.unravel_index(np.argmin(local), local.shape)
    return DegeneracyMargin(float(local[s, e, i]), int(s), int(el[e, i]))
