"""Implicit-midpoint time integration of the linearized and fully nonlinear problems.

Both solvers advance the first-order system (u, v = u_t). The unknown of each step is
the midpoint velocity w = (v^n + v^{n+1}) / 2, so that v^{n+1} = 2w - v^n and
u^{n+1} = u^n + dt * w; the kinematic relation holds exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .assembly import (absorbing_matrix, element_local, lower_order_damping, mass_from_local,
                       neumann_load, qgrad_damping, qstiffness, source_load, stiffness,
                       variable_stiffness, variable_stiffness_derivative, weighted_mass)
from .errors import DegeneracyError, InvalidArgument, StepFailure
from .expressions import compile_expression
from .geometry import BoundaryTag, Mesh
from .norms import midpoint_lp, spatial_norms, time_linf, time_lp
from .parameters import (Formulation, Material, ScenarioSpec, SolverSettings,
                         resolve_material, validate)


# ---------------------------------------------------------------- trajectories


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Nodal displacement and velocity on a uniform time grid."""

    mesh: Mesh
    times: np.ndarray
    u: np.ndarray  # (S, N)
    v: np.ndarray  # (S, N)
    newton_iterations: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    def accel(self) -> np.ndarray:
        """Difference-quotient acceleration located at interval midpoints, (S-1, N)."""
        if "accel" not in self._cache:
            self._cache["accel"] = difference_quotient_accel(self)
        return self._cache["accel"]

    def __sub__(self, other: "Trajectory") -> "Trajectory":
        if not same_grid(self, other):
            raise InvalidArgument("trajectories live on different grids")
        return Trajectory(self.mesh, self.times, self.u - other.u, self.v - other.v)

    def step_norm(self, quantity: str, space: str, p: float = 2.0) -> np.ndarray:
        """Spatial norm of ``quantity`` at every step.

        quantity: ``u``, ``ut`` or ``utt`` (midpoint-located); space: ``L2``, ``Lp``,
        ``grad_L2``, ``grad_Lp``, ``H1``, ``W1p``, ``Linf``, ``L1``, ``hat_L2``
        (absorbing boundary), ``gamma_L2`` or ``gamma_Lp`` (excitation boundary).
        """
        key = ("step", quantity, space, float(p))
        if key in self._cache:
            return self._cache[key]
        data = {"u": self.u, "ut": self.v, "utt": None}.get(quantity)
        if quantity == "utt":
            data = self.accel()
        if data is None:
            raise InvalidArgument(f"unknown quantity {quantity!r}")
        sn = spatial_norms(self.mesh)
        evaluators: dict[str, Callable] = {
            "L2": sn.l2,
            "Lp": lambda x: sn.lp(x, p),
            "grad_L2": sn.grad_l2,
            "grad_Lp": lambda x: sn.grad_lp(x, p),
            "H1": sn.h1,
            "W1p": lambda x: sn.w1p(x, p),
            "Linf": sn.linf,
            "L1": sn.l1,
            "hat_L2": lambda x: sn.boundary_l2(x, BoundaryTag.GAMMA_HAT_ABSORBING),
            "gamma_L2": lambda x: sn.boundary_l2(x, BoundaryTag.GAMMA_NEUMANN),
            "gamma_Lp": lambda x: sn.boundary_lp(x, p, BoundaryTag.GAMMA_NEUMANN),
        }
        if space not in evaluators:
            raise InvalidArgument(f"unknown spatial norm {space!r}")
        if data.shape[0] == 0:
            out = np.zeros(0)
        else:
            out = np.atleast_1d(np.asarray(evaluators[space](data), dtype=float))
        self._cache[key] = out
        return out

    def norm(self, quantity: str, space: str, time: str, p_space: float = 2.0,
             p_time: float = 2.0) -> float:
        """Space-time norm; ``time`` is ``Linf`` or ``Lp`` (trapezoid; midpoint sum for utt)."""
        values = self.step_norm(quantity, space, p_space)
        if time == "Linf":
            return time_linf(values)
        if time != "Lp":
            raise InvalidArgument(f"unknown time norm {time!r}")
        if quantity == "utt":
            return midpoint_lp(self.dt, values, p_time)
        return time_lp(self.times, values, p_time)


def same_grid(a: Trajectory, b: Trajectory) -> bool:
    return (a.mesh is b.mesh or a.mesh.n_nodes == b.mesh.n_nodes) and \
        a.times.shape == b.times.shape and np.array_equal(a.times, b.times)


def difference_quotient_accel(traj: Trajectory) -> np.ndarray:
    """(v^{n+1} - v^n) / dt for every step."""
    if len(traj.times) < 2:
        raise InvalidArgument("need at least two time levels for a difference quotient")
    return np.diff(traj.v, axis=0) / np.diff(traj.times)[:, None]


# ---------------------------------------------------------------- problem setup


@dataclass(frozen=True, eq=False)
class Setup:
    """Scenario resolved on a mesh: material arrays, nodal initial data, data callables."""

    spec: ScenarioSpec
    mesh: Mesh
    material: Material
    times: np.ndarray
    u0: np.ndarray
    u1: np.ndarray
    g: Callable
    source: Callable | None

    @property
    def formulation(self) -> Formulation:
        return self.spec.formulation

    @property
    def settings(self) -> SolverSettings:
        return self.spec.solver

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def linearized(self, a=None, f=None) -> "LinearizedProblem":
        return LinearizedProblem(self.formulation, self.material, a, f, self.g, self.u0,
                                 self.u1, self.source, self.settings)


def _nodal(value, mesh: Mesh) -> np.ndarray:
    if isinstance(value, (str, int, float)):
        return compile_expression(value)(mesh.nodes, 0.0)
    arr = np.asarray(value, dtype=float)
    if arr.shape != (mesh.n_nodes,):
        raise InvalidArgument(f"nodal vector has shape {arr.shape}, mesh has {mesh.n_nodes} nodes")
    return arr.copy()


def prepare(spec: ScenarioSpec, mesh: Mesh | None = None) -> Setup:
    spec = validate(spec)
    mesh = mesh if mesh is not None else spec.mesh.build()
    g = spec.g if callable(spec.g) else compile_expression(spec.g)
    source = compile_expression(spec.source) if spec.source is not None else None
    return Setup(spec, mesh, resolve_material(spec, mesh), spec.times, _nodal(spec.u0, mesh),
                 _nodal(spec.u1, mesh), g, source)


# ---------------------------------------------------------------- linearized problem


@dataclass(frozen=True, eq=False)
class LinearizedProblem:
    """Frozen-coefficient problem solved by one application of the fixed-point map.

    ``a`` and ``f`` are element-local P1 fields sampled at the time nodes, shape
    (S, E, d+1); ``None`` means a = 1 (c^2 for W3) and f = 0. For pressure forms ``a``
    weights the inertia and ``f`` the velocity; for W3 ``a`` is the stiffness weight.
    The q-nonlinearities are not frozen.
    """

    formulation: Formulation
    material: Material
    a: np.ndarray | None
    f: np.ndarray | None
    g: Callable
    u0: np.ndarray
    u1: np.ndarray
    source: Callable | None = None
    settings: SolverSettings = SolverSettings()


class _Operators:
    """Time-independent parts of the discrete system."""

    def __init__(self, mesh: Mesh, material: Material):
        self.mesh = mesh
        m = material
        form = m.formulation
        self.base_mass_local = element_local(mesh, m.mass_scale)
        self.absorbing = absorbing_matrix(mesh, m.alpha)
        self.lod = lower_order_damping(mesh, m)
        self.stiff = None
        self.qstiff = None
        if form is Formulation.W2:
            self.qstiff = qstiffness(mesh, m)
            self.damping_matrix = stiffness(mesh, m.b)
            self.damping = None
        else:
            if form is not Formulation.W3:
                self.stiff = stiffness(mesh, m.stiff)
            self.damping = qgrad_damping(mesh, m)
            self.damping_matrix = None
        q = m.q
        self.linear_in_w = (self.damping is None or q == 1 or not np.any(m.delta)) and \
            (m.gamma == 0 or q == 1)
        self.linear_in_u = self.qstiff is None or q == 1 or m.epsilon == 0

    def damp(self, w):
        if self.damping is None:
            return self.damping_matrix @ w, self.damping_matrix
        return self.damping.residual(w), self.damping.jacobian(w)


def _loads(mesh: Mesh, g: Callable, source: Callable | None, t: float) -> np.ndarray:
    F = neumann_load(mesh, g, t)
    if source is not None:
        F = F + source_load(mesh, source, t)
    return F


def _newton(system, w0: np.ndarray, settings: SolverSettings, step: int, linear: bool):
    """Solve system(w) -> (residual, jacobian) = 0 by Newton's method."""
    w = w0.copy()
    history = []
    for it in range(1, settings.max_newton + 1):
        G, J = system(w)
        if not np.all(np.isfinite(G)):
            raise StepFailure(f"non-finite residual at step {step}", step=step,
                              residual_history=history)
        history.append(float(np.max(np.abs(G))))
        delta = spla.spsolve(sps.csc_matrix(J), -G)
        w = w + delta
        if linear:
            return w, it
        if np.max(np.abs(delta)) <= settings.newton_tol * max(1.0, np.max(np.abs(w))):
            return w, it
    raise StepFailure(f"Newton did not converge in {settings.max_newton} iterations at "
                      f"step {step}; residual history {history}", step=step,
                      residual_history=history)


def _check_weight(local: np.ndarray, mesh: Mesh, margin: float, step: int, what: str):
    bad = local <= margin
    if np.any(bad):
        e, i = np.argwhere(bad)[0]
        node = int(mesh.elements[e, i])
        raise DegeneracyError(f"{what} = {local[e, i]:.6g} <= {margin:g} at node {node}, "
                              f"step {step}", node=node, step=step, value=float(local[e, i]))


def solve_linearized(problem: LinearizedProblem, mesh: Mesh, times) -> Trajectory:
    """Advance the frozen-coefficient problem with the implicit midpoint rule."""
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) < 2 or np.any(np.diff(times) <= 0):
        raise InvalidArgument("time grid must be increasing with at least two levels")
    S, E, n = len(times), mesh.n_elements, mesh.dim + 1
    m = problem.material
    ops = _Operators(mesh, m)
    margin = problem.settings.degeneracy_margin
    w3 = problem.formulation is Formulation.W3

    a = problem.a
    if a is None:
        a = np.full((S, E, n), m.c2) if w3 else np.broadcast_to(ops.base_mass_local, (S, E, n))
    a = np.asarray(a, dtype=float)
    if a.shape != (S, E, n):
        raise InvalidArgument(f"frozen coefficient a has shape {a.shape}, expected {(S, E, n)}")
    for s in range(S):
        _check_weight(a[s], mesh, margin, s, "frozen coefficient a")
    f = problem.f
    if f is not None:
        f = np.asarray(f, dtype=float)
        if f.shape != (S, E, n):
            raise InvalidArgument(f"frozen field f has shape {f.shape}, expected {(S, E, n)}")

    mass_one = mass_from_local(mesh, np.ones((E, n))) if w3 else None
    N = mesh.n_nodes
    u = np.empty((S, N))
    v = np.empty((S, N))
    u[0], v[0] = problem.u0, problem.u1
    iters = np.zeros(S - 1, dtype=int)
    linear = ops.linear_in_w and ops.linear_in_u

    for s in range(S - 1):
        dt = times[s + 1] - times[s]
        t_mid = 0.5 * (times[s] + times[s + 1])
        a_mid = 0.5 * (a[s] + a[s + 1])
        if w3:
            M = mass_one
            K = variable_stiffness(mesh, a_mid)
        else:
            M = mass_from_local(mesh, a_mid)
            K = ops.stiff
        Mf = mass_from_local(mesh, 0.5 * (f[s] + f[s + 1])) if f is not None else None
        F = _loads(mesh, problem.g, problem.source, t_mid)
        un, vn = u[s], v[s]

        def system(w, M=M, K=K, Mf=Mf, F=F, dt=dt, un=un, vn=vn):
            um = un + 0.5 * dt * w
            d_res, d_jac = ops.damp(w)
            l_res, l_jac = ops.lod.residual(w), ops.lod.jacobian(w)
            if K is not None:
                k_res, k_jac = K @ um, K
            else:
                k_res, k_jac = ops.qstiff.residual(um), ops.qstiff.jacobian(um)
            G = (2.0 / dt) * (M @ (w - vn)) + k_res + d_res + ops.absorbing @ w + l_res - F
            J = (2.0 / dt) * M + (0.5 * dt) * k_jac + d_jac + ops.absorbing + l_jac
            if Mf is not None:
                G = G + Mf @ w
                J = J + Mf
            return G, J

        w, iters[s] = _newton(system, vn, problem.settings, s, linear)
        v[s + 1] = 2.0 * w - vn
        u[s + 1] = un + dt * w
    return Trajectory(mesh, times, u, v, iters)


# ---------------------------------------------------------------- monolithic oracle


def _check_pressure_degeneracy(setup: Setup, u: np.ndarray, step: int):
    m = setup.material
    k_local = element_local(setup.mesh, m.k)
    _check_weight(1.0 - 2.0 * k_local * u[setup.mesh.elements], setup.mesh,
                  setup.settings.degeneracy_margin, step, "1 - 2 k u")


def _check_potential_degeneracy(setup: Setup, v: np.ndarray, step: int):
    values = 1.0 - 2.0 * setup.material.k_tilde * v
    margin = setup.settings.degeneracy_margin
    if np.any(values <= margin):
        node = int(np.argmin(values))
        raise DegeneracyError(f"1 - 2 k_tilde u_t = {values[node]:.6g} <= {margin:g} at node "
                              f"{node}, step {step}", node=node, step=step,
                              value=float(values[node]))


def solve_nonlinear_monolithic(spec: ScenarioSpec | Setup, mesh: Mesh | None = None,
                               times=None) -> Trajectory:
    """Newton on the full nonlinear step equations, an oracle for the fixed-point solver.

    Pressure forms use the inertia weight (1 - 2k u^{n+1/2}) (divided by lam for
    Coupled) and move the 2k (u_t)^2 right-hand side to the left. W3 uses the stiffness
    weight averaged from c^2 / (1 - 2 k_tilde v) at both ends of the step, which is what
    the fixed-point map produces when it interpolates frozen fields linearly in time.
    """
    setup = spec if isinstance(spec, Setup) else prepare(spec, mesh)
    mesh = setup.mesh
    times = setup.times if times is None else np.asarray(times, dtype=float)
    m = setup.material
    ops = _Operators(mesh, m)
    S, E, n, N = len(times), mesh.n_elements, mesh.dim + 1, mesh.n_nodes
    w3 = setup.formulation is Formulation.W3
    settings = setup.settings

    if w3:
        _check_potential_degeneracy(setup, setup.u1, 0)
        mass_one = mass_from_local(mesh, np.ones((E, n)))
    else:
        _check_pressure_degeneracy(setup, setup.u0, 0)
    scale = ops.base_mass_local  # 1/lam (or 1) per element-local node
    k_local = element_local(mesh, m.k)
    elements = mesh.elements

    u = np.empty((S, N))
    v = np.empty((S, N))
    u[0], v[0] = setup.u0, setup.u1
    iters = np.zeros(S - 1, dtype=int)

    for s in range(S - 1):
        dt = times[s + 1] - times[s]
        t_mid = 0.5 * (times[s] + times[s + 1])
        F = _loads(mesh, setup.g, setup.source, t_mid)
        un, vn = u[s], v[s]

        if w3:
            kt, c2 = m.k_tilde, m.c2
            a_start = c2 / (1.0 - 2.0 * kt * vn)

            def system(w, un=un, vn=vn, dt=dt, F=F, a_start=a_start):
                um = un + 0.5 * dt * w
                denom = 1.0 - 2.0 * kt * (2.0 * w - vn)
                if np.any(denom <= settings.degeneracy_margin):
                    _check_potential_degeneracy(setup, 2.0 * w - vn, s + 1)
                a_mid = 0.5 * (a_start + c2 / denom)
                K = variable_stiffness(mesh, a_mid)
                da = 2.0 * kt * c2 / denom ** 2
                D = variable_stiffness_derivative(mesh, um) @ sps.diags(da)
                d_res, d_jac = ops.damp(w)
                G = ((2.0 / dt) * (mass_one @ (w - vn)) + K @ um + d_res
                     + ops.absorbing @ w + ops.lod.residual(w) - F)
                J = ((2.0 / dt) * mass_one + (0.5 * dt) * K + D + d_jac + ops.absorbing
                     + ops.lod.jacobian(w))
                return G, J
        else:
            def system(w, un=un, vn=vn, dt=dt, F=F):
                um = un + 0.5 * dt * w
                A = scale * (1.0 - 2.0 * k_local * um[elements])
                z = (2.0 / dt) * (w - vn)
                wl = w[elements]
                M_A = mass_from_local(mesh, A)
                M_F = mass_from_local(mesh, -2.0 * k_local * scale * wl)
                if ops.stiff is not None:
                    k_res, k_jac = ops.stiff @ um, ops.stiff
                else:
                    k_res, k_jac = ops.qstiff.residual(um), ops.qstiff.jacobian(um)
                d_res, d_jac = ops.damp(w)
                G = (M_A @ z + k_res + d_res + ops.absorbing @ w + M_F @ w
                     + ops.lod.residual(w) - F)
                J = ((2.0 / dt) * M_A + (0.5 * dt) * k_jac + d_jac + ops.absorbing
                     + ops.lod.jacobian(w)
                     + mass_from_local(mesh, -k_local * dt * scale * z[elements])
                     + 2.0 * M_F)
                return G, J

        w, iters[s] = _newton(system, vn, settings, s, linear=False)
        v[s + 1] = 2.0 * w - vn
        u[s + 1] = un + dt * w
        if w3:
            _check_potential_degeneracy(setup, v[s + 1], s + 1)
        else:
            _check_pressure_degeneracy(setup, u[s + 1], s + 1)
    return Trajectory(mesh, times, u, v, iters)


def discrete_energy(traj: Trajectory, mass_weight=1.0, c2: float = 1.0) -> np.ndarray:
    """E^n = 1/2 v^T M_a v + c^2/2 u^T K u at every step."""
    M = weighted_mass(traj.mesh, mass_weight)
    K = stiffness(traj.mesh, 1.0)
    return 0.5 * np.einsum("sn,sn->s", traj.v, (M @ traj.v.T).T) + \
        0.5 * c2 * np.einsum("sn,sn->s", traj.u, (K @ traj.u.T).T)
