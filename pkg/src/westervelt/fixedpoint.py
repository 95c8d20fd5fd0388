"""Fixed-point map of the linearization, Picard iteration, contraction norm and balls."""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .assembly import element_local
from .errors import DegeneracyError, InvalidArgument, NonConvergence
from .evolution import Setup, Trajectory, prepare, same_grid, solve_linearized
from .parameters import Formulation, Material, ScenarioSpec


def freeze_coefficients(formulation: Formulation, v: Trajectory, material: Material,
                        margin: float = 1e-6):
    """Frozen fields (a, f) of the linearized problem built from the iterate ``v``.

    Pressure forms: a = (1 - 2k v) * s and f = -2k v_t * s with s = 1/lam for Coupled and
    s = 1 otherwise. W3: a = c^2 / (1 - 2 k_tilde v_t) and f = None. Fields are
    element-local P1 arrays of shape (S, E, d+1).
    """
    mesh = v.mesh
    el = mesh.elements
    if formulation is Formulation.W3:
        factor = 1.0 - 2.0 * material.k_tilde * v.v
        _guard(factor, margin, "1 - 2 k_tilde v_t")
        return (material.c2 / factor)[:, el], None
    k = element_local(mesh, material.k)
    scale = element_local(mesh, material.mass_scale)
    factor = 1.0 - 2.0 * k[None] * v.u[:, el]
    if np.any(factor <= margin):
        s, e, i = np.argwhere(factor <= margin)[0]
        node = int(el[e, i])
        raise DegeneracyError(f"1 - 2 k v = {factor[s, e, i]:.6g} <= {margin:g} at node {node}, "
                              f"step {s}", node=node, step=int(s), value=float(factor[s, e, i]))
    return scale[None] * factor, scale[None] * (-2.0 * k[None] * v.v[:, el])


def _guard(values: np.ndarray, margin: float, what: str) -> None:
    if np.any(values <= margin):
        s, node = np.unravel_index(np.argmin(values), values.shape)
        raise DegeneracyError(f"{what} = {values[s, node]:.6g} <= {margin:g} at node {node}, "
                              f"step {s}", node=int(node), step=int(s),
                              value=float(values[s, node]))


def apply_T(setup: Setup | ScenarioSpec, v: Trajectory, ball: "BallSpec | None" = None
            ) -> Trajectory:
    """One evaluation of the fixed-point map: solve the problem frozen at ``v``."""
    setup = setup if isinstance(setup, Setup) else prepare(setup)
    if ball is not None:
        membership = ball_membership(v, ball, setup)
        if not membership.inside:
            warnings.warn(f"iterate outside the ball: {membership.failed()}", stacklevel=2)
    a, f = freeze_coefficients(setup.formulation, v, setup.material,
                               setup.settings.degeneracy_margin)
    return solve_linearized(setup.linearized(a, f), setup.mesh, setup.times)


def triple_norm(delta: Trajectory, other: Trajectory | None = None) -> float:
    """Contraction norm sqrt(|u_t|^2_{Linf L2} + |grad u_t|^2_{L2 L2} + |grad u|^2_{Linf L2}).

    With two arguments the norm of their difference is returned.
    """
    if other is not None:
        if not same_grid(delta, other):
            raise InvalidArgument("triple_norm needs trajectories on identical grids")
        delta = delta - other
    return float(np.sqrt(delta.norm("ut", "L2", "Linf") ** 2
                         + delta.norm("ut", "grad_L2", "Lp", p_time=2) ** 2
                         + delta.norm("u", "grad_L2", "Linf") ** 2))


@dataclass
class IterationLog:
    distances: list[float] = field(default_factory=list)
    ratios: list[float] = field(default_factory=list)
    degeneracy_margins: list[float] = field(default_factory=list)
    wall_times: list[float] = field(default_factory=list)
    ball_flags: list[dict] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.distances)

    def rows(self):
        for i, d in enumerate(self.distances):
            flags = self.ball_flags[i] if i < len(self.ball_flags) else {}
            yield {"iter": i + 1, "distance": d, "ratio": self.ratios[i],
                   "min_degeneracy_margin": self.degeneracy_margins[i],
                   "wall_time": self.wall_times[i], **{f"in_{k}": v for k, v in flags.items()}}


def coefficient_margin(traj: Trajectory, setup: Setup) -> float:
    """Minimum of 1 - 2k u (pressure forms) or 1 - 2 k_tilde u_t (W3) over nodes and steps."""
    m = setup.material
    if setup.formulation is Formulation.W3:
        return float(np.min(1.0 - 2.0 * m.k_tilde * traj.v))
    k = element_local(traj.mesh, m.k)
    return float(np.min(1.0 - 2.0 * k[None] * traj.u[:, traj.mesh.elements]))


def initial_iterate(setup: Setup) -> Trajectory:
    """Solution of the problem with the nonlinearity coefficient switched off."""
    return solve_linearized(setup.linearized(), setup.mesh, setup.times)


def picard_solve(setup: Setup | ScenarioSpec, tol: float | None = None,
                 max_iter: int | None = None, *, initial: Trajectory | None = None,
                 relaxation: float | None = None, ball: "BallSpec | None" = None
                 ) -> tuple[Trajectory, IterationLog]:
    """Iterate u^n = T(u^{n-1}) until the contraction-norm step is at most ``tol``."""
    setup = setup if isinstance(setup, Setup) else prepare(setup)
    tol = setup.settings.picard_tol if tol is None else tol
    max_iter = setup.settings.max_picard if max_iter is None else max_iter
    omega = setup.settings.relaxation if relaxation is None else relaxation
    current = initial_iterate(setup) if initial is None else initial
    log = IterationLog()
    for _ in range(max_iter):
        start = time.perf_counter()
        image = apply_T(setup, current)
        if omega != 1.0:
            image = Trajectory(setup.mesh, setup.times,
                               (1 - omega) * current.u + omega * image.u,
                               (1 - omega) * current.v + omega * image.v,
                               image.newton_iterations)
        d = triple_norm(image, current)
        prev = log.distances[-1] if log.distances else None
        log.distances.append(d)
        log.ratios.append(d / prev if prev else float("nan"))
        log.degeneracy_margins.append(coefficient_margin(image, setup))
        log.wall_times.append(time.perf_counter() - start)
        if ball is not None:
            log.ball_flags.append(ball_membership(image, ball, setup).flags())
        current = image
        if d <= tol:
            return current, log
    raise NonConvergence(f"fixed-point iteration did not reach tol={tol:g} in {max_iter} "
                         f"iterations; last distance {log.distances[-1]:.3e}",
                         distances=log.distances, ratios=log.ratios)


# ---------------------------------------------------------------- balls


@dataclass(frozen=True)
class BallSpec:
    """Bounds m_bar, M_bar defining the self-mapping set of the fixed-point map."""

    m_bar: float
    M_bar: float
    formulation: Formulation
    q: float

    def __post_init__(self):
        if not (self.m_bar > 0 and self.M_bar > 0):
            raise InvalidArgument("ball bounds m_bar and M_bar must be positive")


@dataclass(frozen=True)
class BallMembership:
    measured: dict[str, float]
    bounds: dict[str, float]

    def flags(self) -> dict[str, bool]:
        return {k: bool(self.measured[k] <= self.bounds[k]) for k in self.measured}

    @property
    def inside(self) -> bool:
        return all(self.flags().values())

    def failed(self) -> list[str]:
        return [k for k, ok in self.flags().items() if not ok]


def ball_norms(traj: Trajectory, formulation: Formulation, q: float) -> dict[str, float]:
    """The norms constraining membership in the ball, keyed by descriptive names."""
    p = q + 1
    if formulation is Formulation.W2:
        return {
            "ut_Linf_L2": traj.norm("ut", "L2", "Linf"),
            "grad_ut_L2_L2": traj.norm("ut", "grad_L2", "Lp", p_time=2),
            "grad_u_Linf_Lq1": traj.norm("u", "grad_Lp", "Linf", p_space=p),
        }
    out = {
        "utt_L2_L2": traj.norm("utt", "L2", "Lp", p_time=2) if traj.n_steps else 0.0,
        "ut_Linf_H1": traj.norm("ut", "H1", "Linf"),
    }
    if formulation is Formulation.W3:
        out["grad_ut_Linf_Lq1"] = traj.norm("ut", "grad_Lp", "Linf", p_space=p)
    else:
        out["grad_ut_Lq1_Lq1"] = traj.norm("ut", "grad_Lp", "Lp", p_space=p, p_time=p)
    return out


def ball_membership(traj: Trajectory, ball: BallSpec, setup: Setup | None = None
                    ) -> BallMembership:
    """Measure every ball norm and compare with its bound.

    With ``setup`` given, pressure-form balls also check that the initial data match.
    """
    measured = ball_norms(traj, ball.formulation, ball.q)
    bounds = {k: (ball.M_bar if k.startswith("grad_u") and "Lq1" in k else ball.m_bar)
              for k in measured}
    if setup is not None and ball.formulation is not Formulation.W2:
        mismatch = max(float(np.max(np.abs(traj.u[0] - setup.u0))),
                       float(np.max(np.abs(traj.v[0] - setup.u1))))
        measured["initial_data_mismatch"] = mismatch
        bounds["initial_data_mismatch"] = 0.0
    return BallMembership(measured, bounds)
