"""Manufactured solutions for order-of-accuracy verification of the pressure-form solver.

The source is derived symbolically from a chosen closed-form solution. The chosen
solution must have vanishing normal flux on the whole boundary (and alpha = 0, g = 0),
so that no boundary datum has to be manufactured as well.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import sympy as sp

from .evolution import prepare, solve_linearized, solve_nonlinear_monolithic
from .expressions import T, X, Y, compile_expression, parse
from .norms import spatial_norms
from .parameters import Formulation, MeshSpec, PhysicalParams, ScenarioSpec

DEFAULT_SOLUTION = "cos(pi*x)*cos(t)"


def w1_source(solution, params: PhysicalParams, dim: int = 1) -> sp.Expr:
    """Source r making ``solution`` solve the W1 equation with lower-order damping."""
    u = parse(solution)
    coords = (X, Y)[:dim]
    ut = sp.diff(u, T)
    grad_ut = [sp.diff(ut, c) for c in coords]
    norm2 = sum(gi ** 2 for gi in grad_ut)
    power = sp.Integer(1) if params.q == 1 else sp.Pow(norm2, sp.Rational(params.q - 1, 2)
                                                        if float(params.q).is_integer()
                                                        else sp.Float((params.q - 1) / 2))
    flux_factor = params.b * ((1 - params.delta) + params.delta * power)
    damping = sum(sp.diff(flux_factor * gi, c) for gi, c in zip(grad_ut, coords))
    laplace = sum(sp.diff(u, c, 2) for c in coords)
    inertia = (1 - 2 * params.k * u) * sp.diff(u, T, 2) - 2 * params.k * ut ** 2
    lower = params.beta * ut + params.gamma * sp.Abs(ut) ** (params.q - 1) * ut
    return sp.simplify(inertia - params.c2 * laplace - damping + lower)


def manufactured_spec(params: PhysicalParams, n_elements: int, n_steps: int, T_end: float,
                      solution=DEFAULT_SOLUTION) -> ScenarioSpec:
    u = parse(solution)
    return ScenarioSpec(
        formulation=Formulation.W1,
        params=replace(params, alpha=0.0),
        mesh=MeshSpec(kind="interval", length=1.0, n_elements=n_elements, gamma_fraction=0.5),
        T=T_end, n_steps=n_steps,
        u0=str(u.subs(T, 0)), u1=str(sp.diff(u, T).subs(T, 0)),
        g=0.0, source=str(w1_source(u, params, 1)),
    )


def l2_error_at_final_time(spec: ScenarioSpec, solution=DEFAULT_SOLUTION) -> float:
    setup = prepare(spec)
    if spec.params.k == 0:
        traj = solve_linearized(setup.linearized(), setup.mesh, setup.times)
    else:
        traj = solve_nonlinear_monolithic(setup)
    exact = compile_expression(solution)(setup.mesh.nodes, spec.T)
    return float(spatial_norms(setup.mesh).l2(traj.u[-1] - exact))


@dataclass(frozen=True)
class ConvergenceTable:
    kind: str  # "time" or "space"
    sizes: tuple[float, ...]
    errors: tuple[float, ...]

    @property
    def order(self) -> float:
        """Least-squares slope of log(error) against log(size)."""
        return float(np.polyfit(np.log(self.sizes), np.log(self.errors), 1)[0])

    def rows(self):
        for s, e in zip(self.sizes, self.errors):
            yield {"kind": self.kind, "size": s, "error": e}


def temporal_study(params: PhysicalParams, T_end: float = 1.0, n_elements: int = 2000,
                   steps=(25, 50, 100, 200), solution=DEFAULT_SOLUTION) -> ConvergenceTable:
    errors = [l2_error_at_final_time(manufactured_spec(params, n_elements, s, T_end, solution),
                                     solution) for s in steps]
    return ConvergenceTable("time", tuple(T_end / s for s in steps), tuple(errors))


def spatial_study(params: PhysicalParams, T_end: float = 1.0, n_steps: int = 1000,
                  elements=(8, 16, 32, 64), solution=DEFAULT_SOLUTION) -> ConvergenceTable:
    errors = [l2_error_at_final_time(manufactured_spec(params, n, n_steps, T_end, solution),
                                     solution) for n in elements]
    return ConvergenceTable("space", tuple(1.0 / n for n in elements), tuple(errors))
