"""Finite-element solver and estimate verification for the Westervelt equation with
q-Laplacian strong damping, Neumann excitation and absorbing boundaries."""

from .errors import (DegeneracyError, EstimationFailure, InvalidArgument, NonConvergence,
                     ScenarioError, StepFailure, WesterveltError)
from .evolution import (LinearizedProblem, Setup, Trajectory, prepare, solve_linearized,
                        solve_nonlinear_monolithic)
from .fixedpoint import BallSpec, apply_T, ball_membership, picard_solve, triple_norm
from .geometry import BoundaryTag, Mesh, build_interval_mesh, build_rect_mesh
from .parameters import (Formulation, MeshSpec, PhysicalParams, ScenarioSpec, SolverSettings,
                         load_scenario, scenario_from_dict)

__all__ = [
    "DegeneracyError", "EstimationFailure", "InvalidArgument", "NonConvergence",
    "ScenarioError", "StepFailure", "WesterveltError",
    "LinearizedProblem", "Setup", "Trajectory", "prepare", "solve_linearized",
    "solve_nonlinear_monolithic",
    "BallSpec", "apply_T", "ball_membership", "picard_solve", "triple_norm",
    "BoundaryTag", "Mesh", "build_interval_mesh", "build_rect_mesh",
    "Formulation", "MeshSpec", "PhysicalParams", "ScenarioSpec", "SolverSettings",
    "load_scenario", "scenario_from_dict",
]
