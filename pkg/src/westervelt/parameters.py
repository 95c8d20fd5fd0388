"""Physical parameters, formulation choice, coefficient fields and scenario specs."""

from __future__ import annotations

import copy
import enum
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import yaml

from .errors import InvalidArgument, ScenarioError
from .expressions import TimeTable, compile_expression, parse
from .geometry import BoundaryTag, Mesh, build_interval_mesh, build_rect_mesh


class Formulation(str, enum.Enum):
    """Which damped Westervelt model is solved.

    W1: pressure form with q-gradient damping; W2: pressure form with q-nonlinear
    stiffness and linear strong damping; W3: potential form with the degenerate
    stiffness coefficient; COUPLED: pressure form with piecewise material fields.
    """

    W1 = "W1"
    W2 = "W2"
    W3 = "W3"
    COUPLED = "Coupled"

    @classmethod
    def parse(cls, value) -> "Formulation":
        if isinstance(value, cls):
            return value
        for member in cls:
            if str(value).lower() == member.value.lower():
                return member
        raise ScenarioError(f"unknown formulation {value!r}; expected one of "
                            f"{[m.value for m in cls]}")

    @property
    def pressure_form(self) -> bool:
        return self is not Formulation.W3


@dataclass(frozen=True)
class PhysicalParams:
    c2: float = 1.0
    b: float = 1.0
    delta: float = 0.5
    q: float = 1.0
    epsilon: float = 1.0
    k: float = 0.0
    k_tilde: float = 0.0
    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0

    def check(self, formulation: Formulation) -> None:
        """Raise ScenarioError on any violated hard constraint."""
        for f in fields(self):
            value = getattr(self, f.name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ScenarioError(f"params.{f.name} must be a finite number, got {value!r}")
        if self.b <= 0:
            raise ScenarioError(f"params.b = {self.b} rejected: strong damping requires b > 0")
        if self.c2 <= 0:
            raise ScenarioError(f"params.c2 = {self.c2} rejected: squared sound speed must be > 0")
        if not 0 < self.delta < 1:
            raise ScenarioError(f"params.delta = {self.delta} rejected: delta must lie in (0, 1)")
        if self.q < 1:
            raise ScenarioError(f"params.q = {self.q} rejected: damping exponent requires q >= 1")
        for name in ("alpha", "beta", "gamma"):
            if getattr(self, name) < 0:
                raise ScenarioError(f"params.{name} = {getattr(self, name)} rejected: "
                                    f"{name} must be nonnegative")
        if formulation is Formulation.W2 and self.epsilon <= 0:
            raise ScenarioError(f"params.epsilon = {self.epsilon} rejected: the nonlinear "
                                "stiffness weight must be > 0")


@dataclass(frozen=True, eq=False)
class CoefficientFields:
    """Per-element material values and per-facet absorbing coefficient."""

    lam: np.ndarray
    rho: np.ndarray
    b: np.ndarray
    delta: np.ndarray
    k: np.ndarray
    alpha: np.ndarray

    def check(self, mesh: Mesh) -> None:
        E, F = mesh.n_elements, len(mesh.facets)
        for name in ("lam", "rho", "b", "delta", "k"):
            arr = getattr(self, name)
            if arr.shape != (E,):
                raise ScenarioError(f"fields.{name} must have one value per element ({E}), "
                                    f"got shape {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise ScenarioError(f"fields.{name} contains non-finite values")
        if self.alpha.shape != (F,):
            raise ScenarioError(f"fields.alpha must have one value per boundary facet ({F})")
        for name in ("lam", "rho", "b"):
            if np.min(getattr(self, name)) <= 0:
                raise ScenarioError(f"fields.{name} must be bounded below by a positive "
                                    "constant (coefficient admissibility)")
        if np.min(self.delta) <= 0 or np.max(self.delta) >= 1:
            raise ScenarioError("fields.delta must satisfy 0 < delta_min <= delta_max < 1")
        if np.min(self.alpha) < 0:
            raise ScenarioError("fields.alpha must be nonnegative")

    def bounds(self) -> dict[str, tuple[float, float]]:
        return {name: (float(np.min(getattr(self, name))), float(np.max(getattr(self, name))))
                for name in ("lam", "rho", "b", "delta", "k", "alpha")}


@dataclass(frozen=True)
class MeshSpec:
    kind: str = "interval"
    length: float = 1.0
    n_elements: int = 32
    gamma_fraction: float = 0.5
    lx: float = 1.0
    ly: float = 1.0
    nx: int = 8
    ny: int = 8
    gamma_sides: tuple[str, ...] = ("left",)

    def build(self) -> Mesh:
        if self.kind == "interval":
            return build_interval_mesh(self.length, self.n_elements, self.gamma_fraction)
        if self.kind == "rect":
            return build_rect_mesh(self.lx, self.ly, self.nx, self.ny, self.gamma_sides)
        raise ScenarioError(f"mesh.kind must be 'interval' or 'rect', got {self.kind!r}")


@dataclass(frozen=True)
class SolverSettings:
    newton_tol: float = 1e-12
    max_newton: int = 40
    picard_tol: float = 1e-10
    max_picard: int = 50
    relaxation: float = 1.0
    degeneracy_margin: float = 1e-6

    def check(self) -> None:
        if self.newton_tol <= 0 or self.picard_tol <= 0:
            raise ScenarioError("solver tolerances must be positive")
        if self.max_newton < 1 or self.max_picard < 1:
            raise ScenarioError("solver iteration limits must be >= 1")
        if not 0 < self.relaxation <= 1:
            raise ScenarioError("solver.relaxation must lie in (0, 1]")
        if self.degeneracy_margin <= 0:
            raise ScenarioError("solver.degeneracy_margin must be positive")


@dataclass(frozen=True)
class ScenarioSpec:
    """Everything needed to run one simulation.

    ``u0``/``u1`` are expression strings, numbers or nodal vectors; ``g`` is an
    expression or a ``TimeTable``; ``fields`` holds Coupled material data either as
    expression strings (evaluated at element/facet centroids) or as CoefficientFields.
    """

    formulation: Formulation = Formulation.W1
    params: PhysicalParams = PhysicalParams()
    mesh: MeshSpec = MeshSpec()
    T: float = 1.0
    n_steps: int = 50
    u0: Any = 0.0
    u1: Any = 0.0
    g: Any = 0.0
    source: Any = None
    fields: Any = None
    solver: SolverSettings = SolverSettings()
    checks: Mapping[str, Any] = field(default_factory=dict)
    warnings: tuple[str, ...] = ()

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n_steps + 1)

    def with_params(self, **changes) -> "ScenarioSpec":
        return replace(self, params=replace(self.params, **changes))


def _check_initial(name: str, value, n_nodes: int) -> None:
    if isinstance(value, (str, int, float)):
        parse(value)
        return
    arr = np.asarray(value, dtype=float)
    if arr.shape != (n_nodes,):
        raise ScenarioError(f"data.{name} has {arr.size} entries but the mesh has "
                            f"{n_nodes} nodes")
    if not np.all(np.isfinite(arr)):
        raise ScenarioError(f"data.{name} contains non-finite values")


def validate(spec: ScenarioSpec) -> ScenarioSpec:
    """Check hard invariants and return a copy with freshly computed warnings."""
    if not isinstance(spec.formulation, Formulation):
        raise ScenarioError("formulation must be a Formulation")
    spec.params.check(spec.formulation)
    spec.solver.check()
    if not (isinstance(spec.T, (int, float)) and math.isfinite(spec.T) and spec.T > 0):
        raise ScenarioError(f"time.T = {spec.T} rejected: the time horizon must be > 0")
    if int(spec.n_steps) != spec.n_steps or spec.n_steps < 1:
        raise ScenarioError(f"time.steps = {spec.n_steps} rejected: need a positive integer")
    try:
        mesh = spec.mesh.build()
    except InvalidArgument as exc:
        raise ScenarioError(f"mesh: {exc}") from exc
    _check_initial("u0", spec.u0, mesh.n_nodes)
    _check_initial("u1", spec.u1, mesh.n_nodes)
    if not isinstance(spec.g, TimeTable):
        parse(spec.g)
    if spec.source is not None:
        parse(spec.source)
    if spec.fields is not None:
        if spec.formulation is not Formulation.COUPLED:
            raise ScenarioError("fields are only meaningful for the Coupled formulation")
        coefficient_fields(spec, mesh).check(mesh)

    q, d = spec.params.q, mesh.dim
    warnings = []
    if q <= d - 1:
        warnings.append(f"q = {q} <= d - 1 = {d - 1}: the L-infinity bounds need q + 1 > d "
                        "and are inapplicable")
    if spec.formulation in (Formulation.W2, Formulation.W3) and q < 3:
        warnings.append(f"q = {q} < 3 with {spec.formulation.value}: the embedding "
                        "L^(q+1) into L^4 needed for existence requires q >= 3")
    if spec.formulation is Formulation.W3 and spec.params.k != 0:
        warnings.append("params.k is ignored by W3; its nonlinearity uses k_tilde")
    if spec.formulation is not Formulation.W3 and spec.params.k_tilde != 0:
        warnings.append("params.k_tilde is only used by W3")
    return replace(spec, warnings=tuple(warnings))


def omega_constants(q: float, omega_measure: float) -> tuple[float, float]:
    """(C1, C2) = (|Omega|^(-q/(q+1)), |Omega|^(-(q-1)/(2(q+1))))."""
    if omega_measure <= 0:
        raise InvalidArgument(f"domain measure must be positive, got {omega_measure}")
    return (omega_measure ** (-q / (q + 1)), omega_measure ** (-(q - 1) / (2 * (q + 1))))


def coefficient_fields(spec: ScenarioSpec, mesh: Mesh) -> CoefficientFields:
    """Resolve Coupled material data to per-element/per-facet arrays.

    Missing entries fall back to the homogeneous parameters (lam = 1, rho = 1/c2).
    """
    if isinstance(spec.fields, CoefficientFields):
        return spec.fields
    p = spec.params
    given = dict(spec.fields or {})
    unknown = set(given) - {"lam", "rho", "b", "delta", "k", "alpha"}
    if unknown:
        raise ScenarioError(f"unknown coefficient fields {sorted(unknown)}")
    defaults = {"lam": 1.0, "rho": 1.0 / p.c2, "b": p.b, "delta": p.delta, "k": p.k,
                "alpha": p.alpha}
    out = {}
    for name, default in defaults.items():
        points = mesh.facet_centroids if name == "alpha" else mesh.centroids
        fn = compile_expression(given.get(name, default))
        out[name] = np.asarray(fn(points, 0.0), dtype=float)
    return CoefficientFields(**out)


@dataclass(frozen=True, eq=False)
class Material:
    """Element-resolved coefficients of the assembled operators.

    ``mass_scale`` multiplies the inertia weight (1/lam for Coupled, else 1);
    ``stiff`` is c^2 (or 1/rho); ``alpha`` lives on boundary facets.
    """

    formulation: Formulation
    mass_scale: np.ndarray
    stiff: np.ndarray
    b: np.ndarray
    delta: np.ndarray
    k: np.ndarray
    alpha: np.ndarray
    q: float
    epsilon: float
    beta: float
    gamma: float
    k_tilde: float
    c2: float


def resolve_material(spec: ScenarioSpec, mesh: Mesh) -> Material:
    p = spec.params
    E, F = mesh.n_elements, len(mesh.facets)
    if spec.formulation is Formulation.COUPLED:
        cf = coefficient_fields(spec, mesh)
        cf.check(mesh)
        mass_scale, stiff = 1.0 / cf.lam, 1.0 / cf.rho
        b, delta, k, alpha = cf.b, cf.delta, cf.k, cf.alpha
        beta = gamma = 0.0
    else:
        mass_scale, stiff = np.ones(E), np.full(E, p.c2)
        b, delta = np.full(E, p.b), np.full(E, p.delta)
        k = np.full(E, p.k if spec.formulation.pressure_form else 0.0)
        alpha = np.full(F, p.alpha)
        beta, gamma = p.beta, p.gamma
    alpha = np.where(mesh.facet_tags == BoundaryTag.GAMMA_HAT_ABSORBING, alpha, 0.0)
    return Material(spec.formulation, mass_scale, stiff, b, delta, k, alpha, p.q, p.epsilon,
                    beta, gamma, p.k_tilde if spec.formulation is Formulation.W3 else 0.0,
                    p.c2)


# ---------------------------------------------------------------- scenario files

_SECTIONS = {"formulation", "mesh", "time", "params", "fields", "data", "solver", "checks",
             "sweep"}


def _section(tree: Mapping, name: str, cls) -> Any:
    raw = tree.get(name) or {}
    if not isinstance(raw, Mapping):
        raise ScenarioError(f"section {name!r} must be a mapping")
    names = {f.name for f in fields(cls)}
    unknown = set(raw) - names
    if unknown:
        raise ScenarioError(f"unknown keys in {name!r}: {sorted(unknown)}")
    kwargs = dict(raw)
    if "gamma_sides" in kwargs:
        kwargs["gamma_sides"] = tuple(kwargs["gamma_sides"] or ())
    for key, value in kwargs.items():
        default = getattr(cls, key, None)
        if isinstance(default, float) and isinstance(value, (int, str)):
            try:
                kwargs[key] = float(value)
            except ValueError as exc:
                raise ScenarioError(f"{name}.{key} must be a number, got {value!r}") from exc
    return cls(**kwargs)


def _boundary_datum(raw):
    if isinstance(raw, Mapping):
        if set(raw) != {"times", "values"}:
            raise ScenarioError("data.g table needs exactly the keys 'times' and 'values'")
        return TimeTable(tuple(map(float, raw["times"])), tuple(map(float, raw["values"])))
    return raw


def _initial_datum(raw):
    if isinstance(raw, (list, tuple)):
        return tuple(float(v) for v in raw)
    return raw


def scenario_from_dict(tree: Mapping) -> ScenarioSpec:
    """Build and validate a ScenarioSpec from a parsed scenario tree."""
    if not isinstance(tree, Mapping):
        raise ScenarioError("scenario root must be a mapping")
    unknown = set(tree) - _SECTIONS
    if unknown:
        raise ScenarioError(f"unknown top-level sections {sorted(unknown)}")
    time = tree.get("time") or {}
    data = tree.get("data") or {}
    unknown = set(data) - {"u0", "u1", "g", "source"}
    if unknown:
        raise ScenarioError(f"unknown keys in 'data': {sorted(unknown)}")
    checks = dict(tree.get("checks") or {})
    if "sweep" in tree:
        checks["sweep"] = tree["sweep"]
    spec = ScenarioSpec(
        formulation=Formulation.parse(tree.get("formulation", "W1")),
        params=_section(tree, "params", PhysicalParams),
        mesh=_section(tree, "mesh", MeshSpec),
        T=float(time.get("T", 1.0)),
        n_steps=int(time.get("steps", 50)),
        u0=_initial_datum(data.get("u0", 0.0)),
        u1=_initial_datum(data.get("u1", 0.0)),
        g=_boundary_datum(data.get("g", 0.0)),
        source=data.get("source"),
        fields=tree.get("fields"),
        solver=_section(tree, "solver", SolverSettings),
        checks=checks,
    )
    return validate(spec)


def scenario_to_dict(spec: ScenarioSpec) -> dict:
    """Inverse of scenario_from_dict (for sweeps and round trips)."""
    def plain(value):
        if isinstance(value, np.ndarray):
            return value.tolist()
        if isinstance(value, tuple):
            return list(value)
        return value

    g = spec.g
    if isinstance(g, TimeTable):
        g = {"times": list(g.times), "values": list(g.values)}
    if isinstance(spec.fields, CoefficientFields):
        raise ScenarioError("array-valued coefficient fields cannot be written to a scenario")
    tree = {
        "formulation": spec.formulation.value,
        "mesh": {f.name: plain(getattr(spec.mesh, f.name)) for f in fields(MeshSpec)},
        "time": {"T": spec.T, "steps": spec.n_steps},
        "params": {f.name: getattr(spec.params, f.name) for f in fields(PhysicalParams)},
        "data": {"u0": plain(spec.u0), "u1": plain(spec.u1), "g": g, "source": spec.source},
        "solver": {f.name: getattr(spec.solver, f.name) for f in fields(SolverSettings)},
        "checks": {k: v for k, v in spec.checks.items() if k != "sweep"},
    }
    if spec.fields is not None:
        tree["fields"] = dict(spec.fields)
    if "sweep" in spec.checks:
        tree["sweep"] = spec.checks["sweep"]
    return tree


def load_scenario(path: str | Path) -> ScenarioSpec:
    path = Path(path)
    if not path.is_file():
        raise ScenarioError(f"scenario file {path} does not exist")
    try:
        tree = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ScenarioError(f"cannot parse {path}: {exc}") from exc
    return scenario_from_dict(tree or {})


def set_dotted(tree: dict, dotted: str, value) -> dict:
    """Return a deep-copied tree with ``section.key`` set to ``value``."""
    out = copy.deepcopy(tree)
    node = out
    parts = dotted.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value
    return out
