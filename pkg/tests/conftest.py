from dataclasses import replace

import pytest

from westervelt.analysis import estimate_constants
from westervelt.parameters import Formulation, MeshSpec, PhysicalParams, ScenarioSpec

SMALL_DATA = {"u0": "0.0005*cos(pi*x)", "u1": "0.001*cos(pi*x)", "g": "0.001*sin(3*t)"}


def make_spec(formulation=Formulation.W1, *, n_elements=32, T=0.5, n_steps=50, data=None,
              fields=None, **params) -> ScenarioSpec:
    base = {"b": 1.0, "delta": 0.5, "q": 3.0, "alpha": 1.0}
    base.update(params)
    return ScenarioSpec(formulation=formulation, params=PhysicalParams(**base),
                        mesh=MeshSpec(n_elements=n_elements), T=T, n_steps=n_steps,
                        fields=fields, **(SMALL_DATA if data is None else data))


def scaled(spec: ScenarioSpec, factor: float) -> ScenarioSpec:
    return replace(spec, u0=f"{factor}*({spec.u0})", u1=f"{factor}*({spec.u1})",
                   g=f"{factor}*({spec.g})")


@pytest.fixture(scope="session")
def constants_q3():
    return estimate_constants(MeshSpec(n_elements=32).build(), 3.0)


@pytest.fixture(scope="session")
def constants_q1():
    return estimate_constants(MeshSpec(n_elements=32).build(), 1.0)
