import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from westervelt.analysis import young_constant
from westervelt.assembly import q_flux, qgrad_damping
from westervelt.geometry import build_interval_mesh
from westervelt.parameters import PhysicalParams
from westervelt.reporting import format_value

finite = st.floats(-1e3, 1e3, allow_nan=False)
exponents = st.sampled_from([1.0, 2.0, 3.0, 5.0])


@given(st.lists(finite, min_size=2, max_size=2), st.lists(finite, min_size=2, max_size=2),
       exponents)
def test_q_flux_is_monotone(a, b, q):
    a, b = np.array(a), np.array(b)
    inner = (q_flux(a, q) - q_flux(b, q)) @ (a - b)
    assert inner >= -1e-12 * max(1.0, np.abs(q_flux(a, q)).max(), np.abs(q_flux(b, q)).max())


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=9, max_size=9),
       st.lists(st.floats(-10, 10, allow_nan=False), min_size=9, max_size=9), exponents)
def test_damping_residual_is_monotone(v, w, q):
    mesh = build_interval_mesh(1.0, 8)
    term = qgrad_damping(mesh, PhysicalParams(b=1.0, delta=0.5, q=q))
    v, w = np.array(v), np.array(w)
    assert (term.residual(v) - term.residual(w)) @ (v - w) >= -1e-9


@given(st.floats(0, 1e3), st.floats(0, 1e3), st.floats(0.01, 100), st.floats(1.01, 10))
def test_young_inequality(a, b, eps, s):
    rhs = eps * a ** s + young_constant(eps, s) * b ** (s / (s - 1))
    assert a * b <= rhs * (1 + 1e-12) + 1e-300


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_float_format_round_trips(x):
    assert float(format_value(x)) == x
