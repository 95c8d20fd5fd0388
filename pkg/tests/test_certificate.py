import pytest

from westervelt.analysis import (Condition, degeneracy_margin, energy_report, fit_cbar,
                                 smallness_certificate)
from westervelt.errors import InvalidArgument
from westervelt.evolution import prepare
from westervelt.fixedpoint import BallSpec, ball_membership, picard_solve
from westervelt.parameters import Formulation

from conftest import make_spec, scaled


def fitted(setup, constants, estimate="est2"):
    traj, _ = picard_solve(setup)
    return traj, fit_cbar([energy_report(traj, estimate, setup, constants)])


def test_linear_problem_always_certified(constants_q3):
    setup = prepare(scaled(make_spec(k=0.0), 200.0))
    _, cbar = fitted(setup, constants_q3)
    cert = smallness_certificate(setup, constants_q3, cbar=cbar)
    assert cert.a0 == 0.0 and cert.passes


def test_a0_formula(constants_q3):
    setup = prepare(make_spec(k=0.5))
    cert = smallness_certificate(setup, constants_q3, m_bar=0.01, M_bar=0.02, cbar=1.0)
    c = constants_q3
    assert c.C1_omega == 1.0 and c.C2_omega == 1.0
    T = 0.5
    expected = 2 * 0.5 * c.W1q1_Linf * (max(1 + c.C_P, 1.0) * cert.kappa
                                        + (1 + c.C_P) * T ** 0.75 * 0.02 + T * 0.01)
    assert cert.a0 == pytest.approx(expected, rel=1e-12)


def test_borderline_a0(constants_q3):
    assert Condition("a0_below_one", 0.999, 1.0).holds
    assert not Condition("a0_below_one", 1.001, 1.0).holds
    setup = prepare(make_spec(k=0.5))
    base = smallness_certificate(setup, constants_q3, m_bar=0.01, M_bar=0.02, cbar=1.0)
    for target, holds in ((0.999, True), (1.001, False)):
        table = constants_q3.with_overrides(W1q1_Linf=constants_q3.W1q1_Linf * target / base.a0)
        cert = smallness_certificate(setup, table, m_bar=0.01, M_bar=0.02, cbar=1.0)
        assert cert.a0 == pytest.approx(target)
        flag = {c.name: c.holds for c in cert.conditions}["a0_below_one"]
        assert flag is holds
        if not holds:
            assert not cert.passes


def test_small_data_w1_passes_and_guards(constants_q3):
    setup = prepare(make_spec(k=0.5))
    traj, cbar = fitted(setup, constants_q3)
    cert = smallness_certificate(setup, constants_q3, cbar=cbar)
    assert cert.passes, cert.failed()
    assert degeneracy_margin(traj, Formulation.W1, 0.5).value >= 1 - cert.a0
    assert ball_membership(traj, BallSpec(cert.m_bar, cert.M_bar, Formulation.W1, 3.0)).inside


def test_large_data_fails(constants_q3):
    setup = prepare(scaled(make_spec(k=0.5), 100.0))
    _, cbar = fitted(setup, constants_q3)
    cert = smallness_certificate(setup, constants_q3, cbar=cbar)
    assert cert.status == "fail" and "a0_below_one" in cert.failed()


def test_missing_cbar_is_inconclusive(constants_q3):
    cert = smallness_certificate(prepare(make_spec(k=0.5)), constants_q3)
    assert cert.status == "inconclusive"


def test_w2_uses_explicit_constant(constants_q3):
    cert = smallness_certificate(prepare(make_spec(Formulation.W2, k=0.5)), constants_q3)
    assert not cert.needs_cbar and cert.passes and cert.cbar > 0


def test_w3(constants_q3):
    setup = prepare(make_spec(Formulation.W3, c2=0.1, k_tilde=0.1))
    traj, cbar = fitted(setup, constants_q3, "W3lin_higher")
    cert = smallness_certificate(setup, constants_q3, cbar=cbar)
    assert cert.passes, cert.failed()
    assert degeneracy_margin(traj, Formulation.W3, 0.1).value >= 1 - cert.a0
    with pytest.raises(InvalidArgument, match="q >= 3"):
        smallness_certificate(prepare(make_spec(Formulation.W3, q=1.0)), constants_q3, cbar=1.0)


def test_rejects_nonpositive_radii(constants_q3):
    with pytest.raises(InvalidArgument):
        smallness_certificate(prepare(make_spec()), constants_q3, m_bar=0.0)


def test_rows(constants_q3):
    cert = smallness_certificate(prepare(make_spec(Formulation.W2, k=0.5)), constants_q3)
    rows = dict(cert.rows())
    assert rows["status"] == "pass" and "condition.kappa_energy.holds" in rows
