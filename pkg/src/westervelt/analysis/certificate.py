"""Smallness certificates: the existence-theorem hypotheses instantiated numerically.

A certificate evaluates a0 (the degeneracy bound of the frozen coefficient), the data
bound kappa_T, the windows for the ball radii m_bar and M_bar and, for the pressure
form W1, the contraction condition. Ball radii not given by the caller are chosen as
the smallest values (with 1% slack) satisfying the data-bound inequalities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidArgument
from ..evolution import Setup, prepare
from ..parameters import Formulation, ScenarioSpec
from .constants import ConstantsTable
from .ingredients import DataNorms, data_norms

SLACK = 1.01
FLOOR = 1e-14
_RADIUS_ITERATIONS = 60


@dataclass(frozen=True)
class Condition:
    """Strict inequality ``value < bound``."""

    name: str
    value: float
    bound: float

    @property
    def holds(self) -> bool:
        return bool(self.value < self.bound)


@dataclass(frozen=True)
class SmallnessCertificate:
    formulation: Formulation
    a0: float
    kappa: float
    kappa_bound: float
    m_bar: float
    M_bar: float
    conditions: tuple[Condition, ...]
    cbar: float | None
    needs_cbar: bool = True
    notes: tuple[str, ...] = field(default_factory=tuple)

    @property
    def status(self) -> str:
        if self.needs_cbar and self.cbar is None:
            return "inconclusive"
        return "pass" if all(c.holds for c in self.conditions) else "fail"

    @property
    def passes(self) -> bool:
        return self.status == "pass"

    def failed(self) -> list[str]:
        return [c.name for c in self.conditions if not c.holds]

    def rows(self):
        yield "formulation", self.formulation.value
        yield "status", self.status
        yield "a0", self.a0
        yield "kappa", self.kappa
        yield "kappa_bound", self.kappa_bound
        yield "m_bar", self.m_bar
        yield "M_bar", self.M_bar
        yield "cbar", self.cbar
        for c in self.conditions:
            yield f"condition.{c.name}.value", c.value
            yield f"condition.{c.name}.bound", c.bound
            yield f"condition.{c.name}.holds", c.holds
        for i, note in enumerate(self.notes):
            yield f"note.{i}", note


def _inv(x: float) -> float:
    return math.inf if x == 0 else 1.0 / x


def _half_min(*caps: float) -> float:
    m = min(caps)
    return 0.5 * m if m > 0 else math.nan


def _cap(num: float, den: float) -> float:
    if den > 0:
        return num / den
    return math.inf if num > 0 else -math.inf


@dataclass(frozen=True)
class _Media:
    """Material bounds entering the conditions (homogeneous media: all equal)."""

    k: float
    b: float
    b_linear: float
    b_delta: float
    c2_lo: float
    c2_hi: float
    epsilon: float
    k_tilde: float

    @classmethod
    def of(cls, setup: Setup) -> "_Media":
        m = setup.material
        b = float(np.min(m.b))
        return cls(k=float(np.max(np.abs(m.k))), b=b,
                   b_linear=b * (1 - float(np.max(m.delta))),
                   b_delta=b * float(np.min(m.delta)),
                   c2_lo=float(np.min(m.stiff)), c2_hi=float(np.max(m.stiff)),
                   epsilon=float(m.epsilon), k_tilde=abs(float(m.k_tilde)))


def _radii(energy, kappa_sq: float, q: float, m_bar, M_bar):
    """Fixed point of m = SLACK*sqrt(kappa^2/A(m, M)), M = SLACK*(kappa^2/E(m, M))^(1/(q+1)).

    ``energy(m, M)`` returns the effective coefficients (A, E) of the data-bound
    inequality (already divided by C-bar). Given radii are kept fixed.
    """
    m = m_bar if m_bar is not None else FLOOR
    M = M_bar if M_bar is not None else FLOOR
    for _ in range(_RADIUS_ITERATIONS):
        A, E = energy(m, M)
        if not (A > 0 and E > 0):
            break
        new_m = m if m_bar is not None else max(SLACK * math.sqrt(kappa_sq / A), FLOOR)
        new_M = M if M_bar is not None else max(SLACK * (kappa_sq / E) ** (1 / (q + 1)), FLOOR)
        if abs(new_m - m) <= 1e-12 * new_m and abs(new_M - M) <= 1e-12 * new_M:
            m, M = new_m, new_M
            break
        m, M = new_m, new_M
    return m, M


# ---------------------------------------------------------------- W1 and Coupled


def _w1_energy_coefficients(x: _Media, a_lo: float, m: float, M: float, T: float, q: float,
                            ch: float) -> tuple[float, float, float]:
    """(min m-coefficient, M-coefficient, and a helper flag) of the W1 data bound."""
    p = q + 1
    bh, bt = x.k * m, 2 * x.k * m
    bl, bd, c2 = x.b_linear, x.b_delta, x.c2_hi
    e0 = 0.5 * (a_lo / 4 - bh * ch ** 2 * T)
    e1 = bd / 4
    tau, sigma, eta = a_lo / 2, bl / 8, bd / (4 * p)
    drift = ch ** 4 * bt ** 2 / (2 * tau)
    mu = _half_min(_cap(bl / 2 - ch ** 2 * bh, drift + c2),
                   _cap(a_lo / 4 - ch ** 2 * bh * T - e0, e0 + drift * T),
                   sigma * x.c2_lo / c2 ** 2, _cap(bd / 2 - e1, e1))
    if not e0 > 0 or math.isnan(mu):
        return math.nan, math.nan, math.nan
    m_coef = min(a_lo / 4 - ch ** 2 * bh * T - e0 * (mu + 1) - mu * drift * T,
                 mu * (a_lo - tau) / 2, mu * (bl / 4 - sigma))
    M_coef = bd / 2 - e1 * (mu + 1)
    return m_coef, M_coef, mu


def _w1_certificate(setup: Setup, c: ConstantsTable, d: DataNorms, cbar, m_bar, M_bar):
    c.require("W1q1_Linf", "C_P", "C1_omega", "C2_omega", "H1_L4")
    x = _Media.of(setup)
    q, T = float(setup.material.q), float(setup.times[-1] - setup.times[0])
    p = q + 1
    cw, cp, c1, c2o, ch = c.W1q1_Linf, c.C_P, c.C1_omega, c.C2_omega, c.H1_L4
    kappa_sq = d.kappa_sq
    kappa = math.sqrt(kappa_sq)
    lead = max(1 + cp, c1)
    cb = cbar if cbar is not None else 1.0

    def ball(m, M):
        return (1 + cp) * T ** (q / p) * M + c2o * T * m

    def a0_of(m, M):
        return 2 * x.k * cw * (lead * kappa + ball(m, M))

    def energy(m, M):
        a_lo = 1 - a0_of(m, M)
        if not a_lo > 0:
            return math.nan, math.nan
        m_coef, M_coef, _ = _w1_energy_coefficients(x, a_lo, m, M, T, q, ch)
        return m_coef / cb, M_coef / cb

    m, M = _radii(energy, kappa_sq, q, m_bar, M_bar)
    a0 = a0_of(m, M)
    a_lo = 1 - a0
    m_coef, M_coef, _ = _w1_energy_coefficients(x, a_lo, m, M, T, q, ch)
    kappa_sq_bound = min(m_coef * m ** 2, M_coef * M ** p) / cb
    conditions = [
        Condition("a0_below_one", a0, 1.0),
        Condition("ball_radii", 2 * x.k * cw * ball(m, M), 1.0),
        Condition("m_bar_window", m, _inv(x.k) * min(x.b_linear / (2 * ch ** 2),
                                                     a_lo / (4 * T * ch ** 2))),
        Condition("kappa_linear", kappa, (_inv(2 * x.k * cw) - ball(m, M)) / lead),
        Condition("kappa_energy", kappa_sq, kappa_sq_bound * SLACK),
    ]
    kh = x.k * ch ** 2 * m
    denominator = min(a_lo / 4 - 3 * T * kh, x.b_linear / 2 - 3 * kh, x.c2_lo / 4)
    contraction = kh * (T + 1) * max(1.0, T) / denominator if denominator > 0 else math.inf
    conditions.append(Condition("contraction", contraction, 1.0))
    return SmallnessCertificate(setup.formulation, a0, kappa,
                                math.sqrt(max(kappa_sq_bound, 0.0)), m, M, tuple(conditions),
                                cbar, True, ("kappa_energy holds strictly: the bound carries "
                                             "the radius slack",))


# ---------------------------------------------------------------- W2


def _w2_certificate(setup: Setup, c: ConstantsTable, d: DataNorms, m_bar, M_bar):
    c.require("W1q1_Linf", "C_P", "C1_omega", "C2_omega", "H1_L4", "C2tr")
    x = _Media.of(setup)
    q, T = float(setup.material.q), float(setup.times[-1] - setup.times[0])
    p = q + 1
    cw, cp, c1, c2o, ch, c2tr = (c.W1q1_Linf, c.C_P, c.C1_omega, c.C2_omega, c.H1_L4,
                                 c.C2tr)
    kappa_sq = (d.g_L2_L2 ** 2 + d.g_L1_L2 ** 2 + d.u1_L2 ** 2 + d.grad_u0_L2 ** 2
                + d.grad_u0_Lq1 ** p + d.u0_L1 ** 2)
    kappa = math.sqrt(kappa_sq)
    c2, eps = x.c2_lo, x.epsilon

    def ball(m, M):
        return (1 + cp) * M + c2o * T * m

    def a0_of(m, M):
        return 2 * x.k * cw * (c1 * kappa + ball(m, M))

    def coefficients(m, M):
        a0 = a0_of(m, M)
        a_lo, a_hi, bh = 1 - a0, 1 + a0, x.k * m
        tau = 0.5 * min((x.b - 2 * bh * ch ** 2) / (2 * c2tr ** 2),
                        (a_lo - 4 * ch ** 2 * bh * T) / (4 * c2tr ** 2))
        if not (a_lo > 0 and tau > 0):
            return math.nan, math.nan, math.nan
        cbar = max(1 / (4 * tau), a_hi / 2, c2 / 2, c2 * eps / p)
        m_coef = min(a_lo / 4 - T * bh * ch ** 2 - c2tr ** 2 * tau,
                     x.b / 2 - bh * ch ** 2 - c2tr ** 2 * tau)
        return m_coef / cbar, c2 * eps / (2 * p) / cbar, cbar

    m, M = _radii(lambda m, M: coefficients(m, M)[:2], kappa_sq, q, m_bar, M_bar)
    a0 = a0_of(m, M)
    m_coef, M_coef, cbar = coefficients(m, M)
    kappa_sq_bound = min(m_coef * m ** 2, M_coef * M ** p)
    conditions = (
        Condition("a0_below_one", a0, 1.0),
        Condition("ball_radii", 2 * x.k * cw * ball(m, M), 1.0),
        Condition("m_bar_window", m, _inv(x.k) * min((1 - a0) / (4 * T * ch ** 2),
                                                     x.b / (2 * ch ** 2))),
        Condition("kappa_linear", kappa, (_inv(2 * x.k * cw) - ball(m, M)) / c1),
        Condition("kappa_energy", kappa_sq, kappa_sq_bound * SLACK),
    )
    return SmallnessCertificate(setup.formulation, a0, kappa,
                                math.sqrt(max(kappa_sq_bound, 0.0)), m, M, conditions, cbar,
                                False, ("C-bar is the explicit maximum of the estimate's "
                                        "right-hand coefficients",))


# ---------------------------------------------------------------- W3


def _w3_certificate(setup: Setup, c: ConstantsTable, d: DataNorms, cbar, m_bar, M_bar):
    q = float(setup.material.q)
    if q < 3:
        raise InvalidArgument("the potential-form existence theorem needs q >= 3")
    c.require("W1q1_Linf", "C_P", "C2_omega", "Lq1_L4")
    x = _Media.of(setup)
    T = float(setup.times[-1] - setup.times[0])
    p, s = q + 1, (q + 1) / (q - 1)
    cw, cp, c2o, c4 = c.W1q1_Linf, c.C_P, c.C2_omega, c.Lq1_L4
    c2, kt = x.c2_lo, x.k_tilde
    kappa_sq = d.C_Gamma + d.initial_bracket
    kappa = math.sqrt(kappa_sq)
    bl, bd = x.b_linear, x.b_delta
    cb = cbar if cbar is not None else 1.0

    def theta(m, M):
        return 2 * kt * cw * ((1 + cp) * M + c2o * m)

    def bounds(m, M):
        th = theta(m, M)
        damp = 2 * kt * c2 / (1 - th) ** 2
        return th, c2 / (1 + th), c2 / (1 - th), damp * c4 * math.sqrt(T) * M

    def rest(m, M):
        """Bracket terms other than the data norm kappa^2."""
        return ((T * math.sqrt(T) * M) ** s + (T ** 2.5 * M) ** s
                + (T ** 0.25 * m + math.sqrt(T) * m + math.sqrt(T) * M) * d.grad_u0_L4 ** 2
                + ((0.5 + T ** 0.75) * T ** 0.75 * m) ** s + (T ** 2.5 * m) ** s)

    def coefficients(m, M):
        th, a_lo, a_max, grad_a = bounds(m, M)
        if not th < 1:
            return math.nan, math.nan
        a_tilde = a_lo / 4 - grad_a / 2
        b_tilde = 0.25 - grad_a * T * (c4 * c2o) ** 2
        if not (a_tilde > 0 and b_tilde > 0):
            return math.nan, math.nan
        tau = 1 / (4 * grad_a) if grad_a > 0 else 1.0
        e0, e1 = b_tilde / 2, bd / 4
        mu = _half_min(_cap(b_tilde - e0, e0), _cap(bl / 2, a_max),
                       _cap(a_tilde, 2 * a_max ** 2 / bl), _cap(bd / 2 - e1, e1))
        if math.isnan(mu):
            return math.nan, math.nan
        eta = mu * bd / (4 * p * (2 * mu + 1))
        m_coef = min(mu * (0.5 - tau * grad_a), min(b_tilde - e0 * (mu + 1), mu * bl / 8) / 2)
        return m_coef, mu * bd / (2 * p) - eta * (2 * mu + 1)

    def energy(m, M):
        m_coef, M_coef = coefficients(m, M)
        total = kappa_sq + rest(m, M)
        # the radii solve coef * radius^power = C-bar * total; express via kappa_sq
        scale = kappa_sq / total if total > 0 else 1.0
        return m_coef * scale / cb, M_coef * scale / cb

    m, M = _radii(energy, kappa_sq, q, m_bar, M_bar)
    th, a_lo, a_max, grad_a = bounds(m, M)
    m_coef, M_coef = coefficients(m, M)
    kappa_sq_bound = min(m_coef * m ** 2, M_coef * M ** p) / cb - rest(m, M)
    conditions = (
        Condition("theta_below_one", th, 1.0),
        Condition("grad_a_small", grad_a, c2 / (2 * (1 + th)) * SLACK),
        Condition("b_tilde_window", 2 * kt * c2 * T ** 1.5 * M * c4 ** 3 * c2o ** 2
                  / (1 - th) ** 2, 0.25),
        Condition("kappa_energy", kappa_sq, kappa_sq_bound * SLACK),
    )
    return SmallnessCertificate(setup.formulation, th, kappa,
                                math.sqrt(max(kappa_sq_bound, 0.0)), m, M, conditions, cbar,
                                True, ("a0 reports the velocity bound theta of the "
                                       "potential-form coefficient",))


def smallness_certificate(setup: Setup | ScenarioSpec, constants: ConstantsTable, *,
                          data: DataNorms | None = None, m_bar: float | None = None,
                          M_bar: float | None = None, cbar: float | None = None
                          ) -> SmallnessCertificate:
    """Instantiate the existence-theorem hypotheses for ``setup``'s formulation.

    ``cbar`` is the constant of the higher-order estimate (W1, Coupled, W3); W2 uses its
    explicit constant. Without it the certificate is inconclusive.
    """
    setup = setup if isinstance(setup, Setup) else prepare(setup)
    for name, value in (("m_bar", m_bar), ("M_bar", M_bar), ("cbar", cbar)):
        if value is not None and not value > 0:
            raise InvalidArgument(f"{name} must be positive, got {value}")
    data = data if data is not None else data_norms(setup)
    form = setup.formulation
    if form in (Formulation.W1, Formulation.COUPLED):
        return _w1_certificate(setup, constants, data, cbar, m_bar, M_bar)
    if form is Formulation.W2:
        return _w2_certificate(setup, constants, data, m_bar, M_bar)
    return _w3_certificate(setup, constants, data, cbar, m_bar, M_bar)
