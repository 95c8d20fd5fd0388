"""Term-by-term evaluation of the a priori energy estimates on discrete trajectories.

Every estimate is instantiated as ``sum(lhs) <= sum(rhs)``: each term is a coefficient
times a measured norm raised to a power. Free parameters (eps0, eps1, tau, sigma, eta,
mu) default to the midpoints of their admissible windows, chosen in dependency order.
A report whose hypotheses or coefficient windows fail is ``inconclusive``; it is never
reported as a pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from ..errors import InvalidArgument
from ..evolution import Setup, Trajectory
from ..geometry import BoundaryTag
from ..parameters import Formulation
from .constants import ConstantsTable, young_constant
from .ingredients import DataNorms, FieldStats, data_norms, field_stats, frozen_fields

FREE_PARAMETERS = ("eps0", "eps1", "tau", "sigma", "eta", "mu")
MARGIN_TOL = 1e-10

FORMULATION_OF = {
    "est1": Formulation.W1, "est2": Formulation.W1,
    "W1_beta_est1": Formulation.W1, "W1lin_est2_beta": Formulation.W1,
    "W1_gamma_est1": Formulation.W1, "W1lin_est2_gamma": Formulation.W1,
    "W1lin_est2_gamma2": Formulation.W1,
    "W2_energyest": Formulation.W2, "W2_energyest_1": Formulation.W2,
    "W3lin_lower": Formulation.W3, "W3lin_higher": Formulation.W3,
    "W3lin_lower_gamma": Formulation.W3, "W3lin_higher_gamma": Formulation.W3,
    "coupled_lower": Formulation.COUPLED,
}
ESTIMATES = tuple(FORMULATION_OF)


@dataclass(frozen=True)
class Term:
    coefficient: float
    value: float
    power: float = 2.0

    @property
    def contribution(self) -> float:
        return self.coefficient * self.value ** self.power


@dataclass(frozen=True)
class EnergyReport:
    estimate_id: str
    lhs: Mapping[str, Term]
    rhs: Mapping[str, Term]
    free_params: Mapping[str, float]
    flags: Mapping[str, bool]
    ingredients: Mapping[str, float] = field(default_factory=dict)
    notes: tuple[str, ...] = ()
    cbar: float | None = None
    needs_cbar: bool = False

    @property
    def lhs_total(self) -> float:
        return float(sum(t.contribution for t in self.lhs.values()))

    @property
    def rhs_total(self) -> float:
        return float(sum(t.contribution for t in self.rhs.values()))

    @property
    def margin(self) -> float:
        return self.rhs_total - self.lhs_total

    @property
    def scale(self) -> float:
        return max(abs(self.lhs_total), abs(self.rhs_total))

    @property
    def data_bracket(self) -> float:
        """Sum of the data quantities that C-bar multiplies (C-bar estimates only)."""
        return float(sum(t.value ** t.power for t in self.rhs.values()))

    def violated(self) -> list[str]:
        return [name for name, ok in self.flags.items() if not ok]

    @property
    def status(self) -> str:
        if self.violated() or (self.needs_cbar and self.cbar is None):
            return "inconclusive"
        margin = self.margin
        if math.isnan(margin):
            return "inconclusive"
        return "pass" if margin >= -MARGIN_TOL * self.scale else "fail"

    def rows(self):
        """Flat (key, value) records for key-value report files."""
        yield "estimate", self.estimate_id
        yield "status", self.status
        yield "margin", self.margin
        yield "lhs_total", self.lhs_total
        yield "rhs_total", self.rhs_total
        yield "cbar", self.cbar
        for side, terms in (("lhs", self.lhs), ("rhs", self.rhs)):
            for name, t in terms.items():
                yield f"{side}.{name}.coefficient", t.coefficient
                yield f"{side}.{name}.value", t.value
                yield f"{side}.{name}.power", t.power
        for name, v in self.free_params.items():
            yield f"param.{name}", v
        for name, ok in self.flags.items():
            yield f"flag.{name}", ok
        for name, v in self.ingredients.items():
            yield f"ingredient.{name}", v
        for i, note in enumerate(self.notes):
            yield f"note.{i}", note


def _cap(num: float, den: float) -> float:
    """Largest mu with mu * den < num (for num > 0); -inf when no positive mu works."""
    if math.isnan(num) or math.isnan(den):
        return math.nan
    if den > 0:
        return num / den
    return math.inf if num > 0 else -math.inf


def _min(*values: float) -> float:
    return math.nan if any(math.isnan(v) for v in values) else min(values)


class _Builder:
    def __init__(self, estimate_id: str, given: Mapping[str, float] | None, cbar):
        given = dict(given or {})
        unknown = set(given) - set(FREE_PARAMETERS)
        if unknown:
            raise InvalidArgument(f"unknown free parameters {sorted(unknown)}; "
                                  f"expected a subset of {FREE_PARAMETERS}")
        self.estimate_id = estimate_id
        self.given = given
        self.cbar = cbar
        self.lhs: dict[str, Term] = {}
        self.rhs: dict[str, Term] = {}
        self.params: dict[str, float] = {}
        self.flags: dict[str, bool] = {}
        self.notes: list[str] = []
        self.needs_cbar = False

    def hypothesis(self, name: str, holds) -> None:
        self.flags[name] = bool(holds)

    def choose(self, name: str, upper: float, lower: float = 0.0) -> float:
        """Free parameter inside (lower, upper): the given value or the window midpoint."""
        open_window = upper > lower  # False for nan
        self.flags[f"window.{name}"] = open_window
        if name in self.given:
            value = float(self.given[name])
            if not (lower < value < upper):
                raise InvalidArgument(f"{self.estimate_id}: {name}={value:g} violates its "
                                      f"window {lower:g} < {name} < {upper:g}")
        elif not open_window:
            value = math.nan
        elif math.isinf(upper):
            value = lower + 1.0
        else:
            value = 0.5 * (lower + upper)
        self.params[name] = value
        return value

    def left(self, name: str, coefficient: float, value: float, power: float = 2.0,
             strict: bool = True) -> None:
        self.lhs[name] = Term(float(coefficient), float(value), float(power))
        ok = coefficient > 0 if strict else coefficient >= 0
        self.flags[f"positive.{name}"] = bool(ok)

    def right(self, name: str, coefficient: float, value: float, power: float = 2.0) -> None:
        self.rhs[name] = Term(float(coefficient), float(value), float(power))

    def right_cbar(self, name: str, value: float, power: float = 1.0) -> None:
        self.needs_cbar = True
        self.right(name, math.nan if self.cbar is None else self.cbar, value, power)


@dataclass(frozen=True)
class _Context:
    traj: Trajectory
    setup: Setup
    constants: ConstantsTable
    data: DataNorms
    fields: FieldStats

    @property
    def q(self) -> float:
        return float(self.setup.material.q)

    @property
    def p(self) -> float:
        return self.q + 1.0

    @property
    def r(self) -> float:
        return (self.q + 1.0) / self.q

    @property
    def T(self) -> float:
        return float(self.setup.times[-1] - self.setup.times[0])

    def C(self, name: str) -> float:
        self.constants.require(name)
        return float(getattr(self.constants, name))

    # material bounds (lower/upper over the domain; equal for homogeneous media)
    @property
    def c2_lo(self) -> float:
        return float(np.min(self.setup.material.stiff))

    @property
    def c2_hi(self) -> float:
        return float(np.max(self.setup.material.stiff))

    @property
    def b(self) -> float:
        return float(np.min(self.setup.material.b))

    @property
    def b_delta(self) -> float:
        """b * delta with lower bounds of both."""
        return self.b * float(np.min(self.setup.material.delta))

    @property
    def b_linear(self) -> float:
        """b (1 - delta) with the lower bound of b and the upper bound of delta."""
        return self.b * (1.0 - float(np.max(self.setup.material.delta)))

    @property
    def alpha(self) -> float:
        """Lower bound of alpha over the absorbing boundary (0 when it is empty)."""
        hat = self.setup.mesh.facets_with(BoundaryTag.GAMMA_HAT_ABSORBING)
        return float(self.setup.material.alpha[hat].min()) if hat.size else 0.0

    def norm(self, name: str) -> float:
        return _measure(self.traj, name, self.p)


_NORMS: dict[str, Callable[[float], tuple]] = {
    "ut_Linf_L2": lambda p: ("ut", "L2", "Linf", 2.0, 2.0),
    "ut_L2_L2": lambda p: ("ut", "L2", "Lp", 2.0, 2.0),
    "grad_u_Linf_L2": lambda p: ("u", "grad_L2", "Linf", 2.0, 2.0),
    "grad_u_Linf_Lq1": lambda p: ("u", "grad_Lp", "Linf", p, 2.0),
    "grad_ut_L2_L2": lambda p: ("ut", "grad_L2", "Lp", 2.0, 2.0),
    "grad_ut_Linf_L2": lambda p: ("ut", "grad_L2", "Linf", 2.0, 2.0),
    "grad_ut_Lq1_Lq1": lambda p: ("ut", "grad_Lp", "Lp", p, p),
    "grad_ut_Linf_Lq1": lambda p: ("ut", "grad_Lp", "Linf", p, 2.0),
    "ut_Lq1_Lq1": lambda p: ("ut", "Lp", "Lp", p, p),
    "ut_Linf_Lq1": lambda p: ("ut", "Lp", "Linf", p, 2.0),
    "ut_hat_L2_L2": lambda p: ("ut", "hat_L2", "Lp", 2.0, 2.0),
    "ut_hat_Linf_L2": lambda p: ("ut", "hat_L2", "Linf", 2.0, 2.0),
    "utt_L2_L2": lambda p: ("utt", "L2", "Lp", 2.0, 2.0),
}


def _measure(traj: Trajectory, name: str, p: float) -> float:
    quantity, space, time, p_space, p_time = _NORMS[name](p)
    if quantity == "utt" and traj.n_steps == 0:
        return 0.0
    return traj.norm(quantity, space, time, p_space, p_time)


# ---------------------------------------------------------------- W1 family


def _b_hat_window(b: _Builder, x: _Context, first: float) -> tuple[float, float]:
    """Record b_hat < min{first/(2 C_H^2), a_lo/(4 T C_H^2)}; return (C_H, b_hat)."""
    ch, bh = x.C("H1_L4"), x.fields.b_hat
    b.hypothesis("b_hat_window", bh < min(first / (2 * ch ** 2),
                                          x.fields.a_lo / (4 * x.T * ch ** 2)))
    return ch, bh


def _g_terms(b: _Builder, x: _Context, eps0: float, eps1: float) -> None:
    cp, c1tr = x.C("C_P"), x.C("C1tr")
    b.right("g_L1_Lr", (c1tr * x.C("C2_omega")) ** 2 / (4 * eps0), x.data.g_L1_Lr)
    b.right("g_Lr_Lr", young_constant(eps1, x.p) * (c1tr * (1 + cp)) ** x.r,
            x.data.g_Lr_Lr, x.r)


def _lower_w1(b: _Builder, x: _Context) -> None:
    """est1 and its coupled-media counterpart (bounds of the coefficients)."""
    bl, bd, a_lo, T = x.b_linear, x.b_delta, x.fields.a_lo, x.T
    ch, bh = _b_hat_window(b, x, bl)
    e0 = b.choose("eps0", a_lo / 4 - bh * ch ** 2 * T)
    e1 = b.choose("eps1", bd / 2)
    b.left("ut_Linf_L2", a_lo / 4 - bh * ch ** 2 * T - e0, x.norm("ut_Linf_L2"))
    b.left("grad_u_Linf_L2", x.c2_lo / 4, x.norm("grad_u_Linf_L2"))
    b.left("grad_ut_L2_L2", bl / 2 - bh * ch ** 2, x.norm("grad_ut_L2_L2"))
    b.left("ut_hat_L2_L2", x.alpha / 2, x.norm("ut_hat_L2_L2"), strict=False)
    b.left("grad_ut_Lq1_Lq1", bd / 2 - e1, x.norm("grad_ut_Lq1_Lq1"), x.p)
    b.right("u1_L2", x.fields.a_hi / 2, x.data.u1_L2)
    b.right("grad_u0_L2", x.c2_hi / 2, x.data.grad_u0_L2)
    _g_terms(b, x, e0, e1)


def _initial_bracket(b: _Builder, x: _Context) -> None:
    b.right_cbar("u1_H1", x.data.u1_H1, 2.0)
    b.right_cbar("grad_u0_L2", x.data.grad_u0_L2, 2.0)
    b.right_cbar("u1_W1q1", x.data.u1_W1q1, x.p)
    b.right_cbar("u1_hat_L2", x.data.u1_hat_L2, 2.0)


def _est2(b: _Builder, x: _Context) -> None:
    bl, bd, a_lo, T, c2, p = x.b_linear, x.b_delta, x.fields.a_lo, x.T, x.c2_lo, x.p
    ch, bh = _b_hat_window(b, x, bl)
    bt = x.fields.b_tilde
    e0 = b.choose("eps0", a_lo / 4 - bh * ch ** 2 * T)
    e1 = b.choose("eps1", bd / 2)
    tau = b.choose("tau", a_lo)
    sigma = b.choose("sigma", bl / 4)
    eta = b.choose("eta", bd / (2 * p))
    drift = ch ** 4 * bt ** 2 / (2 * tau)
    mu = b.choose("mu", _min(_cap(bl / 2 - ch ** 2 * bh, drift + c2),
                             _cap(a_lo / 4 - ch ** 2 * bh * T - e0, e0 + drift * T),
                             sigma / c2, _cap(bd / 2 - e1, e1)))
    b.left("utt_L2_L2", mu * (a_lo - tau) / 2, x.norm("utt_L2_L2"))
    b.left("grad_ut_Linf_L2", mu * (bl / 4 - sigma), x.norm("grad_ut_Linf_L2"))
    b.left("ut_Linf_L2", a_lo / 4 - ch ** 2 * bh * T - e0 * (mu + 1) - mu * drift * T,
           x.norm("ut_Linf_L2"))
    b.left("grad_ut_L2_L2", bl / 2 - ch ** 2 * bh - mu * (drift + c2), x.norm("grad_ut_L2_L2"))
    b.left("grad_u_Linf_L2", c2 / 4 * (1 - mu * c2 / sigma), x.norm("grad_u_Linf_L2"))
    b.left("grad_ut_Linf_Lq1", mu * (bd / (2 * p) - eta), x.norm("grad_ut_Linf_Lq1"), p)
    b.left("grad_ut_Lq1_Lq1", bd / 2 - e1 * (mu + 1), x.norm("grad_ut_Lq1_Lq1"), p)
    b.left("ut_hat_L2_L2", x.alpha / 2, x.norm("ut_hat_L2_L2"), strict=False)
    b.left("ut_hat_Linf_L2", mu * x.alpha / 4, x.norm("ut_hat_Linf_L2"), strict=False)
    b.right_cbar("C_Gamma", x.data.C_Gamma)
    _initial_bracket(b, x)


def _require_beta(x: _Context) -> float:
    beta = float(x.setup.material.beta)
    if beta <= 0:
        raise InvalidArgument("the beta-variant estimates need beta > 0")
    return beta


def _require_gamma(x: _Context, q_min: float, strict: bool) -> float:
    gamma = float(x.setup.material.gamma)
    if gamma <= 0:
        raise InvalidArgument("the gamma-variant estimates need gamma > 0")
    if (x.q <= q_min) if strict else (x.q < q_min):
        rel = ">" if strict else ">="
        raise InvalidArgument(f"this gamma-variant estimate needs q {rel} {q_min:g}")
    return gamma


def _beta_hypothesis(b: _Builder, x: _Context, beta: float) -> tuple[float, float]:
    ch, bh = x.C("H1_L4"), x.fields.b_hat
    b.hypothesis("b_hat_window", bh < min(beta, x.b_linear) / (2 * ch ** 2))
    return ch, bh


def _w1_beta_est1(b: _Builder, x: _Context) -> None:
    beta = _require_beta(x)
    bl, bd, a_lo = x.b_linear, x.b_delta, x.fields.a_lo
    ch, bh = _beta_hypothesis(b, x, beta)
    e0 = b.choose("eps0", a_lo / 4)
    e1 = b.choose("eps1", bd / 2)
    b.left("ut_Linf_L2", a_lo / 4 - e0, x.norm("ut_Linf_L2"))
    b.left("grad_ut_L2_L2", bl / 2 - bh * ch ** 2, x.norm("grad_ut_L2_L2"))
    b.left("grad_ut_Lq1_Lq1", bd / 2 - e1, x.norm("grad_ut_Lq1_Lq1"), x.p)
    b.left("ut_L2_L2", beta / 2 - bh * ch ** 2, x.norm("ut_L2_L2"))
    b.left("grad_u_Linf_L2", x.c2_lo / 4, x.norm("grad_u_Linf_L2"))
    b.left("ut_hat_L2_L2", x.alpha / 2, x.norm("ut_hat_L2_L2"), strict=False)
    b.right("u1_L2", x.fields.a_hi / 2, x.data.u1_L2)
    b.right("grad_u0_L2", x.c2_hi / 2, x.data.grad_u0_L2)
    _g_terms(b, x, e0, e1)


def _w1lin_est2_beta(b: _Builder, x: _Context) -> None:
    beta = _require_beta(x)
    bl, bd, a_lo, c2, p = x.b_linear, x.b_delta, x.fields.a_lo, x.c2_lo, x.p
    ch, bh = _beta_hypothesis(b, x, beta)
    bt = x.fields.b_tilde
    e0 = b.choose("eps0", a_lo / 4)
    e1 = b.choose("eps1", bd / 2)
    tau = b.choose("tau", a_lo)
    sigma = b.choose("sigma", bl / 4)
    eta = b.choose("eta", bd / (2 * p))
    drift = ch ** 4 * bt ** 2 / (2 * tau)
    mu = b.choose("mu", _min(_cap(a_lo / 4 - e0, e0 - beta / 4),
                             _cap(bl / 2 - ch ** 2 * bh, drift + c2),
                             _cap(bd / 2, e1 + 1),
                             _cap(beta / 2 - ch ** 2 * bh, drift),
                             sigma / c2))
    b.left("utt_L2_L2", mu * (a_lo - tau) / 2, x.norm("utt_L2_L2"))
    b.left("grad_ut_Linf_L2", mu * (bl / 4 - sigma), x.norm("grad_ut_Linf_L2"))
    b.left("ut_Linf_L2", mu * ((a_lo + mu * beta) / 4 - e0 * (mu + 1)), x.norm("ut_Linf_L2"))
    b.left("grad_ut_L2_L2", bl / 2 - ch ** 2 * bh - mu * (drift + c2), x.norm("grad_ut_L2_L2"))
    b.left("ut_hat_Linf_L2", mu * x.alpha / 4, x.norm("ut_hat_Linf_L2"), strict=False)
    b.left("grad_ut_Lq1_Lq1", bd / 2 - mu * (e1 + 1), x.norm("grad_ut_Lq1_Lq1"), p)
    b.left("ut_L2_L2", beta / 2 - ch ** 2 * bh - mu * drift, x.norm("ut_L2_L2"))
    b.left("grad_u_Linf_L2", c2 / 4 * (1 - mu * c2 / sigma), x.norm("grad_u_Linf_L2"))
    b.left("ut_hat_L2_L2", x.alpha / 2, x.norm("ut_hat_L2_L2"), strict=False)
    b.left("grad_ut_Linf_Lq1", mu * (bd / (2 * p) - eta), x.norm("grad_ut_Linf_Lq1"), p)
    b.right_cbar("C_Gamma", x.data.C_Gamma)
    _initial_bracket(b, x)


def _w1_gamma_est1(b: _Builder, x: _Context) -> None:
    gamma = _require_gamma(x, 1.0, strict=True)
    bl, bd, p, q = x.b_linear, x.b_delta, x.p, x.q
    e0 = b.choose("eps0", gamma / 2)
    b.left("ut_Linf_L2", x.fields.a_lo / 4, x.norm("ut_Linf_L2"))
    b.left("grad_u_Linf_L2", x.c2_lo / 4, x.norm("grad_u_Linf_L2"))
    b.left("grad_ut_L2_L2", bl / 2, x.norm("grad_ut_L2_L2"))
    b.left("grad_ut_Lq1_Lq1", (bd - e0) / 2, x.norm("grad_ut_Lq1_Lq1"), p)
    b.left("ut_Lq1_Lq1", gamma / 2 - e0, x.norm("ut_Lq1_Lq1"), p)
    b.left("ut_hat_L2_L2", x.alpha / 2, x.norm("ut_hat_L2_L2"), strict=False)
    b.right("g_Lr_Lr", young_constant(e0 / 2, p) * x.C("C1tr") ** x.r, x.data.g_Lr_Lr, x.r)
    b.right("u1_L2", x.fields.a_hi / 2, x.data.u1_L2)
    b.right("drift_Lr_Lr", young_constant(e0 / 2, p / 2), x.fields.drift_Lr_Lr,
            (q + 1) / (q - 1))
    b.right("grad_u0_L2", x.c2_hi / 2, x.data.grad_u0_L2)


def _gamma_higher_lhs(b: _Builder, x: _Context, gamma: float, mu: float, eta: float,
                      tau: float, sigma: float) -> None:
    bl, bd, p, a_lo, c2 = x.b_linear, x.b_delta, x.p, x.fields.a_lo, x.c2_lo
    b.left("utt_L2_L2", mu * (a_lo - tau) / 2, x.norm("utt_L2_L2"))
    b.left("grad_ut_Linf_L2", mu * (bl / 4 - sigma), x.norm("grad_ut_Linf_L2"))
    b.left("grad_u_Linf_L2", c2 / 4 * (1 - mu * c2 / sigma), x.norm("grad_u_Linf_L2"))
    b.left("ut_hat_Linf_L2", mu * x.alpha / 4, x.norm("ut_hat_Linf_L2"), strict=False)
    b.left("ut_hat_L2_L2", x.alpha / 2, x.norm("ut_hat_L2_L2"), strict=False)
    b.left("grad_ut_Linf_Lq1", mu * (bd / (2 * p) - eta), x.norm("grad_ut_Linf_Lq1"), p)
    b.left("ut_Linf_Lq1", mu * (gamma / (2 * p) - eta), x.norm("ut_Linf_Lq1"), p)


def _w1lin_est2_gamma(b: _Builder, x: _Context) -> None:
    gamma = _require_gamma(x, 3.0, strict=False)
    bl, bd, p, q, a_lo, c2 = x.b_linear, x.b_delta, x.p, x.q, x.fields.a_lo, x.c2_lo
    e0 = b.choose("eps0", gamma / 2)
    tau = b.choose("tau", a_lo)
    sigma = b.choose("sigma", bl / 4)
    eta = b.choose("eta", min(bd, gamma) / (2 * p))
    mu = b.choose("mu", _min(_cap(bd / 2 - e0 / 2, e0 / 2), _cap(bl / 2, c2),
                             _cap(gamma / 2 - e0, e0), sigma / c2))
    _gamma_higher_lhs(b, x, gamma, mu, eta, tau, sigma)
    b.left("ut_Linf_L2", a_lo / 4, x.norm("ut_Linf_L2"))
    b.left("grad_ut_Lq1_Lq1", bd / 2 - e0 / 2 * (mu + 1), x.norm("grad_ut_Lq1_Lq1"), p)
    b.left("grad_ut_L2_L2", bl / 2 - mu * c2, x.norm("grad_ut_L2_L2"))
    b.left("ut_Lq1_Lq1", gamma / 2 - e0 * (mu + 1), x.norm("ut_Lq1_Lq1"), p)
    b.right_cbar("C_Gamma_gamma", x.data.C_Gamma_gamma)
    b.right_cbar("drift_Lr_Lr", x.fields.drift_Lr_Lr, (q + 1) / (q - 1))
    b.right_cbar("f_L2r_H1", x.fields.f_L2r_H1, 2 * (q + 1) / (q - 1))
    _initial_bracket(b, x)


def _w1lin_est2_gamma2(b: _Builder, x: _Context) -> None:
    gamma = _require_gamma(x, 1.0, strict=True)
    bl, bd, p, a_lo, c2, T = x.b_linear, x.b_delta, x.p, x.fields.a_lo, x.c2_lo, x.T
    ch, bh = _b_hat_window(b, x, bl)
    bt = x.fields.b_tilde
    e0 = b.choose("eps0", min(bd, gamma) / 2)
    tau = b.choose("tau", a_lo)
    sigma = b.choose("sigma", bl / 4)
    eta = b.choose("eta", min(bd, gamma) / (2 * p))
    drift = ch ** 4 * bt ** 2 / (2 * tau)
    mu = b.choose("mu", _min(_cap(a_lo / 4 - ch ** 2 * bh * T, drift * T),
                             _cap(bl / 2 - ch ** 2 * bh, drift + c2),
                             _cap(bd / 2 - e0, e0), _cap(gamma / 2 - e0, e0), sigma / c2))
    _gamma_higher_lhs(b, x, gamma, mu, eta, tau, sigma)
    b.left("ut_Linf_L2", a_lo / 4 - ch ** 2 * bh * T - mu * drift * T, x.norm("ut_Linf_L2"))
    b.left("grad_ut_L2_L2", bl / 2 - ch ** 2 * bh - mu * (drift + c2), x.norm("grad_ut_L2_L2"))
    b.left("grad_ut_Lq1_Lq1", bd / 2 - e0 * (mu + 1), x.norm("grad_ut_Lq1_Lq1"), p)
    b.left("ut_Lq1_Lq1", gamma / 2 - e0 * (mu + 1), x.norm("ut_Lq1_Lq1"), p)
    b.right_cbar("C_Gamma_gamma", x.data.C_Gamma_gamma)
    _initial_bracket(b, x)


# ---------------------------------------------------------------- W2


def _w2_common(b: _Builder, x: _Context, tau: float) -> None:
    c2, eps, p = x.c2_lo, float(x.setup.material.epsilon), x.p
    b.left("grad_u_Linf_L2", c2 / 4, x.norm("grad_u_Linf_L2"))
    b.left("grad_u_Linf_Lq1", c2 * eps / (2 * p), x.norm("grad_u_Linf_Lq1"), p, strict=False)
    b.left("ut_hat_L2_L2", x.alpha / 2, x.norm("ut_hat_L2_L2"), strict=False)
    b.right("g_L2_L2", 1 / (4 * tau), x.data.g_L2_L2)
    b.right("u1_L2", x.fields.a_lo / 2, x.data.u1_L2)
    b.right("grad_u0_L2", c2 / 2, x.data.grad_u0_L2)
    b.right("grad_u0_Lq1", c2 * eps / p, x.data.grad_u0_Lq1, p)


def _w2_energyest(b: _Builder, x: _Context) -> None:
    bw, a_lo, T = x.b, x.fields.a_lo, x.T
    ch, bh = _b_hat_window(b, x, bw)
    c2tr = x.C("C2tr")
    tau = b.choose("tau", min((bw - 2 * bh * ch ** 2) / (2 * c2tr ** 2),
                              (a_lo - 4 * ch ** 2 * bh * T) / (4 * c2tr ** 2)))
    b.left("ut_Linf_L2", a_lo / 4 - c2tr ** 2 * tau - T * bh * ch ** 2, x.norm("ut_Linf_L2"))
    b.left("grad_ut_L2_L2", bw / 2 - c2tr ** 2 * tau - bh * ch ** 2, x.norm("grad_ut_L2_L2"))
    _w2_common(b, x, tau)
    b.right("g_L1_L2", 1 / (4 * tau), x.data.g_L1_L2)
    b.notes.append("u1 term carries the lower bound of a as printed")


def _w2_energyest_1(b: _Builder, x: _Context) -> None:
    beta = _require_beta(x)
    bw = x.b
    ch, bh = x.C("H1_L4"), x.fields.b_hat
    b.hypothesis("b_hat_window", bh < min(bw, beta) / (2 * ch ** 2))
    c2tr = x.C("C2tr")
    tau = b.choose("tau", min(bw - 2 * bh * ch ** 2, beta - 2 * ch ** 2 * bh) / (2 * c2tr ** 2))
    b.left("ut_Linf_L2", x.fields.a_lo / 4, x.norm("ut_Linf_L2"))
    b.left("grad_ut_L2_L2", bw / 2 - c2tr ** 2 * tau - bh * ch ** 2, x.norm("grad_ut_L2_L2"))
    b.left("ut_L2_L2", beta / 2 - c2tr ** 2 * tau - bh * ch ** 2, x.norm("ut_L2_L2"))
    _w2_common(b, x, tau)
    b.notes.append("u1 term carries the lower bound of a as printed")


# ---------------------------------------------------------------- W3


def _w3_q1_constants(x: _Context) -> tuple[float, float]:
    """(C_{H1,Linf}^2, weighted a-norm) shared by the q = 1 variants."""
    if x.setup.mesh.dim != 1:
        raise InvalidArgument("the q = 1 potential-form estimates need d = 1")
    return x.C("H1_Linf") ** 2, x.fields.grad_a_L2_L2


def _w3_lower_rhs(b: _Builder, x: _Context) -> None:
    b.right("grad_u0_L2", (x.fields.a_L2_Linf + x.fields.grad_a_L2_L2) / 2, x.data.grad_u0_L2)
    b.right("u1_L2", 0.5, x.data.u1_L2)


def _w3_b_hat_q(x: _Context) -> float:
    f, T = x.fields, x.T
    return x.b_linear / 2 - T / 2 * f.grad_a_L2_L2 - (math.sqrt(T) + 0.5) * f.a_L2_Linf


def _w3_b_hat_q1(x: _Context, ch2: float) -> float:
    f, T = x.fields, x.T
    return x.b / 2 - (T / 2 + ch2) * f.grad_a_L2_L2 - (math.sqrt(T) + 0.5) * f.a_L2_Linf


def _w3lin_lower(b: _Builder, x: _Context) -> None:
    f, T, p, q = x.fields, x.T, x.p, x.q
    if q == 1:
        ch2, grad_a = _w3_q1_constants(x)
        b_hat = _w3_b_hat_q1(x, ch2)
        b_tilde = 0.25 - T * ch2 * grad_a
        b.hypothesis("b_hat_positive", b_hat > 0)
        b.hypothesis("b_tilde_positive", b_tilde > 0)
        e0 = b.choose("eps0", min(b_hat, b_tilde))
        b.left("grad_ut_L2_L2", b_hat - e0, x.norm("grad_ut_L2_L2"))
        b.left("ut_Linf_L2", b_tilde - e0, x.norm("ut_Linf_L2"))
        b.left("ut_hat_L2_L2", x.alpha / 2, x.norm("ut_hat_L2_L2"), strict=False)
        _w3_lower_rhs(b, x)
        c2tr = x.C("C2tr")
        b.right("g_L1_L2", c2tr ** 2 / (4 * e0), x.data.g_L1_L2)
        b.right("g_L2_L2", c2tr ** 2 / (4 * e0), x.data.g_L2_L2)
        return
    cw, cp = x.C("W1q1_Linf"), x.C("C_P")
    b_hat = _w3_b_hat_q(x)
    b_tilde = 0.25 - 2 * T * (cw * x.C("C2_omega")) ** 2 * f.grad_a_L2_L2
    b.hypothesis("b_hat_positive", b_hat > 0)
    b.hypothesis("b_tilde_positive", b_tilde > 0)
    e0 = b.choose("eps0", b_tilde)
    e1 = b.choose("eps1", x.b_delta / 2)
    b.left("grad_ut_L2_L2", b_hat, x.norm("grad_ut_L2_L2"))
    b.left("ut_Linf_L2", b_tilde - e0, x.norm("ut_Linf_L2"))
    b.left("grad_ut_Lq1_Lq1", x.b_delta / 2 - e1, x.norm("grad_ut_Lq1_Lq1"), p)
    b.left("ut_hat_L2_L2", x.alpha / 2, x.norm("ut_hat_L2_L2"), strict=False)
    _w3_lower_rhs(b, x)
    b.right("grad_a", young_constant(e1 / 2, p / 2) * T,
            2 * (cw * (1 + cp)) ** 2 * f.grad_a_L2_L2, (q + 1) / (q - 1))
    b.right("g_Lr_Lr", young_constant(e1 / 2, p) * (x.C("C1tr") * (1 + cp)) ** x.r,
            x.data.g_Lr_Lr, x.r)
    b.right("g_L1_Lr", (x.C("C1tr") * x.C("C2_omega")) ** 2 / (4 * e0), x.data.g_L1_Lr)


def _w3_higher_bracket(b: _Builder, x: _Context) -> None:
    f, d, T, q = x.fields, x.data, x.T, x.q
    s = (q + 1) / (q - 1)
    b.right_cbar("grad_a_T", T * f.grad_a_L2_L4, s)
    b.right_cbar("a_grad_u0_L2", f.a_Linf_Linf * d.grad_u0_L2 ** 2)
    b.right_cbar("at_grad_u0_L4", (f.at_L43_L2 + f.grad_a_L2_L4) * d.grad_u0_L4 ** 2)
    b.right_cbar("a_initial", f.a_Linf_Linf * (d.grad_u0_L2 ** 2
                                               + d.grad_u1_L2 * d.grad_u0_L2))
    b.right_cbar("at_L43", (0.5 + T ** 0.75) * math.sqrt(T) * f.at_L43_L2, s)
    b.right_cbar("u1_H1", d.u1_H1, 2.0)
    b.right_cbar("u1_W1q1", d.u1_W1q1, x.p)
    b.right_cbar("grad_a_T2", T ** 2 * f.grad_a_L2_L4, s)
    b.right_cbar("at_L2_T", T ** 2.5 * f.at_L2_L2, s)
    b.right_cbar("u1_hat_L2", d.u1_hat_L2, 2.0)


def _w3_tau(b: _Builder, x: _Context) -> float:
    grad_a = x.fields.grad_a_L2_L4
    return b.choose("tau", 1 / (2 * grad_a) if grad_a > 0 else math.inf)


def _require_q3(x: _Context) -> None:
    if x.q < 3:
        raise InvalidArgument("the higher-order potential-form estimates need q >= 3")


def _w3lin_higher(b: _Builder, x: _Context) -> None:
    _require_q3(x)
    f, T, p = x.fields, x.T, x.p
    bl, bd = x.b_linear, x.b_delta
    a_tilde = f.a_lo / 4 - 0.5 * f.grad_a_L2_L4
    b_tilde = 0.25 - f.grad_a_L2_L4 * T * (x.C("Lq1_L4") * x.C("C2_omega")) ** 2
    b.hypothesis("a_tilde_positive", a_tilde > 0)
    b.hypothesis("b_tilde_positive", b_tilde > 0)
    a_max = f.a_Linf_Linf
    tau = _w3_tau(b, x)
    e0 = b.choose("eps0", b_tilde)
    e1 = b.choose("eps1", bd / 2)
    mu = b.choose("mu", _min(_cap(b_tilde - e0, e0), _cap(bl / 2, a_max),
                             _cap(a_tilde, 2 * a_max ** 2 / bl), _cap(bd / 2 - e1, e1)))
    eta = b.choose("eta", mu * bd / (2 * p * (2 * mu + 1)))
    b.left("utt_L2_L2", mu * (0.5 - tau * f.grad_a_L2_L4), x.norm("utt_L2_L2"))
    b.left("grad_ut_Linf_L2", mu * bl / 8, x.norm("grad_ut_Linf_L2"))
    b.left("ut_Linf_L2", b_tilde - e0 * (mu + 1), x.norm("ut_Linf_L2"))
    b.left("grad_ut_L2_L2", bl / 2 - mu * a_max, x.norm("grad_ut_L2_L2"))
    b.left("grad_ut_Linf_Lq1", mu * bd / (2 * p) - eta * (2 * mu + 1),
           x.norm("grad_ut_Linf_Lq1"), p)
    b.left("ut_hat_Linf_L2", mu * x.alpha / 4, x.norm("ut_hat_Linf_L2"), strict=False)
    b.left("grad_u_Linf_L2", a_tilde - mu * 2 * a_max ** 2 / bl, x.norm("grad_u_Linf_L2"))
    b.left("grad_ut_Lq1_Lq1", bd / 2 - e1 * (mu + 1), x.norm("grad_ut_Lq1_Lq1"), p)
    b.left("ut_hat_L2_L2", x.alpha / 2, x.norm("ut_hat_L2_L2"), strict=False)
    _w3_higher_bracket(b, x)
    b.right_cbar("at_sqrtT_grad_u0_L4", f.at_L2_L2 * math.sqrt(T) * x.data.grad_u0_L4 ** 2)
    b.right_cbar("C_Gamma", x.data.C_Gamma)


def _w3lin_lower_gamma(b: _Builder, x: _Context) -> None:
    gamma = float(x.setup.material.gamma)
    if gamma <= 0:
        raise InvalidArgument("the gamma-variant estimates need gamma > 0")
    f, T, p, q = x.fields, x.T, x.p, x.q
    if q == 1:
        ch2, grad_a = _w3_q1_constants(x)
        b_hat = _w3_b_hat_q1(x, ch2)
        b_tilde = gamma / 2 - ch2 * grad_a
        b.hypothesis("b_hat_positive", b_hat > 0)
        b.hypothesis("b_tilde_positive", b_tilde > 0)
        e0 = b.choose("eps0", min(b_hat, b_tilde))
        b.left("grad_ut_L2_L2", b_hat - e0, x.norm("grad_ut_L2_L2"))
        b.left("ut_Linf_L2", 0.25, x.norm("ut_Linf_L2"))
        b.left("ut_L2_L2", b_tilde - e0, x.norm("ut_L2_L2"))
        b.left("ut_hat_L2_L2", x.alpha / 2, x.norm("ut_hat_L2_L2"), strict=False)
        _w3_lower_rhs(b, x)
        b.right("g_L2_L2", x.C("C2tr") ** 2 / (4 * e0), x.data.g_L2_L2)
        return
    b_hat = _w3_b_hat_q(x)
    b.hypothesis("b_hat_positive", b_hat > 0)
    e0 = b.choose("eps0", min(x.b_delta, gamma) / 2)
    b.left("grad_ut_L2_L2", b_hat, x.norm("grad_ut_L2_L2"))
    b.left("ut_Linf_L2", 0.25, x.norm("ut_Linf_L2"))
    b.left("ut_hat_L2_L2", x.alpha / 2, x.norm("ut_hat_L2_L2"), strict=False)
    b.left("grad_ut_Lq1_Lq1", x.b_delta / 2 - e0, x.norm("grad_ut_Lq1_Lq1"), p)
    b.left("ut_Lq1_Lq1", gamma / 2 - e0, x.norm("ut_Lq1_Lq1"), p)
    _w3_lower_rhs(b, x)
    young = young_constant(e0 / 2, p / 2)
    b.right("grad_a", young * T, x.C("W1q1_Linf") ** 2 * f.grad_a_L2_L2, (q + 1) / (q - 1))
    b.right("g_Lr_Lr", young, x.C("C1tr") * x.data.g_Lr_Lr, x.r)


def _w3lin_higher_gamma(b: _Builder, x: _Context) -> None:
    _require_q3(x)
    gamma = float(x.setup.material.gamma)
    if gamma <= 0:
        raise InvalidArgument("the gamma-variant estimates need gamma > 0")
    f, p = x.fields, x.p
    bl, bd = x.b_linear, x.b_delta
    a_tilde = f.a_lo / 4 - 0.5 * f.grad_a_L2_L4
    b.hypothesis("a_tilde_positive", a_tilde > 0)
    a_max = f.a_Linf_Linf
    tau = _w3_tau(b, x)
    e1 = b.choose("eps1", min(bd, gamma) / 2)
    mu = b.choose("mu", _min(_cap(bd / 2 - e1, e1), _cap(gamma / 2 - e1, e1),
                             _cap(bl / 2, a_max), _cap(a_tilde, 2 * a_max ** 2 / bl)))
    eta = b.choose("eta", mu * min(bd, gamma) / (2 * p * (2 * mu + 1)))
    b.left("utt_L2_L2", mu * (0.5 - tau * f.grad_a_L2_L4), x.norm("utt_L2_L2"))
    b.left("ut_Linf_L2", 0.25, x.norm("ut_Linf_L2"))
    b.left("grad_ut_Lq1_Lq1", bd / 2 - e1 * (mu + 1), x.norm("grad_ut_Lq1_Lq1"), p)
    b.left("grad_ut_L2_L2", bl / 2 - mu * a_max, x.norm("grad_ut_L2_L2"))
    b.left("grad_ut_Linf_Lq1", mu * bd / (2 * p) - eta * (2 * mu + 1),
           x.norm("grad_ut_Linf_Lq1"), p)
    b.left("ut_hat_L2_L2", x.alpha / 2, x.norm("ut_hat_L2_L2"), strict=False)
    b.left("grad_u_Linf_L2", a_tilde - mu * 2 * a_max ** 2 / bl, x.norm("grad_u_Linf_L2"))
    b.left("ut_Lq1_Lq1", gamma / 2 - e1 * (mu + 1), x.norm("ut_Lq1_Lq1"), p)
    b.left("grad_ut_Linf_L2", mu * bl / 8, x.norm("grad_ut_Linf_L2"))
    b.left("ut_Linf_Lq1", mu * gamma / (2 * p) - eta * (2 * mu + 1), x.norm("ut_Linf_Lq1"), p)
    b.left("ut_hat_Linf_L2", mu * x.alpha / 2, x.norm("ut_hat_Linf_L2"), strict=False)
    _w3_higher_bracket(b, x)
    b.right_cbar("C_Gamma_gamma", x.data.C_Gamma_gamma)
    b.notes.append("the eta and eps1 couplings of the gamma-free higher estimate are used")


_BUILDERS: dict[str, Callable[[_Builder, _Context], None]] = {
    "est1": _lower_w1,
    "est2": _est2,
    "W1_beta_est1": _w1_beta_est1,
    "W1lin_est2_beta": _w1lin_est2_beta,
    "W1_gamma_est1": _w1_gamma_est1,
    "W1lin_est2_gamma": _w1lin_est2_gamma,
    "W1lin_est2_gamma2": _w1lin_est2_gamma2,
    "W2_energyest": _w2_energyest,
    "W2_energyest_1": _w2_energyest_1,
    "W3lin_lower": _w3lin_lower,
    "W3lin_higher": _w3lin_higher,
    "W3lin_lower_gamma": _w3lin_lower_gamma,
    "W3lin_higher_gamma": _w3lin_higher_gamma,
    "coupled_lower": _lower_w1,
}


def energy_report(traj: Trajectory, estimate_id: str, setup: Setup, constants: ConstantsTable,
                  free_params: Mapping[str, float] | None = None, *,
                  frozen: tuple | None = None, cbar: float | None = None) -> EnergyReport:
    """Evaluate one estimate on ``traj``, the solution of ``setup`` with frozen fields.

    ``frozen`` is the pair (a, f) of the linearized problem that produced ``traj``; by
    default the fields are frozen at ``traj`` itself, which is exact for a converged
    fixed point.
    """
    if estimate_id not in _BUILDERS:
        raise InvalidArgument(f"unknown estimate {estimate_id!r}; expected one of {ESTIMATES}")
    expected = FORMULATION_OF[estimate_id]
    if setup.formulation is not expected:
        raise InvalidArgument(f"{estimate_id} applies to {expected.value}, "
                              f"not {setup.formulation.value}")
    if traj.n_steps < 1:
        raise InvalidArgument("energy reports need at least one time step")
    if cbar is not None and not cbar > 0:
        raise InvalidArgument(f"cbar must be positive, got {cbar}")
    a, f = frozen if frozen is not None else frozen_fields(traj, setup)
    x = _Context(traj, setup, constants, data_norms(setup),
                 field_stats(setup.formulation, a, f, setup.mesh, setup.times,
                             float(setup.material.q)))
    b = _Builder(estimate_id, free_params, cbar)
    _BUILDERS[estimate_id](b, x)
    b.notes.append("boundary data norms use Lebesgue surrogates on the excitation boundary")
    return EnergyReport(estimate_id, dict(b.lhs), dict(b.rhs), dict(b.params), dict(b.flags),
                        x.fields.as_dict(), tuple(b.notes), cbar, b.needs_cbar)


def fit_cbar(reports) -> float:
    """Smallest C-bar making every report of a battery hold: max of lhs / data bracket."""
    ratios = []
    for r in reports:
        if not r.needs_cbar:
            raise InvalidArgument(f"{r.estimate_id} has no C-bar to fit")
        bracket = r.data_bracket
        if bracket > 0:
            ratios.append(r.lhs_total / bracket)
        elif r.lhs_total > 0:
            raise InvalidArgument(f"{r.estimate_id}: positive left side with zero data")
    if not ratios:
        raise InvalidArgument("no report with nonzero data to fit C-bar on")
    return float(max(ratios))
