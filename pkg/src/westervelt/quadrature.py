"""Element quadrature rules in barycentric coordinates.

Weights are normalized to sum to one, so an element integral is
``volume * sum(weights * values)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import factorial

import numpy as np


@dataclass(frozen=True)
class Rule:
    bary: np.ndarray  # (nq, d+1)
    weights: np.ndarray  # (nq,)


@lru_cache(maxsize=None)
def gauss_interval(n_points: int) -> Rule:
    x, w = np.polynomial.legendre.leggauss(n_points)
    s = 0.5 * (x + 1.0)
    return Rule(np.column_stack([1.0 - s, s]), 0.5 * w)


def _symmetric_triangle(groups) -> Rule:
    bary, weights = [], []
    for weight, a in groups:
        if a is None:
            bary.append([1 / 3, 1 / 3, 1 / 3])
            weights.append(weight)
            continue
        b = 1.0 - 2.0 * a
        for p in ([a, a, b], [a, b, a], [b, a, a]):
            bary.append(p)
            weights.append(weight)
    return Rule(np.array(bary), np.array(weights))


# Strang-Fix/Dunavant degree-4 rule (6 points) and Radon degree-5 rule (7 points).
TRIANGLE_DEG4 = _symmetric_triangle([
    (0.223381589678011, 0.445948490915965),
    (0.109951743655322, 0.091576213509771),
])
TRIANGLE_DEG5 = _symmetric_triangle([
    (0.225, None),
    (0.132394152788506, 0.470142064105115),
    (0.125939180544827, 0.101286507323456),
])


def damping_rule(dim: int) -> Rule:
    """Rule for the lower-order nonlinear damping integrand."""
    return gauss_interval(3) if dim == 1 else TRIANGLE_DEG4


def norm_rule(dim: int) -> Rule:
    """Rule for L^p norms of P1 functions."""
    return gauss_interval(4) if dim == 1 else TRIANGLE_DEG5


def source_rule(dim: int) -> Rule:
    """Rule for loads from smooth closed-form sources."""
    return gauss_interval(5) if dim == 1 else TRIANGLE_DEG5


def monomial_integral(dim: int, exponents) -> float:
    """Exact integral of prod(lambda_i**alpha_i) over a simplex, divided by its volume."""
    alphas = list(exponents)
    num = factorial(dim) * np.prod([factorial(a) for a in alphas])
    return float(num / factorial(dim + sum(alphas)))


@lru_cache(maxsize=None)
def triple_product_tensor(dim: int) -> np.ndarray:
    """T[i, j, k] = mean over the simplex of lambda_i lambda_j lambda_k."""
    n = dim + 1
    T = np.empty((n, n, n))
    for i in range(n):
        for j in range(n):
            for k in range(n):
                alpha = [0] * n
                for idx in (i, j, k):
                    alpha[idx] += 1
                T[i, j, k] = monomial_integral(dim, alpha)
    T.setflags(write=False)
    return T


@lru_cache(maxsize=None)
def local_mass(dim: int) -> np.ndarray:
    """Reference P1 mass matrix divided by the element volume."""
    n = dim + 1
    M = np.full((n, n), monomial_integral(dim, [1, 1] + [0] * (n - 2)))
    np.fill_diagonal(M, monomial_integral(dim, [2] + [0] * (n - 1)))
    M.setflags(write=False)
    return M


def physical_points(nodes: np.ndarray, elements: np.ndarray, rule: Rule) -> np.ndarray:
    """Quadrature points in physical coordinates, shape (E, nq, d)."""
    return np.einsum("qk,ekd->eqd", rule.bary, nodes[elements])
