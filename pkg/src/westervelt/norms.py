"""Spatial norms of P1 functions and discrete time norms of step sequences.

Every spatial routine accepts a single nodal vector of shape (N,) or a stack (S, N)
and returns a scalar or an array of shape (S,).
"""

from __future__ import annotations

import weakref
from functools import cached_property

import numpy as np

from .assembly import boundary_mass, stiffness, weighted_mass
from .geometry import BoundaryTag, Mesh
from .quadrature import gauss_interval, norm_rule


def _stack(v) -> tuple[np.ndarray, bool]:
    arr = np.asarray(v, dtype=float)
    return (arr[None] if arr.ndim == 1 else arr), arr.ndim == 1


def _scalar(values):
    return float(values) if np.ndim(values) == 0 else values


def _out(values: np.ndarray, single: bool):
    return float(values[0]) if single else values


class SpatialNorms:
    """Norm evaluators bound to one mesh; operators are built on first use."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh

    @cached_property
    def mass(self):
        return weighted_mass(self.mesh, 1.0)

    @cached_property
    def stiff(self):
        return stiffness(self.mesh, 1.0)

    @cached_property
    def _boundary(self):
        return {tag: boundary_mass(self.mesh, tag) for tag in BoundaryTag}

    def _quadratic(self, A, v):
        V, single = _stack(v)
        vals = np.einsum("sn,sn->s", V, (A @ V.T).T)
        return _out(np.sqrt(np.maximum(vals, 0.0)), single)

    def l2(self, v):
        return self._quadratic(self.mass, v)

    def grad_l2(self, v):
        return self._quadratic(self.stiff, v)

    def h1(self, v):
        return _scalar(np.sqrt(np.square(self.l2(v)) + np.square(self.grad_l2(v))))

    def linf(self, v):
        V, single = _stack(v)
        return _out(np.max(np.abs(V), axis=1), single)

    def lp(self, v, p: float):
        """(integral of |v|^p)^(1/p); exact for p = 2, quadrature otherwise."""
        if p == 2:
            return self.l2(v)
        if p == 1 and self.mesh.dim == 1:
            return self.l1(v)
        V, single = _stack(v)
        return _out(self._lp_quad(V, p), single)

    def l1(self, v):
        """Integral of |v|; exact for P1 in one dimension (sign changes resolved)."""
        V, single = _stack(v)
        if self.mesh.dim != 1:
            return _out(self._lp_quad(V, 1.0), single)
        a = V[:, self.mesh.elements[:, 0]]
        b = V[:, self.mesh.elements[:, 1]]
        same = a * b >= 0
        denom = np.where(same, 1.0, np.abs(a) + np.abs(b))
        per = np.where(same, 0.5 * (np.abs(a) + np.abs(b)), 0.5 * (a * a + b * b) / denom)
        return _out(per @ self.mesh.volumes, single)

    def _lp_quad(self, V, p):
        rule = norm_rule(self.mesh.dim)
        vals = V[:, self.mesh.elements] @ rule.bary.T
        return np.einsum("seq,q,e->s", np.abs(vals) ** p, rule.weights, self.mesh.volumes) ** (1 / p)

    def grad_lp(self, v, p: float):
        """(integral of |grad v|^p)^(1/p), exact since gradients are piecewise constant."""
        V, single = _stack(v)
        g = np.einsum("eid,sei->sed", self.mesh.grads, V[:, self.mesh.elements])
        mag = np.linalg.norm(g, axis=2)
        return _out((mag ** p @ self.mesh.volumes) ** (1.0 / p), single)

    def w1p(self, v, p: float):
        """Standard W^{1,p} norm (|v|_p^p + |grad v|_p^p)^(1/p)."""
        return _scalar((np.asarray(self.lp(v, p)) ** p
                        + np.asarray(self.grad_lp(v, p)) ** p) ** (1.0 / p))

    def boundary_l2(self, v, tag: BoundaryTag):
        return self._quadratic(self._boundary[tag], v)

    def boundary_lp(self, v, p: float, tag: BoundaryTag):
        if p == 2:
            return self.boundary_l2(v, tag)
        V, single = _stack(v)
        facets = self.mesh.facets_with(tag)
        if len(facets) == 0:
            return _out(np.zeros(V.shape[0]), single)
        conn = self.mesh.facets[facets]
        if self.mesh.dim == 1:
            bary, weights = np.ones((1, 1)), np.ones(1)
        else:
            rule = gauss_interval(4)
            bary, weights = rule.bary, rule.weights
        vals = V[:, conn] @ bary.T  # (S, F, nq)
        integ = np.einsum("sfq,q,f->s", np.abs(vals) ** p, weights,
                          self.mesh.facet_measures[facets])
        return _out(integ ** (1.0 / p), single)

    def mean(self, v):
        V, single = _stack(v)
        return _out((self.mass @ V.T).sum(axis=0) / self.mesh.volumes.sum(), single)


_CACHE: "weakref.WeakKeyDictionary[Mesh, SpatialNorms]" = weakref.WeakKeyDictionary()


def spatial_norms(mesh: Mesh) -> SpatialNorms:
    ev = _CACHE.get(mesh)
    if ev is None:
        ev = _CACHE[mesh] = SpatialNorms(mesh)
    return ev


# ---------------------------------------------------------------- time norms


def time_linf(values) -> float:
    """L-infinity in time: maximum over the step values."""
    values = np.asarray(values, dtype=float)
    return float(values.max()) if values.size else 0.0


def time_lp(times, values, p: float) -> float:
    """L^p in time by the trapezoid rule applied to values**p at the grid nodes."""
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return 0.0
    return float(np.trapezoid(values ** p, np.asarray(times, float)) ** (1.0 / p))


def midpoint_lp(dt: float, values, p: float) -> float:
    """L^p in time for quantities located at interval midpoints."""
    values = np.asarray(values, dtype=float)
    return float((dt * np.sum(values ** p)) ** (1.0 / p))
