"""Discrete P1 operators of the weak forms.

Bilinear operators are returned as ``scipy.sparse.csr_matrix``. Nonlinear forms are
``NonlinearTerm`` objects exposing ``residual(v)`` and ``jacobian(v)``.
"""

from __future__ import annotations

import weakref
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps

from .errors import DegeneracyError, InvalidArgument
from .geometry import BoundaryTag, Mesh
from .quadrature import (damping_rule, gauss_interval, local_mass, physical_points,
                         source_rule, triple_product_tensor)

#: Regularization of |grad v| in the singular Jacobian factor |grad v|^(q-3).
JACOBIAN_SIGMA = 1e-10

_PATTERNS: "weakref.WeakKeyDictionary[Mesh, tuple]" = weakref.WeakKeyDictionary()


def _pattern(mesh: Mesh):
    """CSR structure of element-coupled operators and the scatter map of local entries."""
    cached = _PATTERNS.get(mesh)
    if cached is None:
        n = mesh.dim + 1
        rows = np.repeat(mesh.elements, n, axis=1).ravel()
        cols = np.tile(mesh.elements, (1, n)).ravel()
        N = mesh.n_nodes
        keys = rows.astype(np.int64) * N + cols
        unique, scatter = np.unique(keys, return_inverse=True)
        u_rows, u_cols = np.divmod(unique, N)
        indptr = np.zeros(N + 1, dtype=np.int64)
        np.add.at(indptr, u_rows + 1, 1)
        indptr = np.cumsum(indptr)
        cached = (indptr, u_cols.astype(np.int32), scatter.ravel(), len(unique))
        _PATTERNS[mesh] = cached
    return cached


def assemble_blocks(mesh: Mesh, blocks: np.ndarray) -> sps.csr_matrix:
    """Sum element blocks of shape (E, d+1, d+1) into a global CSR matrix."""
    indptr, indices, scatter, nnz = _pattern(mesh)
    data = np.bincount(scatter, weights=blocks.ravel(), minlength=nnz)
    N = mesh.n_nodes
    return sps.csr_matrix((data, indices.copy(), indptr.copy()), shape=(N, N))


def assemble_vector(mesh: Mesh, local: np.ndarray) -> np.ndarray:
    """Sum element vectors of shape (E, d+1) into a nodal vector."""
    return np.bincount(mesh.elements.ravel(), weights=local.ravel(), minlength=mesh.n_nodes)


def element_local(mesh: Mesh, field) -> np.ndarray:
    """Broadcast a scalar, per-element, nodal or element-local P1 field to shape (E, d+1)."""
    E, n = mesh.n_elements, mesh.dim + 1
    arr = np.asarray(field, dtype=float)
    if arr.ndim == 0:
        return np.full((E, n), float(arr))
    if arr.shape == (E, n):
        return arr
    if arr.ndim == 1 and E == mesh.n_nodes and arr.shape == (E,):
        raise InvalidArgument("ambiguous field: node and element counts coincide; pass (E, d+1)")
    if arr.shape == (mesh.n_nodes,):
        return arr[mesh.elements]
    if arr.shape == (E,):
        return np.repeat(arr[:, None], n, axis=1)
    raise InvalidArgument(f"cannot interpret field of shape {arr.shape} on a mesh with "
                     f"{mesh.n_nodes} nodes and {E} elements")


def element_gradients(mesh: Mesh, v: np.ndarray) -> np.ndarray:
    """Constant gradient of the P1 interpolant of nodal ``v`` on each element, (E, d)."""
    return np.einsum("eid,ei->ed", mesh.grads, np.asarray(v, dtype=float)[mesh.elements])


def weighted_mass(mesh: Mesh, a=1.0, *, margin: float = 0.0) -> sps.csr_matrix:
    """M[i, j] = integral of a * phi_i * phi_j, exact for element-local P1 weights.

    Raises DegeneracyError when any weight value is <= ``margin``.
    """
    local = element_local(mesh, a)
    bad = local <= margin
    if np.any(bad):
        e, i = np.argwhere(bad)[0]
        raise DegeneracyError(
            f"mass weight {local[e, i]:.6g} <= {margin:g} at node {mesh.elements[e, i]}",
            node=int(mesh.elements[e, i]), value=float(local[e, i]))
    return mass_from_local(mesh, local)


def mass_from_local(mesh: Mesh, local: np.ndarray) -> sps.csr_matrix:
    """Weighted mass without the positivity guard (used for Jacobian corrections)."""
    T = triple_product_tensor(mesh.dim)
    blocks = np.einsum("ijk,ek,e->eij", T, local, mesh.volumes)
    return assemble_blocks(mesh, blocks)


def stiffness(mesh: Mesh, coeff=1.0) -> sps.csr_matrix:
    """K[i, j] = integral of coeff * grad phi_i . grad phi_j, coeff per element."""
    c = np.broadcast_to(np.asarray(coeff, dtype=float), (mesh.n_elements,))
    G = mesh.grads
    blocks = np.einsum("eid,ejd,e->eij", G, G, c * mesh.volumes)
    return assemble_blocks(mesh, blocks)


def variable_stiffness(mesh: Mesh, a) -> sps.csr_matrix:
    """Nonsymmetric operator of the potential-form stiffness with P1 coefficient ``a``.

    Row i, column j holds integral of (a grad phi_j . grad phi_i + phi_i grad a . grad phi_j),
    the weak form of -a * Laplacian after integration by parts.
    """
    local = element_local(mesh, a)
    G = mesh.grads
    n = mesh.dim + 1
    mean_a = local.mean(axis=1)
    grad_a = np.einsum("eid,ei->ed", G, local)
    sym = np.einsum("eid,ejd->eij", G, G) * mean_a[:, None, None]
    adv = np.einsum("ed,ejd->ej", grad_a, G)[:, None, :] / n
    blocks = (sym + adv) * mesh.volumes[:, None, None]
    return assemble_blocks(mesh, blocks)


def variable_stiffness_derivative(mesh: Mesh, u: np.ndarray) -> sps.csr_matrix:
    """D[i, m] = d(variable_stiffness(a) @ u)[i] / d a_m for nodal a."""
    G = mesh.grads
    n = mesh.dim + 1
    gu = np.einsum("eid,ed->ei", G, element_gradients(mesh, u))
    blocks = (gu[:, :, None] + gu[:, None, :]) * (mesh.volumes / n)[:, None, None]
    return assemble_blocks(mesh, blocks)


def absorbing_matrix(mesh: Mesh, alpha=0.0) -> sps.csr_matrix:
    """B[i, j] = integral over the absorbing boundary of alpha * phi_i * phi_j."""
    F = len(mesh.facets)
    a = np.broadcast_to(np.asarray(alpha, dtype=float), (F,))
    a = np.where(mesh.facet_tags == BoundaryTag.GAMMA_HAT_ABSORBING, a, 0.0)
    ref = local_mass(mesh.dim - 1)
    blocks = ref[None] * (a * mesh.facet_measures)[:, None, None]
    n = mesh.dim
    rows = np.repeat(mesh.facets, n, axis=1).ravel()
    cols = np.tile(mesh.facets, (1, n)).ravel()
    N = mesh.n_nodes
    return sps.csr_matrix((blocks.ravel(), (rows, cols)), shape=(N, N))


def boundary_mass(mesh: Mesh, tag: BoundaryTag) -> sps.csr_matrix:
    """Unweighted boundary mass on the facets carrying ``tag``."""
    mask = (mesh.facet_tags == tag).astype(float)
    ref = local_mass(mesh.dim - 1)
    blocks = ref[None] * (mask * mesh.facet_measures)[:, None, None]
    n = mesh.dim
    rows = np.repeat(mesh.facets, n, axis=1).ravel()
    cols = np.tile(mesh.facets, (1, n)).ravel()
    N = mesh.n_nodes
    return sps.csr_matrix((blocks.ravel(), (rows, cols)), shape=(N, N))


def _facet_rule(mesh: Mesh):
    if mesh.dim == 1:
        return np.ones((1, 1)), np.ones(1)
    rule = gauss_interval(3)
    return rule.bary, rule.weights


def neumann_load(mesh: Mesh, g, t: float = 0.0) -> np.ndarray:
    """F[i] = integral over the excitation boundary of g * phi_i.

    ``g`` is a number, a nodal vector, or a callable ``g(points, t)``.
    """
    N = mesh.n_nodes
    facets = mesh.facets_with(BoundaryTag.GAMMA_NEUMANN)
    out = np.zeros(N)
    if len(facets) == 0:
        return out
    conn = mesh.facets[facets]
    bary, weights = _facet_rule(mesh)
    if callable(g):
        pts = np.einsum("qk,fkd->fqd", bary, mesh.nodes[conn])
        vals = np.asarray(g(pts, t), dtype=float).reshape(len(facets), len(weights))
    else:
        arr = np.asarray(g, dtype=float)
        if arr.ndim == 0:
            vals = np.full((len(facets), len(weights)), float(arr))
        else:
            vals = arr[conn] @ bary.T
    local = np.einsum("fq,q,qk->fk", vals, weights, bary) * mesh.facet_measures[facets, None]
    np.add.at(out, conn.ravel(), local.ravel())
    return out


def source_load(mesh: Mesh, r, t: float) -> np.ndarray:
    """F[i] = integral of r(x, t) * phi_i by element quadrature."""
    rule = source_rule(mesh.dim)
    pts = physical_points(mesh.nodes, mesh.elements, rule)
    vals = np.asarray(r(pts, t), dtype=float)
    local = np.einsum("eq,q,qk->ek", vals, rule.weights, rule.bary) * mesh.volumes[:, None]
    return assemble_vector(mesh, local)


# ---------------------------------------------------------------- nonlinear terms


def q_flux(g: np.ndarray, q: float) -> np.ndarray:
    """|g|^(q-1) g for vectors stored along the last axis."""
    g = np.asarray(g, dtype=float)
    if q == 1:
        return g.copy()
    return np.linalg.norm(g, axis=-1, keepdims=True) ** (q - 1) * g


class NonlinearTerm(ABC):
    """A nonlinear form v -> R(v) with its Jacobian dR/dv."""

    mesh: Mesh

    @abstractmethod
    def residual(self, v: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def jacobian(self, v: np.ndarray) -> sps.csr_matrix: ...


@dataclass(eq=False)
class GradientPowerTerm(NonlinearTerm):
    """R(v)[i] = integral of coeff * (lin + nonlin * |grad v|^(q-1)) grad v . grad phi_i.

    ``coeff``, ``lin`` and ``nonlin`` are per-element arrays.
    """

    mesh: Mesh
    coeff: np.ndarray
    lin: np.ndarray
    nonlin: np.ndarray
    q: float

    def _flux_factor(self, norm):
        power = np.ones_like(norm) if self.q == 1 else norm ** (self.q - 1)
        return self.coeff * (self.lin + self.nonlin * power)

    def residual(self, v):
        g = element_gradients(self.mesh, v)
        factor = self._flux_factor(np.linalg.norm(g, axis=1))
        local = np.einsum("eid,ed->ei", self.mesh.grads, g) * (factor * self.mesh.volumes)[:, None]
        return assemble_vector(self.mesh, local)

    def jacobian(self, v):
        G = self.mesh.grads
        g = element_gradients(self.mesh, v)
        norm = np.linalg.norm(g, axis=1)
        factor = self._flux_factor(norm)
        blocks = np.einsum("eid,ejd->eij", G, G) * factor[:, None, None]
        if self.q != 1:
            reg = np.sqrt(norm ** 2 + JACOBIAN_SIGMA ** 2)
            extra = self.coeff * self.nonlin * (self.q - 1) * reg ** (self.q - 3)
            Gg = np.einsum("eid,ed->ei", G, g)
            blocks = blocks + np.einsum("ei,ej->eij", Gg, Gg) * extra[:, None, None]
        return assemble_blocks(self.mesh, blocks * self.mesh.volumes[:, None, None])


@dataclass(eq=False)
class LowerOrderDamping(NonlinearTerm):
    """R(v)[i] = beta * (M v)[i] + gamma * integral of |v|^(q-1) v phi_i (Gauss quadrature)."""

    mesh: Mesh
    beta: float
    gamma: float
    q: float

    def __post_init__(self):
        self._mass = weighted_mass(self.mesh, 1.0)
        self._rule = damping_rule(self.mesh.dim)

    @property
    def is_zero(self) -> bool:
        return self.beta == 0 and self.gamma == 0

    def _values(self, v):
        return np.asarray(v, float)[self.mesh.elements] @ self._rule.bary.T  # (E, nq)

    def residual(self, v):
        out = self.beta * (self._mass @ v)
        if self.gamma:
            vals = self._values(v)
            f = np.abs(vals) ** (self.q - 1) * vals
            local = np.einsum("eq,q,qk->ek", f, self._rule.weights, self._rule.bary)
            out = out + self.gamma * assemble_vector(self.mesh, local * self.mesh.volumes[:, None])
        return out

    def jacobian(self, v):
        out = self.beta * self._mass
        if self.gamma:
            vals = self._values(v)
            df = self.q * np.abs(vals) ** (self.q - 1)
            B = self._rule.bary
            blocks = np.einsum("eq,q,qi,qj->eij", df, self._rule.weights, B, B)
            out = out + self.gamma * assemble_blocks(
                self.mesh, blocks * self.mesh.volumes[:, None, None])
        return out


def _per_element(mesh: Mesh, value) -> np.ndarray:
    return np.broadcast_to(np.asarray(value, dtype=float), (mesh.n_elements,)).copy()


def qgrad_damping(mesh: Mesh, params) -> GradientPowerTerm:
    """q-gradient strong damping b((1 - delta) + delta |grad v|^(q-1)) grad v.

    ``params`` is any object with ``b``, ``delta`` (scalars or per-element) and ``q``.
    """
    delta = _per_element(mesh, params.delta)
    return GradientPowerTerm(mesh, _per_element(mesh, params.b), 1.0 - delta, delta,
                             float(params.q))


def qstiffness(mesh: Mesh, params) -> GradientPowerTerm:
    """q-nonlinear stiffness c^2 (1 + epsilon |grad u|^(q-1)) grad u."""
    c2 = getattr(params, "stiff", None)
    if c2 is None:
        c2 = params.c2
    E = mesh.n_elements
    return GradientPowerTerm(mesh, _per_element(mesh, c2), np.ones(E),
                             np.full(E, float(params.epsilon)), float(params.q))


def lower_order_damping(mesh: Mesh, params) -> LowerOrderDamping:
    """beta * v + gamma * |v|^(q-1) v."""
    return LowerOrderDamping(mesh, float(params.beta), float(params.gamma), float(params.q))
