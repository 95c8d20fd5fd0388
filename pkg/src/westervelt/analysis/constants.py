"""Numerical estimates of the Poincare, embedding and trace constants over the P1 space.

Every estimate is a supremum of a norm ratio over the discrete space, so it is a lower
bound for the continuum constant. Ratios that reduce to generalized eigenproblems or to
node-wise convex programs are computed exactly; the rest use multi-start L-BFGS ascent.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps
import scipy.sparse.linalg as spla
from scipy.optimize import minimize

from ..assembly import assemble_blocks, boundary_mass, stiffness, weighted_mass
from ..errors import EstimationFailure, InvalidArgument
from ..geometry import BoundaryTag, Mesh, domain_measure
from ..parameters import omega_constants
from ..quadrature import gauss_interval, norm_rule

DENSE_LIMIT = 2000
EMBEDDINGS = ("H1_L4", "W1q1_Linf", "Lq1_L4", "H1_Linf")
TRACES = ("C1tr", "C2tr")


# ---------------------------------------------------------------- Young's inequality


def young_constant(epsilon: float, s: float) -> float:
    """Smallest C with a*b <= epsilon*a**s + C*b**(s/(s-1)) for all a, b > 0."""
    if not s > 1:
        raise InvalidArgument(f"Young exponent s must exceed 1, got {s}")
    if not epsilon > 0:
        raise InvalidArgument(f"Young weight epsilon must be positive, got {epsilon}")
    return (s - 1.0) * s ** (-s / (s - 1.0)) * epsilon ** (-1.0 / (s - 1.0))


def printed_young_constant(epsilon: float, s: float) -> float:
    """The constant with the sign-flipped exponents; kept to demonstrate that it fails."""
    return (s - 1.0) * s ** (s / (s - 1.0)) * epsilon ** (-1.0 / (1.0 - s))


# ---------------------------------------------------------------- results


@dataclass(frozen=True)
class ConstantEstimate:
    """A discrete supremum together with the function attaining it."""

    value: float
    witness: np.ndarray = field(repr=False)
    method: str

    def __float__(self) -> float:
        return self.value


# ---------------------------------------------------------------- power integrals


class _PowerIntegrals:
    """p-th power integrals of P1 functions and their gradients with respect to nodes."""

    def __init__(self, mesh: Mesh, p: float):
        self.mesh, self.p = mesh, float(p)
        rule = norm_rule(mesh.dim)
        self._domain = (mesh.elements, rule.bary, rule.weights, mesh.volumes)

    def _simplex_power(self, phi, conn, bary, weights, measures):
        p = self.p
        vals = phi[conn] @ bary.T
        mag = np.abs(vals)
        total = float(np.einsum("eq,q,e->", mag ** p, weights, measures))
        dvals = p * mag ** (p - 2.0) * vals
        local = np.einsum("eq,q,e,qi->ei", dvals, weights, measures, bary)
        grad = np.bincount(conn.ravel(), local.ravel(), minlength=self.mesh.n_nodes)
        return total, grad

    def values(self, phi):
        """Integral of |phi|^p and its gradient."""
        return self._simplex_power(phi, *self._domain)

    def gradients(self, phi):
        """Integral of |grad phi|^p and its gradient."""
        m, p = self.mesh, self.p
        G = np.einsum("eid,ei->ed", m.grads, phi[m.elements])
        mag = np.linalg.norm(G, axis=1)
        total = float(np.sum(m.volumes * mag ** p))
        local = np.einsum("e,ed,eid->ei", p * m.volumes * mag ** (p - 2.0), G, m.grads)
        return total, np.bincount(m.elements.ravel(), local.ravel(), minlength=m.n_nodes)

    def hessian(self, phi) -> sps.csr_matrix:
        """Hessian of the sum of both domain integrals (values and gradients)."""
        m, p = self.mesh, self.p
        el, bary, weights, measures = self._domain
        vals = phi[el] @ bary.T
        c = p * (p - 1.0) * np.abs(vals) ** (p - 2.0) * weights * measures[:, None]
        blocks = np.einsum("eq,qi,qj->eij", c, bary, bary)
        G = np.einsum("eid,ei->ed", m.grads, phi[el])
        mag = np.linalg.norm(G, axis=1)
        unit = G / np.where(mag > 0, mag, 1.0)[:, None]
        proj = np.einsum("eid,ed->ei", m.grads, unit)
        scale = p * m.volumes * mag ** (p - 2.0)
        blocks += scale[:, None, None] * (
            np.einsum("eid,ejd->eij", m.grads, m.grads)
            + (p - 2.0) * np.einsum("ei,ej->eij", proj, proj))
        return assemble_blocks(m, blocks)

    def boundary(self, phi, tag: BoundaryTag):
        """Integral of |phi|^p over the facets carrying ``tag`` and its gradient."""
        m = self.mesh
        facets = m.facets_with(tag)
        if m.dim == 1:
            bary, weights = np.ones((1, 1)), np.ones(1)
        else:
            rule = gauss_interval(4)
            bary, weights = rule.bary, rule.weights
        return self._simplex_power(phi, m.facets[facets], bary, weights, m.facet_measures[facets])


def _maximize_log_ratio(objective, starts, what: str) -> tuple[float, np.ndarray]:
    """Maximize a scale-invariant log-ratio from several starts.

    ``objective(phi)`` returns (log ratio, gradient). Raises EstimationFailure when no
    start reaches a stationary point.
    """
    best, best_phi, converged = -np.inf, None, False
    last = None
    for start in starts:
        x0 = np.asarray(start, dtype=float)
        x0 = x0 / np.linalg.norm(x0)

        def neg(phi):
            value, grad = objective(phi)
            return -value, -grad

        res = minimize(neg, x0, jac=True, method="L-BFGS-B",
                       options={"maxiter": 2000, "gtol": 1e-10, "ftol": 1e-15})
        last = res.x
        value, grad = objective(res.x)
        stationary = np.linalg.norm(grad) * np.linalg.norm(res.x) <= 1e-5 * max(1.0, abs(value))
        if not np.isfinite(value):
            continue
        converged |= stationary
        if value > best:
            best, best_phi = value, res.x / np.linalg.norm(res.x)
    if not converged or best_phi is None:
        raise EstimationFailure(f"ratio ascent for {what} did not reach a stationary point",
                                last_iterate=last)
    return float(np.exp(best)), best_phi


def _start_vectors(mesh: Mesh, count: int, seed: int) -> list[np.ndarray]:
    """Low Neumann eigenmodes, coordinate functions, and seeded random vectors."""
    rng = np.random.default_rng(seed)
    K, M = stiffness(mesh).toarray(), weighted_mass(mesh).toarray()
    starts = []
    if mesh.n_nodes <= DENSE_LIMIT:
        k = min(count, mesh.n_nodes - 1)
        _, vecs = sla.eigh(K, M, subset_by_index=[0, k])
        starts.extend(vecs[:, i] for i in range(1, k + 1))
    starts.extend(mesh.nodes[:, d] - mesh.nodes[:, d].mean() for d in range(mesh.dim))
    starts.extend(rng.standard_normal(mesh.n_nodes) for _ in range(count))
    return starts


# ---------------------------------------------------------------- Poincare


def estimate_poincare_constant(mesh: Mesh, q: float, *, seed: int = 0,
                               starts: int = 4) -> ConstantEstimate:
    """Sup over P1 of |phi - mean phi|_{L^{q+1}} / |grad phi|_{L^{q+1}}."""
    if q < 1:
        raise InvalidArgument(f"q must be >= 1, got {q}")
    if mesh.n_nodes < 2:
        raise InvalidArgument("the P1 space needs at least two nodes")
    K, M = stiffness(mesh), weighted_mass(mesh)
    if q == 1:
        lam, vec = _second_eigenpair(K, M)
        return ConstantEstimate(float(1.0 / np.sqrt(lam)), vec, "generalized eigenproblem")

    p = q + 1.0
    ints = _PowerIntegrals(mesh, p)
    m = np.asarray(M.sum(axis=0)).ravel() / domain_measure(mesh)

    def objective(phi):
        psi = phi - m @ phi
        num, g_num = ints.values(psi)
        den, g_den = ints.gradients(phi)
        g_num = g_num - m * g_num.sum()
        return (np.log(num) - np.log(den)) / p, (g_num / num - g_den / den) / p

    value, phi = _maximize_log_ratio(objective, _start_vectors(mesh, starts, seed), "C_P")
    return ConstantEstimate(value, phi - m @ phi, "L-BFGS ratio ascent")


def _second_eigenpair(K, M):
    n = K.shape[0]
    if n <= DENSE_LIMIT:
        vals, vecs = sla.eigh(K.toarray(), M.toarray(), subset_by_index=[1, 1])
        return float(vals[0]), vecs[:, 0]
    vals, vecs = spla.eigsh(K.tocsc(), k=2, M=M.tocsc(), sigma=-1e-8, which="LM")
    order = np.argsort(vals)
    return float(vals[order[1]]), vecs[:, order[1]]


# ---------------------------------------------------------------- embeddings


def _pointwise_w1p(mesh: Mesh, p: float, nodes=None) -> ConstantEstimate:
    """Sup of |phi|_inf / |phi|_{W^{1,p}}; the sup sits at a node, so for each node j
    solve the convex program min |phi|_{W^{1,p}} subject to phi_j = 1."""
    M, K = weighted_mass(mesh), stiffness(mesh)
    A = (M + K).toarray() if mesh.n_nodes <= DENSE_LIMIT else None
    if A is not None:
        Ainv = np.linalg.inv(A)
        diag = np.diag(Ainv)
    else:
        lu = spla.splu((M + K).tocsc())
        diag = np.array([lu.solve(np.eye(1, mesh.n_nodes, j).ravel())[j]
                         for j in range(mesh.n_nodes)])
    candidates = np.arange(mesh.n_nodes) if nodes is None else np.asarray(nodes)
    if p == 2:
        j = int(candidates[np.argmax(diag[candidates])])
        col = Ainv[:, j] if A is not None else lu.solve(np.eye(1, mesh.n_nodes, j).ravel())
        return ConstantEstimate(float(np.sqrt(diag[j])), col / col[j], "closed form (M+K)^-1")

    ints = _PowerIntegrals(mesh, p)
    best, witness = 0.0, None
    for j in candidates:
        col = Ainv[:, j] if A is not None else lu.solve(np.eye(1, mesh.n_nodes, j).ravel())
        phi, energy = _constrained_newton(ints, col / col[j], int(j))
        ratio = energy ** (-1.0 / p)
        if ratio > best:
            best, witness = ratio, phi
    return ConstantEstimate(float(best), witness, "node-wise convex minimization")


def _constrained_newton(ints: _PowerIntegrals, phi: np.ndarray, j: int, tol: float = 1e-13,
                        max_iter: int = 100) -> tuple[np.ndarray, float]:
    """Damped Newton for min |phi|_{W^{1,p}}^p subject to phi_j = 1 (a convex program)."""
    free = np.arange(phi.size) != j

    def energy(x):
        a, ga = ints.values(x)
        b, gb = ints.gradients(x)
        return a + b, ga + gb

    value, grad = energy(phi)
    for _ in range(max_iter):
        H = ints.hessian(phi)[free][:, free]
        H = H + 1e-14 * sps.identity(H.shape[0]) * abs(H.diagonal()).max()
        step = spla.spsolve(H.tocsc(), -grad[free])
        decrement = float(-grad[free] @ step)
        if decrement <= tol * value:
            return phi, value
        t = 1.0
        while True:
            trial = phi.copy()
            trial[free] += t * step
            new_value, new_grad = energy(trial)
            if new_value <= value - 0.25 * t * decrement or t < 1e-12:
                break
            t *= 0.5
        phi, value, grad = trial, new_value, new_grad
    raise EstimationFailure(f"convex node program did not converge at node {j}",
                            last_iterate=phi)


def estimate_embedding_constant(mesh: Mesh, which: str, q: float = 1.0, *, seed: int = 0,
                                starts: int = 4) -> ConstantEstimate:
    """Discrete norm of an embedding: ``H1_L4``, ``W1q1_Linf``, ``Lq1_L4`` or ``H1_Linf``."""
    if which not in EMBEDDINGS:
        raise InvalidArgument(f"unknown embedding {which!r}; choose from {EMBEDDINGS}")
    if which == "Lq1_L4":
        if q < 3:
            raise InvalidArgument("L^{q+1} embeds into L^4 only for q >= 3")
        value = domain_measure(mesh) ** ((q - 3.0) / (4.0 * (q + 1.0)))
        return ConstantEstimate(value, np.ones(mesh.n_nodes), "Hoelder on a finite domain")
    if which == "W1q1_Linf":
        if not q + 1 > mesh.dim:
            raise InvalidArgument(f"W^(1,q+1) embeds into L^inf only for q+1 > d "
                                  f"(q={q}, d={mesh.dim})")
        return _pointwise_w1p(mesh, q + 1.0)
    if which == "H1_Linf":
        if mesh.dim != 1:
            raise InvalidArgument("H^1 embeds into L^inf only for q+1 > d, i.e. d = 1")
        return _pointwise_w1p(mesh, 2.0)

    ints = _PowerIntegrals(mesh, 4.0)
    A = weighted_mass(mesh) + stiffness(mesh)

    def objective(phi):
        num, g_num = ints.values(phi)
        Aphi = A @ phi
        den = float(phi @ Aphi)
        return 0.25 * np.log(num) - 0.5 * np.log(den), 0.25 * g_num / num - Aphi / den

    candidates = _start_vectors(mesh, starts, seed) + [np.ones(mesh.n_nodes)]
    candidates += [np.eye(1, mesh.n_nodes, j).ravel() + 1e-3 for j in _corner_nodes(mesh)]
    value, phi = _maximize_log_ratio(objective, candidates, "C_{H1,L4}")
    return ConstantEstimate(value, phi, "L-BFGS ratio ascent")


def _corner_nodes(mesh: Mesh) -> list[int]:
    lo, hi = mesh.nodes.min(axis=0), mesh.nodes.max(axis=0)
    extreme = np.all(np.isclose(mesh.nodes, lo) | np.isclose(mesh.nodes, hi), axis=1)
    return [int(i) for i in np.flatnonzero(extreme)]


# ---------------------------------------------------------------- traces


def estimate_trace_constant(mesh: Mesh, which: str, q: float = 1.0, *, seed: int = 0,
                            starts: int = 4) -> ConstantEstimate:
    """Discrete trace constant on the excitation boundary.

    ``C1tr``: |phi|_{L^{q+1}(Gamma)} / |phi|_{W^{1,q+1}}; ``C2tr``: |phi|_{L^2(Gamma)} /
    |phi|_{H^1}. For q = 1 both use the same generalized eigenproblem.
    """
    if which not in TRACES:
        raise InvalidArgument(f"unknown trace constant {which!r}; choose from {TRACES}")
    gamma = mesh.facets_with(BoundaryTag.GAMMA_NEUMANN)
    if len(gamma) == 0:
        raise InvalidArgument("trace constants need a nonempty excitation boundary")
    p = 2.0 if which == "C2tr" else q + 1.0
    if p == 2:
        B = boundary_mass(mesh, BoundaryTag.GAMMA_NEUMANN)
        A = weighted_mass(mesh) + stiffness(mesh)
        if mesh.n_nodes <= DENSE_LIMIT:
            vals, vecs = sla.eigh(B.toarray(), A.toarray(),
                                  subset_by_index=[mesh.n_nodes - 1, mesh.n_nodes - 1])
            lam, vec = float(vals[0]), vecs[:, 0]
        else:
            vals, vecs = spla.eigsh(B.tocsc(), k=1, M=A.tocsc(), which="LA")
            lam, vec = float(vals[0]), vecs[:, 0]
        return ConstantEstimate(float(np.sqrt(lam)), vec, "generalized eigenproblem")

    if mesh.dim == 1 and len(gamma) == 1:
        return _pointwise_w1p(mesh, p, nodes=mesh.facets[gamma].ravel())

    ints = _PowerIntegrals(mesh, p)

    def objective(phi):
        num, g_num = ints.boundary(phi, BoundaryTag.GAMMA_NEUMANN)
        a, ga = ints.values(phi)
        b, gb = ints.gradients(phi)
        return (np.log(num) - np.log(a + b)) / p, (g_num / num - (ga + gb) / (a + b)) / p

    candidates = _start_vectors(mesh, starts, seed) + [np.ones(mesh.n_nodes)]
    candidates += [np.eye(1, mesh.n_nodes, j).ravel() + 1e-3
                   for j in mesh.boundary_nodes(BoundaryTag.GAMMA_NEUMANN)[:8]]
    value, phi = _maximize_log_ratio(objective, candidates, which)
    return ConstantEstimate(value, phi, "L-BFGS ratio ascent")


# ---------------------------------------------------------------- table


@dataclass(frozen=True)
class ConstantsTable:
    """Constants used by the estimates and certificates; ``None`` marks inapplicable."""

    q: float
    C_P: float | None = None
    C1_omega: float | None = None
    C2_omega: float | None = None
    H1_L4: float | None = None
    W1q1_Linf: float | None = None
    Lq1_L4: float | None = None
    H1_Linf: float | None = None
    C1tr: float | None = None
    C2tr: float | None = None
    metadata: dict = field(default_factory=dict, compare=False)

    def require(self, *names: str) -> tuple[float, ...]:
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise InvalidArgument(f"constants table lacks {missing}")
        return tuple(float(getattr(self, n)) for n in names)

    def with_overrides(self, **values) -> "ConstantsTable":
        names = {f.name for f in fields(self)} - {"q", "metadata"}
        unknown = set(values) - names
        if unknown:
            raise InvalidArgument(f"unknown constants {sorted(unknown)}")
        meta = dict(self.metadata)
        meta.update({k: "user override" for k in values})
        return replace(self, metadata=meta, **{k: float(v) for k, v in values.items()})

    def as_dict(self) -> dict[str, float | None]:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name != "metadata"}


def estimate_constants(mesh: Mesh, q: float, *, seed: int = 0, overrides=None,
                       include=None) -> ConstantsTable:
    """Estimate every constant applicable to (mesh, q); inapplicable ones stay ``None``."""
    overrides = dict(overrides or {})
    C1, C2 = omega_constants(q, domain_measure(mesh))
    values: dict[str, float] = {"C1_omega": C1, "C2_omega": C2}
    meta: dict[str, str] = {"C1_omega": "measure formula", "C2_omega": "measure formula",
                            "mesh": f"d={mesh.dim}, nodes={mesh.n_nodes}, h={mesh.h:.4g}"}
    wanted = set(include) if include is not None else {
        "C_P", "H1_L4", "W1q1_Linf", "Lq1_L4", "H1_Linf", "C1tr", "C2tr"}
    jobs = {
        "C_P": lambda: estimate_poincare_constant(mesh, q, seed=seed),
        "H1_L4": lambda: estimate_embedding_constant(mesh, "H1_L4", q, seed=seed),
        "W1q1_Linf": lambda: estimate_embedding_constant(mesh, "W1q1_Linf", q, seed=seed),
        "Lq1_L4": lambda: estimate_embedding_constant(mesh, "Lq1_L4", q, seed=seed),
        "H1_Linf": lambda: estimate_embedding_constant(mesh, "H1_Linf", q, seed=seed),
        "C1tr": lambda: estimate_trace_constant(mesh, "C1tr", q, seed=seed),
        "C2tr": lambda: estimate_trace_constant(mesh, "C2tr", q, seed=seed),
    }
    for name in sorted(wanted - set(overrides)):
        try:
            est = jobs[name]()
        except InvalidArgument as exc:
            meta[name] = f"not applicable: {exc}"
            continue
        values[name] = est.value
        meta[name] = est.method
    table = ConstantsTable(q=q, metadata=meta, **values)
    return table.with_overrides(**overrides) if overrides else table
