"""Conforming P1 simplicial meshes on intervals and rectangles.

The boundary is split into an excitation part (Neumann datum) and an absorbing part.
In one dimension the boundary facets are the two endpoints and carry unit measure.
"""

from __future__ import annotations

import enum
import io
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable

import numpy as np

from .errors import InvalidArgument

RECT_SIDES = ("left", "right", "bottom", "top")


class BoundaryTag(enum.IntEnum):
    GAMMA_NEUMANN = 0
    GAMMA_HAT_ABSORBING = 1


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.ascontiguousarray(array)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable P1 mesh.

    ``elements`` has shape (E, d+1), ``facets`` has shape (F, d); ``facet_elements[f]``
    is the unique element owning boundary facet ``f``.
    """

    dim: int
    nodes: np.ndarray
    elements: np.ndarray
    facets: np.ndarray
    facet_tags: np.ndarray
    facet_elements: np.ndarray
    volumes: np.ndarray
    facet_measures: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @cached_property
    def grads(self) -> np.ndarray:
        """Constant basis gradients per element, shape (E, d+1, d)."""
        coords = self.nodes[self.elements]  # (E, d+1, d)
        jac = coords[:, 1:, :] - coords[:, :1, :]  # rows are edge vectors
        inv = np.linalg.inv(jac)  # columns give gradients of barycentric coords 1..d
        ref = np.vstack([-np.ones((1, self.dim)), np.eye(self.dim)])  # (d+1, d)
        # grad(lambda_i) = inv @ ref[i]
        return _frozen(np.einsum("ekl,il->eik", inv, ref))

    @cached_property
    def centroids(self) -> np.ndarray:
        return _frozen(self.nodes[self.elements].mean(axis=1))

    @cached_property
    def facet_centroids(self) -> np.ndarray:
        return _frozen(self.nodes[self.facets].mean(axis=1))

    @cached_property
    def h(self) -> float:
        """Largest element diameter."""
        coords = self.nodes[self.elements]
        diam = np.zeros(self.n_elements)
        for i in range(self.dim + 1):
            for j in range(i + 1, self.dim + 1):
                diam = np.maximum(diam, np.linalg.norm(coords[:, i] - coords[:, j], axis=1))
        return float(diam.max())

    def facets_with(self, tag: BoundaryTag) -> np.ndarray:
        return np.flatnonzero(self.facet_tags == tag)

    def boundary_nodes(self, tag: BoundaryTag) -> np.ndarray:
        return np.unique(self.facets[self.facet_tags == tag])

    def boundary_measure(self, tag: BoundaryTag | None = None) -> float:
        if tag is None:
            return float(self.facet_measures.sum())
        return float(self.facet_measures[self.facet_tags == tag].sum())

    def dump(self) -> str:
        """Plain-text node/element/facet table, one whitespace-separated record per line."""
        out = io.StringIO()
        out.write(f"# dim {self.dim} nodes {self.n_nodes} elements {self.n_elements} "
                  f"facets {len(self.facets)}\n")
        for i, x in enumerate(self.nodes):
            out.write("node " + str(i) + " " + " ".join(repr(float(c)) for c in x) + "\n")
        for e, (conn, vol) in enumerate(zip(self.elements, self.volumes)):
            out.write(f"element {e} " + " ".join(str(int(n)) for n in conn)
                      + f" {float(vol)!r}\n")
        for f, conn in enumerate(self.facets):
            tag = BoundaryTag(int(self.facet_tags[f])).name
            out.write(f"facet {f} " + " ".join(str(int(n)) for n in conn)
                      + f" {tag} {int(self.facet_elements[f])} {float(self.facet_measures[f])!r}\n")
        return out.getvalue()


def domain_measure(mesh: Mesh) -> float:
    """|Omega| as the sum of element volumes."""
    return float(mesh.volumes.sum())


def build_interval_mesh(length: float, n_elements: int, gamma_fraction: float = 0.5) -> Mesh:
    """Uniform mesh of (0, length).

    The left endpoint is excitation boundary when ``gamma_fraction > 0``; the right
    endpoint is absorbing when ``gamma_fraction < 1``.
    """
    if not np.isfinite(length) or length <= 0:
        raise InvalidArgument(f"interval length must be positive, got {length}")
    if int(n_elements) != n_elements or n_elements < 1:
        raise InvalidArgument(f"n_elements must be a positive integer, got {n_elements}")
    if not 0.0 <= gamma_fraction <= 1.0:
        raise InvalidArgument(f"gamma_fraction must lie in [0, 1], got {gamma_fraction}")
    n = int(n_elements)
    x = np.linspace(0.0, float(length), n + 1)
    elements = np.column_stack([np.arange(n), np.arange(1, n + 1)])
    left = BoundaryTag.GAMMA_NEUMANN if gamma_fraction > 0 else BoundaryTag.GAMMA_HAT_ABSORBING
    right = BoundaryTag.GAMMA_HAT_ABSORBING if gamma_fraction < 1 else BoundaryTag.GAMMA_NEUMANN
    return Mesh(
        dim=1,
        nodes=_frozen(x[:, None]),
        elements=_frozen(elements),
        facets=_frozen(np.array([[0], [n]])),
        facet_tags=_frozen(np.array([left, right], dtype=np.int64)),
        facet_elements=_frozen(np.array([0, n - 1])),
        volumes=_frozen(np.diff(x)),
        facet_measures=_frozen(np.ones(2)),
    )


def build_rect_mesh(lx: float, ly: float, nx: int, ny: int,
                    gamma_sides: Iterable[str] = ()) -> Mesh:
    """Structured triangulation of (0, lx) x (0, ly), two triangles per cell.

    Edges on the sides named in ``gamma_sides`` (any of left/right/bottom/top) are
    excitation boundary, the rest absorbing.
    """
    for value, name in ((lx, "lx"), (ly, "ly")):
        if not np.isfinite(value) or value <= 0:
            raise InvalidArgument(f"{name} must be positive (empty domain), got {value}")
    for value, name in ((nx, "nx"), (ny, "ny")):
        if int(value) != value or value < 1:
            raise InvalidArgument(f"{name} must be a positive integer, got {value}")
    sides = set(gamma_sides)
    unknown = sides - set(RECT_SIDES)
    if unknown:
        raise InvalidArgument(f"unknown side names {sorted(unknown)}; expected {RECT_SIDES}")
    nx, ny = int(nx), int(ny)
    xs = np.linspace(0.0, float(lx), nx + 1)
    ys = np.linspace(0.0, float(ly), ny + 1)
    X, Y = np.meshgrid(xs, ys)  # node id = i + j*(nx+1)
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    def nid(i, j):
        return i + j * (nx + 1)

    I, J = np.meshgrid(np.arange(nx), np.arange(ny))
    I, J = I.ravel(), J.ravel()
    sw, se, nw, ne = nid(I, J), nid(I + 1, J), nid(I, J + 1), nid(I + 1, J + 1)
    lower = np.column_stack([sw, se, ne])
    upper = np.column_stack([sw, ne, nw])
    elements = np.empty((2 * len(I), 3), dtype=np.int64)
    elements[0::2] = lower
    elements[1::2] = upper

    # cell c owns elements 2c (lower) and 2c+1 (upper)
    facets, owners, names = [], [], []
    i = np.arange(nx)
    j = np.arange(ny)
    # bottom edges belong to lower triangles of row 0, top edges to upper triangles of last row
    facets.append(np.column_stack([nid(i, 0), nid(i + 1, 0)]))
    owners.append(2 * (0 * nx + i))
    names += ["bottom"] * nx
    facets.append(np.column_stack([nid(i + 1, ny), nid(i, ny)]))
    owners.append(2 * ((ny - 1) * nx + i) + 1)
    names += ["top"] * nx
    facets.append(np.column_stack([nid(0, j + 1), nid(0, j)]))
    owners.append(2 * (j * nx + 0) + 1)
    names += ["left"] * ny
    facets.append(np.column_stack([nid(nx, j), nid(nx, j + 1)]))
    owners.append(2 * (j * nx + nx - 1))
    names += ["right"] * ny
    facets_arr = np.vstack(facets)
    tags = np.array([BoundaryTag.GAMMA_NEUMANN if s in sides else BoundaryTag.GAMMA_HAT_ABSORBING
                     for s in names], dtype=np.int64)
    coords = nodes[elements]
    e1 = coords[:, 1] - coords[:, 0]
    e2 = coords[:, 2] - coords[:, 0]
    volumes = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    edge = nodes[facets_arr[:, 1]] - nodes[facets_arr[:, 0]]
    return Mesh(
        dim=2,
        nodes=_frozen(nodes),
        elements=_frozen(elements),
        facets=_frozen(facets_arr),
        facet_tags=_frozen(tags),
        facet_elements=_frozen(np.concatenate(owners)),
        volumes=_frozen(volumes),
        facet_measures=_frozen(np.linalg.norm(edge, axis=1)),
    )
