import numpy as np
import pytest

from westervelt.errors import InvalidArgument
from westervelt.geometry import BoundaryTag, build_interval_mesh, build_rect_mesh, domain_measure


def test_interval_nodes_and_tags():
    mesh = build_interval_mesh(1.0, 4, 0.5)
    np.testing.assert_allclose(mesh.nodes[:, 0], [0, 0.25, 0.5, 0.75, 1.0])
    assert list(mesh.facet_tags) == [BoundaryTag.GAMMA_NEUMANN, BoundaryTag.GAMMA_HAT_ABSORBING]


def test_single_element_all_neumann():
    mesh = build_interval_mesh(1.0, 1, 1.0)
    assert set(mesh.facet_tags) == {BoundaryTag.GAMMA_NEUMANN}


def test_interval_measure():
    assert domain_measure(build_interval_mesh(2.0, 8)) == pytest.approx(2.0, rel=1e-12)


@pytest.mark.parametrize("length, n", [(0.0, 4), (-1.0, 4), (1.0, 0), (1.0, 2.5)])
def test_interval_rejects_bad_input(length, n):
    with pytest.raises(InvalidArgument):
        build_interval_mesh(length, n)


def test_rect_counts_and_tags():
    mesh = build_rect_mesh(1, 1, 2, 2, {"left"})
    assert mesh.n_elements == 8
    left = np.isclose(mesh.facet_centroids[:, 0], 0.0)
    assert np.all(mesh.facet_tags[left] == BoundaryTag.GAMMA_NEUMANN)
    assert np.all(mesh.facet_tags[~left] == BoundaryTag.GAMMA_HAT_ABSORBING)


def test_rect_without_gamma_is_absorbing():
    mesh = build_rect_mesh(1, 1, 1, 1, ())
    assert set(mesh.facet_tags) == {BoundaryTag.GAMMA_HAT_ABSORBING}


def test_rect_perimeter():
    mesh = build_rect_mesh(2, 1, 4, 2, {"left", "right"})
    assert mesh.boundary_measure() == pytest.approx(6.0, abs=1e-12)
    assert domain_measure(mesh) == pytest.approx(2.0, rel=1e-12)


def test_rect_rejects_empty_domain():
    with pytest.raises(InvalidArgument):
        build_rect_mesh(0.0, 1.0, 2, 2)
    with pytest.raises(InvalidArgument):
        build_rect_mesh(1.0, 1.0, 2, 2, {"front"})


@pytest.mark.parametrize("mesh", [build_interval_mesh(1.0, 7), build_rect_mesh(1.5, 1, 3, 5, {"top"})])
def test_mesh_invariants(mesh):
    assert np.all(mesh.volumes > 0)
    # every boundary facet is owned by an element containing all its nodes
    for facet, owner in zip(mesh.facets, mesh.facet_elements):
        assert set(facet) <= set(mesh.elements[owner])
    keys = {tuple(sorted(f)) for f in mesh.facets}
    assert len(keys) == len(mesh.facets)


def test_refinement_keeps_measure():
    assert domain_measure(build_rect_mesh(2, 1, 2, 1)) == pytest.approx(
        domain_measure(build_rect_mesh(2, 1, 16, 8)), abs=1e-12)


def test_rect_boundary_covers_edges_once():
    mesh = build_rect_mesh(1, 1, 3, 3)
    edges = {}
    for tri in mesh.elements:
        for i in range(3):
            e = tuple(sorted((tri[i], tri[(i + 1) % 3])))
            edges[e] = edges.get(e, 0) + 1
    boundary = {e for e, n in edges.items() if n == 1}
    assert boundary == {tuple(sorted(f)) for f in mesh.facets}
