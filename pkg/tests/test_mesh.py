import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hslod.mesh import (Box, ConfigurationError, PatchKind, box_multi_indices, build_hierarchy, build_patch,
                        local_vertex_offsets)


def test_sizes_and_counts():
    h = build_hierarchy(2, 1, 3, 6)
    assert h.L == 3
    assert [h.mesh_size(l) for l in h.levels] == [0.5, 0.25, 0.125, 0.0625]
    assert h.num_elements(2) == 64
    assert h.num_basis(0) == 4 and h.num_basis(2) == 64 - 16
    assert h.n_fine == 64 and h.num_fine_nodes == 65**2
    assert h.ratio(3) == 4


@pytest.mark.parametrize("args", [(4, 0, 1, 3), (2, 0, 5, 4), (2, -1, 1, 3)])
def test_invalid_hierarchy(args):
    with pytest.raises(ConfigurationError):
        build_hierarchy(*args)


def test_lexicographic_x_fastest():
    h = build_hierarchy(2, 0, 2, 3)
    np.testing.assert_array_equal(h.element_multi_index(2, [0, 1, 4]), [[0, 0], [1, 0], [0, 1]])
    np.testing.assert_array_equal(box_multi_indices(Box((1, 0), (3, 2)))[:3], [[1, 0], [2, 0], [1, 1]])


@given(st.integers(1, 3), st.integers(0, 3), st.data())
def test_children_parent_roundtrip(dim, level, data):
    h = build_hierarchy(dim, 0, 4, 4)
    idx = data.draw(st.integers(0, h.num_elements(level) - 1))
    kids = h.refinement_children(level, idx)
    assert kids.size == 2**dim
    np.testing.assert_array_equal(h.parent(level + 1, kids), idx)
    assert len(set(kids.tolist())) == kids.size


@given(st.integers(1, 3), st.integers(0, 3), st.integers(0, 4), st.data())
def test_patch_layers(dim, level, order, data):
    h = build_hierarchy(dim, 0, 3, 4)
    c = data.draw(st.integers(0, h.num_elements(level) - 1))
    p = build_patch(h, PatchKind.LOD, level, c, order)
    mi = h.element_multi_index(level, c)
    n = h.n_per_dim(level)
    expected = np.prod([min(v + order, n - 1) - max(v - order, 0) + 1 for v in mi])
    assert p.box.size == expected
    assert c in p.coarse_elements(level)


def test_patch_interior_is_unclipped_power():
    h = build_hierarchy(2, 0, 4, 5)
    for m in (1, 2, 3):
        p = build_patch(h, PatchKind.LOD, 4, h.element_index(4, (7, 8)), m)
        assert p.box.size == (2 * m + 1) ** 2


def test_hierarchical_patch_uses_parent_mesh():
    h = build_hierarchy(2, 0, 2, 5)
    p = build_patch(h, PatchKind.HIERARCHICAL, 1, 0, 2)
    assert p.mesh_level == 0 and p.is_domain()
    corner = build_patch(h, PatchKind.HIERARCHICAL, 2, 0, 2)
    assert corner.box == Box((0, 0), (2, 2))
    assert corner.coarse_elements(2).size == 16


def test_node_classification():
    h = build_hierarchy(2, 0, 2, 3)
    p = build_patch(h, PatchKind.LOD, 2, h.element_index(2, (0, 1)), 1)
    inside, sigma = h.box_node_masks(p.fine_box)
    assert p.fine_box == Box((0, 0), (4, 6))
    # inner nodes: x in 1..3, y in 1..5 ; sigma: right edge x=4 and top edge y=6, off the domain boundary
    assert inside.sum() == 3 * 5
    assert sigma.sum() == 5 + 3 + 1
    assert not (inside & sigma).any()
    coords = h.node_coordinates(p.sigma_nodes)
    assert np.all((coords > 0) & (coords < 1))


def test_vertex_offsets():
    np.testing.assert_array_equal(local_vertex_offsets(2), [[0, 0], [1, 0], [0, 1], [1, 1]])
