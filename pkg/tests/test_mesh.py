import numpy as np
import pytest
from hypothesis import given, strategies as st

from ecmsim.errors import InvalidArgument, SingularElementError
from ecmsim.mesh import (Mesh, element_volume, from_coordinates, generate_graded,
                         generate_structured, graded_count, graded_sizes)


def test_structured_10x10_element_size():
    m = generate_structured(10, 10, 1e-3, 1e-3, 1e-4)
    assert m.n_elements == 100
    c = m.coords
    assert np.allclose(c.max(axis=1) - c.min(axis=1), 1e-4)
    for tag in ("left", "right", "top", "bottom"):
        assert len(m.boundary_tags[tag]) == 11


def test_single_unit_element():
    m = generate_structured(1, 1, 1, 1, 1)
    assert m.n_nodes == 4 and m.n_elements == 1
    assert element_volume(m, 0) == 1.0


def test_two_elements_are_neighbours():
    m = generate_structured(2, 1, 1, 1, 1)
    assert 1 in m.face_adjacency[0]
    assert 0 in m.face_adjacency[1]


def test_element_volume_small_cube():
    m = generate_structured(1, 1, 1e-4, 1e-4, 1e-4)
    assert element_volume(m, 0) == pytest.approx(1e-12, rel=1e-12)


def test_element_volume_trapezoid():
    m = Mesh(np.array([[0, 0], [2, 0], [1.5, 1], [0, 1]], float), np.array([[0, 1, 2, 3]]), 1.0)
    assert element_volume(m, 0) == pytest.approx(1.75, rel=1e-15)


def test_element_volume_rejects_bad_id():
    m = generate_structured(1, 1, 1, 1, 1)
    with pytest.raises(InvalidArgument):
        element_volume(m, 1)


def test_inverted_quad_rejected():
    with pytest.raises(SingularElementError):
        Mesh(np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float), np.array([[0, 3, 2, 1]]), 1.0)


@pytest.mark.parametrize("args", [(0, 1, 1, 1, 1), (1, 1, -1, 1, 1), (1, 1, 1, 0, 1),
                                  (1, 1, 1, 1, 0)])
def test_structured_rejects_bad_dimensions(args):
    with pytest.raises(InvalidArgument):
        generate_structured(*args)


def test_graded_coarse_rows_at_bottom():
    m = generate_graded(10, 80, "y", 1e-3, 1e-3, 1e-4)
    ys = np.unique(m.nodes[:, 1])
    h = np.diff(ys)
    assert h[0] > h[-1]
    assert h[0] == pytest.approx(1e-4, rel=0.15)
    assert h[-1] == pytest.approx(1.25e-5, rel=0.15)
    assert np.all(np.diff(h) < 0)
    assert len(np.unique(m.nodes[:, 0])) == 81


def test_graded_row_count_matches_enumeration():
    # oracle: grow rows one by one with the ratio solved from the end sizes
    length, hc, hf = 1e-3, 1e-4, 1.25e-5
    n_cont = graded_count(length, hc, hf)
    q = (length - hc) / (length - hf)
    rows, pos, h = 0, 0.0, hc
    while pos < length - 1e-15:
        pos += h
        h *= q
        rows += 1
    assert abs(n_cont - rows) < 1.0
    m = generate_graded(10, 80, "y", 1e-3, 1e-3, 1e-4)
    ny = len(np.unique(m.nodes[:, 1])) - 1
    assert ny == round(n_cont)
    assert m.n_elements == ny * 80


def test_graded_equal_densities_is_structured():
    g = generate_graded(80, 80, "y", 1e-3, 1e-3, 1e-4)
    s = generate_structured(80, 80, 1e-3, 1e-3, 1e-4)
    assert np.array_equal(g.nodes, s.nodes)
    assert np.array_equal(g.elements, s.elements)


def test_graded_sizes_fill_length():
    s = graded_sizes(1.0, 0.1, 0.01)
    assert s.sum() == pytest.approx(1.0, rel=1e-14)
    assert s[0] > s[-1]


def test_listing(tmp_path):
    m = generate_structured(2, 1, 2.0, 1.0, 1.0)
    p = tmp_path / "mesh.txt"
    m.write_listing(p)
    lines = p.read_text().splitlines()
    assert len(lines) == m.n_nodes + m.n_elements
    assert lines[m.n_nodes].split() == ["0", "0", "1", "4", "3"]


def test_permuted_mesh_same_geometry():
    m = generate_structured(3, 2, 1.0, 1.0, 1.0)
    perm = np.random.default_rng(0).permutation(m.n_nodes)
    p = m.permuted(perm)
    assert np.allclose(p.coords, m.coords)


@given(st.integers(1, 25), st.integers(1, 25), st.floats(1e-5, 10), st.floats(1e-5, 10),
       st.floats(1e-5, 1))
def test_structured_volume_sum(nx, ny, w, h, t):
    m = generate_structured(nx, ny, w, h, t)
    assert m.volumes.sum() == pytest.approx(w * h * t, rel=1e-12)
    assert np.all(m.areas > 0)


@given(st.integers(1, 15), st.integers(1, 15), st.booleans())
def test_adjacency_symmetric(nx, ny, graded):
    if graded:
        m = generate_graded(max(1, nx), max(1, nx) * 4, "x", nx * 1e-3, ny * 1e-3, 1e-4)
    else:
        m = generate_structured(nx, ny, 1.0, 1.0, 1.0)
    adj = m.face_adjacency
    for e in range(m.n_elements):
        for k in range(4):
            n = adj[e, k]
            if n >= 0:
                assert e in adj[n]
    # interior edges: 2 per shared edge
    nxx = len(np.unique(m.nodes[:, 0])) - 1
    nyy = len(np.unique(m.nodes[:, 1])) - 1
    assert (adj >= 0).sum() == 2 * ((nxx - 1) * nyy + nxx * (nyy - 1))


@given(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=8),
       st.lists(st.floats(0.01, 1.0), min_size=1, max_size=8))
def test_tensor_mesh_volume(dx, dy):
    xs = np.concatenate([[0.0], np.cumsum(dx)])
    ys = np.concatenate([[0.0], np.cumsum(dy)])
    m = from_coordinates(xs, ys, 0.5)
    assert m.volumes.sum() == pytest.approx(xs[-1] * ys[-1] * 0.5, rel=1e-12)
