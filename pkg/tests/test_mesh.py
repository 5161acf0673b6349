import numpy as np
import pytest
from hypothesis import given, strategies as st

from fracheat.mesh import BOUNDARY, FAR_EXTERIOR, INTERIOR, Field, build_mesh, nodal_interpolate


def test_collar_mesh_counts():
    m = build_mesh((-1, 1), 4, 1.0, 2)
    # 2 + 4 + 2 elements on [-2, 2]
    assert len(m.elements) == 8
    assert m.n_nodes == 9
    assert m.box == (-2.0, 2.0)
    assert m.h == 0.5
    assert m.h_exterior == 0.5


def test_dirichlet_only_mesh():
    m = build_mesh((-1, 1), 2, 1.0, 0)
    assert len(m.elements) == 2 and m.n_nodes == 3
    assert not m.has_collar
    assert m.dofs.exterior_dofs.size == 0
    assert list(m.dofs.interior_dofs) == [1]


def test_unequal_sizes():
    m = build_mesh((0, 1), 8, 2.0, 4)
    assert m.h == 0.125 and m.h_exterior == 0.5
    assert np.all(np.diff(m.nodes) > 0)
    assert np.allclose(m.element_sizes[m.element_in_omega], 0.125)
    assert np.allclose(m.element_sizes[~m.element_in_omega], 0.5)


def test_tags_and_dofs():
    m = build_mesh((-1, 1), 4, 1.0, 2)
    tags = np.array(m.tags)
    assert list(tags[[0, 1, 8]]) == [FAR_EXTERIOR] * 3
    assert tags[2] == BOUNDARY and tags[6] == BOUNDARY
    assert list(np.flatnonzero(tags == INTERIOR)) == [3, 4, 5]
    assert list(m.dofs.exterior_dofs) == [0, 1, 2, 6, 7, 8]
    assert list(m.omega_nodes) == [2, 3, 4, 5, 6]
    assert list(m.collar_nodes) == [0, 1, 2, 6, 7, 8]
    assert list(m.dofs.unknowns("robin")) == list(range(9))


@pytest.mark.parametrize("args", [((1, -1), 4, 1, 2), ((-1, 1), 1, 1, 2), ((-1, 1), 4, 0.0, 2),
                                  ((-1, 1), 4, 1, -1), ((-1, 1), 4.5, 1, 2)])
def test_invalid_meshes(args):
    with pytest.raises(ValueError):
        build_mesh(*args)


@given(st.integers(2, 40), st.integers(0, 20), st.floats(0.1, 5.0),
       st.floats(-3, 3), st.floats(0.1, 4))
def test_mesh_invariants(n, m, R, a, length):
    mesh = build_mesh((a, a + length), n, R, m)
    assert np.all(np.diff(mesh.nodes) > 0)
    assert mesh.n_nodes == n + 2 * m + 1
    assert mesh.dofs.interior_dofs.size == n - 1
    assert int(mesh.element_in_omega.sum()) == n
    fine = build_mesh((a, a + length), 2 * n, R, 2 * m)
    # refinement nesting
    assert np.allclose(fine.nodes[::2], mesh.nodes, rtol=0, atol=1e-12 * (1 + abs(a) + R))


def test_interpolate_constant():
    m = build_mesh((-1, 1), 4, 1.0, 2)
    d = nodal_interpolate(lambda x: 1.0, m, "dirichlet")
    assert list(d.values) == [0, 0, 0, 1, 1, 1, 0, 0, 0]
    r = nodal_interpolate(lambda x: 1.0, m, "robin")
    assert np.all(r.values == 1)


def test_interpolate_identity():
    m = build_mesh((-1, 1), 4, 1.0, 2)
    assert np.array_equal(nodal_interpolate(lambda x: x, m, "robin").values, m.nodes)


def test_interpolate_scalar_only_callable():
    m = build_mesh((-1, 1), 4)
    f = lambda x: float(x) ** 2
    assert np.allclose(nodal_interpolate(f, m, "robin").values, m.nodes ** 2)


def test_interpolate_reports_failing_node():
    m = build_mesh((-1, 1), 4)

    def f(x):
        if float(x) == 0.5:
            raise ZeroDivisionError("boom")
        return float(x)
    with pytest.raises(ValueError, match="0.5"):
        nodal_interpolate(f, m, "robin")


def test_field_validation():
    m = build_mesh((-1, 1), 4, 1.0, 2)
    with pytest.raises(ValueError):
        Field(np.ones(3), "robin", m)
    with pytest.raises(ValueError):
        Field(np.full(m.n_nodes, np.nan), "robin", m)
    with pytest.raises(ValueError):
        Field(np.ones(m.n_nodes), "dirichlet", m)
