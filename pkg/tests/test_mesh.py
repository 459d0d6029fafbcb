"""Velocity and spatial mesh construction: symmetry, duals, validation."""
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kinetic_ap_lab import (MeshError, build_spatial_mesh,
                            build_velocity_mesh, load_mesh_config,
                            spatial_mesh_from_edges,
                            velocity_mesh_from_interfaces)


# ------------------------------------------------------------- velocity

def test_velocity_interfaces_antisymmetric_bitwise():
    m = build_velocity_mesh(8.0, 20)
    assert np.array_equal(m.interfaces, -m.interfaces[::-1])
    assert m.interfaces[m.L] == 0.0
    assert m.interfaces[0] == -8.0 and m.interfaces[-1] == 8.0
    assert np.array_equal(m.centers, -m.centers[::-1])
    assert np.array_equal(m.widths, m.widths[::-1])


def test_velocity_counts_and_shapes():
    m = build_velocity_mesh(1.5, 3)
    assert m.L == 3
    assert m.n_cells == 6
    assert m.interfaces.shape == (7,)
    assert m.centers.shape == (6,)
    assert m.widths.shape == (6,)
    assert m.dual_widths.shape == (7,)


def test_velocity_centers_are_midpoints():
    m = build_velocity_mesh(2.0, 4)
    np.testing.assert_allclose(
        m.centers, 0.5 * (m.interfaces[:-1] + m.interfaces[1:]), rtol=0,
        atol=0)
    np.testing.assert_array_equal(m.widths, np.diff(m.interfaces))


def test_dual_widths_definition():
    m = build_velocity_mesh(3.0, 5)
    nodes = np.concatenate([[-3.0], m.centers, [3.0]])
    np.testing.assert_array_equal(m.dual_widths, np.diff(nodes))
    assert m.dual_widths.sum() == pytest.approx(6.0, rel=1e-14)
    # end dual cells are half-width on a uniform grid
    assert m.dual_widths[0] == pytest.approx(0.5 * m.widths[0], rel=1e-14)


def test_uniform_velocity_widths():
    m = build_velocity_mesh(8.0, 20)
    np.testing.assert_allclose(m.widths, 0.4, rtol=1e-14)


def test_nonuniform_interfaces_accepted():
    iface = np.array([-2.0, -1.2, -0.5, 0.0, 0.5, 1.2, 2.0])
    m = velocity_mesh_from_interfaces(iface)
    m.validate()
    assert m.L == 3
    np.testing.assert_array_equal(m.interfaces, iface)


def test_velocity_mesh_rejects_center_at_zero():
    from kinetic_ap_lab import VelocityMesh
    bad = VelocityMesh(v_star=1.0,
                       interfaces=np.array([-1.0, -0.5, 0.0, 0.5, 1.0]),
                       centers=np.array([-0.75, -0.25, 0.0, 0.75]),
                       widths=np.full(4, 0.5),
                       dual_widths=np.array([0.25, 0.5, 0.5, 0.5, 0.25]))
    with pytest.raises(MeshError, match="v = 0"):
        bad.validate()


def test_velocity_mesh_rejects_asymmetric():
    with pytest.raises(MeshError, match="antisymmetric"):
        velocity_mesh_from_interfaces(np.array([-1.0, -0.4, 0.0, 0.5, 1.0]))


def test_velocity_mesh_rejects_even_interface_count():
    with pytest.raises(MeshError):
        velocity_mesh_from_interfaces(np.array([-1.0, 0.0, 0.5, 1.0]))


def test_velocity_mesh_rejects_decreasing():
    # antisymmetric but not monotone
    with pytest.raises(MeshError, match="increasing"):
        velocity_mesh_from_interfaces(np.array([-1.0, 0.2, 0.0, -0.2, 1.0]))


def test_velocity_builder_rejects_bad_args():
    with pytest.raises(MeshError):
        build_velocity_mesh(0.0, 4)
    with pytest.raises(MeshError):
        build_velocity_mesh(-1.0, 4)
    with pytest.raises(MeshError):
        build_velocity_mesh(2.0, 0)


def test_loose_tolerance_remirrors_interfaces():
    iface = np.array([-1.0, -0.5 + 3e-13, 0.0, 0.5, 1.0])
    m = velocity_mesh_from_interfaces(iface, tol=1e-12)
    # output is re-mirrored from the positive half, so symmetry is exact
    assert np.array_equal(m.interfaces, -m.interfaces[::-1])
    m.validate(tol=0.0)


@settings(max_examples=40, deadline=None)
@given(v_star=st.floats(0.25, 16.0, allow_nan=False),
       L=st.integers(1, 48))
def test_velocity_builder_properties(v_star, L):
    m = build_velocity_mesh(v_star, L)
    m.validate(tol=0.0)
    assert m.n_cells == 2 * L
    assert np.array_equal(m.interfaces, -m.interfaces[::-1])
    assert m.interfaces[L] == 0.0
    assert np.all(np.diff(m.interfaces) > 0)
    assert not np.any(m.centers == 0.0)
    assert m.widths.sum() == pytest.approx(2 * v_star, rel=1e-12)
    assert m.dual_widths.sum() == pytest.approx(2 * v_star, rel=1e-12)


# -------------------------------------------------------------- spatial

def test_spatial_mesh_uniform():
    m = build_spatial_mesh(1.0, 51)
    assert m.n_cells == 51
    assert m.edges[0] == 0.0 and m.edges[-1] == 1.0
    np.testing.assert_allclose(m.widths, 1.0 / 51, rtol=1e-14)
    np.testing.assert_allclose(m.centers, (np.arange(51) + 0.5) / 51,
                               rtol=1e-13)


def test_spatial_mesh_rejects_even_cell_count():
    with pytest.raises(MeshError, match="odd"):
        build_spatial_mesh(1.0, 50)


def test_spatial_mesh_rejects_bad_length():
    with pytest.raises(MeshError):
        build_spatial_mesh(0.0, 5)
    with pytest.raises(MeshError):
        build_spatial_mesh(-2.0, 5)


def test_spatial_mesh_from_edges_nonuniform():
    edges = np.array([0.0, 0.2, 0.35, 0.6, 0.8, 1.0])
    m = spatial_mesh_from_edges(edges)
    assert m.n_cells == 5
    np.testing.assert_array_equal(m.widths, np.diff(edges))
    np.testing.assert_array_equal(m.centers, 0.5 * (edges[:-1] + edges[1:]))
    m.validate()


def test_spatial_mesh_from_edges_must_start_at_zero():
    with pytest.raises(MeshError, match="x = 0"):
        spatial_mesh_from_edges(np.array([0.1, 0.3, 0.5, 0.7, 0.9, 1.1]))


def test_spatial_mesh_from_edges_rejects_decreasing():
    with pytest.raises(MeshError):
        spatial_mesh_from_edges(np.array([0.0, 0.4, 0.3, 0.6, 0.8, 1.0]))


@settings(max_examples=40, deadline=None)
@given(R=st.floats(0.1, 12.0, allow_nan=False),
       half=st.integers(1, 40))
def test_spatial_builder_properties(R, half):
    N = 2 * half + 1
    m = build_spatial_mesh(R, N)
    m.validate()
    assert m.edges[0] == 0.0 and m.edges[-1] == R
    assert m.widths.sum() == pytest.approx(R, rel=1e-12)


# --------------------------------------------------------------- config

def test_load_mesh_config_uniform(tmp_path):
    path = tmp_path / "mesh.json"
    path.write_text(json.dumps({"v_star": 2.0, "L": 3, "R": 0.5, "N": 7}))
    vmesh, xmesh = load_mesh_config(path)
    ref_v = build_velocity_mesh(2.0, 3)
    ref_x = build_spatial_mesh(0.5, 7)
    np.testing.assert_array_equal(vmesh.interfaces, ref_v.interfaces)
    np.testing.assert_array_equal(xmesh.edges, ref_x.edges)


def test_load_mesh_config_explicit_lists():
    cfg = {"velocity_interfaces": [-1.0, -0.4, 0.0, 0.4, 1.0],
           "spatial_edges": [0.0, 0.3, 0.5, 0.75, 0.9, 1.0]}
    vmesh, xmesh = load_mesh_config(cfg)
    assert vmesh.n_cells == 4
    assert xmesh.n_cells == 5
    vmesh.validate()
    xmesh.validate()


def test_load_mesh_config_defaults_R():
    vmesh, xmesh = load_mesh_config({"v_star": 1.0, "L": 2, "N": 5})
    assert xmesh.length == 1.0
    assert vmesh.v_star == 1.0
