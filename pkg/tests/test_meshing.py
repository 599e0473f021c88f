"""Mesh construction and P1 discrete calculus."""

import math

import numpy as np
import pytest

from cavlab import meshing as mh


@pytest.fixture(scope="module")
def spec():
    return mh.DomainSpec()


@pytest.fixture(scope="module")
def mesh(spec):
    return mh.build_mesh(spec)


def test_no_bump_is_rectangle():
    spec = mh.DomainSpec(bump_height=0.0)
    mesh = mh.build_mesh(spec)
    assert np.sum(mesh.boundary_tags == mh.OBSTACLE) == 0
    assert mesh.areas.sum() == pytest.approx(
        2.0 * spec.half_length * spec.height, rel=1e-12)


def test_euler_characteristic(mesh):
    assert mesh.euler_characteristic() == 1


def test_min_angle(mesh):
    assert mesh.min_angle_degrees() >= 20.0


def test_bump_resolution(mesh):
    assert np.sum(mesh.boundary_tags == mh.OBSTACLE) >= 32


def test_boundary_length(mesh, spec):
    total = mesh.edge_lengths.sum()
    # straight edges are exact; the polyline under-resolves the arc at O(h^2)
    assert total == pytest.approx(spec.boundary_length(), rel=1e-3)


def test_area_excludes_bump(mesh, spec):
    R = spec.arc_radius
    half_angle = math.asin(spec.chord / (2 * R))
    seg = R * R * half_angle - 0.5 * spec.chord * (R - spec.bump_height)
    expected = 2 * spec.half_length * spec.height - seg
    assert mesh.areas.sum() == pytest.approx(expected, rel=1e-4)


def test_gradient_exact_for_affine(mesh):
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    g = mesh.gradient(x)
    assert np.allclose(g[:, 0], 1.0, atol=1e-12)
    assert np.allclose(g[:, 1], 0.0, atol=1e-12)
    g = mesh.gradient(2.0 * x - 3.0 * y + 1.0)
    assert np.allclose(g, [2.0, -3.0], atol=1e-12)


def test_weak_divergence_identity(mesh):
    # F = (x, y): int psi div F with psi = 1 equals 2 * area
    F = mesh.vertices.copy()
    ones = np.ones(mesh.n_vertices)
    val = mesh.weak_divergence(F, ones)
    assert val == pytest.approx(2.0 * mesh.areas.sum(), rel=1e-12)


def test_divergence_theorem(mesh):
    # constant field: boundary fluxes cancel, interior term vanishes
    F = np.tile([1.0, 0.0], (mesh.n_vertices, 1))
    ones = np.ones(mesh.n_vertices)
    assert mesh.weak_divergence(F, ones) == pytest.approx(0.0, abs=1e-12)
    # flux of (1,0) over FARFIELD equals the x-projection sum of its edges
    flux = mesh.boundary_flux(F, mh.FARFIELD, inward=False)
    mask = mesh.boundary_tags == mh.FARFIELD
    proj = -np.sum(mesh.edge_normals_in[mask][:, 0]
                   * mesh.edge_lengths[mask])
    assert flux == pytest.approx(proj, rel=1e-12)


def test_normals_point_inward(mesh):
    spec = mesh.spec
    mids = mesh.edge_midpoints
    n = mesh.edge_normals_in
    bottom = np.abs(mids[:, 1] - spec.bump_profile(mids[:, 0])) < 1e-3
    top = mids[:, 1] > spec.height - 1e-12
    left = mids[:, 0] < -spec.half_length + 1e-12
    right = mids[:, 0] > spec.half_length - 1e-12
    assert np.all(n[bottom, 1] > 0.5)
    assert np.all(n[top, 1] < -0.99)
    assert np.all(n[left, 0] > 0.99)
    assert np.all(n[right, 0] < -0.99)


def test_refinement_quadruples(spec):
    coarse = mh.build_mesh(spec)
    fine = mh.build_mesh(mh.DomainSpec(
        half_length=spec.half_length, height=spec.height, chord=spec.chord,
        bump_height=spec.bump_height, h_mesh=spec.h_mesh / 2))
    assert len(fine.triangles) >= 4 * len(coarse.triangles)
    # geometric defect (polyline vs arc area) decreases at order >= 1
    R = spec.arc_radius
    half_angle = math.asin(spec.chord / (2 * R))
    seg = R * R * half_angle - 0.5 * spec.chord * (R - spec.bump_height)
    exact = 2 * spec.half_length * spec.height - seg
    assert abs(fine.areas.sum() - exact) < 0.6 * abs(
        coarse.areas.sum() - exact)


def test_stiffness_matrix_properties(mesh):
    K = mesh.stiffness_matrix()
    ones = np.ones(mesh.n_vertices)
    assert np.abs(K @ ones).max() < 1e-12  # constants in the kernel
    x = mesh.vertices[:, 0]
    # K x equals the weak Laplacian of an affine field: boundary terms only
    interior = np.setdiff1d(np.arange(mesh.n_vertices),
                            np.unique(mesh.boundary_edges))
    assert np.abs((K @ x)[interior]).max() < 1e-12


def test_vtk_export(mesh, tmp_path):
    path = tmp_path / "mesh.vtk"
    mh.write_vtk(str(path), mesh, point_fields={"one": np.ones(
        mesh.n_vertices)})
    text = path.read_text()
    assert text.startswith("# vtk DataFile Version 3.0")
    for section in ("POINTS", "POLYGONS", "POINT_DATA", "CELL_DATA"):
        assert section in text


def test_spec_validation():
    with pytest.raises(ValueError):
        mh.DomainSpec(bump_height=0.6, height=1.0)
    with pytest.raises(ValueError):
        mh.DomainSpec(chord=5.0, half_length=2.0)
    with pytest.raises(ValueError):
        mh.DomainSpec(h_mesh=-1.0)
