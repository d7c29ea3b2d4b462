import numpy as np
import pytest
from conftest import ASSETS, FIXTURES

from app.exceptions import MeshFormatError
from app.geometry import (
    SdfQuery,
    TriangleMesh,
    box_mesh,
    capsule_contact_value,
    capsule_mesh,
    cylinder_mesh,
    icosphere,
    load_mesh,
    merge_meshes,
    sample_surface,
    save_obj,
    save_ply,
    signed_distance,
)
from app.geometry.sdf import closest_point_on_triangles


def test_load_obj_cube():
    mesh = load_mesh(FIXTURES / "cube.obj")
    assert mesh.vertices.shape == (8, 3)
    assert mesh.triangles.shape == (12, 3)
    assert mesh.is_closed


def test_load_obj_index_out_of_range():
    with pytest.raises(MeshFormatError, match="index out of range"):
        load_mesh(FIXTURES / "bad_index.obj")


def test_load_ply_tetrahedron():
    mesh = load_mesh(FIXTURES / "tetra.ply")
    assert len(mesh.vertices) == 4
    assert len(mesh.triangles) == 4
    assert mesh.is_closed


def test_unsupported_suffix(tmp_path):
    path = tmp_path / "mesh.stl"
    path.write_text("solid")
    with pytest.raises(MeshFormatError, match="unsupported"):
        load_mesh(path)


@pytest.mark.parametrize("writer, suffix", [(save_obj, ".obj"), (save_ply, ".ply")])
def test_writers_keep_counts(tmp_path, writer, suffix):
    mesh = load_mesh(FIXTURES / "cube.obj")
    path = tmp_path / f"copy{suffix}"
    writer(mesh, path)
    again = load_mesh(path)
    assert len(again.vertices) == len(mesh.vertices)
    assert len(again.triangles) == len(mesh.triangles)


def test_degenerate_faces_removed():
    vertices = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [2, 0, 0]]
    mesh = TriangleMesh(vertices, [[0, 1, 2], [0, 1, 3]])
    assert len(mesh.triangles) == 1
    assert mesh.removed_faces == 1


def test_sample_surface_per_face_counts():
    mesh = box_mesh((1.0, 1.0, 1.0))
    cloud = sample_surface(mesh, 6000, seed=7)
    # box faces are axis aligned: the dominant normal component names the face
    axis = np.abs(cloud.normals).argmax(axis=1)
    side = np.sign(cloud.normals[np.arange(len(cloud)), axis])
    counts = np.array(
        [np.sum((axis == a) & (side == s)) for a in range(3) for s in (-1.0, 1.0)]
    )
    sigma = np.sqrt(6000 * (1 / 6) * (5 / 6))
    assert counts.sum() == 6000
    assert np.all(np.abs(counts - 1000) <= 3 * sigma)


def test_sample_surface_deterministic():
    mesh = box_mesh((0.1, 0.2, 0.3))
    a = sample_surface(mesh, 500, seed=3)
    b = sample_surface(mesh, 500, seed=3)
    assert a.points.tobytes() == b.points.tobytes()
    assert a.normals.tobytes() == b.normals.tobytes()


def test_single_sample_lies_on_surface():
    mesh = box_mesh((0.1, 0.1, 0.1))
    cloud = sample_surface(mesh, 1, seed=0)
    assert len(cloud) == 1
    assert abs(signed_distance(SdfQuery(mesh), cloud.points[0])) < 1e-6


def test_sphere_signed_distance(unit_sphere_mesh):
    query = SdfQuery(unit_sphere_mesh)
    assert signed_distance(query, np.array([2.0, 0.0, 0.0])) == pytest.approx(1.0, abs=2e-2)
    assert signed_distance(query, np.zeros(3)) == pytest.approx(-1.0, abs=2e-2)


MESHES = ["cube.obj", "icosa.obj", "tetra.ply"]


def brute_force_distance(mesh, points: np.ndarray) -> np.ndarray:
    n = len(points)
    brute = np.full(n, np.inf)
    for a, b, c in mesh.corners:
        closest, _ = closest_point_on_triangles(
            np.tile(a, (n, 1)), np.tile(b, (n, 1)), np.tile(c, (n, 1)), points
        )
        brute = np.minimum(brute, np.linalg.norm(points - closest, axis=1))
    return brute


def query_points(mesh, n: int, seed: int) -> np.ndarray:
    lo, hi = mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)
    margin = 0.5 * (hi - lo).max()
    return np.random.default_rng(seed).uniform(lo - margin, hi + margin, size=(n, 3))


@pytest.mark.parametrize("name", MESHES)
def test_distance_matches_exhaustive_scan(name):
    mesh = load_mesh(ASSETS / "objects" / name)
    query = SdfQuery(mesh)
    points = query_points(mesh, 1000, seed=11)
    np.testing.assert_allclose(
        np.abs(query.signed_distance(points)), brute_force_distance(mesh, points), atol=1e-9
    )


@pytest.mark.parametrize("name", MESHES)
def test_signed_distance_is_1_lipschitz(name):
    mesh = load_mesh(ASSETS / "objects" / name)
    query = SdfQuery(mesh)
    rng = np.random.default_rng(5)
    p = query_points(mesh, 1000, seed=6)
    # half near pairs that straddle the surface often, half arbitrary pairs
    near = p[:500] + rng.normal(scale=0.002, size=(500, 3))
    q = np.concatenate([near, query_points(mesh, 500, seed=7)])
    gap = np.abs(query.signed_distance(p) - query.signed_distance(q))
    assert np.all(gap <= np.linalg.norm(p - q, axis=1) + 1e-9)


def test_box_sign_inside_outside():
    query = SdfQuery(box_mesh((0.1, 0.1, 0.1)))
    values = query.signed_distance(np.array([[0.0, 0.0, 0.0], [0.1, 0.0, 0.0]]))
    assert values[0] == pytest.approx(-0.05)
    assert values[1] == pytest.approx(0.05)


def test_sdf_gradient_points_outward():
    query = SdfQuery(box_mesh((0.1, 0.1, 0.1)))
    grad = query.gradient(np.array([[0.08, 0.0, 0.0]]))
    np.testing.assert_allclose(grad[0], [1.0, 0.0, 0.0], atol=1e-6)


@pytest.mark.parametrize(
    "distance, expected",
    [(0.0, 1.0), (0.05, 0.0), (0.0125, 0.5), (0.005, 1.0), (0.02, 0.0)],
)
def test_capsule_contact_value(distance, expected):
    assert capsule_contact_value(distance, d0=0.005, d1=0.02) == pytest.approx(expected)


def test_capsule_contact_value_rejects_bad_radii():
    with pytest.raises(ValueError):
        capsule_contact_value(0.01, d0=0.02, d1=0.01)


@pytest.mark.parametrize(
    "mesh, volume",
    [
        (box_mesh((0.1, 0.2, 0.3)), 0.1 * 0.2 * 0.3),
        (cylinder_mesh(0.01, 0.04, segments=64), np.pi * 0.01**2 * 0.04),
        (
            capsule_mesh(0.01, 0.04, segments=48, rings=12),
            np.pi * 0.01**2 * 0.04 + 4 / 3 * np.pi * 0.01**3,
        ),
        (icosphere(0.02, subdivisions=4), 4 / 3 * np.pi * 0.02**3),
    ],
    ids=["box", "cylinder", "capsule", "sphere"],
)
def test_primitives_face_outward(mesh, volume):
    # divergence theorem: positive signed volume means outward faces
    c = mesh.corners
    signed = np.einsum("ij,ij->i", c[:, 0], np.cross(c[:, 1], c[:, 2])).sum() / 6.0
    assert signed == pytest.approx(volume, rel=0.05)
    np.testing.assert_allclose(mesh.vertices.mean(axis=0), 0.0, atol=1e-3)


def test_merge_meshes_keeps_order():
    box = box_mesh((0.1, 0.1, 0.1))
    sphere = icosphere(0.01, subdivisions=1)
    merged = merge_meshes([box, sphere])
    assert len(merged.vertices) == len(box.vertices) + len(sphere.vertices)
    assert len(merged.triangles) == len(box.triangles) + len(sphere.triangles)
    np.testing.assert_allclose(merged.vertices[: len(box.vertices)], box.vertices)
    np.testing.assert_allclose(merged.normals[len(box.vertices) :], sphere.normals)
