import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import trimesh

from app.exceptions import MeshFormatError


logger = logging.getLogger(__name__)

DEGENERATE_AREA = 1e-12  # m^2


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """
    Immutable triangle mesh in meters.
    Degenerate faces are removed on construction and vertex normals
    derived (area weighted) unless supplied.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    normals: np.ndarray | None = None
    removed_faces: int = field(default=0, init=False)

    def __post_init__(self):
        vertices = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        triangles = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)

        if len(triangles) and (triangles.min() < 0 or triangles.max() >= len(vertices)):
            raise MeshFormatError(
                f"triangle index out of range for {len(vertices)} vertices"
            )

        areas = _triangle_areas(vertices, triangles)
        keep = areas > DEGENERATE_AREA
        removed = int((~keep).sum())
        if removed:
            logger.info("removed %d degenerate faces", removed)
            triangles = triangles[keep]

        normals = self.normals
        if normals is not None:
            normals = np.asarray(normals, dtype=np.float64).reshape(-1, 3)
            if len(normals) != len(vertices):
                normals = None
        if normals is None:
            normals = _vertex_normals(vertices, triangles)
            file_normals = False
        else:
            normals = _normalize_rows(normals)
            file_normals = True

        for name, arr in (("vertices", vertices), ("triangles", triangles), ("normals", normals)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "removed_faces", removed)
        object.__setattr__(self, "_file_normals", file_normals)

    @property
    def has_file_normals(self) -> bool:
        return self._file_normals  # type: ignore[attr-defined]

    @property
    def corners(self) -> np.ndarray:
        """(F, 3, 3) triangle corner positions"""
        return self.vertices[self.triangles]

    @cached_property
    def face_normals(self) -> np.ndarray:
        c = self.corners
        return _normalize_rows(np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]))

    @cached_property
    def areas(self) -> np.ndarray:
        return _triangle_areas(self.vertices, self.triangles)

    @property
    def area(self) -> float:
        return float(self.areas.sum())

    @cached_property
    def edge_face_counts(self) -> dict[tuple[int, int], int]:
        counts: dict[tuple[int, int], int] = {}
        for a, b in _sorted_edges(self.triangles):
            counts[(a, b)] = counts.get((a, b), 0) + 1
        return counts

    @cached_property
    def is_closed(self) -> bool:
        """Every edge is shared by exactly two faces"""
        if not len(self.triangles):
            return False
        return all(count == 2 for count in self.edge_face_counts.values())

    def transformed(self, transform: np.ndarray) -> "TriangleMesh":
        rot = transform[:3, :3]
        return TriangleMesh(
            vertices=self.vertices @ rot.T + transform[:3, 3],
            triangles=self.triangles,
            normals=self.normals @ rot.T,
        )


def _sorted_edges(triangles: np.ndarray) -> np.ndarray:
    edges = np.concatenate(
        [triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [0, 2]]]
    )
    edges.sort(axis=1)
    return edges


def _triangle_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    if not len(triangles):
        return np.zeros(0)
    c = vertices[triangles]
    return 0.5 * np.linalg.norm(np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]), axis=1)


def _normalize_rows(v: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    return np.divide(v, norms, out=np.zeros_like(v), where=norms > 0)


def _vertex_normals(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    normals = np.zeros_like(vertices)
    if len(triangles):
        c = vertices[triangles]
        # unnormalized cross product carries the area weight
        face = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
        for corner in range(3):
            np.add.at(normals, triangles[:, corner], face)
    return _normalize_rows(normals)


def from_trimesh(mesh: trimesh.Trimesh, normals: np.ndarray | None = None) -> TriangleMesh:
    return TriangleMesh(vertices=mesh.vertices, triangles=mesh.faces, normals=normals)


def to_trimesh(mesh: TriangleMesh) -> trimesh.Trimesh:
    return trimesh.Trimesh(vertices=mesh.vertices, faces=mesh.triangles, process=False)


def merge_meshes(meshes: list[TriangleMesh]) -> TriangleMesh:
    """One mesh with the inputs' vertices in order, normals carried over"""
    merged = trimesh.util.concatenate([to_trimesh(mesh) for mesh in meshes])
    return from_trimesh(merged, normals=np.concatenate([mesh.normals for mesh in meshes]))


def icosphere(radius: float, subdivisions: int = 3) -> TriangleMesh:
    sphere = trimesh.creation.icosphere(subdivisions=subdivisions, radius=radius)
    return from_trimesh(sphere, normals=sphere.vertices / radius)


def box_mesh(extents) -> TriangleMesh:
    """Axis-aligned box centered at the origin, extents are full side lengths"""
    return from_trimesh(trimesh.creation.box(extents=np.asarray(extents, dtype=np.float64)))


def cylinder_mesh(radius: float, length: float, segments: int = 24) -> TriangleMesh:
    """Cylinder along z centered at the origin"""
    return from_trimesh(trimesh.creation.cylinder(radius=radius, height=length, sections=segments))


def capsule_mesh(radius: float, length: float, segments: int = 16, rings: int = 6) -> TriangleMesh:
    """Capsule along z: a cylinder of the given length capped by hemispheres"""
    capsule = trimesh.creation.capsule(height=length, radius=radius, count=[2 * rings, segments])
    # older releases start the capsule at z = 0
    capsule.apply_translation(-capsule.bounds.mean(axis=0))
    return from_trimesh(capsule)
