import hashlib
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree

from app.exceptions import MeshFormatError
from app.geometry.mesh import TriangleMesh


@dataclass(frozen=True, eq=False)
class PointCloud:
    """N points (meters) with outward unit normals"""

    points: np.ndarray
    normals: np.ndarray

    def __post_init__(self):
        points = np.ascontiguousarray(self.points, dtype=np.float64).reshape(-1, 3)
        normals = np.ascontiguousarray(self.normals, dtype=np.float64).reshape(-1, 3)
        if not len(points):
            raise ValueError("point cloud must not be empty")
        if normals.shape != points.shape:
            raise ValueError(f"normals shape {normals.shape} != points shape {points.shape}")
        if np.abs(np.linalg.norm(normals, axis=1) - 1.0).max() > 1e-6:
            raise ValueError("point cloud normals must have unit length")
        points.flags.writeable = False
        normals.flags.writeable = False
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "normals", normals)

    def __len__(self) -> int:
        return len(self.points)

    @cached_property
    def tree(self) -> cKDTree:
        return cKDTree(self.points)

    @cached_property
    def content_hash(self) -> str:
        return hashlib.sha256(self.points.tobytes()).hexdigest()

    @property
    def centroid(self) -> np.ndarray:
        return self.points.mean(axis=0)

    @property
    def bounding_radius(self) -> float:
        return float(np.linalg.norm(self.points - self.centroid, axis=1).max())

    def geodesic_distances(self, source: int, limit: float, k: int = 8) -> np.ndarray:
        """
        Approximate geodesic distances from one point over a k-nearest-neighbour
        graph; points farther than limit are inf
        """
        return dijkstra(self.knn_graph(k), directed=False, indices=source, limit=limit)

    def knn_graph(self, k: int = 8):
        cache = self.__dict__.setdefault("_knn_graphs", {})
        if k not in cache:
            kk = min(k + 1, len(self.points))
            dist, idx = self.tree.query(self.points, k=kk)
            dist = np.asarray(dist).reshape(len(self.points), kk)[:, 1:]
            idx = np.asarray(idx).reshape(len(self.points), kk)[:, 1:]
            rows = np.repeat(np.arange(len(self.points)), idx.shape[1])
            n = len(self.points)
            cache[k] = coo_matrix((dist.ravel(), (rows, idx.ravel())), shape=(n, n)).tocsr()
        return cache[k]


def sample_surface(mesh: TriangleMesh, n: int, seed: int) -> PointCloud:
    """
    Area-weighted uniform samples over the mesh surface.
    Normals are interpolated from file-supplied vertex normals, otherwise the
    face normal is used so flat faces keep their exact normal.
    """
    if n < 1:
        raise ValueError(f"sample count must be >= 1, got {n}")
    if not len(mesh.triangles):
        raise MeshFormatError("cannot sample an empty mesh")

    rng = np.random.default_rng(seed)
    weights = mesh.areas / mesh.areas.sum()
    faces = rng.choice(len(mesh.triangles), size=n, p=weights)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    bary = np.stack([1.0 - r1, r1 * (1.0 - r2), r1 * r2], axis=1)

    corners = mesh.corners[faces]
    points = np.einsum("ij,ijk->ik", bary, corners)

    if mesh.has_file_normals:
        normals = np.einsum("ij,ijk->ik", bary, mesh.normals[mesh.triangles[faces]])
        norms = np.linalg.norm(normals, axis=1, keepdims=True)
        flat = norms[:, 0] < 1e-9
        normals = np.divide(normals, norms, out=np.zeros_like(normals), where=norms > 1e-9)
        normals[flat] = mesh.face_normals[faces[flat]]
    else:
        normals = mesh.face_normals[faces]
    return PointCloud(points=points, normals=normals)


def nearest_to_ray(
    points: np.ndarray, origin: np.ndarray, directions: np.ndarray, chunk: int = 256
) -> np.ndarray:
    """
    For each unit direction, index of the point nearest to the ray from origin,
    restricted to points strictly in front of the origin along the ray.
    Returns -1 where no point lies in the forward half-space.
    """
    offsets = np.asarray(points, dtype=np.float64) - origin
    sq_norms = np.einsum("ij,ij->i", offsets, offsets)
    directions = np.atleast_2d(directions)
    result = np.full(len(directions), -1, dtype=np.int64)

    for start in range(0, len(directions), chunk):
        block = directions[start : start + chunk]
        along = offsets @ block.T  # (N, K)
        perp = np.maximum(sq_norms[:, None] - along**2, 0.0)
        perp[along <= 0.0] = np.inf
        best = np.argmin(perp, axis=0)
        found = np.isfinite(perp[best, np.arange(len(block))])
        result[start : start + chunk] = np.where(found, best, -1)
    return result
