import logging

import numpy as np
from scipy.spatial import cKDTree

from app.config import settings
from app.geometry.mesh import TriangleMesh, _normalize_rows


logger = logging.getLogger(__name__)

# closest-feature codes returned by closest_point_on_triangles
FACE, VERTEX_A, VERTEX_B, VERTEX_C, EDGE_AB, EDGE_AC, EDGE_BC = range(7)


def closest_point_on_triangles(
    a: np.ndarray, b: np.ndarray, c: np.ndarray, p: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """
    Vectorized closest point on triangle (a, b, c) to p, row by row.
    Returns the closest points and the feature code they lie on.
    Region tests follow Ericson, Real-Time Collision Detection, 5.1.5.
    """
    ab, ac, ap = b - a, c - a, p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    closest = np.empty_like(p)
    feature = np.full(len(p), FACE, dtype=np.int8)
    todo = np.ones(len(p), dtype=bool)

    def take(mask: np.ndarray, code: int, value) -> None:
        nonlocal todo
        mask = mask & todo
        if mask.any():
            closest[mask] = value(mask)
            feature[mask] = code
        todo = todo & ~mask

    take((d1 <= 0) & (d2 <= 0), VERTEX_A, lambda m: a[m])
    take((d3 >= 0) & (d4 <= d3), VERTEX_B, lambda m: b[m])
    take(
        (vc <= 0) & (d1 >= 0) & (d3 <= 0),
        EDGE_AB,
        lambda m: a[m] + (d1[m] / (d1[m] - d3[m]))[:, None] * ab[m],
    )
    take((d6 >= 0) & (d5 <= d6), VERTEX_C, lambda m: c[m])
    take(
        (vb <= 0) & (d2 >= 0) & (d6 <= 0),
        EDGE_AC,
        lambda m: a[m] + (d2[m] / (d2[m] - d6[m]))[:, None] * ac[m],
    )
    take(
        (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0),
        EDGE_BC,
        lambda m: b[m]
        + ((d4[m] - d3[m]) / ((d4[m] - d3[m]) + (d5[m] - d6[m])))[:, None] * (c[m] - b[m]),
    )
    if todo.any():
        m = todo
        denom = 1.0 / (va[m] + vb[m] + vc[m])
        closest[m] = a[m] + ab[m] * (vb[m] * denom)[:, None] + ac[m] * (vc[m] * denom)[:, None]
    return closest, feature


class SdfQuery:
    """
    Signed distance to a triangle mesh, negative inside.

    Candidate triangles come from a kd-tree over triangle centroids: a first
    pass over the nearest centroids bounds the distance, then every triangle
    whose centroid lies within that bound plus the largest triangle radius is
    scanned exactly. Signs use angle-weighted pseudonormals of the closest
    feature; open meshes are answered unsigned.
    Immutable after construction and safe to share between workers.
    """

    def __init__(self, mesh: TriangleMesh, k_seed: int = 4):
        if not len(mesh.triangles):
            raise ValueError("cannot build a distance query over an empty mesh")
        self.mesh = mesh
        self.corners = mesh.corners
        self.centroids = self.corners.mean(axis=1)
        self.max_radius = float(
            np.linalg.norm(self.corners - self.centroids[:, None, :], axis=2).max()
        )
        self.tree = cKDTree(self.centroids)
        self.k_seed = min(k_seed, len(mesh.triangles))
        self.signed = mesh.is_closed
        if not self.signed:
            logger.warning("mesh is not closed, distances are unsigned")
        self._build_pseudonormals()

    def _build_pseudonormals(self) -> None:
        mesh = self.mesh
        tris = mesh.triangles
        face_n = mesh.face_normals
        self.face_normals = face_n

        # vertex pseudonormals weighted by the incident angle
        c = self.corners
        vertex_n = np.zeros_like(mesh.vertices)
        for i in range(3):
            e1 = c[:, (i + 1) % 3] - c[:, i]
            e2 = c[:, (i + 2) % 3] - c[:, i]
            cos = np.einsum("ij,ij->i", _normalize_rows(e1), _normalize_rows(e2))
            angle = np.arccos(np.clip(cos, -1.0, 1.0))
            np.add.at(vertex_n, tris[:, i], angle[:, None] * face_n)
        self.vertex_normals = _normalize_rows(vertex_n)

        # edge pseudonormals: sum of the adjacent face normals
        edges = {EDGE_AB: (0, 1), EDGE_AC: (0, 2), EDGE_BC: (1, 2)}
        keys = {}
        edge_ids = np.empty((len(tris), 3), dtype=np.int64)
        for col, (i, j) in enumerate(edges.values()):
            for f, (u, v) in enumerate(zip(tris[:, i], tris[:, j])):
                key = (min(u, v), max(u, v))
                edge_ids[f, col] = keys.setdefault(key, len(keys))
        edge_n = np.zeros((len(keys), 3))
        for col in range(3):
            np.add.at(edge_n, edge_ids[:, col], face_n)
        self.edge_normals = _normalize_rows(edge_n)
        self._edge_ids = edge_ids

    def _pseudonormals(self, tri: np.ndarray, feature: np.ndarray) -> np.ndarray:
        normals = self.face_normals[tri].copy()
        tris = self.mesh.triangles
        for code, corner in ((VERTEX_A, 0), (VERTEX_B, 1), (VERTEX_C, 2)):
            m = feature == code
            normals[m] = self.vertex_normals[tris[tri[m], corner]]
        for code, col in ((EDGE_AB, 0), (EDGE_AC, 1), (EDGE_BC, 2)):
            m = feature == code
            normals[m] = self.edge_normals[self._edge_ids[tri[m], col]]
        return normals

    def _exact(self, points: np.ndarray, tri: np.ndarray):
        c = self.corners[tri]
        closest, feature = closest_point_on_triangles(c[:, 0], c[:, 1], c[:, 2], points)
        return closest, feature, np.linalg.norm(points - closest, axis=1)

    def closest(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Closest surface points, their triangles, features and distances"""
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        m = len(points)
        _, seed = self.tree.query(points, k=self.k_seed)
        seed = np.asarray(seed).reshape(m, self.k_seed)
        _, _, seed_dist = self._exact(np.repeat(points, self.k_seed, axis=0), seed.ravel())
        bound = seed_dist.reshape(m, self.k_seed).min(axis=1)

        candidates = self.tree.query_ball_point(points, bound + self.max_radius + 1e-12)
        counts = np.fromiter((len(c) for c in candidates), dtype=np.int64, count=m)
        owner = np.repeat(np.arange(m), counts)
        tri = np.fromiter((t for c in candidates for t in c), dtype=np.int64, count=counts.sum())

        closest, feature, dist = self._exact(points[owner], tri)
        order = np.lexsort((tri, dist, owner))
        _, first = np.unique(owner[order], return_index=True)
        pick = order[first]
        return closest[pick], tri[pick], feature[pick], dist[pick]

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        closest, tri, feature, dist = self.closest(points)
        if not self.signed:
            return dist
        normals = self._pseudonormals(tri, feature)
        side = np.einsum("ij,ij->i", points - closest, normals)
        return np.where(side < 0.0, -dist, dist)

    def gradient(self, points: np.ndarray, h: float | None = None) -> np.ndarray:
        """Spatial SDF gradient by central differences"""
        h = settings.SDF_FD_STEP if h is None else h
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        offsets = np.concatenate([np.eye(3) * h, -np.eye(3) * h])
        probes = (points[:, None, :] + offsets[None, :, :]).reshape(-1, 3)
        values = self.signed_distance(probes).reshape(len(points), 6)
        return (values[:, :3] - values[:, 3:]) / (2.0 * h)


def signed_distance(query: SdfQuery, p: np.ndarray) -> float | np.ndarray:
    """Signed distance of one point (scalar) or many points (array)"""
    p = np.asarray(p, dtype=np.float64)
    values = query.signed_distance(p)
    return float(values[0]) if p.ndim == 1 else values


def capsule_contact_value(distance, d0: float = 0.005, d1: float = 0.02):
    """
    Contact value of an object point whose nearest hand point is `distance` away.
    1 inside the contact radius d0, linear ramp to 0 at d1.
    The capsule is degenerated to a sphere of radius d0.
    """
    if not 0.0 <= d0 < d1:
        raise ValueError(f"contact radii must satisfy 0 <= d0 < d1, got {d0}, {d1}")
    d = np.maximum(np.asarray(distance, dtype=np.float64), 0.0)
    value = np.clip((d1 - d) / (d1 - d0), 0.0, 1.0)
    return float(value) if value.ndim == 0 else value
