from dataclasses import dataclass
from functools import cached_property

import numpy as np

from app.geometry.cloud import sample_surface
from app.geometry.mesh import TriangleMesh, box_mesh, capsule_mesh, cylinder_mesh, icosphere
from app.geometry.sdf import SdfQuery


GEOMETRY_KINDS = ("sphere", "box", "cylinder", "capsule", "mesh")


@dataclass(frozen=True, eq=False)
class Geometry:
    """
    One collision shape of a link, expressed in its body frame.

    size: sphere (r,), box (sx, sy, sz) full extents, cylinder and capsule
    (r, length) along local z, mesh (sx, sy, sz) scale already applied.
    """

    kind: str
    size: tuple[float, ...]
    origin: np.ndarray
    source_link: str
    part: int = 0
    mesh: TriangleMesh | None = None

    def with_origin(self, origin: np.ndarray, part: int | None = None) -> "Geometry":
        return Geometry(
            kind=self.kind,
            size=self.size,
            origin=origin,
            source_link=self.source_link,
            part=self.part if part is None else part,
            mesh=self.mesh,
        )

    @cached_property
    def inverse_origin(self) -> np.ndarray:
        return np.linalg.inv(self.origin)

    @cached_property
    def _mesh_sdf(self) -> SdfQuery:
        return SdfQuery(self.mesh)

    @property
    def area(self) -> float:
        match self.kind:
            case "sphere":
                (r,) = self.size
                return 4.0 * np.pi * r**2
            case "box":
                x, y, z = self.size
                return 2.0 * (x * y + y * z + x * z)
            case "cylinder":
                r, length = self.size
                return 2.0 * np.pi * r * length + 2.0 * np.pi * r**2
            case "capsule":
                r, length = self.size
                return 2.0 * np.pi * r * length + 4.0 * np.pi * r**2
            case "mesh":
                return self.mesh.area
        raise ValueError(f"unknown geometry kind '{self.kind}'")

    def local_sdf(self, points: np.ndarray) -> np.ndarray:
        """Exact signed distance in the geometry's own frame"""
        p = np.atleast_2d(points)
        match self.kind:
            case "sphere":
                return np.linalg.norm(p, axis=1) - self.size[0]
            case "box":
                q = np.abs(p) - np.asarray(self.size) / 2.0
                outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
                return outside + np.minimum(q.max(axis=1), 0.0)
            case "cylinder":
                r, length = self.size
                d = np.stack(
                    [np.linalg.norm(p[:, :2], axis=1) - r, np.abs(p[:, 2]) - length / 2.0],
                    axis=1,
                )
                outside = np.linalg.norm(np.maximum(d, 0.0), axis=1)
                return outside + np.minimum(d.max(axis=1), 0.0)
            case "capsule":
                r, length = self.size
                axis_point = np.zeros_like(p)
                axis_point[:, 2] = np.clip(p[:, 2], -length / 2.0, length / 2.0)
                return np.linalg.norm(p - axis_point, axis=1) - r
            case "mesh":
                return self._mesh_sdf.signed_distance(p)
        raise ValueError(f"unknown geometry kind '{self.kind}'")

    def sdf(self, body_points: np.ndarray) -> np.ndarray:
        """Signed distance of points given in the owning body frame"""
        p = np.atleast_2d(body_points)
        inv = self.inverse_origin
        return self.local_sdf(p @ inv[:3, :3].T + inv[:3, 3])

    def sample_local(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """n uniform surface samples in the geometry's own frame"""
        if n == 0:
            return np.zeros((0, 3))
        match self.kind:
            case "sphere":
                return self.size[0] * _unit_vectors(n, rng)
            case "box":
                return _sample_box(np.asarray(self.size), n, rng)
            case "cylinder":
                return _sample_cylinder(*self.size, n, rng)
            case "capsule":
                r, length = self.size
                side = 2.0 * np.pi * r * length
                on_side = rng.random(n) < side / (side + 4.0 * np.pi * r**2)
                pts = np.empty((n, 3))
                k = int(on_side.sum())
                theta = rng.random(k) * 2.0 * np.pi
                pts[on_side] = np.stack(
                    [r * np.cos(theta), r * np.sin(theta), (rng.random(k) - 0.5) * length], axis=1
                )
                caps = r * _unit_vectors(n - k, rng)
                caps[:, 2] += np.where(caps[:, 2] >= 0.0, length / 2.0, -length / 2.0)
                pts[~on_side] = caps
                return pts
            case "mesh":
                return sample_surface(self.mesh, n, int(rng.integers(2**31))).points
        raise ValueError(f"unknown geometry kind '{self.kind}'")

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """n uniform surface samples in the owning body frame"""
        local = self.sample_local(n, rng)
        return local @ self.origin[:3, :3].T + self.origin[:3, 3]

    def tessellate(self) -> TriangleMesh:
        """Triangle mesh of the shape in the owning body frame"""
        match self.kind:
            case "sphere":
                local = icosphere(self.size[0], subdivisions=2)
            case "box":
                local = box_mesh(self.size)
            case "cylinder":
                local = cylinder_mesh(*self.size)
            case "capsule":
                local = capsule_mesh(*self.size)
            case "mesh":
                local = self.mesh
            case _:
                raise ValueError(f"unknown geometry kind '{self.kind}'")
        return local.transformed(self.origin)


def _unit_vectors(n: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _sample_box(extents: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    x, y, z = extents
    # face pairs normal to x, y, z
    face_areas = np.array([y * z, x * z, x * y])
    axis = rng.choice(3, size=n, p=face_areas / face_areas.sum())
    pts = (rng.random((n, 3)) - 0.5) * extents
    side = np.where(rng.random(n) < 0.5, -0.5, 0.5)
    pts[np.arange(n), axis] = side * extents[axis]
    return pts


def _sample_cylinder(r: float, length: float, n: int, rng: np.random.Generator) -> np.ndarray:
    side = 2.0 * np.pi * r * length
    cap = np.pi * r**2
    region = rng.choice(3, size=n, p=np.array([side, cap, cap]) / (side + 2.0 * cap))
    theta = rng.random(n) * 2.0 * np.pi
    radius = np.where(region == 0, r, r * np.sqrt(rng.random(n)))
    z = np.select(
        [region == 0, region == 1], [(rng.random(n) - 0.5) * length, length / 2.0], -length / 2.0
    )
    return np.stack([radius * np.cos(theta), radius * np.sin(theta), z], axis=1)
