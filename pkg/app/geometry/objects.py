import hashlib
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

from app.geometry.cloud import PointCloud, sample_surface
from app.geometry.mesh import TriangleMesh
from app.geometry.mesh_io import load_mesh
from app.geometry.sdf import SdfQuery


@dataclass(frozen=True, eq=False)
class ObjectModel:
    """An object's mesh, its sampled surface cloud and the mesh SDF"""

    name: str
    mesh: TriangleMesh
    cloud: PointCloud

    @cached_property
    def sdf(self) -> SdfQuery:
        return SdfQuery(self.mesh)

    @cached_property
    def mesh_hash(self) -> str:
        digest = hashlib.sha256(self.mesh.vertices.tobytes())
        digest.update(self.mesh.triangles.tobytes())
        return digest.hexdigest()

    @classmethod
    def from_mesh(cls, name: str, mesh: TriangleMesh, n_points: int, seed: int) -> "ObjectModel":
        return cls(name=name, mesh=mesh, cloud=sample_surface(mesh, n_points, seed))


def file_hash(path: Path | str) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def load_object(path: Path | str, n_points: int, seed: int) -> ObjectModel:
    path = Path(path)
    return ObjectModel.from_mesh(path.stem, load_mesh(path), n_points, seed)
