from app.geometry.cloud import PointCloud, nearest_to_ray, sample_surface
from app.geometry.mesh import (
    TriangleMesh,
    box_mesh,
    capsule_mesh,
    cylinder_mesh,
    icosphere,
    merge_meshes,
)
from app.geometry.mesh_io import load_mesh, save_obj, save_ply
from app.geometry.objects import ObjectModel, file_hash, load_object
from app.geometry.sdf import SdfQuery, capsule_contact_value, signed_distance

__all__ = [
    "ObjectModel",
    "PointCloud",
    "SdfQuery",
    "TriangleMesh",
    "box_mesh",
    "capsule_contact_value",
    "capsule_mesh",
    "cylinder_mesh",
    "file_hash",
    "icosphere",
    "load_mesh",
    "load_object",
    "merge_meshes",
    "nearest_to_ray",
    "sample_surface",
    "save_obj",
    "save_ply",
    "signed_distance",
]
