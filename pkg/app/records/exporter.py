import logging
import re
from pathlib import Path

import numpy as np

from app.contact.maps import ContactMap
from app.geometry.cloud import PointCloud
from app.geometry.mesh import TriangleMesh, merge_meshes
from app.geometry.mesh_io import save_obj, save_ply
from app.kinematics.model import HandModel, HandPose, kinematic_frames


logger = logging.getLogger(__name__)


def hand_mesh(model: HandModel, pose: HandPose) -> TriangleMesh:
    """Every link geometry tessellated and posed, merged into one mesh"""
    bodies, _ = kinematic_frames(model, pose)
    meshes = [
        geom.tessellate().transformed(bodies[b])
        for b, body in enumerate(model.bodies)
        for geom in body.geometries
    ]
    return merge_meshes(meshes)


def heat_colors(values: np.ndarray) -> np.ndarray:
    """Linear blue (0) to red (1) ramp as uint8 rgb"""
    c = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    rgb = np.stack([255.0 * c, np.zeros_like(c), 255.0 * (1.0 - c)], axis=1)
    return np.rint(rgb).astype(np.uint8)


def safe_name(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", text)


def export_scene(
    model: HandModel, pose: HandPose, object_mesh: TriangleMesh, path: Path | str
) -> Path:
    """Posed hand and object in one OBJ, hand vertices first"""
    path = Path(path)
    save_obj(merge_meshes([hand_mesh(model, pose), object_mesh]), path)
    return path


def export_heatmap(
    object_mesh: TriangleMesh, cloud: PointCloud, contact: ContactMap, path: Path | str
) -> Path:
    """Object mesh coloured per vertex by the contact value of the nearest cloud point"""
    if len(contact) != len(cloud):
        raise ValueError(f"contact has {len(contact)} points, cloud has {len(cloud)}")
    _, nearest = cloud.tree.query(object_mesh.vertices, k=1)
    path = Path(path)
    save_ply(object_mesh, path, colors=heat_colors(contact.contact[nearest]))
    return path
