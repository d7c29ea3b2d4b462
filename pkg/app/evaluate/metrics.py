from collections.abc import Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from app.kinematics.model import HandPose


def _poses(grasps: Sequence) -> list[HandPose]:
    return [g if isinstance(g, HandPose) else g.pose for g in grasps]


def mean_rotation(quaternions: np.ndarray) -> Rotation:
    """
    Normalized component-wise mean after aligning every quaternion to the
    hemisphere of the dominant eigenvector of sum(q q^T)
    """
    _, vectors = np.linalg.eigh(quaternions.T @ quaternions)
    reference = vectors[:, -1]
    signs = np.where(quaternions @ reference < 0.0, -1.0, 1.0)
    mean = (quaternions * signs[:, None]).mean(axis=0)
    return Rotation.from_quat(mean / np.linalg.norm(mean))


def configuration_vectors(grasps: Sequence) -> np.ndarray:
    """Per grasp: wrist rotation vector about the mean rotation, then joint values"""
    poses = _poses(grasps)
    quats = np.stack([p.quaternion / np.linalg.norm(p.quaternion) for p in poses])
    mean = mean_rotation(quats)
    rotvecs = (mean.inv() * Rotation.from_quat(quats)).as_rotvec()
    return np.concatenate([rotvecs, np.stack([p.q for p in poses])], axis=1)


def diversity(grasps: Sequence) -> float:
    """Mean over configuration dimensions of the population standard deviation (rad)"""
    if len(grasps) < 2:
        raise ValueError(f"diversity needs at least two grasps, got {len(grasps)}")
    return float(configuration_vectors(grasps).std(axis=0).mean())


def translation_diversity(grasps: Sequence) -> float:
    """Mean per-axis population standard deviation of wrist translations (m)"""
    if len(grasps) < 2:
        raise ValueError(f"diversity needs at least two grasps, got {len(grasps)}")
    translations = np.stack([p.translation for p in _poses(grasps)])
    return float(translations.std(axis=0).mean())
