import logging
from dataclasses import dataclass
from typing import Protocol

import numpy as np
from scipy.optimize import linprog

from app.geometry.cloud import PointCloud
from app.geometry.objects import ObjectModel
from app.kinematics.model import (
    HandModel,
    HandPose,
    LabeledHandCloud,
    clamp_to_limits,
    hand_surface_points,
)
from app.schema import EvaluationParams, StabilityReport


logger = logging.getLogger(__name__)

DIRECTIONS: dict[str, np.ndarray] = {
    "+x": np.array([1.0, 0.0, 0.0]),
    "-x": np.array([-1.0, 0.0, 0.0]),
    "+y": np.array([0.0, 1.0, 0.0]),
    "-y": np.array([0.0, -1.0, 0.0]),
    "+z": np.array([0.0, 0.0, 1.0]),
    "-z": np.array([0.0, 0.0, -1.0]),
}

DEFAULT_DENSITY = 40000.0
DEFAULT_MERGE_RADIUS = 0.002


class SignedDistanceField(Protocol):
    def signed_distance(self, points: np.ndarray) -> np.ndarray: ...

    def gradient(self, points: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True, eq=False)
class ContactPointSet:
    """
    Hand-object contacts: positions, inward object normals, owning robot part
    and penetration depth. Wrenches are taken about `center`.
    """

    positions: np.ndarray
    normals: np.ndarray
    parts: np.ndarray
    depths: np.ndarray
    center: np.ndarray

    def __len__(self) -> int:
        return len(self.positions)

    @classmethod
    def empty(cls, center) -> "ContactPointSet":
        return cls(
            np.zeros((0, 3)),
            np.zeros((0, 3)),
            np.zeros(0, dtype=np.int64),
            np.zeros(0),
            np.asarray(center, dtype=np.float64),
        )


def merge_duplicates(positions: np.ndarray, parts: np.ndarray, radius: float) -> np.ndarray:
    """
    Greedy clustering in index order: a point within radius of an already kept
    point of the same part is dropped. Returns the kept indices.
    """
    kept: list[int] = []
    for i in range(len(positions)):
        same = [k for k in kept if parts[k] == parts[i]]
        if same and np.linalg.norm(positions[same] - positions[i], axis=1).min() <= radius:
            continue
        kept.append(i)
    return np.asarray(kept, dtype=np.int64)


def contacts_from_cloud(
    hand: LabeledHandCloud,
    object_sdf: SignedDistanceField,
    center,
    tol: float,
    merge_radius: float = DEFAULT_MERGE_RADIUS,
    sdf: np.ndarray | None = None,
) -> ContactPointSet:
    if tol <= 0.0:
        raise ValueError(f"contact tolerance must be positive, got {tol}")
    sdf = object_sdf.signed_distance(hand.points) if sdf is None else sdf
    near = np.flatnonzero(np.abs(sdf) <= tol)
    if not len(near):
        return ContactPointSet.empty(center)

    outward = object_sdf.gradient(hand.points[near])
    norms = np.linalg.norm(outward, axis=1)
    ok = norms > 1e-9
    near, outward, norms = near[ok], outward[ok], norms[ok]

    kept = merge_duplicates(hand.points[near], hand.part_of[near], merge_radius)
    near = near[kept]
    return ContactPointSet(
        positions=hand.points[near],
        normals=-outward[kept] / norms[kept, None],
        parts=hand.part_of[near],
        depths=np.maximum(-sdf[near], 0.0),
        center=np.asarray(center, dtype=np.float64),
    )


def extract_contacts(
    model: HandModel,
    pose: HandPose,
    object_sdf: SignedDistanceField,
    object: PointCloud,
    tol: float,
    density: float = DEFAULT_DENSITY,
    seed: int = 0,
    merge_radius: float = DEFAULT_MERGE_RADIUS,
) -> ContactPointSet:
    """Hand sample points within tol of the object surface, with inward normals"""
    hand = hand_surface_points(model, pose, density, seed)
    return contacts_from_cloud(hand, object_sdf, object.centroid, tol, merge_radius)


def cone_edges(normal: np.ndarray, mu: float, m: int) -> np.ndarray:
    """m edges of the linearized friction cone, each with unit normal component"""
    helper = np.eye(3)[np.argmin(np.abs(normal))]
    t1 = np.cross(normal, helper)
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(normal, t1)
    angles = 2.0 * np.pi * np.arange(m) / m
    return normal + mu * (np.cos(angles)[:, None] * t1 + np.sin(angles)[:, None] * t2)


def grasp_matrix(contacts: ContactPointSet, mu: float, m: int) -> np.ndarray:
    """6 x (K*m) map from cone-edge multipliers to the net wrench about the center"""
    columns = []
    for position, normal in zip(contacts.positions, contacts.normals):
        edges = cone_edges(normal, mu, m)
        torques = np.cross(position - contacts.center, edges)
        columns.append(np.concatenate([edges, torques], axis=1).T)
    return np.concatenate(columns, axis=1)


def resists_wrench(
    contacts: ContactPointSet, mu: float, wrench, f_max: float, edges: int = 8
) -> bool:
    """
    Whether bounded contact forces inside the friction cones can balance the
    applied wrench, decided as a linear feasibility problem (HiGHS)
    """
    if mu <= 0.0 or f_max <= 0.0:
        raise ValueError("mu and f_max must be positive")
    if not len(contacts):
        return False

    wrench = np.asarray(wrench, dtype=np.float64)
    G = grasp_matrix(contacts, mu, edges)
    n_vars = G.shape[1]
    # normal component of each contact force is the sum of its multipliers
    A_ub = np.kron(np.eye(len(contacts)), np.ones(edges))
    result = linprog(
        c=np.zeros(n_vars),
        A_ub=A_ub,
        b_ub=np.full(len(contacts), f_max),
        A_eq=G,
        b_eq=-wrench,
        bounds=(0.0, None),
        method="highs",
    )
    if result.status not in (0, 2):
        logger.warning("force balance LP ended with status %d: %s", result.status, result.message)
    return result.status == 0


def penetration_depths(hand: LabeledHandCloud, object_sdf: SignedDistanceField) -> np.ndarray:
    return np.maximum(-object_sdf.signed_distance(hand.points), 0.0)


def max_penetration(
    model: HandModel,
    pose: HandPose,
    object_sdf: SignedDistanceField,
    density: float = DEFAULT_DENSITY,
    seed: int = 0,
) -> float:
    hand = hand_surface_points(model, pose, density, seed)
    return float(penetration_depths(hand, object_sdf).max(initial=0.0))


def preclose(model: HandModel, pose: HandPose, delta: float) -> HandPose:
    """Move every joint toward its upper limit by delta"""
    if delta <= 0.0:
        return pose
    return clamp_to_limits(model, pose.replace(q=pose.q + delta))


def success_test(
    model: HandModel, pose: HandPose, object: ObjectModel, params: EvaluationParams
) -> StabilityReport:
    """
    Penetration gate, then one force-balance check per axis direction with
    zero applied torque. Success requires all six.
    """
    pose = preclose(model, pose, params.preclose_delta)
    hand = hand_surface_points(model, pose, params.hand_density, params.seed)
    sdf = object.sdf.signed_distance(hand.points)
    deepest = float(np.maximum(-sdf, 0.0).max(initial=0.0))
    contacts = contacts_from_cloud(
        hand, object.sdf, object.cloud.centroid, params.tol, params.merge_radius, sdf=sdf
    )

    penetration_ok = deepest <= params.max_pen
    if penetration_ok:
        directions = {
            name: resists_wrench(
                contacts,
                params.mu,
                np.concatenate([params.force * axis, np.zeros(3)]),
                params.f_max,
                params.cone_edges,
            )
            for name, axis in DIRECTIONS.items()
        }
    else:
        directions = dict.fromkeys(DIRECTIONS, False)

    return StabilityReport(
        directions=directions,
        success=penetration_ok and all(directions.values()),
        penetration_ok=penetration_ok,
        max_penetration=deepest,
        n_contacts=len(contacts),
    )
