import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from app.config import settings
from app.contact.maps import RobotContact
from app.exceptions import PartArityError
from app.geometry.cloud import PointCloud
from app.geometry.objects import ObjectModel
from app.geometry.sdf import SdfQuery
from app.kinematics.model import (
    HandModel,
    HandPose,
    LabeledHandCloud,
    hand_surface_points,
    kinematic_frames,
    part_sdf_with_body,
    pose_gradient,
)
from app.schema import EnergyTerms, EnergyWeights


logger = logging.getLogger(__name__)

TERMS = ("contact", "spf", "erf", "srf")

# below this a distance counts as zero and its subgradient is taken as 0
KINK_EPS = 1e-12


@dataclass(frozen=True)
class EnergyBreakdown:
    """Unweighted term values and their weighted total"""

    contact: float
    spf: float
    erf: float
    srf: float
    total: float

    @classmethod
    def combine(cls, terms: dict[str, float], weights: EnergyWeights) -> "EnergyBreakdown":
        total = sum(getattr(weights, f"w_{name}") * terms[name] for name in TERMS)
        return cls(total=float(total), **{name: float(terms[name]) for name in TERMS})

    def as_terms(self) -> EnergyTerms:
        return EnergyTerms(contact=self.contact, spf=self.spf, erf=self.erf, srf=self.srf)


@dataclass(frozen=True)
class PointForces:
    """Per-point gradients attached to bodies, ready for pose_gradient"""

    points: np.ndarray
    bodies: np.ndarray
    grads: np.ndarray

    @classmethod
    def empty(cls) -> "PointForces":
        return cls(np.zeros((0, 3)), np.zeros(0, dtype=np.int64), np.zeros((0, 3)))

    @classmethod
    def concat(cls, parts: list["PointForces"]) -> "PointForces":
        if not parts:
            return cls.empty()
        return cls(
            np.concatenate([p.points for p in parts]),
            np.concatenate([p.bodies for p in parts]),
            np.concatenate([p.grads for p in parts]),
        )


@dataclass(frozen=True, eq=False)
class GraspProblem:
    """
    Everything the energy needs besides the pose: object, robot contact, hand
    model, weights and a body-frame hand cloud that is re-posed per evaluation
    """

    object: ObjectModel
    contact: RobotContact
    model: HandModel
    weights: EnergyWeights
    hand: LabeledHandCloud

    def __post_init__(self):
        if self.contact.arity != self.model.n_parts:
            raise PartArityError(
                f"part arity mismatch: contact has {self.contact.arity} parts, "
                f"hand '{self.model.name}' has {self.model.n_parts}"
            )
        if len(self.contact) != len(self.object.cloud):
            raise ValueError("contact map and object cloud differ in length")

    @classmethod
    def build(
        cls,
        object: ObjectModel,
        contact: RobotContact,
        model: HandModel,
        weights: EnergyWeights,
        density: float,
        seed: int,
    ) -> "GraspProblem":
        hand = hand_surface_points(model, HandPose.identity(model.n_dof), density, seed)
        return cls(object=object, contact=contact, model=model, weights=weights, hand=hand)

    @cached_property
    def active(self) -> np.ndarray:
        """Indices of object points with positive contact"""
        return np.flatnonzero(self.contact.contact > 0.0)


def part_sdf_gradient(
    model: HandModel, bodies: np.ndarray, part: int, points: np.ndarray, h: float | None = None
) -> np.ndarray:
    """World-frame spatial gradient of a part SDF by central differences"""
    h = settings.SDF_FD_STEP if h is None else h
    offsets = np.concatenate([np.eye(3) * h, -np.eye(3) * h])
    probes = (points[:, None, :] + offsets[None, :, :]).reshape(-1, 3)
    values, _ = part_sdf_with_body(model, bodies, part, probes)
    values = values.reshape(len(points), 6)
    return (values[:, :3] - values[:, 3:]) / (2.0 * h)


def _contact_term(
    model: HandModel,
    bodies: np.ndarray,
    points: np.ndarray,
    values: np.ndarray,
    parts: np.ndarray,
    mode: str,
    with_grad: bool,
) -> tuple[float, PointForces]:
    if not len(points):
        return 0.0, PointForces.empty()

    # object point k is pulled by the part it is labeled with, or in agnostic
    # mode by whichever part is closest
    if mode == "agnostic":
        per_part = np.stack(
            [part_sdf_with_body(model, bodies, b, points)[0] for b in model.part_ids]
        )
        parts = np.asarray(model.part_ids)[np.abs(per_part).argmin(axis=0)]

    total = 0.0
    forces: list[PointForces] = []
    for part in np.unique(parts):
        mask = parts == part
        sdf, owner = part_sdf_with_body(model, bodies, int(part), points[mask])
        total += float((values[mask] * np.abs(sdf)).sum())
        if with_grad:
            grad = part_sdf_gradient(model, bodies, int(part), points[mask])
            scale = -(values[mask] * np.sign(sdf))
            forces.append(PointForces(points[mask], owner, scale[:, None] * grad))
    return total, PointForces.concat(forces)


def contact_loss(
    object: PointCloud,
    rc: RobotContact,
    model: HandModel,
    pose: HandPose,
    mode: str = "aligned",
) -> float:
    """Contact-weighted distance between each contact point and its robot part surface"""
    if rc.arity != model.n_parts:
        raise PartArityError(f"part arity mismatch: {rc.arity} vs {model.n_parts}")
    bodies, _ = kinematic_frames(model, pose)
    active = np.flatnonzero(rc.contact > 0.0)
    value, _ = _contact_term(
        model,
        bodies,
        object.points[active],
        rc.contact[active].astype(np.float64),
        rc.parts[active],
        mode,
        with_grad=False,
    )
    return value


def spf_loss(hand: LabeledHandCloud, object_sdf: SdfQuery, weights: EnergyWeights) -> float:
    """Square-root distance pull on hand points already near the surface"""
    distance = np.abs(object_sdf.signed_distance(hand.points))
    near = distance <= weights.spf_threshold
    return float(np.sqrt(distance[near]).sum() / (near.sum() + weights.eta))


def erf_loss(hand: LabeledHandCloud, object_sdf: SdfQuery, n_parts: int) -> float:
    """Mean over robot parts of the deepest penetration into the object"""
    depth = np.maximum(-object_sdf.signed_distance(hand.points), 0.0)
    return _erf_from_depth(hand, depth, n_parts)[0]


def _erf_from_depth(
    hand: LabeledHandCloud, depth: np.ndarray, n_parts: int
) -> tuple[float, np.ndarray]:
    total, deepest = 0.0, []
    for part in np.unique(hand.part_of):
        idx = np.flatnonzero(hand.part_of == part)
        k = idx[np.argmax(depth[idx])]
        if depth[k] > 0.0:
            total += depth[k]
            deepest.append(k)
    return float(total / n_parts), np.asarray(deepest, dtype=np.int64)


def srf_loss(hand: LabeledHandCloud, weights: EnergyWeights, n_parts: int) -> float:
    """Hinge on the distance between points of different robot parts"""
    _, _, dist = _cross_part_pairs(hand, weights.d_th)
    return float(np.maximum(weights.d_th - dist, 0.0).sum() / n_parts)


def _cross_part_pairs(
    hand: LabeledHandCloud, d_th: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    pairs = cKDTree(hand.points).query_pairs(d_th, output_type="ndarray")
    if not len(pairs):
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, np.zeros(0)
    i, j = pairs[:, 0], pairs[:, 1]
    keep = hand.part_of[i] != hand.part_of[j]
    i, j = i[keep], j[keep]
    return i, j, np.linalg.norm(hand.points[i] - hand.points[j], axis=1)


def evaluate_terms(
    problem: GraspProblem, pose: HandPose, with_grad: bool = False
) -> tuple[dict[str, float], dict[str, np.ndarray] | None]:
    """
    Unweighted term values and, optionally, their gradients with respect to
    the pose coordinates of point_jacobian
    """
    model, weights = problem.model, problem.weights
    frames = kinematic_frames(model, pose)
    bodies = frames[0]
    hand = problem.hand.with_frames(bodies)
    sdf_query = problem.object.sdf
    n_parts = model.n_parts

    active = problem.active
    contact_value, contact_forces = _contact_term(
        model,
        bodies,
        problem.object.cloud.points[active],
        problem.contact.contact[active].astype(np.float64),
        problem.contact.parts[active],
        weights.contact_mode,
        with_grad,
    )

    sdf = sdf_query.signed_distance(hand.points)
    distance = np.abs(sdf)
    near = distance <= weights.spf_threshold
    spf_norm = near.sum() + weights.eta
    spf_value = float(np.sqrt(distance[near]).sum() / spf_norm)

    depth = np.maximum(-sdf, 0.0)
    erf_value, deepest = _erf_from_depth(hand, depth, n_parts)

    i, j, dist = _cross_part_pairs(hand, weights.d_th)
    hinge = weights.d_th - dist
    srf_value = float(np.maximum(hinge, 0.0).sum() / n_parts)

    values = {"contact": contact_value, "spf": spf_value, "erf": erf_value, "srf": srf_value}
    if not with_grad:
        return values, None

    pulled = np.flatnonzero(near & (distance > KINK_EPS))
    need = np.union1d(pulled, deepest)
    spatial = np.zeros((len(hand), 3))
    if len(need):
        spatial[need] = sdf_query.gradient(hand.points[need])

    spf_grad = np.zeros((len(hand), 3))
    spf_grad[pulled] = (
        (np.sign(sdf[pulled]) / (2.0 * np.sqrt(distance[pulled]) * spf_norm))[:, None]
        * spatial[pulled]
    )

    erf_grad = np.zeros((len(hand), 3))
    erf_grad[deepest] = -spatial[deepest] / n_parts

    srf_grad = np.zeros((len(hand), 3))
    live = (hinge > 0.0) & (dist > KINK_EPS)
    if live.any():
        i, j = i[live], j[live]
        unit = (hand.points[i] - hand.points[j]) / dist[live][:, None]
        np.add.at(srf_grad, i, -unit / n_parts)
        np.add.at(srf_grad, j, unit / n_parts)

    def on_hand(grads: np.ndarray) -> np.ndarray:
        return pose_gradient(model, pose, frames, hand.body_of, hand.points, grads)

    gradients = {
        "contact": pose_gradient(
            model, pose, frames, contact_forces.bodies, contact_forces.points, contact_forces.grads
        ),
        "spf": on_hand(spf_grad),
        "erf": on_hand(erf_grad),
        "srf": on_hand(srf_grad),
    }
    return values, gradients


def total_energy(problem: GraspProblem, pose: HandPose) -> EnergyBreakdown:
    values, _ = evaluate_terms(problem, pose)
    return EnergyBreakdown.combine(values, problem.weights)


def energy_gradient(problem: GraspProblem, pose: HandPose) -> np.ndarray:
    _, gradients = evaluate_terms(problem, pose, with_grad=True)
    return _weighted_gradient(gradients, problem.weights)


def energy_and_gradient(
    problem: GraspProblem, pose: HandPose
) -> tuple[EnergyBreakdown, np.ndarray]:
    values, gradients = evaluate_terms(problem, pose, with_grad=True)
    breakdown = EnergyBreakdown.combine(values, problem.weights)
    return breakdown, _weighted_gradient(gradients, problem.weights)


def _weighted_gradient(gradients: dict[str, np.ndarray], weights: EnergyWeights) -> np.ndarray:
    return sum(getattr(weights, f"w_{name}") * gradients[name] for name in TERMS)
