import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import polars as pl
from scipy.spatial.transform import Rotation

from app.alignment import HumanRobotMapping, agnostic_contact, align_contact
from app.contact.maps import HumanContact, RobotContact
from app.exceptions import NoValidGraspError, PartArityError
from app.geometry.cloud import PointCloud
from app.geometry.objects import ObjectModel
from app.kinematics.model import HandModel, HandPose, clamp_to_limits, mid_limits, retract
from app.optimize.energy import EnergyBreakdown, GraspProblem, energy_and_gradient
from app.schema import EnergyWeights, OptimizerConfig


logger = logging.getLogger(__name__)

# stop once the scaled step can no longer move anything
MIN_STEP = 1e-12


@dataclass(frozen=True, eq=False)
class GraspCandidate:
    pose: HandPose
    initial_pose: HandPose
    energy: float
    terms: EnergyBreakdown
    trajectory: np.ndarray
    step_factors: np.ndarray
    init_id: int
    valid: bool = True

    @property
    def iterations(self) -> int:
        return len(self.trajectory) - 1


def shortest_arc(source: np.ndarray, target: np.ndarray) -> Rotation:
    """Smallest rotation taking unit vector source onto unit vector target"""
    source = source / np.linalg.norm(source)
    target = target / np.linalg.norm(target)
    axis = np.cross(source, target)
    sin, cos = np.linalg.norm(axis), float(source @ target)
    if sin > 1e-12:
        return Rotation.from_rotvec(axis / sin * np.arctan2(sin, cos))
    if cos > 0.0:
        return Rotation.identity()
    # antiparallel: half turn about any axis orthogonal to source
    helper = np.eye(3)[np.argmin(np.abs(source))]
    ortho = np.cross(source, helper)
    return Rotation.from_rotvec(ortho / np.linalg.norm(ortho) * np.pi)


def sample_initial_wrist_poses(
    object: PointCloud, model: HandModel, cfg: OptimizerConfig, seed: int | None = None
) -> list[HandPose]:
    """
    Wrist positions uniform on a sphere around the object centroid, palm axis
    aimed at the centroid, uniform roll about that axis, joints at mid-limits
    """
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    radius = cfg.init_radius or cfg.init_radius_factor * object.bounding_radius
    centroid = object.centroid

    directions = rng.normal(size=(cfg.n_init_poses, 3))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    rolls = rng.uniform(0.0, 2.0 * np.pi, size=cfg.n_init_poses)
    q = mid_limits(model)

    poses = []
    for direction, roll in zip(directions, rolls):
        facing = -direction
        rotation = Rotation.from_rotvec(facing * roll) * shortest_arc(model.palm_axis, facing)
        poses.append(HandPose.from_rotation(centroid + radius * direction, rotation, q))
    return poses


def optimize_grasp(
    problem: GraspProblem, init: HandPose, cfg: OptimizerConfig, init_id: int = 0
) -> GraspCandidate:
    """
    Signed-gradient descent with per-block step sizes. A step that would raise
    the energy is rejected and the step factor halves, so the recorded energy
    never increases. Joint values are clamped to their limits after every step.
    """
    model = problem.model
    steps = np.concatenate(
        [
            np.full(3, cfg.step_translation),
            np.full(3, cfg.step_rotation),
            np.full(model.n_dof, cfg.step_joint),
        ]
    )

    pose = clamp_to_limits(model, init)
    energy, grad = energy_and_gradient(problem, pose)
    trajectory, factors = [energy.total], [1.0]
    factor, valid = 1.0, bool(np.isfinite(energy.total))

    for _ in range(cfg.iterations if valid else 0):
        direction = np.sign(grad)
        if not direction.any() or factor * steps.max() < MIN_STEP:
            break
        trial = clamp_to_limits(model, retract(pose, -factor * steps * direction))
        trial_energy, trial_grad = energy_and_gradient(problem, trial)
        if not np.isfinite(trial_energy.total):
            logger.warning("init %d: non-finite energy, candidate dropped", init_id)
            valid = False
            break
        if trial_energy.total <= energy.total:
            pose, energy, grad = trial, trial_energy, trial_grad
        else:
            factor *= cfg.step_decay
        trajectory.append(energy.total)
        factors.append(factor)

    return GraspCandidate(
        pose=pose,
        initial_pose=init,
        energy=energy.total,
        terms=energy,
        trajectory=np.asarray(trajectory),
        step_factors=np.asarray(factors),
        init_id=init_id,
        valid=valid,
    )


def select_top_k(candidates: list[GraspCandidate], k: int) -> list[GraspCandidate]:
    """Lowest-energy valid candidates, init id breaking ties"""
    valid = [c for c in candidates if c.valid]
    return sorted(valid, key=lambda c: (c.energy, c.init_id))[:k]


def prepare_robot_contact(
    contact: HumanContact,
    object: PointCloud,
    model: HandModel,
    mapping: HumanRobotMapping,
    weights: EnergyWeights,
) -> RobotContact:
    if weights.contact_mode == "agnostic":
        return agnostic_contact(contact, model.n_parts)
    if mapping.n_parts != model.n_parts:
        raise PartArityError(
            f"part arity mismatch: mapping '{mapping.robot_name}' has {mapping.n_parts} groups, "
            f"hand '{model.name}' has {model.n_parts} parts"
        )
    return align_contact(contact, object, mapping)


def problem_seeds(seed: int) -> tuple[int, int]:
    """Independent seeds for the hand cloud and the initial poses"""
    hand_seed, init_seed = np.random.SeedSequence(seed).generate_state(2)
    return int(hand_seed), int(init_seed)


def synthesize(
    object: ObjectModel,
    contact: HumanContact,
    model: HandModel,
    mapping: HumanRobotMapping,
    weights: EnergyWeights,
    cfg: OptimizerConfig,
    seed: int | None = None,
) -> list[GraspCandidate]:
    """Align the contact, optimize from every initial pose, keep the top_k lowest energies"""
    seed = cfg.seed if seed is None else seed
    hand_seed, init_seed = problem_seeds(seed)
    robot_contact = prepare_robot_contact(contact, object.cloud, model, mapping, weights)
    problem = GraspProblem.build(
        object, robot_contact, model, weights, cfg.hand_density, hand_seed
    )

    inits = sample_initial_wrist_poses(object.cloud, model, cfg, init_seed)
    candidates = [optimize_grasp(problem, init, cfg, i) for i, init in enumerate(inits)]
    top = select_top_k(candidates, cfg.top_k)
    if not top:
        raise NoValidGraspError(f"no valid grasp among {len(candidates)} candidates")
    logger.info(
        "%s: kept %d of %d grasps, best energy %.6g",
        object.name,
        len(top),
        len(candidates),
        top[0].energy,
    )
    return top


def export_trajectory(candidate: GraspCandidate, path: Path | str) -> None:
    """Energy and step factor per iteration as CSV"""
    pl.DataFrame(
        {
            "iteration": np.arange(len(candidate.trajectory)),
            "energy": candidate.trajectory,
            "step_factor": candidate.step_factors,
        }
    ).write_csv(path)
