import logging
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy.spatial.transform import Rotation

from app.exceptions import HandDescriptionError, UnknownLinkError, UnknownPartError
from app.kinematics.primitives import Geometry


logger = logging.getLogger(__name__)

JOINT_KINDS = ("revolute", "prismatic", "fixed")


@dataclass(frozen=True)
class Joint:
    """Movable joint between two bodies, origin expressed in the parent body frame"""

    name: str
    parent: int
    child: int
    kind: str
    axis: np.ndarray
    origin: np.ndarray
    lower: float
    upper: float


@dataclass(frozen=True)
class Body:
    """
    Rigid body after fixed joints are folded in. `links` maps every original
    link merged into this body to its offset in the body frame.
    """

    name: str
    geometries: tuple[Geometry, ...]
    links: dict[str, np.ndarray] = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class HandModel:
    name: str
    bodies: tuple[Body, ...]
    joints: tuple[Joint, ...]
    part_names: dict[int, str]
    palm_axis: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))

    def __post_init__(self):
        for joint in self.joints:
            if joint.kind not in ("revolute", "prismatic"):
                raise HandDescriptionError(f"joint '{joint.name}' is not movable")
            if not (np.isfinite(joint.lower) and np.isfinite(joint.upper)):
                raise HandDescriptionError(f"joint '{joint.name}' needs finite limits")
            if joint.lower > joint.upper:
                raise HandDescriptionError(f"joint '{joint.name}' has lower > upper")
        for body in self.bodies:
            for geom in body.geometries:
                if geom.part not in self.part_names:
                    raise HandDescriptionError(
                        f"link '{geom.source_link}' carries geometry but has no part label"
                    )

    @property
    def n_dof(self) -> int:
        return len(self.joints)

    @property
    def n_parts(self) -> int:
        return len(self.part_names)

    @property
    def part_ids(self) -> list[int]:
        return sorted(self.part_names)

    @cached_property
    def lower(self) -> np.ndarray:
        return np.array([j.lower for j in self.joints], dtype=np.float64)

    @cached_property
    def upper(self) -> np.ndarray:
        return np.array([j.upper for j in self.joints], dtype=np.float64)

    @cached_property
    def topological_order(self) -> tuple[int, ...]:
        """Joint indices with every parent body resolved before its children"""
        resolved = {0}
        order: list[int] = []
        pending = list(range(len(self.joints)))
        while pending:
            progress = [i for i in pending if self.joints[i].parent in resolved]
            if not progress:
                raise HandDescriptionError("cycle detected in joint graph")
            for i in progress:
                order.append(i)
                resolved.add(self.joints[i].child)
            pending = [i for i in pending if i not in progress]
        return tuple(order)

    @cached_property
    def parent_joint(self) -> np.ndarray:
        """Index of the joint driving each body, -1 for the root"""
        parent = np.full(len(self.bodies), -1, dtype=np.int64)
        for i, joint in enumerate(self.joints):
            parent[joint.child] = i
        return parent

    @cached_property
    def link_index(self) -> dict[str, tuple[int, np.ndarray]]:
        """Original link name -> (body index, offset in body frame)"""
        return {
            name: (b, offset)
            for b, body in enumerate(self.bodies)
            for name, offset in body.links.items()
        }

    @property
    def link_names(self) -> list[str]:
        return list(self.link_index)

    def chain(self, body: int) -> list[int]:
        """Joint indices on the path root -> body"""
        joints = []
        while (j := self.parent_joint[body]) >= 0:
            joints.append(int(j))
            body = self.joints[j].parent
        return joints[::-1]

    def part_geometries(self, part: int) -> list[tuple[int, Geometry]]:
        if part not in self.part_names:
            raise UnknownPartError(f"unknown part {part}")
        return [
            (b, geom)
            for b, body in enumerate(self.bodies)
            for geom in body.geometries
            if geom.part == part
        ]

    def resolve_link(self, link: str) -> tuple[int, np.ndarray]:
        try:
            return self.link_index[link]
        except KeyError:
            raise UnknownLinkError(f"unknown link '{link}'") from None


@dataclass(frozen=True, eq=False)
class HandPose:
    """
    Wrist transform (translation + unit quaternion, scipy scalar-last order)
    and one joint value per movable joint in description order.
    """

    translation: np.ndarray
    quaternion: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        for name in ("translation", "quaternion", "q"):
            arr = np.array(getattr(self, name), dtype=np.float64).ravel()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @classmethod
    def identity(cls, n_dof: int) -> "HandPose":
        return cls(np.zeros(3), np.array([0.0, 0.0, 0.0, 1.0]), np.zeros(n_dof))

    @classmethod
    def from_rotation(cls, translation, rotation: Rotation, q) -> "HandPose":
        return cls(translation, rotation.as_quat(), q)

    @property
    def rotation(self) -> Rotation:
        return Rotation.from_quat(self.quaternion)

    @property
    def wrist_matrix(self) -> np.ndarray:
        mat = np.eye(4)
        mat[:3, :3] = self.rotation.as_matrix()
        mat[:3, 3] = self.translation
        return mat

    def replace(self, **changes) -> "HandPose":
        return replace(self, **changes)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.translation, self.quaternion, self.q])


def joint_motion(joint: Joint, value: float) -> np.ndarray:
    motion = np.eye(4)
    if joint.kind == "revolute":
        motion[:3, :3] = Rotation.from_rotvec(joint.axis * value).as_matrix()
    else:
        motion[:3, 3] = joint.axis * value
    return motion


def kinematic_frames(model: HandModel, pose: HandPose) -> tuple[np.ndarray, np.ndarray]:
    """
    World transforms of every body (B, 4, 4) and of every joint frame before
    its own motion is applied (J, 4, 4)
    """
    if len(pose.q) != model.n_dof:
        raise ValueError(f"expected {model.n_dof} joint values, got {len(pose.q)}")
    bodies = np.empty((len(model.bodies), 4, 4))
    frames = np.empty((model.n_dof, 4, 4))
    bodies[0] = pose.wrist_matrix
    for j in model.topological_order:
        joint = model.joints[j]
        frames[j] = bodies[joint.parent] @ joint.origin
        bodies[joint.child] = frames[j] @ joint_motion(joint, pose.q[j])
    return bodies, frames


def forward_kinematics(model: HandModel, pose: HandPose) -> dict[str, np.ndarray]:
    """World transform of every link, fixed-joint links included"""
    bodies, _ = kinematic_frames(model, pose)
    return {name: bodies[b] @ offset for name, (b, offset) in model.link_index.items()}


def point_jacobian(model: HandModel, pose: HandPose, link: str, body_point) -> np.ndarray:
    """
    3 x (6 + n_dof) Jacobian of a link-fixed point's world position.
    Columns: wrist translation, wrist rotation as body-frame angular velocity
    (R <- R exp(w)), then joint values.
    """
    body, offset = model.resolve_link(link)
    bodies, frames = kinematic_frames(model, pose)
    local = offset[:3, :3] @ np.asarray(body_point, dtype=np.float64) + offset[:3, 3]
    world = bodies[body][:3, :3] @ local + bodies[body][:3, 3]

    jac = np.zeros((3, 6 + model.n_dof))
    jac[:, :3] = np.eye(3)
    rot = bodies[0][:3, :3]
    x_root = rot.T @ (world - bodies[0][:3, 3])
    for i in range(3):
        jac[:, 3 + i] = rot @ np.cross(np.eye(3)[i], x_root)
    for j in model.chain(body):
        joint = model.joints[j]
        axis = frames[j][:3, :3] @ joint.axis
        if joint.kind == "revolute":
            jac[:, 6 + j] = np.cross(axis, world - frames[j][:3, 3])
        else:
            jac[:, 6 + j] = axis
    return jac


def pose_gradient(
    model: HandModel,
    pose: HandPose,
    frames: tuple[np.ndarray, np.ndarray],
    body_of: np.ndarray,
    world_points: np.ndarray,
    point_grads: np.ndarray,
) -> np.ndarray:
    """
    Chain rule through point Jacobians: sum_k J_k^T g_k for link-fixed points,
    aggregated per body and per subtree instead of forming each J_k.
    """
    bodies, joint_frames = frames
    grad = np.zeros(6 + model.n_dof)
    if not len(world_points):
        return grad

    force = np.zeros((len(model.bodies), 3))
    moment = np.zeros((len(model.bodies), 3))
    np.add.at(force, body_of, point_grads)
    np.add.at(moment, body_of, np.cross(world_points, point_grads))

    total_force = force.sum(axis=0)
    total_moment = moment.sum(axis=0)
    rot = bodies[0][:3, :3]
    grad[:3] = total_force
    grad[3:6] = rot.T @ (total_moment - np.cross(bodies[0][:3, 3], total_force))

    # subtree sums, children folded into parents in reverse topological order
    for j in reversed(model.topological_order):
        joint = model.joints[j]
        axis = joint_frames[j][:3, :3] @ joint.axis
        if joint.kind == "revolute":
            origin = joint_frames[j][:3, 3]
            grad[6 + j] = axis @ (moment[joint.child] - np.cross(origin, force[joint.child]))
        else:
            grad[6 + j] = axis @ force[joint.child]
        force[joint.parent] += force[joint.child]
        moment[joint.parent] += moment[joint.child]
    return grad


def part_sdf_with_body(
    model: HandModel, bodies: np.ndarray, part: int, points: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Part SDF at world points and the body owning the closest geometry"""
    points = np.atleast_2d(points)
    best = np.full(len(points), np.inf)
    owner = np.zeros(len(points), dtype=np.int64)
    for b, geom in model.part_geometries(part):
        inv = np.linalg.inv(bodies[b])
        local = points @ inv[:3, :3].T + inv[:3, 3]
        value = geom.sdf(local)
        closer = value < best
        best = np.where(closer, value, best)
        owner = np.where(closer, b, owner)
    return best, owner


def part_sdf(model: HandModel, pose: HandPose, part: int, p) -> float | np.ndarray:
    """
    Signed distance from robot part `part` (min over its geometries) to world
    point(s) p, negative inside
    """
    bodies, _ = kinematic_frames(model, pose)
    p = np.asarray(p, dtype=np.float64)
    values, _ = part_sdf_with_body(model, bodies, part, p)
    if not np.isfinite(values).all():
        raise UnknownPartError(f"part {part} has no geometry")
    return float(values[0]) if p.ndim == 1 else values


def retract(pose: HandPose, delta: np.ndarray) -> HandPose:
    """
    Apply a step in Jacobian coordinates: translation added, rotation composed
    on the right as a body-frame rotation vector, joint values added
    """
    delta = np.asarray(delta, dtype=np.float64)
    rotation = pose.rotation * Rotation.from_rotvec(delta[3:6])
    return HandPose(pose.translation + delta[:3], rotation.as_quat(), pose.q + delta[6:])


def clamp_to_limits(model: HandModel, pose: HandPose) -> HandPose:
    q = np.clip(pose.q, model.lower, model.upper)
    quat = pose.quaternion / np.linalg.norm(pose.quaternion)
    return HandPose(pose.translation, quat, q)


def mid_limits(model: HandModel) -> np.ndarray:
    return 0.5 * (model.lower + model.upper)


@dataclass(frozen=True, eq=False)
class LabeledHandCloud:
    """
    Hand surface samples. Body-frame base points are kept so the cloud can be
    re-posed without resampling.
    """

    base_points: np.ndarray
    body_of: np.ndarray
    link_of: np.ndarray
    part_of: np.ndarray
    points: np.ndarray

    def __len__(self) -> int:
        return len(self.points)

    def posed(self, model: HandModel, pose: HandPose) -> "LabeledHandCloud":
        bodies, _ = kinematic_frames(model, pose)
        return self.with_frames(bodies)

    def with_frames(self, bodies: np.ndarray) -> "LabeledHandCloud":
        rot = bodies[self.body_of, :3, :3]
        world = np.einsum("kij,kj->ki", rot, self.base_points) + bodies[self.body_of, :3, 3]
        return replace(self, points=world)


def hand_surface_points(
    model: HandModel, pose: HandPose, density: float, seed: int
) -> LabeledHandCloud:
    """
    Area-weighted samples over every link geometry at `density` points per m^2,
    split across geometries multinomially, then posed by forward kinematics
    """
    if density <= 0:
        raise ValueError(f"density must be positive, got {density}")

    geoms = [(b, g) for b, body in enumerate(model.bodies) for g in body.geometries]
    if not geoms:
        raise HandDescriptionError("hand has no geometry")
    areas = np.array([g.area for _, g in geoms])
    for (_, geom), area in zip(geoms, areas):
        if area <= 0.0:
            raise HandDescriptionError(f"link '{geom.source_link}' has zero-area geometry")

    rng = np.random.default_rng(seed)
    total = max(len(geoms), int(round(areas.sum() * density)))
    counts = rng.multinomial(total, areas / areas.sum())
    link_ids = {name: i for i, name in enumerate(model.link_names)}

    base, body_of, link_of, part_of = [], [], [], []
    for (b, geom), n in zip(geoms, counts):
        base.append(geom.sample(int(n), rng))
        body_of.append(np.full(n, b))
        link_of.append(np.full(n, link_ids[geom.source_link]))
        part_of.append(np.full(n, geom.part))

    base_points = np.concatenate(base)
    cloud = LabeledHandCloud(
        base_points=base_points,
        body_of=np.concatenate(body_of).astype(np.int64),
        link_of=np.concatenate(link_of).astype(np.int64),
        part_of=np.concatenate(part_of).astype(np.int64),
        points=base_points,
    )
    return cloud.posed(model, pose)
