from app.kinematics.model import (
    Body,
    HandModel,
    HandPose,
    Joint,
    LabeledHandCloud,
    clamp_to_limits,
    forward_kinematics,
    hand_surface_points,
    kinematic_frames,
    mid_limits,
    part_sdf,
    part_sdf_with_body,
    point_jacobian,
    pose_gradient,
    retract,
)
from app.kinematics.primitives import GEOMETRY_KINDS, Geometry
from app.kinematics.urdf import PartLabels, load_hand, load_part_labels, parse_hand_description

__all__ = [
    "GEOMETRY_KINDS",
    "Body",
    "Geometry",
    "HandModel",
    "HandPose",
    "Joint",
    "LabeledHandCloud",
    "PartLabels",
    "clamp_to_limits",
    "forward_kinematics",
    "hand_surface_points",
    "kinematic_frames",
    "load_hand",
    "load_part_labels",
    "mid_limits",
    "parse_hand_description",
    "part_sdf",
    "part_sdf_with_body",
    "point_jacobian",
    "pose_gradient",
    "retract",
]
