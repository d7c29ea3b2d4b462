import numpy as np
import pytest
from conftest import ASSETS, FIXTURES, PINCH_HAND, random_pose
from scipy.spatial.transform import Rotation

from app.exceptions import HandDescriptionError, UnknownLinkError
from app.kinematics import (
    HandPose,
    PartLabels,
    clamp_to_limits,
    forward_kinematics,
    hand_surface_points,
    kinematic_frames,
    load_hand,
    parse_hand_description,
    part_sdf,
    point_jacobian,
    pose_gradient,
    retract,
)


HINGE_Z = """
<robot name="hinge">
  <link name="base"><collision><geometry><sphere radius="0.01"/></geometry></collision></link>
  <link name="arm"><collision><geometry><sphere radius="0.01"/></geometry></collision></link>
  <joint name="turn" type="revolute">
    <parent link="base"/>
    <child link="arm"/>
    <axis xyz="0 0 1"/>
    <limit lower="-3.2" upper="3.2"/>
  </joint>
</robot>
"""

TWO_SPHERE_PART = """
<robot name="pair">
  <link name="a"><collision><geometry><sphere radius="0.01"/></geometry></collision></link>
  <link name="b"><collision><geometry><sphere radius="0.02"/></geometry></collision></link>
  <joint name="mount" type="fixed">
    <parent link="a"/>
    <child link="b"/>
    <origin xyz="0.05 0 0"/>
  </joint>
</robot>
"""


def test_parse_two_link():
    model = parse_hand_description((FIXTURES / "two_link.urdf").read_text())
    assert len(model.bodies) == 2
    assert model.n_dof == 1
    assert model.joints[0].lower == -0.5
    assert model.joints[0].upper == 1.2
    assert model.part_ids == [1, 2]


def test_self_parent_joint_is_a_cycle():
    text = HINGE_Z.replace('<child link="arm"/>', '<child link="base"/>')
    with pytest.raises(HandDescriptionError, match="cycle"):
        parse_hand_description(text)


@pytest.mark.parametrize(
    "name, message",
    [
        ("cyclic.urdf", "cycle"),
        ("missing_limit.urdf", "missing limit"),
        ("unknown_geometry.urdf", "unknown geometry"),
    ],
)
def test_malformed_descriptions(name, message):
    with pytest.raises(HandDescriptionError, match=message):
        parse_hand_description((FIXTURES / name).read_text())


@pytest.mark.parametrize("name, fingers", [("trifinger", 3), ("quadfinger", 4), ("pentafinger", 5)])
def test_fixture_hands_load(name, fingers):
    model = load_hand(ASSETS / "hands" / f"{name}.urdf")
    assert model.n_dof == 2 * fingers
    assert model.n_parts == fingers + 1
    # fixed tip spheres fold into the distal bodies
    assert len(model.bodies) == 1 + 2 * fingers
    assert set(model.link_names) >= {"palm", "thumb_tip"}


def test_unlabeled_geometric_link():
    labels = PartLabels.model_validate(
        {"robot": "pinch", "B'": 1, "parts": {1: "left"}, "links": {"left": 1}}
    )
    with pytest.raises(HandDescriptionError, match="unlabeled"):
        parse_hand_description(PINCH_HAND, labels)


def test_zero_configuration_composes_origins():
    model = parse_hand_description((FIXTURES / "two_link.urdf").read_text())
    links = forward_kinematics(model, HandPose.identity(model.n_dof))
    np.testing.assert_allclose(links["base"], np.eye(4))
    np.testing.assert_allclose(links["arm"][:3, 3], [0.0, 0.0, 0.02])


def test_quarter_turn():
    model = parse_hand_description(HINGE_Z)
    pose = HandPose.identity(1).replace(q=np.array([np.pi / 2]))
    arm = forward_kinematics(model, pose)["arm"]
    world = arm @ np.array([1.0, 0.0, 0.0, 1.0])
    np.testing.assert_allclose(world[:3], [0.0, 1.0, 0.0], atol=1e-12)


def test_wrist_translation_shifts_every_link(trifinger):
    rng = np.random.default_rng(0)
    pose = random_pose(trifinger, rng)
    shifted = pose.replace(translation=pose.translation + [0.0, 0.0, 0.1])
    before = forward_kinematics(trifinger, pose)
    after = forward_kinematics(trifinger, shifted)
    for name in before:
        shift = after[name][:3, 3] - before[name][:3, 3]
        np.testing.assert_allclose(shift, [0.0, 0.0, 0.1], atol=1e-12)


def test_wrong_joint_count(trifinger):
    with pytest.raises(ValueError, match="joint values"):
        kinematic_frames(trifinger, HandPose.identity(trifinger.n_dof + 1))


def test_unknown_link(trifinger):
    with pytest.raises(UnknownLinkError):
        point_jacobian(trifinger, HandPose.identity(trifinger.n_dof), "elbow", np.zeros(3))


def test_jacobian_zero_off_chain(trifinger):
    pose = HandPose.identity(trifinger.n_dof)
    jac = point_jacobian(trifinger, pose, "thumb_tip", np.zeros(3))
    names = [j.name for j in trifinger.joints]
    for i, name in enumerate(names):
        if not name.startswith("thumb"):
            np.testing.assert_array_equal(jac[:, 6 + i], 0.0)


def test_jacobian_matches_finite_differences(fixture_hand):
    rng = np.random.default_rng(5)
    body_point = np.array([0.002, -0.003, 0.004])

    def position(p: HandPose) -> np.ndarray:
        link = forward_kinematics(fixture_hand, p)["thumb_tip"]
        return link[:3, :3] @ body_point + link[:3, 3]

    h = 1e-6
    for _ in range(100):
        pose = random_pose(fixture_hand, rng)
        jac = point_jacobian(fixture_hand, pose, "thumb_tip", body_point)
        numeric = np.zeros_like(jac)
        for i in range(jac.shape[1]):
            step = np.zeros(jac.shape[1])
            step[i] = h
            forward, backward = retract(pose, step), retract(pose, -step)
            numeric[:, i] = (position(forward) - position(backward)) / (2 * h)
        np.testing.assert_allclose(jac, numeric, atol=1e-6)


def test_links_stay_rigid_under_reposing(fixture_hand):
    rng = np.random.default_rng(21)
    body_points = rng.normal(scale=0.01, size=(5, 3))
    homogeneous = np.hstack([body_points, np.ones((5, 1))])
    reference = np.linalg.norm(body_points[:, None] - body_points[None], axis=-1)
    for _ in range(20):
        links = forward_kinematics(fixture_hand, random_pose(fixture_hand, rng))
        for transform in links.values():
            world = (homogeneous @ transform.T)[:, :3]
            distances = np.linalg.norm(world[:, None] - world[None], axis=-1)
            np.testing.assert_allclose(distances, reference, atol=1e-12)


def test_pose_gradient_equals_jacobian_transpose(trifinger):
    rng = np.random.default_rng(9)
    pose = random_pose(trifinger, rng)
    frames = kinematic_frames(trifinger, pose)
    links = ["finger_a_tip", "thumb_distal", "palm"]
    body_points = rng.normal(scale=0.01, size=(3, 3))
    grads = rng.normal(size=(3, 3))

    expected = np.zeros(6 + trifinger.n_dof)
    world, body_of = [], []
    for link, point, g in zip(links, body_points, grads):
        expected += point_jacobian(trifinger, pose, link, point).T @ g
        body, offset = trifinger.resolve_link(link)
        local = offset[:3, :3] @ point + offset[:3, 3]
        world.append(frames[0][body][:3, :3] @ local + frames[0][body][:3, 3])
        body_of.append(body)

    result = pose_gradient(trifinger, pose, frames, np.array(body_of), np.array(world), grads)
    np.testing.assert_allclose(result, expected, atol=1e-12)


def test_part_sdf_sphere(sphere_hand):
    pose = HandPose.identity(0)
    assert part_sdf(sphere_hand, pose, 1, np.array([0.03, 0.0, 0.0])) == pytest.approx(0.02)
    assert part_sdf(sphere_hand, pose, 1, np.zeros(3)) == pytest.approx(-0.01)


def test_part_sdf_is_min_over_links():
    labels = PartLabels.model_validate(
        {"robot": "pair", "B'": 1, "parts": {1: "both"}, "links": {"a": 1, "b": 1}}
    )
    model = parse_hand_description(TWO_SPHERE_PART, labels)
    pose = HandPose.identity(0)
    points = np.random.default_rng(2).uniform(-0.1, 0.1, size=(50, 3))
    to_a = np.linalg.norm(points, axis=1) - 0.01
    to_b = np.linalg.norm(points - [0.05, 0.0, 0.0], axis=1) - 0.02
    np.testing.assert_allclose(part_sdf(model, pose, 1, points), np.minimum(to_a, to_b))


def test_clamp_within_limits_is_identity(trifinger):
    pose = HandPose.identity(trifinger.n_dof).replace(q=0.5 * (trifinger.lower + trifinger.upper))
    clamped = clamp_to_limits(trifinger, pose)
    np.testing.assert_array_equal(clamped.q, pose.q)
    np.testing.assert_array_equal(clamped.quaternion, pose.quaternion)


def test_clamp_above_upper(trifinger):
    q = trifinger.upper.copy()
    q[0] += 0.3
    clamped = clamp_to_limits(trifinger, HandPose.identity(trifinger.n_dof).replace(q=q))
    assert clamped.q[0] == trifinger.upper[0]


def test_clamp_normalizes_quaternion(trifinger):
    rotation = Rotation.from_rotvec([0.0, 0.3, 0.4])
    quat = rotation.as_quat() * 1.01
    pose = HandPose(np.zeros(3), quat, np.zeros(trifinger.n_dof))
    clamped = clamp_to_limits(trifinger, pose)
    assert np.linalg.norm(clamped.quaternion) == pytest.approx(1.0)
    np.testing.assert_allclose(clamped.rotation.as_rotvec(), rotation.as_rotvec(), atol=1e-12)


def test_hand_points_follow_area(pinch_hand):
    # two spheres with equal radius
    cloud = hand_surface_points(pinch_hand, HandPose.identity(2), density=1e6, seed=0)
    n = len(cloud)
    left, right = np.sum(cloud.part_of == 1), np.sum(cloud.part_of == 2)
    sigma = np.sqrt(n * 0.25)
    assert left + right == n
    assert abs(left - right) / 2 <= 3 * sigma


def test_hand_points_lie_on_geometry(pinch_hand):
    pose = HandPose.identity(2)
    cloud = hand_surface_points(pinch_hand, pose, density=2e5, seed=1)
    for part in (1, 2):
        points = cloud.points[cloud.part_of == part]
        np.testing.assert_allclose(part_sdf(pinch_hand, pose, part, points), 0.0, atol=1e-9)


def test_hand_points_deterministic(trifinger):
    pose = HandPose.identity(trifinger.n_dof)
    a = hand_surface_points(trifinger, pose, 40000, seed=4)
    b = hand_surface_points(trifinger, pose, 40000, seed=4)
    assert a.points.tobytes() == b.points.tobytes()
    np.testing.assert_array_equal(a.part_of, b.part_of)


def test_hand_points_need_geometry():
    bare = parse_hand_description('<robot name="bare"><link name="base"/></robot>')
    with pytest.raises(HandDescriptionError, match="no geometry"):
        hand_surface_points(bare, HandPose.identity(0), density=1e4, seed=0)
