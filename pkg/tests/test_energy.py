from dataclasses import replace
from types import SimpleNamespace

import numpy as np
import pytest
from conftest import AnalyticSphere, random_pose

from app.contact import RobotContact
from app.exceptions import PartArityError
from app.geometry import PointCloud
from app.kinematics import HandPose, retract
from app.optimize import (
    GraspProblem,
    contact_loss,
    energy_and_gradient,
    energy_gradient,
    erf_loss,
    evaluate_terms,
    spf_loss,
    srf_loss,
    total_energy,
)
from app.schema import EnergyWeights


ZERO = EnergyWeights(w_contact=0.0, w_spf=0.0, w_erf=0.0, w_srf=0.0)


def point_cloud(points) -> PointCloud:
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    return PointCloud(points, np.tile([1.0, 0.0, 0.0], (len(points), 1)))


def hand_of(points, parts=None) -> SimpleNamespace:
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    parts = np.ones(len(points), dtype=np.int64) if parts is None else np.asarray(parts)
    return SimpleNamespace(points=points, part_of=parts)


def single_contact(value: float, part: int = 1, arity: int = 1) -> RobotContact:
    return RobotContact(contact=[value], parts=[part], arity=arity)


def test_contact_loss_zero_contact(sphere_hand):
    rc = RobotContact(contact=[0.0, 0.0], parts=[0, 0], arity=1)
    cloud = point_cloud([[0.05, 0, 0], [0, 0.05, 0]])
    assert contact_loss(cloud, rc, sphere_hand, HandPose.identity(0)) == 0.0


def test_contact_loss_on_surface(sphere_hand):
    cloud = point_cloud([[0.01, 0.0, 0.0]])
    loss = contact_loss(cloud, single_contact(1.0), sphere_hand, HandPose.identity(0))
    assert loss == pytest.approx(0.0, abs=1e-15)


def test_contact_loss_sphere_distance(sphere_hand):
    cloud = point_cloud([[0.03, 0.0, 0.0]])
    loss = contact_loss(cloud, single_contact(1.0), sphere_hand, HandPose.identity(0))
    assert loss == pytest.approx(0.02)


def test_contact_loss_arity_mismatch(sphere_hand):
    with pytest.raises(PartArityError, match="part arity mismatch"):
        contact_loss(
            point_cloud([[0, 0, 0]]), single_contact(1.0, 2, 2), sphere_hand, HandPose.identity(0)
        )


def test_contact_loss_agnostic_uses_closest_part(pinch_hand):
    # point next to the right fingertip but labeled with the left one
    cloud = point_cloud([[0.05, 0.0, 0.0]])
    rc = single_contact(1.0, part=1, arity=2)
    pose = HandPose.identity(2)
    aligned = contact_loss(cloud, rc, pinch_hand, pose, mode="aligned")
    agnostic = contact_loss(cloud, rc, pinch_hand, pose, mode="agnostic")
    assert aligned == pytest.approx(0.08)
    assert agnostic == pytest.approx(0.0, abs=1e-15)


def test_spf_no_point_in_range():
    weights = EnergyWeights(spf_threshold=0.02)
    hand = hand_of([[0.5, 0, 0], [0, 0.5, 0]])
    assert spf_loss(hand, AnalyticSphere(0.1), weights) == 0.0


def test_spf_direct_formula():
    weights = EnergyWeights(spf_threshold=0.1, eta=1e-4)
    hand = hand_of([[0.14, 0, 0], [0, 0.19, 0], [0, 0, 0.5]])
    assert spf_loss(hand, AnalyticSphere(0.1), weights) == pytest.approx(0.5 / 2.0001, rel=1e-12)


def test_spf_points_on_surface():
    hand = hand_of([[0.1, 0, 0], [0, -0.1, 0]])
    assert spf_loss(hand, AnalyticSphere(0.1), EnergyWeights()) == pytest.approx(0.0, abs=1e-12)


def test_erf_no_penetration():
    hand = hand_of([[0.2, 0, 0], [0, 0.3, 0]])
    assert erf_loss(hand, AnalyticSphere(0.1), 1) == 0.0


def test_erf_deepest_point_per_part():
    hand = hand_of([[0.12, 0, 0], [0.07, 0, 0]])
    assert erf_loss(hand, AnalyticSphere(0.1), 1) == pytest.approx(0.03)


def test_erf_mean_over_parts():
    hand = hand_of([[0.12, 0, 0], [0.07, 0, 0], [0, 0.15, 0]], parts=[1, 1, 2])
    assert erf_loss(hand, AnalyticSphere(0.1), 2) == pytest.approx(0.015)


def test_srf_inactive_beyond_threshold():
    hand = hand_of([[0, 0, 0], [0.02, 0, 0]], parts=[1, 2])
    assert srf_loss(hand, EnergyWeights(d_th=0.01), 2) == 0.0


def test_srf_single_pair():
    hand = hand_of([[0, 0, 0], [0.005, 0, 0]], parts=[1, 2])
    assert srf_loss(hand, EnergyWeights(d_th=0.01), 2) == pytest.approx(0.0025)


def test_srf_hinge_boundary():
    hand = hand_of([[0, 0, 0], [0.01, 0, 0]], parts=[1, 2])
    assert srf_loss(hand, EnergyWeights(d_th=0.01), 2) == 0.0


def test_srf_ignores_same_part_pairs():
    hand = hand_of([[0, 0, 0], [0.001, 0, 0]], parts=[2, 2])
    assert srf_loss(hand, EnergyWeights(d_th=0.01), 2) == 0.0


@pytest.fixture(scope="module")
def cube_problem(cube_object, pinch_hand):
    cloud = cube_object.cloud
    parts = np.where(cloud.points[:, 0] > 0.02, 2, np.where(cloud.points[:, 0] < -0.02, 1, 0))
    contact = RobotContact(contact=(parts > 0) * 0.8, parts=parts, arity=2)
    return GraspProblem.build(cube_object, contact, pinch_hand, EnergyWeights(), 2e5, seed=0)


def closed_pinch() -> HandPose:
    return HandPose(np.array([0.0, 0.0, 0.001]), np.array([0, 0, 0, 1.0]), np.array([0.01, 0.012]))


def test_zero_weights_give_zero(cube_problem):
    problem = replace(cube_problem, weights=ZERO)
    pose = closed_pinch()
    assert total_energy(problem, pose).total == 0.0
    np.testing.assert_array_equal(energy_gradient(problem, pose), 0.0)


@pytest.mark.parametrize("term", ["contact", "spf", "erf", "srf"])
def test_single_weight_equals_term(cube_problem, term):
    weights = ZERO.model_copy(update={f"w_{term}": 1.0})
    problem = replace(cube_problem, weights=weights)
    pose = closed_pinch()
    breakdown = total_energy(problem, pose)
    assert breakdown.total == pytest.approx(getattr(breakdown, term))


def test_terms_match_standalone_losses(cube_problem):
    pose = closed_pinch()
    values, _ = evaluate_terms(cube_problem, pose)
    hand = cube_problem.hand.posed(cube_problem.model, pose)
    sdf = cube_problem.object.sdf
    weights = cube_problem.weights
    model = cube_problem.model
    assert values["contact"] == pytest.approx(
        contact_loss(cube_problem.object.cloud, cube_problem.contact, model, pose)
    )
    assert values["spf"] == pytest.approx(spf_loss(hand, sdf, weights))
    assert values["erf"] == pytest.approx(erf_loss(hand, sdf, model.n_parts))
    assert values["srf"] == pytest.approx(srf_loss(hand, weights, model.n_parts))


def test_problem_rejects_arity_mismatch(cube_object, pinch_hand):
    contact = RobotContact(
        contact=np.zeros(len(cube_object.cloud)), parts=np.zeros(len(cube_object.cloud)), arity=4
    )
    with pytest.raises(PartArityError):
        GraspProblem.build(cube_object, contact, pinch_hand, EnergyWeights(), 1e5, seed=0)


def test_contact_gradient_on_translation(sphere_hand):
    far = AnalyticSphere(0.001, [1, 1, 1])
    object = SimpleNamespace(cloud=point_cloud([[0.03, 0.0, 0.0]]), sdf=far)
    weights = ZERO.model_copy(update={"w_contact": 1.0})
    problem = GraspProblem.build(object, single_contact(0.5), sphere_hand, weights, 1e5, seed=0)
    grad = energy_gradient(problem, HandPose.identity(0))
    np.testing.assert_allclose(grad[:3], [-0.5, 0.0, 0.0], atol=1e-8)
    np.testing.assert_allclose(grad[3:], 0.0, atol=1e-8)


def smooth_problem(model, ball_object) -> GraspProblem:
    """Analytic object SDF and every hand point inside the pull range keep the energy smooth"""
    cloud = ball_object.cloud
    parts = np.where(cloud.points[:, 0] > 0.015, 2, np.where(cloud.points[:, 0] < -0.015, 1, 0))
    contact = RobotContact(
        contact=np.where(parts > 0, 0.25 + 0.5 * np.abs(cloud.points[:, 1]) / 0.03, 0.0),
        parts=parts,
        arity=2,
    )
    object = SimpleNamespace(cloud=cloud, sdf=AnalyticSphere(0.03))
    weights = EnergyWeights(spf_threshold=1.0, d_th=0.005)
    return GraspProblem.build(object, contact, model, weights, 1e5, seed=3)


def test_gradient_matches_finite_differences(pinch_hand, ball_object):
    problem = smooth_problem(pinch_hand, ball_object)
    rng = np.random.default_rng(12)
    h = 1e-6
    for _ in range(20):
        pose = random_pose(pinch_hand, rng, spread=0.02)
        breakdown, grad = energy_and_gradient(problem, pose)
        numeric = np.zeros_like(grad)
        for i in range(len(grad)):
            step = np.zeros(len(grad))
            step[i] = h
            up = total_energy(problem, retract(pose, step)).total
            down = total_energy(problem, retract(pose, -step)).total
            numeric[i] = (up - down) / (2 * h)
        assert breakdown.total == pytest.approx(total_energy(problem, pose).total)
        np.testing.assert_allclose(grad, numeric, atol=1e-4)
