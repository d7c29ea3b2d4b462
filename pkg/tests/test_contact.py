import json
from types import SimpleNamespace

import numpy as np
import pytest

from app.contact import (
    HumanContact,
    HumanPart,
    RobotContact,
    compute_contact_map,
    compute_part_map,
    generate_contact,
    load_contact,
    make_provider,
    save_contact,
)
from app.contact.providers import paint_patch
from app.exceptions import ContactFormatError, PartArityError
from app.geometry import PointCloud
from app.schema import ContactParams, FileProviderSpec, HeuristicProviderSpec


def line_cloud(xs) -> PointCloud:
    points = np.array([[x, 0.0, 0.0] for x in xs])
    normals = np.tile([0.0, 0.0, 1.0], (len(points), 1))
    return PointCloud(points, normals)


def labeled(points, parts):
    return SimpleNamespace(points=np.asarray(points, dtype=np.float64), part_of=np.asarray(parts))


def test_coincident_hand_point_gives_full_contact():
    cloud = line_cloud([0.0, 0.1])
    values = compute_contact_map(cloud, np.array([[0.0, 0.0, 0.0]]), ContactParams())
    assert values[0] == 1.0
    assert values[1] == 0.0


def test_far_hand_gives_no_contact():
    cloud = line_cloud([0.0, 0.01, 0.02])
    values = compute_contact_map(cloud, np.array([[1.0, 1.0, 1.0]]))
    np.testing.assert_array_equal(values, 0.0)


def test_contact_map_matches_all_pairs_scan():
    rng = np.random.default_rng(3)
    cloud = PointCloud(rng.uniform(-0.05, 0.05, (300, 3)), np.tile([1.0, 0, 0], (300, 1)))
    hand = rng.uniform(-0.05, 0.05, (200, 3))
    params = ContactParams(d0=0.005, d1=0.02)

    brute = np.linalg.norm(cloud.points[:, None, :] - hand[None, :, :], axis=2).min(axis=1)
    expected = np.clip((params.d1 - brute) / (params.d1 - params.d0), 0.0, 1.0)
    np.testing.assert_allclose(compute_contact_map(cloud, hand, params), expected, atol=1e-12)


def test_part_map_labels_and_range():
    cloud = line_cloud([0.0, 0.5])
    hand = labeled([[0.001, 0.0, 0.0], [0.0, 0.002, 0.0]], [3, 1])
    labels = compute_part_map(cloud, hand, max_range=0.02)
    assert labels.tolist() == [3, 0]


def test_part_map_matches_nearest_neighbour_scan():
    rng = np.random.default_rng(8)
    cloud = PointCloud(rng.uniform(-0.05, 0.05, (250, 3)), np.tile([0, 1.0, 0], (250, 1)))
    hand = labeled(rng.uniform(-0.05, 0.05, (120, 3)), rng.integers(1, 5, 120))

    dist = np.linalg.norm(cloud.points[:, None, :] - hand.points[None, :, :], axis=2)
    nearest = dist.argmin(axis=1)
    expected = np.where(dist.min(axis=1) <= 0.01, hand.part_of[nearest], 0)
    np.testing.assert_array_equal(compute_part_map(cloud, hand, 0.01), expected)


def test_positive_contact_needs_label():
    with pytest.raises(ContactFormatError):
        HumanContact(contact=[0.5], parts=[0])


def test_contact_value_out_of_range():
    with pytest.raises(ContactFormatError, match=r"\[0, 1\]"):
        HumanContact(contact=[1.5], parts=[2])


def test_save_load_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    parts = rng.integers(0, 17, 64)
    contact = np.where(parts > 0, rng.random(64), 0.0)
    original = HumanContact(contact=contact, parts=parts, object_hash="abc")
    save_contact(original, tmp_path / "c.gacm")
    loaded = load_contact(tmp_path / "c.gacm")
    assert isinstance(loaded, HumanContact)
    np.testing.assert_array_equal(loaded.contact, original.contact)
    np.testing.assert_array_equal(loaded.parts, original.parts)
    assert loaded.arity == original.arity
    assert loaded.object_hash == "abc"


def test_arity_mismatch_on_load(tmp_path):
    save_contact(HumanContact(contact=[0.2], parts=[4]), tmp_path / "human.gacm")
    with pytest.raises(PartArityError, match="part arity mismatch"):
        load_contact(tmp_path / "human.gacm", arity=4)


def test_robot_contact_keeps_arity(tmp_path):
    save_contact(RobotContact(contact=[0.2, 0.0], parts=[4, 0], arity=4), tmp_path / "r.gacm")
    loaded = load_contact(tmp_path / "r.gacm", arity=4)
    assert isinstance(loaded, RobotContact)
    assert loaded.parts.tolist() == [4, 0]


def test_json_contact_rejects_two_hot_rows(tmp_path):
    rows = np.zeros((2, 16))
    rows[0, [1, 4]] = 1.0
    path = tmp_path / "contact.json"
    path.write_text(json.dumps({"contact": [0.5, 0.0], "parts": rows.tolist()}))
    with pytest.raises(ContactFormatError, match="one-hot"):
        load_contact(path)


def test_json_contact_loads_dense_rows(tmp_path):
    rows = np.zeros((2, 16))
    rows[0, HumanPart.INDEX3 - 1] = 1.0
    path = tmp_path / "contact.json"
    path.write_text(json.dumps({"contact": [0.75, 0.0], "parts": rows.tolist()}))
    contact = load_contact(path)
    assert contact.parts.tolist() == [int(HumanPart.INDEX3), 0]


def test_heuristic_provider_deterministic(ball_object):
    spec = HeuristicProviderSpec()
    a = generate_contact(make_provider(spec, 0, seed=21), ball_object.cloud)
    b = generate_contact(make_provider(spec, 0, seed=21), ball_object.cloud)
    assert a.contact.tobytes() == b.contact.tobytes()
    np.testing.assert_array_equal(a.parts, b.parts)


def test_heuristic_provider_has_thumb_and_finger(ball_object):
    contact = generate_contact(make_provider(HeuristicProviderSpec(), 0, 5), ball_object.cloud)
    active = contact.active_parts
    assert int(HumanPart.THUMB3) in active
    assert any(label in active for label in (7, 10, 13, 16))
    assert contact.contact.max() == pytest.approx(1.0)
    assert contact.object_hash == ball_object.cloud.content_hash


def test_file_provider_cycles_paths(tmp_path, ball_object):
    n = len(ball_object.cloud)
    paths = []
    for i, label in enumerate((2, 5)):
        parts = np.zeros(n, dtype=np.int64)
        parts[:10] = label
        path = tmp_path / f"c{i}.gacm"
        save_contact(HumanContact(contact=(parts > 0) * 0.5, parts=parts), path)
        paths.append(path)
    spec = FileProviderSpec(paths=paths)
    third = generate_contact(make_provider(spec, 2, seed=0), ball_object.cloud)
    assert third.active_parts == [2]


def test_file_provider_rejects_other_cloud(tmp_path, ball_object):
    save_contact(HumanContact(contact=[0.0, 0.0], parts=[0, 0]), tmp_path / "short.gacm")
    spec = FileProviderSpec(paths=[tmp_path / "short.gacm"])
    with pytest.raises(ContactFormatError, match="points"):
        generate_contact(make_provider(spec, 0, seed=0), ball_object.cloud)


def test_paint_patch_keeps_strongest_value():
    contact = np.array([0.0, 0.6, 0.5, 0.9])
    parts = np.array([0, 2, 2, 2])
    values = np.array([0.3, 0.8, 0.5, 0.1])
    contact, parts = paint_patch(contact, parts, values, 7)
    np.testing.assert_allclose(contact, [0.3, 0.8, 0.5, 0.9])
    # a later patch takes a point only with a strictly larger value
    np.testing.assert_array_equal(parts, [7, 7, 2, 2])
