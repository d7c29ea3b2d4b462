from pathlib import Path

import numpy as np
import pytest

from app.geometry import ObjectModel, box_mesh, icosphere
from app.kinematics import HandPose, load_hand, parse_hand_description


TESTS_DIR = Path(__file__).parent
FIXTURES = TESTS_DIR / "fixtures"
ASSETS = TESTS_DIR.parent / "assets"
HANDS = ("trifinger", "quadfinger", "pentafinger")

SPHERE_HAND = """
<robot name="ball">
  <link name="ball"><collision><geometry><sphere radius="0.01"/></geometry></collision></link>
</robot>
"""

# two fingertip spheres on prismatic slides along x, closing toward the origin
PINCH_HAND = """
<robot name="pinch">
  <link name="base"/>
  <link name="left"><collision><geometry><sphere radius="0.01"/></geometry></collision></link>
  <link name="right"><collision><geometry><sphere radius="0.01"/></geometry></collision></link>
  <joint name="left_slide" type="prismatic">
    <parent link="base"/>
    <child link="left"/>
    <origin xyz="-0.04 0 0"/>
    <axis xyz="1 0 0"/>
    <limit lower="-0.02" upper="0.03"/>
  </joint>
  <joint name="right_slide" type="prismatic">
    <parent link="base"/>
    <child link="right"/>
    <origin xyz="0.04 0 0"/>
    <axis xyz="-1 0 0"/>
    <limit lower="-0.02" upper="0.03"/>
  </joint>
</robot>
"""


class AnalyticSphere:
    """Exact signed distance of a sphere, stands in for a mesh SDF query"""

    def __init__(self, radius: float, center=(0.0, 0.0, 0.0)):
        self.radius = radius
        self.center = np.asarray(center, dtype=np.float64)

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        return np.linalg.norm(points - self.center, axis=1) - self.radius

    def gradient(self, points: np.ndarray, h: float | None = None) -> np.ndarray:
        offsets = np.atleast_2d(points) - self.center
        return offsets / np.linalg.norm(offsets, axis=1, keepdims=True)


@pytest.fixture(scope="session")
def unit_sphere_mesh():
    return icosphere(1.0, subdivisions=5)


@pytest.fixture(scope="session")
def cube_object() -> ObjectModel:
    return ObjectModel.from_mesh("cube", box_mesh((0.06, 0.06, 0.06)), 512, seed=0)


@pytest.fixture(scope="session")
def ball_object() -> ObjectModel:
    return ObjectModel.from_mesh("ball", icosphere(0.03, subdivisions=3), 512, seed=0)


@pytest.fixture(scope="session")
def sphere_hand():
    return parse_hand_description(SPHERE_HAND)


@pytest.fixture(scope="session")
def pinch_hand():
    return parse_hand_description(PINCH_HAND)


@pytest.fixture(scope="session", params=HANDS)
def fixture_hand(request):
    return load_hand(ASSETS / "hands" / f"{request.param}.urdf")


@pytest.fixture(scope="session")
def trifinger():
    return load_hand(ASSETS / "hands" / "trifinger.urdf")


def random_pose(model, rng: np.random.Generator, spread: float = 0.05) -> HandPose:
    quat = rng.normal(size=4)
    return HandPose(
        translation=rng.uniform(-spread, spread, size=3),
        quaternion=quat / np.linalg.norm(quat),
        q=rng.uniform(model.lower, model.upper),
    )
