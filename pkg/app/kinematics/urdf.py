import logging
from collections import deque
from pathlib import Path
from typing import Any
from xml.etree import ElementTree as ET

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from scipy.spatial.transform import Rotation

from app.exceptions import HandDescriptionError, MeshFormatError
from app.geometry.mesh import TriangleMesh
from app.geometry.mesh_io import load_mesh
from app.kinematics.model import Body, HandModel, Joint
from app.kinematics.primitives import Geometry


logger = logging.getLogger(__name__)

SIDECAR_SUFFIX = ".parts.json"


class PartLabels(BaseModel):
    """Sidecar assigning robot part ids to links, URDF has no part grouping"""

    model_config = ConfigDict(populate_by_name=True)

    robot: str = Field(..., min_length=1)
    n_parts: int = Field(..., alias="B'", ge=1, le=255)
    parts: dict[int, str] = Field(..., description="Part id -> human-readable name")
    links: dict[str, int] = Field(..., description="Link name -> part id")
    palm_axis: tuple[float, float, float] = (0.0, 0.0, 1.0)

    @model_validator(mode="after")
    def check_ids(self) -> "PartLabels":
        if sorted(self.parts) != list(range(1, self.n_parts + 1)):
            raise ValueError(f"parts must name every id in 1..{self.n_parts}")
        bad = {link: part for link, part in self.links.items() if part not in self.parts}
        if bad:
            raise ValueError(f"links labeled with unknown part ids: {bad}")
        if np.linalg.norm(self.palm_axis) < 1e-9:
            raise ValueError("palm_axis must be non-zero")
        return self


def _floats(text: str | None, count: int, default: tuple[float, ...]) -> np.ndarray:
    if text is None:
        return np.array(default, dtype=np.float64)
    values = [float(v) for v in text.split()]
    if len(values) != count:
        raise HandDescriptionError(f"expected {count} values, got '{text}'")
    return np.array(values, dtype=np.float64)


def _origin(elem: ET.Element | None) -> np.ndarray:
    """4x4 transform from an <origin xyz rpy> element, identity when absent"""
    mat = np.eye(4)
    if elem is None:
        return mat
    xyz = _floats(elem.get("xyz"), 3, (0.0, 0.0, 0.0))
    rpy = _floats(elem.get("rpy"), 3, (0.0, 0.0, 0.0))
    mat[:3, :3] = Rotation.from_euler("xyz", rpy).as_matrix()
    mat[:3, 3] = xyz
    return mat


def _required(elem: ET.Element, attr: str) -> str:
    value = elem.get(attr)
    if value is None:
        raise HandDescriptionError(f"<{elem.tag}> is missing attribute '{attr}'")
    return value


class HandDescriptionParser:
    """
    Reader for the URDF subset used by hand descriptions:
    robot/link/{collision|visual}/geometry/{sphere,box,cylinder,capsule,mesh}
    and robot/joint/{origin,axis,parent,child,limit}.
    Collision geometry wins over visual geometry when a link has both.
    """

    JOINT_TYPES: tuple[str, ...] = ("revolute", "prismatic", "fixed")

    def __init__(self, labels: PartLabels | None = None, mesh_dir: Path | None = None):
        self.labels = labels
        self.mesh_dir = mesh_dir or Path.cwd()

    def parse_geometry(self, link: str, shape: ET.Element) -> Geometry:
        geometry = shape.find("geometry")
        if geometry is None or len(geometry) != 1:
            raise HandDescriptionError(f"link '{link}' needs exactly one shape under <geometry>")
        (elem,) = geometry
        origin = _origin(shape.find("origin"))
        mesh: TriangleMesh | None = None

        match elem.tag:
            case "sphere":
                size = (float(_required(elem, "radius")),)
            case "box":
                size = tuple(_floats(_required(elem, "size"), 3, ()))
            case "cylinder" | "capsule":
                size = (float(_required(elem, "radius")), float(_required(elem, "length")))
            case "mesh":
                scale = _floats(elem.get("scale"), 3, (1.0, 1.0, 1.0))
                try:
                    raw = load_mesh(self.mesh_dir / _required(elem, "filename"))
                except MeshFormatError as e:
                    raise HandDescriptionError(f"link '{link}': {e}") from e
                mesh = TriangleMesh(raw.vertices * scale, raw.triangles)
                size = tuple(scale)
            case tag:
                raise HandDescriptionError(f"link '{link}': unknown geometry tag <{tag}>")

        if min(size) <= 0.0:
            raise HandDescriptionError(f"link '{link}': geometry sizes must be positive")
        return Geometry(kind=elem.tag, size=size, origin=origin, source_link=link, mesh=mesh)

    def parse_link(self, elem: ET.Element) -> tuple[str, list[Geometry]]:
        name = _required(elem, "name")
        shapes = elem.findall("collision") or elem.findall("visual")
        return name, [self.parse_geometry(name, shape) for shape in shapes]

    def parse_joint(self, elem: ET.Element) -> dict[str, Any]:
        name = _required(elem, "name")
        kind = _required(elem, "type")
        if kind not in self.JOINT_TYPES:
            raise HandDescriptionError(f"joint '{name}': unsupported type '{kind}'")

        parent, child = elem.find("parent"), elem.find("child")
        if parent is None or child is None:
            raise HandDescriptionError(f"joint '{name}' needs <parent> and <child>")

        joint = {
            "name": name,
            "kind": kind,
            "parent": _required(parent, "link"),
            "child": _required(child, "link"),
            "origin": _origin(elem.find("origin")),
            "axis": _floats(
                elem.find("axis").get("xyz") if elem.find("axis") is not None else None,
                3,
                (1.0, 0.0, 0.0),
            ),
            "lower": 0.0,
            "upper": 0.0,
        }
        if kind == "fixed":
            return joint

        norm = np.linalg.norm(joint["axis"])
        if norm < 1e-12:
            raise HandDescriptionError(f"joint '{name}' has a zero axis")
        joint["axis"] = joint["axis"] / norm

        limit = elem.find("limit")
        if limit is None or limit.get("lower") is None or limit.get("upper") is None:
            raise HandDescriptionError(f"joint '{name}': missing limit on movable joint")
        joint["lower"] = float(limit.get("lower"))
        joint["upper"] = float(limit.get("upper"))
        if not joint["lower"] <= joint["upper"]:
            raise HandDescriptionError(f"joint '{name}': limit lower > upper")
        return joint

    def find_root(self, links: dict[str, list[Geometry]], joints: list[dict[str, Any]]) -> str:
        parents: dict[str, str] = {}
        for joint in joints:
            for end in ("parent", "child"):
                if joint[end] not in links:
                    raise HandDescriptionError(
                        f"joint '{joint['name']}': dangling {end} reference '{joint[end]}'"
                    )
            if joint["parent"] == joint["child"]:
                raise HandDescriptionError(f"joint '{joint['name']}' forms a cycle")
            if joint["child"] in parents:
                raise HandDescriptionError(
                    f"link '{joint['child']}' has two parents, joint graph has a cycle"
                )
            parents[joint["child"]] = joint["parent"]

        roots = [name for name in links if name not in parents]
        if not roots:
            raise HandDescriptionError("cycle detected: every link has a parent")
        if len(roots) > 1:
            raise HandDescriptionError(f"joint graph is not a single tree, roots: {roots}")
        return roots[0]

    def part_of(self, link: str, default: int) -> int:
        if self.labels is None:
            return default
        if link not in self.labels.links:
            raise HandDescriptionError(f"link '{link}' carries geometry but is unlabeled")
        return self.labels.links[link]

    def parse(self, text: str) -> HandModel:
        try:
            robot = ET.fromstring(text)
        except ET.ParseError as e:
            raise HandDescriptionError(f"malformed hand description: {e}") from e
        if robot.tag != "robot":
            raise HandDescriptionError(f"expected <robot> root element, got <{robot.tag}>")

        links: dict[str, list[Geometry]] = {}
        for elem in robot.findall("link"):
            name, geometries = self.parse_link(elem)
            if name in links:
                raise HandDescriptionError(f"duplicate link '{name}'")
            links[name] = geometries
        joints = [self.parse_joint(elem) for elem in robot.findall("joint")]
        if not links:
            raise HandDescriptionError("hand description has no links")
        root = self.find_root(links, joints)

        children: dict[str, list[dict[str, Any]]] = {name: [] for name in links}
        for joint in joints:
            children[joint["parent"]].append(joint)

        # walk from the root, folding fixed joints into the parent body
        placement: dict[str, tuple[int, np.ndarray]] = {root: (0, np.eye(4))}
        body_links: list[dict[str, np.ndarray]] = [{root: np.eye(4)}]
        body_names = [root]
        movable: dict[str, tuple[int, int, np.ndarray]] = {}
        queue = deque([root])
        while queue:
            link = queue.popleft()
            body, offset = placement[link]
            for joint in children[link]:
                child = joint["child"]
                if joint["kind"] == "fixed":
                    placement[child] = (body, offset @ joint["origin"])
                    body_links[body][child] = placement[child][1]
                else:
                    placement[child] = (len(body_links), np.eye(4))
                    body_links.append({child: np.eye(4)})
                    body_names.append(child)
                    movable[joint["name"]] = (body, placement[child][0], offset @ joint["origin"])
                queue.append(child)

        unreachable = set(links) - set(placement)
        if unreachable:
            raise HandDescriptionError(f"cycle detected among links {sorted(unreachable)}")

        geometric = [name for name in links if links[name]]
        body_geoms: list[list[Geometry]] = [[] for _ in body_links]
        for name in links:
            body, offset = placement[name]
            part = self.part_of(name, geometric.index(name) + 1) if links[name] else 0
            for geom in links[name]:
                body_geoms[body].append(geom.with_origin(offset @ geom.origin, part=part))

        model_joints = tuple(
            Joint(
                name=joint["name"],
                parent=movable[joint["name"]][0],
                child=movable[joint["name"]][1],
                kind=joint["kind"],
                axis=joint["axis"],
                origin=movable[joint["name"]][2],
                lower=joint["lower"],
                upper=joint["upper"],
            )
            for joint in joints
            if joint["kind"] != "fixed"
        )
        bodies = tuple(
            Body(name=name, geometries=tuple(geoms), links=offsets)
            for name, geoms, offsets in zip(body_names, body_geoms, body_links)
        )

        if self.labels is None:
            part_names = {i + 1: name for i, name in enumerate(geometric)}
            palm_axis = np.array([0.0, 0.0, 1.0])
        else:
            part_names = dict(self.labels.parts)
            palm_axis = np.asarray(self.labels.palm_axis, dtype=np.float64)
            palm_axis = palm_axis / np.linalg.norm(palm_axis)
            unknown = set(self.labels.links) - set(links)
            if unknown:
                raise HandDescriptionError(f"part labels name unknown links {sorted(unknown)}")

        model = HandModel(
            name=robot.get("name", root),
            bodies=bodies,
            joints=model_joints,
            part_names=part_names,
            palm_axis=palm_axis,
        )
        logger.debug(
            "parsed hand '%s': %d links, %d bodies, %d movable joints",
            model.name,
            len(links),
            len(bodies),
            model.n_dof,
        )
        return model


def parse_hand_description(
    text: str, labels: PartLabels | None = None, mesh_dir: Path | None = None
) -> HandModel:
    """
    Parse a hand description into a validated HandModel.
    Without a sidecar every geometric link becomes its own part, in document order.
    """
    return HandDescriptionParser(labels, mesh_dir).parse(text)


def load_part_labels(path: Path | str) -> PartLabels:
    path = Path(path)
    try:
        return PartLabels.model_validate_json(path.read_text())
    except OSError as e:
        raise HandDescriptionError(f"Failed to read part labels {path}: {e}") from e
    except ValidationError as e:
        raise HandDescriptionError(f"invalid part labels {path}: {e}") from e


def sidecar_path(urdf_path: Path | str) -> Path:
    path = Path(urdf_path)
    return path.with_name(path.stem + SIDECAR_SUFFIX)


def load_hand(urdf_path: Path | str, labels_path: Path | str | None = None) -> HandModel:
    urdf_path = Path(urdf_path)
    labels = load_part_labels(labels_path or sidecar_path(urdf_path))
    try:
        text = urdf_path.read_text()
    except OSError as e:
        raise HandDescriptionError(f"Failed to read hand description {urdf_path}: {e}") from e
    return parse_hand_description(text, labels, mesh_dir=urdf_path.parent)
