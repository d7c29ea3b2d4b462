import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from app.contact.maps import HUMAN_PART_COUNT, NO_PART, ContactMap, HumanContact, RobotContact
from app.exceptions import (
    ConfigValidationError,
    ContactFormatError,
    DegenerateBisectorError,
    EmptyPartError,
    UnknownPartError,
)
from app.geometry.cloud import PointCloud, nearest_to_ray


logger = logging.getLogger(__name__)

BISECTOR_EPS = 1e-9


class HumanRobotMapping(BaseModel):
    """Partition of human part labels into robot part groups, robot part id = group index + 1"""

    model_config = ConfigDict(populate_by_name=True)

    robot_name: str = Field(..., min_length=1)
    n_parts: int = Field(..., alias="B'", ge=1)
    groups: list[list[int]] = Field(..., min_length=1)
    notes: Optional[str] = None

    @model_validator(mode="after")
    def check_groups(self) -> "HumanRobotMapping":
        if len(self.groups) != self.n_parts:
            raise ValueError(f"B' is {self.n_parts} but {len(self.groups)} groups are given")
        seen: set[int] = set()
        for robot_part, group in enumerate(self.groups, start=1):
            if not group:
                raise ValueError(f"group {robot_part} is empty")
            for label in group:
                if not 1 <= label <= HUMAN_PART_COUNT:
                    raise ValueError(
                        f"group {robot_part}: human label {label} outside 1..{HUMAN_PART_COUNT}"
                    )
                if label in seen:
                    raise ValueError(f"human label {label} appears in more than one group")
                seen.add(label)
        return self

    @classmethod
    def identity(cls, labels: list[int], robot_name: str = "identity") -> "HumanRobotMapping":
        return cls(robot_name=robot_name, n_parts=len(labels), groups=[[lab] for lab in labels])


def load_mapping(path: Path | str) -> HumanRobotMapping:
    path = Path(path)
    try:
        return HumanRobotMapping.model_validate_json(path.read_text())
    except OSError as e:
        raise ConfigValidationError(f"Failed to read mapping {path}: {e}") from e
    except ValidationError as e:
        raise ConfigValidationError(f"invalid mapping {path}: {e}") from e


def object_centroid(object: PointCloud) -> np.ndarray:
    return object.points.mean(axis=0)


def part_centroid(object: PointCloud, contact_slice: np.ndarray) -> np.ndarray:
    """Contact-weighted mean of the object points"""
    weights = np.asarray(contact_slice, dtype=np.float64)
    total = weights.sum()
    if not total > 0.0:
        raise EmptyPartError("empty part: contact slice has no mass")
    return (weights[:, None] * object.points).sum(axis=0) / total


def part_contact_slice(c: ContactMap, part: int) -> np.ndarray:
    if not 1 <= part <= c.arity:
        raise UnknownPartError(f"part {part} outside 1..{c.arity}")
    return np.where(c.parts == part, c.contact.astype(np.float64), 0.0)


def _unit_rows(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    ok = norms[..., 0] > BISECTOR_EPS
    return np.divide(v, norms, out=np.zeros_like(v), where=norms > BISECTOR_EPS), ok


def projection_direction(Mo, ox, Mj) -> np.ndarray:
    """Bisector of the directions from the object centroid to ox and to Mj"""
    Mo, ox, Mj = (np.asarray(v, dtype=np.float64) for v in (Mo, ox, Mj))
    directions, ok = _projection_directions(Mo, ox[None, :], Mj)
    if not ok[0]:
        raise DegenerateBisectorError(f"degenerate bisector for point {ox.tolist()}")
    return directions[0]


def _projection_directions(
    Mo: np.ndarray, points: np.ndarray, Mj: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    to_points, ok_points = _unit_rows(points - Mo)
    (to_other,), (ok_other,) = _unit_rows((Mj - Mo)[None, :])
    bisector, ok = _unit_rows(to_points + to_other)
    return bisector, ok & ok_points & ok_other


@dataclass(frozen=True, eq=False)
class MergeContext:
    """Geometry of one remapping: centroids, per-point directions and where mass went"""

    object_centroid: np.ndarray
    source_centroid: np.ndarray
    other_centroid: np.ndarray
    sources: np.ndarray
    directions: np.ndarray
    targets: np.ndarray
    degenerate: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    @property
    def skipped(self) -> int:
        return int((self.targets < 0).sum())

    @property
    def index_map(self) -> dict[int, int]:
        return {int(s): int(t) for s, t in zip(self.sources, self.targets) if t >= 0}


def remap_part(
    object: PointCloud, source_slice: np.ndarray, Mo, M_other
) -> tuple[np.ndarray, MergeContext]:
    """
    Move each contact point's mass to the object point nearest the ray from
    the object centroid along the bisector toward the other part's centroid.
    Only points in front of the centroid along the ray qualify. A degenerate
    bisector keeps the mass in place; a ray with nothing in front skips it.
    """
    source_slice = np.asarray(source_slice, dtype=np.float64)
    Mo = np.asarray(Mo, dtype=np.float64)
    M_other = np.asarray(M_other, dtype=np.float64)
    sources = np.flatnonzero(source_slice > 0.0)
    if not len(sources):
        raise EmptyPartError("empty part: nothing to remap")

    directions, ok = _projection_directions(Mo, object.points[sources], M_other)
    targets = sources.copy()
    if ok.any():
        targets[ok] = nearest_to_ray(object.points, Mo, directions[ok])

    skipped = targets < 0
    if skipped.any():
        logger.warning("remap skipped %d of %d contact points", skipped.sum(), len(sources))

    remapped = np.zeros_like(source_slice)
    np.add.at(remapped, targets[~skipped], source_slice[sources[~skipped]])
    context = MergeContext(
        object_centroid=Mo,
        source_centroid=part_centroid(object, source_slice),
        other_centroid=M_other,
        sources=sources,
        directions=directions,
        targets=targets,
        degenerate=~ok,
    )
    return remapped, context


def merge_pair(remapped_i: np.ndarray, remapped_j: np.ndarray) -> np.ndarray:
    """
    Union of two remapped slices: values add where both are present, a lone
    value passes through, and the result is clamped to 1
    """
    a = np.asarray(remapped_i, dtype=np.float64)
    b = np.asarray(remapped_j, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"slices differ in length: {a.shape} vs {b.shape}")
    return np.minimum(a + b, 1.0)


def fold_pair(object: PointCloud, slice_i: np.ndarray, slice_j: np.ndarray) -> np.ndarray:
    """Remap each slice toward the other's centroid, then merge"""
    Mo = object_centroid(object)
    Mi, Mj = part_centroid(object, slice_i), part_centroid(object, slice_j)
    remapped_i, _ = remap_part(object, slice_i, Mo, Mj)
    remapped_j, _ = remap_part(object, slice_j, Mo, Mi)
    return merge_pair(remapped_i, remapped_j)


def closest_pair(centroids: list[np.ndarray]) -> tuple[int, int]:
    """Indices (a < b) of the two closest centroids, first pair wins ties"""
    best, pair = np.inf, (0, 1)
    for a in range(len(centroids)):
        for b in range(a + 1, len(centroids)):
            d = float(np.linalg.norm(centroids[a] - centroids[b]))
            if d < best:
                best, pair = d, (a, b)
    return pair


def merge_group(c: ContactMap, object: PointCloud, labels) -> np.ndarray:
    """
    Fold the slices of several human labels into one, closest centroids first.
    The merged slice's centroid stands in for the pair in later folds.
    """
    labels = sorted(set(labels))
    if not labels:
        raise ValueError("a group needs at least one label")
    slices = [part_contact_slice(c, label) for label in labels]
    if len(slices) == 1:
        return slices[0]

    slices = [s for s in slices if s.sum() > 0.0]
    if not slices:
        return np.zeros(len(c))
    while len(slices) > 1:
        a, b = closest_pair([part_centroid(object, s) for s in slices])
        merged = fold_pair(object, slices[a], slices[b])
        slices = [s for i, s in enumerate(slices) if i not in (a, b)]
        if merged.sum() > 0.0:
            slices.insert(a, merged)
        if not slices:
            return np.zeros(len(c))
    return slices[0]


def align_contact(
    c: HumanContact, object: PointCloud, mapping: HumanRobotMapping
) -> RobotContact:
    """Human contact to robot contact: merge each mapping group, label points by strongest group"""
    if len(c) != len(object):
        raise ContactFormatError(f"contact has {len(c)} points, object cloud has {len(object)}")

    merged = np.stack([merge_group(c, object, group) for group in mapping.groups])
    contact = np.clip(merged.max(axis=0), 0.0, 1.0)
    # argmax returns the first maximum, so ties go to the lowest group id
    parts = np.where(contact > 0.0, merged.argmax(axis=0) + 1, NO_PART)
    return RobotContact(
        contact=contact, parts=parts, arity=mapping.n_parts, object_hash=c.object_hash
    )


def agnostic_contact(c: HumanContact, n_parts: int) -> RobotContact:
    """Human contact values with part labels collapsed, for the hand-agnostic contact term"""
    parts = np.where(c.contact > 0.0, 1, NO_PART)
    return RobotContact(contact=c.contact, parts=parts, arity=n_parts, object_hash=c.object_hash)
