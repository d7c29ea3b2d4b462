from dataclasses import dataclass
from enum import IntEnum
from typing import Protocol

import numpy as np
from scipy.spatial import cKDTree

from app.exceptions import ContactFormatError
from app.geometry.cloud import PointCloud
from app.geometry.sdf import capsule_contact_value
from app.schema import ContactParams


class HumanPart(IntEnum):
    """Human hand segmentation, 0 is reserved for "no part" """

    PALM = 1
    THUMB1 = 2
    THUMB2 = 3
    THUMB3 = 4
    INDEX1 = 5
    INDEX2 = 6
    INDEX3 = 7
    MIDDLE1 = 8
    MIDDLE2 = 9
    MIDDLE3 = 10
    RING1 = 11
    RING2 = 12
    RING3 = 13
    PINKY1 = 14
    PINKY2 = 15
    PINKY3 = 16


HUMAN_PART_COUNT = len(HumanPart)
NO_PART = 0

FINGERTIPS = (HumanPart.INDEX3, HumanPart.MIDDLE3, HumanPart.RING3, HumanPart.PINKY3)


class HasPoints(Protocol):
    points: np.ndarray


@dataclass(frozen=True, eq=False)
class ContactMap:
    """
    Object-centric contact representation: one contact value in [0, 1] and one
    part label in {0..arity} per object point. Labels stand for one-hot rows,
    label 0 for the all-zero row.
    """

    contact: np.ndarray
    parts: np.ndarray
    arity: int
    object_hash: str = ""

    kind = "contact"

    def __post_init__(self):
        contact = np.asarray(self.contact, dtype=np.float32).ravel()
        parts = np.asarray(self.parts).ravel()
        if contact.shape != parts.shape:
            raise ContactFormatError(
                f"{len(contact)} contact values but {len(parts)} part labels"
            )
        if not 1 <= self.arity <= 254:
            raise ContactFormatError(f"part arity must be in 1..254, got {self.arity}")
        in_range = (contact >= 0.0) & (contact <= 1.0)
        if not in_range.all():
            raise ContactFormatError("contact values must lie in [0, 1]")
        if parts.size and (parts.min() < 0 or parts.max() > self.arity):
            raise ContactFormatError(f"part labels must lie in 0..{self.arity}")
        if np.any((parts == NO_PART) & (contact > 0.0)):
            raise ContactFormatError("points with positive contact need a part label")
        parts = parts.astype(np.int64)
        contact.flags.writeable = False
        parts.flags.writeable = False
        object.__setattr__(self, "contact", contact)
        object.__setattr__(self, "parts", parts)

    def __len__(self) -> int:
        return len(self.contact)

    @property
    def one_hot(self) -> np.ndarray:
        return one_hot_rows(self.parts, self.arity)

    @property
    def mass(self) -> float:
        return float(self.contact.astype(np.float64).sum())

    @property
    def active_parts(self) -> list[int]:
        return sorted(int(p) for p in np.unique(self.parts[self.contact > 0.0]))

    @classmethod
    def from_rows(cls, contact, rows, object_hash: str = "", arity: int | None = None):
        """Build from dense one-hot rows, rejecting rows with more than one hot entry"""
        rows = np.asarray(rows, dtype=np.float64)
        if rows.ndim != 2:
            raise ContactFormatError("part rows must be a 2-D array")
        arity = rows.shape[1] if arity is None else arity
        if rows.shape[1] != arity:
            raise ContactFormatError(f"part arity mismatch: expected {arity}, got {rows.shape[1]}")
        if not np.isin(rows, (0.0, 1.0)).all() or (rows.sum(axis=1) > 1.0).any():
            raise ContactFormatError("part rows must be one-hot")
        labels = np.where(rows.any(axis=1), rows.argmax(axis=1) + 1, NO_PART)
        return cls(contact=contact, parts=labels, arity=arity, object_hash=object_hash)

    def matches(self, cloud: PointCloud) -> bool:
        return len(self) == len(cloud) and (
            not self.object_hash or self.object_hash == cloud.content_hash
        )


@dataclass(frozen=True, eq=False)
class HumanContact(ContactMap):
    arity: int = HUMAN_PART_COUNT

    kind = "human"

    def __post_init__(self):
        if self.arity != HUMAN_PART_COUNT:
            raise ContactFormatError(
                f"part arity mismatch: human contacts have {HUMAN_PART_COUNT} parts, "
                f"got {self.arity}"
            )
        super().__post_init__()


@dataclass(frozen=True, eq=False)
class RobotContact(ContactMap):
    kind = "robot"


def one_hot_rows(labels: np.ndarray, arity: int) -> np.ndarray:
    rows = np.zeros((len(labels), arity), dtype=np.float64)
    hot = labels > NO_PART
    rows[np.flatnonzero(hot), labels[hot] - 1] = 1.0
    return rows


def _points(cloud: HasPoints | np.ndarray) -> np.ndarray:
    points = cloud.points if hasattr(cloud, "points") else cloud
    return np.atleast_2d(np.asarray(points, dtype=np.float64))


def compute_contact_map(
    object: PointCloud, hand: HasPoints | np.ndarray, params: ContactParams | None = None
) -> np.ndarray:
    """Capsule contact value of every object point from its nearest hand point"""
    params = params or ContactParams()
    hand_points = _points(hand)
    if not len(hand_points):
        raise ValueError("hand cloud must not be empty")
    distance, _ = cKDTree(hand_points).query(object.points, k=1)
    return capsule_contact_value(distance, params.d0, params.d1)


def compute_part_map(object: PointCloud, hand, max_range: float) -> np.ndarray:
    """
    Part label of the nearest hand point for every object point within
    max_range of the hand, 0 elsewhere
    """
    hand_points = _points(hand)
    if not len(hand_points):
        raise ValueError("hand cloud must not be empty")
    distance, nearest = cKDTree(hand_points).query(object.points, k=1)
    labels = np.asarray(hand.part_of)[nearest]
    return np.where(distance <= max_range, labels, NO_PART).astype(np.int64)


def contact_from_hand(
    object: PointCloud, hand, arity: int, params: ContactParams | None = None
) -> RobotContact:
    """Contact and part maps induced by a posed, labeled hand cloud"""
    params = params or ContactParams()
    contact = compute_contact_map(object, hand, params)
    parts = compute_part_map(object, hand, max_range=params.d1)
    return RobotContact(
        contact=contact, parts=parts, arity=arity, object_hash=object.content_hash
    )
