import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from app.contact.io import load_contact
from app.contact.maps import FINGERTIPS, HUMAN_PART_COUNT, NO_PART, HumanContact, HumanPart
from app.exceptions import ContactFormatError
from app.geometry.cloud import PointCloud, nearest_to_ray
from app.geometry.sdf import capsule_contact_value
from app.schema import FileProviderSpec, HeuristicProviderSpec


logger = logging.getLogger(__name__)


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _perpendicular(a: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Uniformly random unit vector orthogonal to a"""
    while True:
        v = rng.normal(size=3)
        v -= (v @ a) * a
        if np.linalg.norm(v) > 1e-6:
            return _unit(v)


def paint_patch(
    contact: np.ndarray, parts: np.ndarray, values: np.ndarray, label: int
) -> tuple[np.ndarray, np.ndarray]:
    """Overlay one patch: each point keeps the strongest value, ties stay with the earlier patch"""
    stronger = values > contact
    return np.where(stronger, values, contact), np.where(stronger, label, parts)


@dataclass(frozen=True)
class HeuristicGenerator:
    """
    Human-like contacts without a learned sampler: a thumb patch and two to
    four fingertip patches on opposite sides of a random grasp axis, both
    tilted toward a random approach pole, plus an optional palm patch at the
    pole. Patch values follow the capsule ramp over graph-geodesic distance
    from the patch seed point.
    """

    params: HeuristicProviderSpec
    seed: int

    def patch_directions(self, rng: np.random.Generator) -> list[tuple[HumanPart, np.ndarray]]:
        p = self.params
        approach = _unit(rng.normal(size=3))
        axis = _perpendicular(approach, rng)
        side = np.cross(approach, axis)

        patches = [(HumanPart.THUMB3, _unit(axis + p.approach_bias * approach))]
        n_fingers = int(rng.integers(p.min_fingers, p.max_fingers + 1))
        offsets = np.linspace(-0.5, 0.5, n_fingers) * p.finger_spread
        for label, offset in zip(FINGERTIPS, offsets):
            direction = -axis + p.approach_bias * approach + np.tan(offset) * side
            patches.append((label, _unit(direction)))
        if rng.random() < p.palm_probability:
            patches.append((HumanPart.PALM, approach))
        return patches

    def generate(self, object: PointCloud) -> HumanContact:
        rng = np.random.default_rng(self.seed)
        patches = self.patch_directions(rng)
        centroid = object.centroid
        directions = np.stack([d for _, d in patches])

        seeds = nearest_to_ray(object.points, centroid, directions)
        for i in np.flatnonzero(seeds < 0):
            _, seeds[i] = object.tree.query(centroid + directions[i] * object.bounding_radius)

        contact = np.zeros(len(object))
        parts = np.full(len(object), NO_PART, dtype=np.int64)
        ramp = self.params.patch
        for (label, _), seed in zip(patches, seeds):
            geodesic = object.geodesic_distances(int(seed), limit=ramp.d1, k=self.params.graph_k)
            values = capsule_contact_value(geodesic, ramp.d0, ramp.d1)
            contact, parts = paint_patch(contact, parts, values, int(label))

        parts = np.where(contact > 0.0, parts, NO_PART)
        return HumanContact(contact=contact, parts=parts, object_hash=object.content_hash)


@dataclass(frozen=True)
class FileLoader:
    path: Path

    def generate(self, object: PointCloud) -> HumanContact:
        contact = load_contact(self.path, arity=HUMAN_PART_COUNT, cloud=object)
        if not isinstance(contact, HumanContact):
            raise ContactFormatError(f"{self.path} holds a {contact.kind} contact, expected human")
        return contact


ContactProvider = HeuristicGenerator | FileLoader


def make_provider(
    spec: HeuristicProviderSpec | FileProviderSpec, index: int, seed: int
) -> ContactProvider:
    """Provider for the index-th contact of an object; file specs cycle through their paths"""
    match spec:
        case HeuristicProviderSpec():
            return HeuristicGenerator(params=spec, seed=seed)
        case FileProviderSpec():
            return FileLoader(path=Path(spec.paths[index % len(spec.paths)]))
    raise TypeError(f"unsupported provider spec {type(spec).__name__}")


def generate_contact(provider: ContactProvider, object: PointCloud) -> HumanContact:
    contact = provider.generate(object)
    logger.debug(
        "%s produced %d contact points over parts %s",
        type(provider).__name__,
        int((contact.contact > 0).sum()),
        contact.active_parts,
    )
    return contact
