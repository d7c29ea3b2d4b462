from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Annotated, Any, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.config import settings
from app.kinematics.model import HandPose


DEFAULT_OBJECT_MASS = 0.1  # kg
GRAVITY = 9.81  # m/s^2


class Profile(str, Enum):
    DESK = "desk"
    DATASET = "dataset"


# contacts per object, initial poses per contact, grasps kept per contact
PROFILE_PRESETS: dict[Profile, dict[str, int]] = {
    Profile.DESK: {"contacts_per_object": 4, "n_init_poses": 16, "top_k": 4},
    Profile.DATASET: {"contacts_per_object": 64, "n_init_poses": 64, "top_k": 16},
}


class ContactParams(BaseModel):
    """Capsule ramp: value 1 within d0 of the hand, 0 beyond d1"""

    d0: float = Field(default=0.005, ge=0.0, description="Contact radius (m)")
    d1: float = Field(default=0.02, gt=0.0, description="Cutoff distance (m)")

    @model_validator(mode="after")
    def check_order(self) -> "ContactParams":
        if not self.d0 < self.d1:
            raise ValueError(f"d0 must be < d1, got {self.d0} >= {self.d1}")
        return self


class EnergyWeights(BaseModel):
    w_contact: float = Field(default=1.0, ge=0.0)
    w_spf: float = Field(default=1.0, ge=0.0)
    w_erf: float = Field(default=10.0, ge=0.0)
    w_srf: float = Field(default=1.0, ge=0.0)
    spf_threshold: float = Field(
        default=0.02, gt=0.0, description="Hand points within this distance pull (m)"
    )
    eta: float = Field(default=1e-4, gt=0.0)
    d_th: float = Field(default=0.005, gt=0.0, description="Self-collision threshold (m)")
    contact_mode: Literal["aligned", "agnostic"] = Field(
        default="aligned",
        description="agnostic ignores part labels and pulls the closest robot part",
    )


class OptimizerConfig(BaseModel):
    iterations: int = Field(default=200, ge=1)
    step_translation: float = Field(default=1e-3, gt=0.0, description="Wrist step (m)")
    step_rotation: float = Field(default=0.01, gt=0.0, description="Wrist step (rad)")
    step_joint: float = Field(default=0.02, gt=0.0, description="Joint step (rad or m)")
    step_decay: float = Field(
        default=0.5, gt=0.0, lt=1.0, description="Step factor multiplier on a rejected step"
    )
    n_init_poses: int = Field(default=16, ge=1)
    init_radius: Optional[float] = Field(
        default=None, gt=0.0, description="Defaults to init_radius_factor x bounding radius"
    )
    init_radius_factor: float = Field(default=1.5, gt=0.0)
    top_k: int = Field(default=4, ge=1)
    hand_density: float = Field(
        default=40000.0, gt=0.0, description="Hand surface samples per m^2"
    )
    seed: int = 0

    @model_validator(mode="after")
    def check_top_k(self) -> "OptimizerConfig":
        if self.top_k > self.n_init_poses:
            raise ValueError(f"top_k ({self.top_k}) exceeds n_init_poses ({self.n_init_poses})")
        return self


class EvaluationParams(BaseModel):
    mu: float = Field(default=0.5, gt=0.0, description="Friction coefficient")
    force: float = Field(
        default=2.0 * DEFAULT_OBJECT_MASS * GRAVITY,
        gt=0.0,
        description="Applied force per direction (N)",
    )
    f_max: float = Field(default=10.0, gt=0.0, description="Normal force bound per contact (N)")
    tol: float = Field(default=0.003, gt=0.0, description="Contact distance tolerance (m)")
    max_pen: float = Field(default=0.005, ge=0.0, description="Penetration gate (m)")
    cone_edges: int = Field(default=8, ge=3)
    merge_radius: float = Field(default=0.002, ge=0.0, description="Contact clustering (m)")
    preclose_delta: float = Field(
        default=0.0, ge=0.0, description="Joint move toward upper limits before testing"
    )
    hand_density: float = Field(default=40000.0, gt=0.0)
    seed: int = 0


class HeuristicProviderSpec(BaseModel):
    kind: Literal["heuristic"] = "heuristic"
    min_fingers: int = Field(default=2, ge=2, le=4)
    max_fingers: int = Field(default=4, ge=2, le=4)
    palm_probability: float = Field(default=0.5, ge=0.0, le=1.0)
    finger_spread: float = Field(
        default=0.6, ge=0.0, lt=np.pi, description="Angular span of the finger patches (rad)"
    )
    approach_bias: float = Field(
        default=0.35, ge=0.0, description="Tilt of patch directions toward the approach pole"
    )
    patch: ContactParams = Field(default_factory=lambda: ContactParams(d0=0.006, d1=0.02))
    graph_k: int = Field(default=8, ge=3)

    @model_validator(mode="after")
    def check_fingers(self) -> "HeuristicProviderSpec":
        if self.min_fingers > self.max_fingers:
            raise ValueError("min_fingers must be <= max_fingers")
        return self


class FileProviderSpec(BaseModel):
    kind: Literal["file"] = "file"
    paths: list[Path] = Field(..., min_length=1, description="Contact files, used in order")


ProviderSpec = Annotated[
    Union[HeuristicProviderSpec, FileProviderSpec], Field(discriminator="kind")
]


class HandSpec(BaseModel):
    description: Path
    part_labels: Optional[Path] = Field(
        default=None, description="Defaults to <description stem>.parts.json"
    )
    mapping: Path


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    objects: list[str] = Field(..., min_length=1, description="Mesh paths or glob patterns")
    n_object_points: int = Field(default=2048, ge=16)
    hand: HandSpec
    provider: ProviderSpec = Field(default_factory=HeuristicProviderSpec)
    contacts_per_object: int = Field(default=4, ge=1)
    contact: ContactParams = Field(default_factory=ContactParams)
    weights: EnergyWeights = Field(default_factory=EnergyWeights)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    evaluation: EvaluationParams = Field(default_factory=EvaluationParams)
    output_dir: Path = Path("output")
    workers: int = Field(default_factory=lambda: settings.GRASP_WORKERS, ge=1)
    seed: int = 0
    profile: Optional[Profile] = None

    @model_validator(mode="before")
    @classmethod
    def apply_profile(cls, data: Any) -> Any:
        """Fill counts from the profile preset unless given explicitly"""
        if not isinstance(data, dict) or data.get("profile") is None:
            return data
        preset = PROFILE_PRESETS[Profile(data["profile"])]
        data = dict(data)
        data.setdefault("contacts_per_object", preset["contacts_per_object"])
        optimizer = dict(data.get("optimizer") or {})
        optimizer.setdefault("n_init_poses", preset["n_init_poses"])
        optimizer.setdefault("top_k", preset["top_k"])
        data["optimizer"] = optimizer
        return data

    def resolve_paths(self, base: Path) -> "RunConfig":
        """Anchor relative paths at the config file's directory"""

        def anchor(path: Path) -> Path:
            return path if path.is_absolute() else base / path

        hand = self.hand.model_copy(
            update={
                "description": anchor(self.hand.description),
                "part_labels": anchor(self.hand.part_labels) if self.hand.part_labels else None,
                "mapping": anchor(self.hand.mapping),
            }
        )
        provider = self.provider
        if isinstance(provider, FileProviderSpec):
            provider = provider.model_copy(update={"paths": [anchor(p) for p in provider.paths]})
        objects = [p if Path(p).is_absolute() else str(base / p) for p in self.objects]
        return self.model_copy(
            update={
                "hand": hand,
                "provider": provider,
                "objects": objects,
                "output_dir": anchor(self.output_dir),
            }
        )


class PoseRecord(BaseModel):
    translation: list[float] = Field(..., min_length=3, max_length=3)
    quaternion: list[float] = Field(..., min_length=4, max_length=4, description="x, y, z, w")
    q: list[float]

    @classmethod
    def from_pose(cls, pose: HandPose) -> "PoseRecord":
        return cls(
            translation=pose.translation.tolist(),
            quaternion=pose.quaternion.tolist(),
            q=pose.q.tolist(),
        )

    def to_pose(self) -> HandPose:
        return HandPose(self.translation, self.quaternion, self.q)

    @field_validator("quaternion", mode="after")
    @classmethod
    def check_unit(cls, v: list[float]) -> list[float]:
        if abs(np.linalg.norm(v) - 1.0) > 1e-6:
            raise ValueError("quaternion must have unit norm")
        return v


class EnergyTerms(BaseModel):
    contact: float
    spf: float
    erf: float
    srf: float


class StabilityReport(BaseModel):
    directions: dict[str, bool] = Field(
        ..., description="Verdict per applied force direction (+x, -x, +y, -y, +z, -z)"
    )
    success: bool
    penetration_ok: bool
    max_penetration: float = Field(..., ge=0.0)
    n_contacts: int = Field(..., ge=0)


class ContactProvenance(BaseModel):
    provider: Literal["heuristic", "file"]
    index: int = Field(..., ge=0, description="Contact index within the object")
    seed: Optional[int] = None
    file_hash: Optional[str] = None
    human_path: Optional[str] = None
    robot_path: Optional[str] = None


class GraspRecord(BaseModel):
    record_id: str
    object_id: str
    object_path: str
    object_hash: str
    object_points: int = Field(..., ge=1, description="Size of the sampled object cloud")
    object_seed: int = Field(..., description="Seed of the object cloud sampling")
    hand_id: str
    hand_path: str
    hand_labels_path: str
    hand_hash: str
    contact: ContactProvenance
    init_id: int = Field(..., ge=0)
    initial_pose: PoseRecord
    pose: PoseRecord
    energy: float
    terms: EnergyTerms
    iterations: int
    stability: Optional[StabilityReport] = None
    tool_version: str = settings.VERSION
    created_at: datetime


class ObjectSummary(BaseModel):
    object_id: str
    object_hash: str
    n_records: int
    wall_time: float = Field(..., description="Seconds")
    error: Optional[str] = None


class RunManifest(BaseModel):
    tool_version: str = settings.VERSION
    seed: int
    workers: int
    n_records: int
    records_file: str
    objects: list[ObjectSummary]
    mean_time_per_grasp: Optional[float] = None
    started_at: datetime
    finished_at: datetime
    config: dict[str, Any]
