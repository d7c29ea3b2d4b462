import hashlib
import logging
import time
from collections import defaultdict
from collections.abc import Callable, Iterable, Iterator
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import UTC, datetime
from functools import lru_cache
from glob import glob
from pathlib import Path
from typing import Any, Literal

from pydantic import ValidationError

from app.alignment import HumanRobotMapping, load_mapping
from app.config import settings
from app.contact.io import load_contact, save_contact
from app.contact.maps import HumanContact, RobotContact
from app.contact.providers import generate_contact, make_provider
from app.evaluate.metrics import diversity, translation_diversity
from app.evaluate.stability import success_test
from app.exceptions import ConfigValidationError, GraspAlignError, RecordFormatError
from app.geometry.mesh_io import load_mesh
from app.geometry.objects import ObjectModel, file_hash, load_object
from app.kinematics.model import HandModel, HandPose
from app.kinematics.urdf import load_hand, load_part_labels, sidecar_path
from app.optimize.energy import GraspProblem
from app.optimize.optimizer import (
    GraspCandidate,
    optimize_grasp,
    prepare_robot_contact,
    problem_seeds,
    sample_initial_wrist_poses,
    select_top_k,
)
from app.records.exporter import export_heatmap, export_scene, safe_name
from app.records.store import RecordStore, write_manifest, write_metrics
from app.schema import (
    ContactProvenance,
    EnergyWeights,
    EvaluationParams,
    FileProviderSpec,
    GraspRecord,
    ObjectSummary,
    OptimizerConfig,
    PoseRecord,
    RunConfig,
    RunManifest,
    StabilityReport,
)


logger = logging.getLogger(__name__)

MESH_SUFFIXES = (".obj", ".ply")
RECORDS_FILE = "records.jsonl"
MANIFEST_FILE = "manifest.json"
METRICS_FILE = "metrics.csv"
CONTACTS_DIR = "contacts"
INIT_BATCH = 4


def derive_seed(global_seed: int, object_hash: str, tag: int | str) -> int:
    """Seed that depends only on the run seed, the object content and a tag"""
    digest = hashlib.sha256(f"{global_seed}:{object_hash}:{tag}".encode()).digest()
    return int.from_bytes(digest[:8], "little") & (2**63 - 1)


def load_run_config(path: Path | str) -> RunConfig:
    path = Path(path)
    try:
        config = RunConfig.model_validate_json(path.read_text())
    except OSError as e:
        raise ConfigValidationError(f"Failed to read config {path}: {e}") from e
    except ValidationError as e:
        raise ConfigValidationError(f"invalid config {path}: {e}") from e
    return config.resolve_paths(path.parent.resolve())


def resolve_objects(patterns: list[str]) -> list[Path]:
    found: list[Path] = []
    for pattern in patterns:
        matches = sorted(Path(p) for p in glob(pattern))
        if not matches:
            raise ConfigValidationError(f"no object file matches '{pattern}'")
        found.extend(m for m in matches if m not in found)
    return found


def labels_path(config: RunConfig) -> Path:
    return config.hand.part_labels or sidecar_path(config.hand.description)


def check_run_config(config: RunConfig) -> list[str]:
    """Every problem that would stop a run, empty when the config is usable"""
    problems: list[str] = []
    try:
        objects = resolve_objects(config.objects)
        stems = [p.stem for p in objects]
        unsupported = [p for p in objects if p.suffix not in MESH_SUFFIXES]
        problems += [f"unsupported mesh format: {p}" for p in unsupported]
        duplicates = sorted({s for s in stems if stems.count(s) > 1})
        problems += [f"duplicate object id '{s}'" for s in duplicates]
    except ConfigValidationError as e:
        problems.append(str(e))

    files = {
        "hand description": config.hand.description,
        "part labels": labels_path(config),
        "mapping": config.hand.mapping,
    }
    if isinstance(config.provider, FileProviderSpec):
        files |= {f"contact file {i}": p for i, p in enumerate(config.provider.paths)}
    missing = [
        f"{name} not found: {path}" for name, path in files.items() if not Path(path).is_file()
    ]
    problems += missing
    if missing:
        return problems

    try:
        mapping = load_mapping(config.hand.mapping)
        labels = load_part_labels(labels_path(config))
        model = load_hand(config.hand.description, labels_path(config))
    except GraspAlignError as e:
        problems.append(str(e))
        return problems
    if mapping.n_parts != labels.n_parts:
        problems.append(
            f"mapping '{mapping.robot_name}' has {mapping.n_parts} groups "
            f"but hand '{model.name}' has {labels.n_parts} parts"
        )
    return problems


@lru_cache(maxsize=32)
def cached_object(path: str, n_points: int, seed: int) -> ObjectModel:
    return load_object(path, n_points, seed)


@lru_cache(maxsize=4)
def cached_hand(description: str, labels: str) -> HandModel:
    return load_hand(description, labels)


@lru_cache(maxsize=64)
def cached_problem(
    object_key: tuple[str, int, int],
    hand_key: tuple[str, str],
    robot_path: str,
    weights_json: str,
    density: float,
    seed: int,
) -> GraspProblem:
    object = cached_object(*object_key)
    model = cached_hand(*hand_key)
    contact = load_contact(robot_path, arity=model.n_parts, cloud=object.cloud)
    weights = EnergyWeights.model_validate_json(weights_json)
    return GraspProblem.build(object, contact, model, weights, density, seed)


@dataclass(frozen=True)
class ObjectJob:
    object_id: str
    path: str
    object_hash: str
    n_points: int
    seed: int

    @property
    def key(self) -> tuple[str, int, int]:
        return (self.path, self.n_points, self.seed)


@dataclass(frozen=True)
class ContactJob:
    object: ObjectJob
    provenance: ContactProvenance
    seed: int
    robot_path: str

    @property
    def key(self) -> tuple[str, int]:
        return (self.object.object_id, self.provenance.index)


@dataclass(frozen=True)
class WorkUnit:
    """Optimization of a batch of initial poses for one (object, contact) pair"""

    unit_id: str
    contact: ContactJob
    init_ids: tuple[int, ...]
    hand_key: tuple[str, str]
    weights_json: str
    optimizer_json: str


@dataclass
class UnitResult:
    unit_id: str
    key: tuple[str, int]
    candidates: list[GraspCandidate] = field(default_factory=list)
    elapsed: float = 0.0
    error: str | None = None


@dataclass(frozen=True)
class EvaluationUnit:
    object_key: tuple[str, int, int]
    hand_key: tuple[str, str]
    pose: tuple[tuple[float, ...], tuple[float, ...], tuple[float, ...]]
    params_json: str


def run_unit(unit: WorkUnit) -> UnitResult:
    start = time.perf_counter()
    result = UnitResult(unit_id=unit.unit_id, key=unit.contact.key)
    try:
        cfg = OptimizerConfig.model_validate_json(unit.optimizer_json)
        hand_seed, init_seed = problem_seeds(unit.contact.seed)
        problem = cached_problem(
            unit.contact.object.key,
            unit.hand_key,
            unit.contact.robot_path,
            unit.weights_json,
            cfg.hand_density,
            hand_seed,
        )
        inits = sample_initial_wrist_poses(problem.object.cloud, problem.model, cfg, init_seed)
        result.candidates = [optimize_grasp(problem, inits[i], cfg, i) for i in unit.init_ids]
    except Exception as e:
        logger.exception("work unit %s failed", unit.unit_id)
        result.error = f"{type(e).__name__}: {e}"
    result.elapsed = time.perf_counter() - start
    return result


def run_evaluation(unit: EvaluationUnit) -> StabilityReport:
    object = cached_object(*unit.object_key)
    model = cached_hand(*unit.hand_key)
    pose = HandPose(*unit.pose)
    return success_test(model, pose, object, EvaluationParams.model_validate_json(unit.params_json))


def evaluation_unit(
    object_key: tuple[str, int, int],
    hand_key: tuple[str, str],
    pose: HandPose,
    params: EvaluationParams,
) -> EvaluationUnit:
    return EvaluationUnit(
        object_key=object_key,
        hand_key=hand_key,
        pose=(tuple(pose.translation), tuple(pose.quaternion), tuple(pose.q)),
        params_json=params.model_dump_json(),
    )


class WorkerPool:
    """Ordered map over work items, in-process for a single worker"""

    def __init__(self, workers: int):
        self.workers = workers
        self.executor: ProcessPoolExecutor | None = None

    def __enter__(self) -> "WorkerPool":
        if self.workers > 1:
            self.executor = ProcessPoolExecutor(max_workers=self.workers)
        return self

    def __exit__(self, *exc) -> None:
        if self.executor is not None:
            self.executor.shutdown()

    def map(self, fn: Callable, items: Iterable) -> Iterator:
        if self.executor is None:
            return map(fn, items)
        return self.executor.map(fn, items)


class SynthesisRun:
    """
    Batch generation: per object, generate and align the configured contacts,
    optimize every (object, contact, init batch) unit on the worker pool,
    keep the top grasps per contact, test them and write the records
    """

    def __init__(self, config: RunConfig, workers: int | None = None):
        self.config = config
        self.workers = workers or config.workers
        self.output_dir = Path(config.output_dir)
        self.hand_key = (str(config.hand.description), str(labels_path(config)))
        self.started_at = datetime.now(UTC)

    @property
    def contacts_dir(self) -> Path:
        return self.output_dir / CONTACTS_DIR

    def prepare_object(self, path: Path) -> ObjectJob:
        object_hash = file_hash(path)
        return ObjectJob(
            object_id=path.stem,
            path=str(path),
            object_hash=object_hash,
            n_points=self.config.n_object_points,
            seed=derive_seed(self.config.seed, object_hash, "cloud"),
        )

    def prepare_contacts(
        self, job: ObjectJob, model: HandModel, mapping: HumanRobotMapping
    ) -> list[ContactJob]:
        object = cached_object(*job.key)
        provider_spec = self.config.provider
        jobs = []
        for index in range(self.config.contacts_per_object):
            seed = derive_seed(self.config.seed, job.object_hash, index)
            provider = make_provider(provider_spec, index, seed)
            human: HumanContact = generate_contact(provider, object.cloud)
            robot: RobotContact = prepare_robot_contact(
                human, object.cloud, model, mapping, self.config.weights
            )

            stem = f"{safe_name(job.object_id)}_{index:03d}"
            human_rel = Path(CONTACTS_DIR) / f"{stem}.human.gacm"
            robot_rel = Path(CONTACTS_DIR) / f"{stem}.robot.gacm"
            save_contact(human, self.output_dir / human_rel)
            save_contact(robot, self.output_dir / robot_rel)

            is_file = isinstance(provider_spec, FileProviderSpec)
            provenance = ContactProvenance(
                provider=provider_spec.kind,
                index=index,
                seed=None if is_file else seed,
                file_hash=file_hash(provider.path) if is_file else None,
                human_path=human_rel.as_posix(),
                robot_path=robot_rel.as_posix(),
            )
            jobs.append(
                ContactJob(
                    object=job,
                    provenance=provenance,
                    seed=seed,
                    robot_path=str(self.output_dir / robot_rel),
                )
            )
        return jobs

    def units(self, contacts: list[ContactJob]) -> list[WorkUnit]:
        n_init = self.config.optimizer.n_init_poses
        weights_json = self.config.weights.model_dump_json()
        optimizer_json = self.config.optimizer.model_dump_json()
        units = []
        for contact in contacts:
            contact_id = f"{contact.object.object_id}/{contact.provenance.index:03d}"
            for start in range(0, n_init, INIT_BATCH):
                ids = tuple(range(start, min(start + INIT_BATCH, n_init)))
                units.append(
                    WorkUnit(
                        unit_id=f"{contact_id}/{start:04d}",
                        contact=contact,
                        init_ids=ids,
                        hand_key=self.hand_key,
                        weights_json=weights_json,
                        optimizer_json=optimizer_json,
                    )
                )
        return sorted(units, key=lambda u: u.unit_id)

    def run(self) -> RunManifest:
        config = self.config
        self.contacts_dir.mkdir(parents=True, exist_ok=True)
        model = cached_hand(*self.hand_key)
        mapping = load_mapping(config.hand.mapping)

        timings: dict[str, float] = defaultdict(float)
        errors: dict[str, str] = {}
        objects: dict[str, ObjectJob] = {}
        contacts: list[ContactJob] = []
        for path in resolve_objects(config.objects):
            start = time.perf_counter()
            try:
                job = self.prepare_object(path)
                objects[job.object_id] = job
                contacts += self.prepare_contacts(job, model, mapping)
            except GraspAlignError as e:
                logger.exception("skipping object %s", path)
                errors[path.stem] = str(e)
            timings[path.stem] += time.perf_counter() - start

        by_contact: dict[tuple[str, int], list[GraspCandidate]] = defaultdict(list)
        n_optimized, optimize_time = 0, 0.0
        records: list[GraspRecord] = []
        with WorkerPool(self.workers) as pool:
            for result in pool.map(run_unit, self.units(contacts)):
                timings[result.key[0]] += result.elapsed
                optimize_time += result.elapsed
                n_optimized += len(result.candidates)
                if result.error:
                    errors.setdefault(result.key[0], result.error)
                by_contact[result.key].extend(result.candidates)

            kept: list[tuple[ContactJob, int, GraspCandidate]] = []
            for contact in contacts:
                candidates = sorted(by_contact[contact.key], key=lambda c: c.init_id)
                top = select_top_k(candidates, config.optimizer.top_k)
                if not top:
                    logger.warning("%s contact %d: no valid grasp", *contact.key)
                kept += [(contact, rank, candidate) for rank, candidate in enumerate(top)]

            evaluations = [
                evaluation_unit(
                    contact.object.key, self.hand_key, candidate.pose, config.evaluation
                )
                for contact, _, candidate in kept
            ]
            reports = list(pool.map(run_evaluation, evaluations))

        created_at = datetime.now(UTC)
        hand_hash = file_hash(self.hand_key[0])
        for (contact, rank, candidate), report in zip(kept, reports):
            job = contact.object
            records.append(
                GraspRecord(
                    record_id=f"{job.object_id}/{contact.provenance.index:03d}/{rank:02d}",
                    object_id=job.object_id,
                    object_path=job.path,
                    object_hash=job.object_hash,
                    object_points=job.n_points,
                    object_seed=job.seed,
                    hand_id=model.name,
                    hand_path=self.hand_key[0],
                    hand_labels_path=self.hand_key[1],
                    hand_hash=hand_hash,
                    contact=contact.provenance,
                    init_id=candidate.init_id,
                    initial_pose=PoseRecord.from_pose(candidate.initial_pose),
                    pose=PoseRecord.from_pose(candidate.pose),
                    energy=candidate.energy,
                    terms=candidate.terms.as_terms(),
                    iterations=candidate.iterations,
                    stability=report,
                    created_at=created_at,
                )
            )

        n_records = RecordStore(self.output_dir / RECORDS_FILE).write(records)
        counts = defaultdict(int)
        for record in records:
            counts[record.object_id] += 1
        summaries = [
            ObjectSummary(
                object_id=name,
                object_hash=objects[name].object_hash if name in objects else "",
                n_records=counts[name],
                wall_time=timings[name],
                error=errors.get(name),
            )
            for name in sorted(timings)
        ]
        manifest = RunManifest(
            seed=config.seed,
            workers=self.workers,
            n_records=n_records,
            records_file=RECORDS_FILE,
            objects=summaries,
            mean_time_per_grasp=optimize_time / n_optimized if n_optimized else None,
            started_at=self.started_at,
            finished_at=datetime.now(UTC),
            config=config.model_dump(mode="json"),
        )
        write_manifest(manifest, self.output_dir / MANIFEST_FILE)
        logger.info(
            "wrote %d records for %d objects to %s", n_records, len(objects), self.output_dir
        )
        return manifest


def evaluate_records(
    records_path: Path | str, config: RunConfig, workers: int | None = None
) -> Path:
    """Re-test every record with the config's evaluation params and write per-hand metrics"""
    records_path = Path(records_path)
    records = RecordStore(records_path).read()
    if not records:
        raise RecordFormatError(f"{records_path} holds no records")

    units = [
        evaluation_unit(
            (r.object_path, r.object_points, r.object_seed),
            (r.hand_path, r.hand_labels_path),
            r.pose.to_pose(),
            config.evaluation,
        )
        for r in records
    ]
    with WorkerPool(workers or config.workers) as pool:
        reports = list(pool.map(run_evaluation, units))
    evaluated = [r.model_copy(update={"stability": s}) for r, s in zip(records, reports)]

    evaluated_path = records_path.with_name(records_path.stem + ".evaluated.jsonl")
    store = RecordStore(evaluated_path)
    store.write(evaluated)

    rows: list[dict[str, Any]] = []
    for summary in store.hand_summary():
        hand_id = summary["hand_id"]
        passed = [
            r.pose.to_pose() for r in evaluated if r.hand_id == hand_id and r.stability.success
        ]
        enough = len(passed) >= 2
        rows.append(
            {
                "hand_id": hand_id,
                "total": int(summary["total"]),
                "passes": int(summary["passes"]),
                "success_rate": int(summary["passes"]) / int(summary["total"]),
                "diversity": diversity(passed) if enough else None,
                "translation_diversity": translation_diversity(passed) if enough else None,
                "mean_penetration": float(summary["mean_penetration"]),
                "max_penetration": float(summary["max_penetration"]),
            }
        )
    metrics_path = records_path.parent / METRICS_FILE
    write_metrics(rows, metrics_path)
    logger.info("metrics for %d records written to %s", len(records), metrics_path)
    return metrics_path


def export_records(
    records_path: Path | str, out_dir: Path | str, what: Literal["scene", "contact-heatmap"]
) -> list[Path]:
    records_path, out_dir = Path(records_path), Path(out_dir)
    records = RecordStore(records_path).read()
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    if what == "scene":
        for record in records:
            model = cached_hand(record.hand_path, record.hand_labels_path)
            mesh = load_mesh(record.object_path)
            target = out_dir / f"{safe_name(record.record_id)}.obj"
            written.append(export_scene(model, record.pose.to_pose(), mesh, target))
        return written

    seen: set[str] = set()
    for record in records:
        provenance = record.contact
        if provenance.human_path is None or provenance.human_path in seen:
            continue
        seen.add(provenance.human_path)
        object = cached_object(record.object_path, record.object_points, record.object_seed)
        stem = f"{safe_name(record.object_id)}_{provenance.index:03d}"
        for kind, rel in (("human", provenance.human_path), ("robot", provenance.robot_path)):
            if rel is None:
                continue
            contact = load_contact(records_path.parent / rel, cloud=object.cloud)
            written.append(
                export_heatmap(object.mesh, object.cloud, contact, out_dir / f"{stem}.{kind}.ply")
            )
    return written


def effective_config(config: RunConfig) -> dict[str, Any]:
    """Config with every default filled in, as written to the manifest"""
    dump = config.model_dump(mode="json")
    dump["hand"]["part_labels"] = str(labels_path(config))
    dump["settings"] = {
        "GRASP_WORKERS": settings.GRASP_WORKERS,
        "SDF_FD_STEP": settings.SDF_FD_STEP,
        "LOG_LEVEL": settings.LOG_LEVEL,
    }
    return dump
