"""Protocol and job management for the two external model stages: edge-map
conditioned image generation and pose estimation.

A backend is any executable accepting ``--manifest <path>`` and exiting 0
on success, with one output file per request. The manifest is a versioned
JSON document with absolute paths (schema in docs/formats.md). Pretrained
models stay entirely behind this file/subprocess boundary; the bundled mock
backends make the whole pipeline runnable and deterministic without them.
"""

from __future__ import annotations

import json
import shutil
import subprocess
import time
import uuid
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from PIL import Image

from .errors import BackendError, DuplicateOutputError, EmptyJobError, ManifestError
from .model import DEFAULT_IMAGE_SIZE, TrajectorySet
from .poseio import (
    frame_index_from_name,
    pose_filename,
    serialize_pose_document,
    frames_from_trajectories,
)

MANIFEST_VERSION = "1"

# Defaults for the generation stage prompts.
POSITIVE_PROMPT = (
    "an able-body person walking, intact lower limbs, 2 legs, "
    "full-body portrait, realistic"
)
NEGATIVE_PROMPT = "cyborg, amputee, panfuturism"
GENERATED_SIZE = 512


class JobKind(Enum):
    GENERATE = "generate"
    ESTIMATE_POSE = "estimate_pose"


class JobStatus(Enum):
    PENDING = "pending"
    RUNNING = "running"
    DONE = "done"
    FAILED = "failed"


@dataclass(frozen=True)
class GenerationRequest:
    edge_map_path: Path
    output_path: Path
    positive_prompt: str = POSITIVE_PROMPT
    negative_prompt: str = NEGATIVE_PROMPT
    seed: int = 0
    steps: int = 20
    extra: Mapping[str, str] = field(default_factory=dict)

    def validate(self) -> None:
        if not self.positive_prompt.strip() or not self.negative_prompt.strip():
            raise ManifestError("prompts must be non-empty")

    def to_entry(self) -> dict:
        return {
            "edge_map": str(Path(self.edge_map_path).absolute()),
            "output": str(Path(self.output_path).absolute()),
            "positive_prompt": self.positive_prompt,
            "negative_prompt": self.negative_prompt,
            "seed": self.seed,
            "steps": self.steps,
            "extra": dict(self.extra),
        }


@dataclass(frozen=True)
class PoseRequest:
    image_path: Path
    output_pose_path: Path

    def validate(self) -> None:
        pass

    def to_entry(self) -> dict:
        return {
            "image": str(Path(self.image_path).absolute()),
            "output": str(Path(self.output_pose_path).absolute()),
        }


Request = GenerationRequest | PoseRequest


@dataclass(frozen=True)
class BackendJob:
    """One batch of requests for an external backend; immutable snapshot,
    transitions only pending -> running -> done/failed."""

    job_id: str
    kind: JobKind
    requests: tuple[Request, ...]
    status: JobStatus = JobStatus.PENDING
    max_parallel: int = 1
    request_seconds: Mapping[str, float] = field(default_factory=dict)
    missing_outputs: tuple[str, ...] = ()
    diagnostics: str = ""
    returncode: int | None = None

    @classmethod
    def create(
        cls, kind: JobKind, requests: Iterable[Request], max_parallel: int = 1
    ) -> "BackendJob":
        return cls(
            job_id=uuid.uuid4().hex[:12],
            kind=kind,
            requests=tuple(requests),
            max_parallel=max_parallel,
        )

    def output_paths(self) -> list[Path]:
        return [
            Path(r.output_path if isinstance(r, GenerationRequest) else r.output_pose_path)
            for r in self.requests
        ]


def write_manifest(job: BackendJob, directory: str | Path) -> Path:
    """Write the job's manifest document; validates the job first."""
    if not job.requests:
        raise EmptyJobError(f"job {job.job_id} has no requests")
    outputs = [str(p) for p in job.output_paths()]
    seen = set()
    for out in outputs:
        if out in seen:
            raise DuplicateOutputError(f"duplicate output path {out}")
        seen.add(out)
    for request in job.requests:
        request.validate()
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    doc = {
        "version": MANIFEST_VERSION,
        "job_id": job.job_id,
        "kind": job.kind.value,
        "max_parallel": job.max_parallel,
        "requests": [r.to_entry() for r in job.requests],
    }
    path = directory / f"manifest_{job.kind.value}_{job.job_id}.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def read_manifest(path: str | Path) -> BackendJob:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    if doc.get("version") != MANIFEST_VERSION:
        raise ManifestError(
            f"unsupported manifest version {doc.get('version')!r} "
            f"(expected {MANIFEST_VERSION!r})"
        )
    kind = JobKind(doc["kind"])
    requests: list[Request] = []
    for entry in doc["requests"]:
        if kind is JobKind.GENERATE:
            requests.append(
                GenerationRequest(
                    edge_map_path=Path(entry["edge_map"]),
                    output_path=Path(entry["output"]),
                    positive_prompt=entry["positive_prompt"],
                    negative_prompt=entry["negative_prompt"],
                    seed=int(entry["seed"]),
                    steps=int(entry["steps"]),
                    extra=dict(entry.get("extra", {})),
                )
            )
        else:
            requests.append(
                PoseRequest(
                    image_path=Path(entry["image"]),
                    output_pose_path=Path(entry["output"]),
                )
            )
    return BackendJob(
        job_id=doc["job_id"],
        kind=kind,
        requests=tuple(requests),
        max_parallel=int(doc.get("max_parallel", 1)),
    )


def run_backend(
    command: Sequence[str],
    manifest_path: str | Path,
    timeout_s: float | None = 600.0,
    log_path: str | Path | None = None,
) -> BackendJob:
    """Invoke ``<command> --manifest <path>`` and audit the results.

    Returns the finished job snapshot: DONE when the process exited 0 and
    every output exists, FAILED otherwise with diagnostics captured from
    standard error and the missing outputs enumerated. Per-request timing is
    recorded as each output file's completion offset from job start.
    """
    manifest_path = Path(manifest_path)
    job = replace(read_manifest(manifest_path), status=JobStatus.RUNNING)
    argv = [*command, "--manifest", str(manifest_path)]
    start_wall = time.time()
    start = time.monotonic()
    try:
        proc = subprocess.run(
            argv, capture_output=True, text=True, timeout=timeout_s
        )
        returncode = proc.returncode
        stderr = proc.stderr
    except subprocess.TimeoutExpired as exc:
        stderr = (exc.stderr or b"").decode() if isinstance(exc.stderr, bytes) else (exc.stderr or "")
        stderr += f"\nbackend timed out after {timeout_s}s"
        returncode = None
    except FileNotFoundError as exc:
        raise BackendError(f"backend executable not found: {argv[0]}") from exc

    # Per-request timing: completion offset of each output from job start
    # (the backend owns finer-grained numbers); total wall time is exact.
    timings: dict[str, float] = {}
    missing: list[str] = []
    for out in job.output_paths():
        if out.exists():
            timings[str(out)] = max(out.stat().st_mtime - start_wall, 0.0)
        else:
            missing.append(str(out))
    timings["__total__"] = time.monotonic() - start

    ok = returncode == 0 and not missing
    if log_path is not None:
        log_path = Path(log_path)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        log_path.write_text(stderr or "")
    return replace(
        job,
        status=JobStatus.DONE if ok else JobStatus.FAILED,
        request_seconds=timings,
        missing_outputs=tuple(missing),
        diagnostics=stderr or "",
        returncode=returncode,
    )


# ---------------------------------------------------------------------------
# Mock backends (GPU-free test doubles, also exposed as CLI subcommands)

def run_identity_generation(
    manifest_path: str | Path, fail_frames: Sequence[int] = ()
) -> int:
    """Generation mock: copy each edge map to its output path unchanged.

    ``fail_frames`` suppresses outputs for the requests whose edge-map file
    ordinal matches, emulating per-frame backend failures without aborting
    the batch. Returns a process exit code.
    """
    job = read_manifest(manifest_path)
    if job.kind is not JobKind.GENERATE:
        return 3
    fail = set(int(f) for f in fail_frames)
    for request in job.requests:
        try:
            ordinal = _image_ordinal(request.edge_map_path)
        except ValueError:
            ordinal = None
        if ordinal in fail:
            continue
        Path(request.output_path).parent.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(request.edge_map_path, request.output_path)
    return 0


def _image_ordinal(path: str | Path) -> int:
    stem = Path(path).stem
    digits = "".join(ch for ch in stem if ch.isdigit())
    if not digits:
        raise ValueError(f"no ordinal in image name {path}")
    return int(digits)


def run_pose_source_backend(
    manifest_path: str | Path,
    pose_source: str | Path,
    routes: Sequence[tuple[str, str | Path]] = (),
) -> int:
    """Pose mock: serve pre-rendered pose documents keyed by each input
    image's ordinal.

    ``routes`` optionally maps an image-path substring to an alternative
    source directory, letting one mock emulate estimators whose quality
    depends on what they look at (e.g. raw frames versus regenerated ones).
    Images without a matching document yield a zero-person document, which
    the pipeline treats as an invalid frame.
    """
    job = read_manifest(manifest_path)
    if job.kind is not JobKind.ESTIMATE_POSE:
        return 3

    def index_source(directory: str | Path) -> dict[int, Path]:
        return {
            frame_index_from_name(p): p
            for p in Path(directory).glob("*_keypoints.json")
        }

    default = index_source(pose_source)
    routed = [(substr, index_source(directory)) for substr, directory in routes]
    for request in job.requests:
        out = Path(request.output_pose_path)
        out.parent.mkdir(parents=True, exist_ok=True)
        by_ordinal = default
        for substr, table in routed:
            if substr in str(request.image_path):
                by_ordinal = table
                break
        try:
            ordinal = _image_ordinal(request.image_path)
        except ValueError:
            ordinal = None
        found = by_ordinal.get(ordinal)
        if found is None:
            out.write_text(json.dumps({"version": 1.3, "people": []}))
        else:
            shutil.copyfile(found, out)
    return 0


def mock_pose_backend(
    trajectories: TrajectorySet,
    corruption,
    out_dir: str | Path,
    rng_seed: int = 0,
    image_size: tuple[int, int] = DEFAULT_IMAGE_SIZE,
    prefix: str = "frame",
):
    """Render pose documents from trajectories with injected corruption.

    This is the data source behind the pose mock: the returned directory can
    be served by ``run_pose_source_backend``. Returns (paths, corruption log).
    """
    from .synth import corrupt  # local import, synth depends on model only

    result = corrupt(trajectories, corruption, rng_seed)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for pose in frames_from_trajectories(result.trajectories, image_size):
        path = out_dir / pose_filename(prefix, pose.frame_index)
        path.write_bytes(serialize_pose_document(pose))
        paths.append(path)
    return paths, result.log


# ---------------------------------------------------------------------------
# Conformance checking

@dataclass(frozen=True)
class ConformanceResult:
    ok: bool
    issues: tuple[str, ...]
    checked_outputs: int = 0


def _checker_edge_map(path: Path, salt: int) -> None:
    side = GENERATED_SIZE
    mask = np.zeros((side, side), dtype=np.uint8)
    lo, hi = 128 + 8 * salt, 384 - 8 * salt
    mask[lo:hi, lo] = 255
    mask[lo:hi, hi] = 255
    mask[lo, lo:hi] = 255
    mask[hi, lo : hi + 1] = 255
    Image.fromarray(mask, mode="L").save(path, format="PNG")


def _checker_photo(path: Path, salt: int) -> None:
    side = 96
    img = np.zeros((side, side, 3), dtype=np.uint8)
    img[:, :] = (24, 24, 32)
    img[10 : side - 10, 38 + salt : 58 + salt] = (220, 210, 200)
    Image.fromarray(img, mode="RGB").save(path, format="PNG")


def check_conformance(
    command: Sequence[str],
    kind: JobKind,
    workdir: str | Path,
    n_requests: int = 3,
    timeout_s: float = 300.0,
) -> ConformanceResult:
    """Verify a backend honors the protocol: manifest in, outputs out,
    correct exit codes, schema-valid output files.

    Any backend that passes is usable by the pipeline with no code change.
    """
    workdir = Path(workdir)
    (workdir / "in").mkdir(parents=True, exist_ok=True)
    (workdir / "out").mkdir(parents=True, exist_ok=True)
    issues: list[str] = []

    requests: list[Request] = []
    for i in range(n_requests):
        if kind is JobKind.GENERATE:
            src = workdir / "in" / f"edge_{i:012d}.png"
            _checker_edge_map(src, i)
            requests.append(
                GenerationRequest(
                    edge_map_path=src, output_path=workdir / "out" / f"gen_{i:012d}.png"
                )
            )
        else:
            src = workdir / "in" / f"img_{i:012d}.png"
            _checker_photo(src, i)
            requests.append(
                PoseRequest(
                    image_path=src,
                    output_pose_path=workdir / "out" / pose_filename("img", i),
                )
            )
    job = BackendJob.create(kind, requests)
    manifest = write_manifest(job, workdir)
    finished = run_backend(command, manifest, timeout_s=timeout_s)
    if finished.returncode != 0:
        issues.append(f"exit code {finished.returncode} on a valid manifest")
    for missing in finished.missing_outputs:
        issues.append(f"missing output {missing}")

    checked = 0
    for request in requests:
        out = Path(
            request.output_path
            if isinstance(request, GenerationRequest)
            else request.output_pose_path
        )
        if not out.exists():
            continue
        checked += 1
        if kind is JobKind.GENERATE:
            try:
                with Image.open(out) as img:
                    if img.size != (GENERATED_SIZE, GENERATED_SIZE):
                        issues.append(f"{out.name}: size {img.size}, expected 512x512")
            except OSError as exc:
                issues.append(f"{out.name}: not a decodable image ({exc})")
        else:
            from .poseio import parse_pose_document
            from .errors import NoPersonDetectedError, PoseDocumentError

            try:
                parse_pose_document(out.read_bytes(), 0, person="largest")
            except NoPersonDetectedError:
                pass  # zero-person documents are schema-valid
            except PoseDocumentError as exc:
                issues.append(f"{out.name}: invalid pose document ({exc})")

    # A nonexistent manifest must produce a nonzero exit.
    bogus = subprocess.run(
        [*command, "--manifest", str(workdir / "does_not_exist.json")],
        capture_output=True,
        timeout=timeout_s,
    )
    if bogus.returncode == 0:
        issues.append("exit code 0 on a nonexistent manifest")

    return ConformanceResult(ok=not issues, issues=tuple(issues), checked_outputs=checked)
