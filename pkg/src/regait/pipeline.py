"""End-to-end batch orchestration: frames -> edge maps -> generation
backend -> pose backend -> refinement -> kinematics -> cycles -> report.

A run directory is the unit of reproducibility. Every stage persists its
outputs under its own subdirectory, and the run manifest (run.json) records
the config hash and per-stage status, so reruns with an identical config
skip completed stages and deleting a stage directory regenerates exactly
that stage and its dependents. With the bundled mock backends and a fixed
seed the whole run directory is bit-identical across runs (run.json and
logs carry the only timestamps).
"""

from __future__ import annotations

import hashlib
import json
import shutil
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from PIL import Image

from . import backend as bk
from . import edgemap as em
from .errors import (
    BackendError,
    ConfigError,
    GaitPipelineError,
    StageError,
)
from .gaitcycle import (
    CycleEnsemble,
    build_ensembles,
    ensembles_to_csv,
    load_events,
    plot_data_to_csv,
)
from .kinematics import (
    angles_from_csv,
    angles_to_csv,
    compute_joint_angles,
    filter_angle_series,
)
from .metrics import (
    CoordinateRow,
    ErrorReport,
    KinematicRow,
    LimbRole,
    ScaleEstimate,
    angle_mae,
    coordinate_mae,
    estimate_scale,
    failure_frame_stats,
    improvement_percent,
    render_report_table,
    side_joints,
)
from .model import (
    CameraView,
    SequenceMeta,
    Side,
    TrajectorySet,
    WalkingDirection,
)
from .poseio import (
    load_pose_directory,
    trajectories_from_csv,
    trajectories_to_csv,
    write_trajectory_poses,
)
from .refine import (
    RefineConfig,
    decimate_plan,
    refine_trajectories,
    select_frames_for_regeneration,
    correct_swaps,
    gate_by_confidence,
)
from .svgplot import render_cycle_panels

RUN_MANIFEST = "run.json"
RUN_SCHEMA_VERSION = "1"
FRAME_PREFIX = "frame"


@dataclass(frozen=True)
class CannyParams:
    low_threshold: float = em.DEFAULT_LOW_THRESHOLD
    high_threshold: float = em.DEFAULT_HIGH_THRESHOLD
    gaussian_sigma: float = em.DEFAULT_SIGMA
    kernel_size: int = em.DEFAULT_KERNEL_SIZE
    before_resize: bool = False


@dataclass(frozen=True)
class PipelineConfig:
    """Everything a run needs; hashable to guard stage caches."""

    frames_dir: str
    run_dir: str
    generate_command: tuple[str, ...]
    pose_command: tuple[str, ...]
    meta: SequenceMeta
    refine: RefineConfig = field(default_factory=RefineConfig)
    canny: CannyParams = field(default_factory=CannyParams)
    positive_prompt: str = bk.POSITIVE_PROMPT
    negative_prompt: str = bk.NEGATIVE_PROMPT
    seed: int = 0
    steps: int = 20
    target_size: int = em.CONDITIONING_SIZE
    events_file: str | None = None
    truth_trajectories_csv: str | None = None
    truth_angles_csv: str | None = None
    selective: bool = False
    decimate_k: int = 1
    workers: int = 4
    person_selection: str = "largest"
    backend_timeout_s: float = 600.0

    def validate(self) -> None:
        if not Path(self.frames_dir).is_dir():
            raise ConfigError(f"frames_dir {self.frames_dir} is not a directory")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.decimate_k < 1:
            raise ConfigError("decimate_k must be >= 1")
        if not self.generate_command or not self.pose_command:
            raise ConfigError("generate_command and pose_command are required")
        for name in ("events_file", "truth_trajectories_csv", "truth_angles_csv"):
            value = getattr(self, name)
            if value is not None and not Path(value).is_file():
                raise ConfigError(f"{name} {value} does not exist")
        self.refine.validate()

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["meta"] = {
            "camera_view": self.meta.camera_view.value,
            "prosthetic_side": self.meta.prosthetic_side.value,
            "walking_direction": self.meta.walking_direction.value,
            "subject_height_cm": self.meta.subject_height_cm,
        }
        doc["generate_command"] = list(self.generate_command)
        doc["pose_command"] = list(self.pose_command)
        return doc

    @classmethod
    def from_dict(cls, doc: Mapping) -> "PipelineConfig":
        doc = dict(doc)
        meta = doc.pop("meta")
        refine = doc.pop("refine", {})
        canny = doc.pop("canny", {})
        return cls(
            meta=SequenceMeta(
                camera_view=CameraView(meta["camera_view"]),
                prosthetic_side=Side(meta["prosthetic_side"]),
                walking_direction=WalkingDirection(meta.get("walking_direction", "auto")),
                subject_height_cm=meta.get("subject_height_cm"),
            ),
            refine=RefineConfig(**refine),
            canny=CannyParams(**canny),
            generate_command=tuple(doc.pop("generate_command")),
            pose_command=tuple(doc.pop("pose_command")),
            **doc,
        )

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path


# ---------------------------------------------------------------------------
# Frame discovery

def discover_frames(frames_dir: str | Path) -> list[Path]:
    frames = sorted(Path(frames_dir).glob("*.png"))
    if not frames:
        raise ConfigError(f"no PNG frames in {frames_dir}")
    return frames


def frame_image_size(frame: Path) -> tuple[int, int]:
    with Image.open(frame) as img:
        return img.size


def _frame_name(index: int) -> str:
    return f"{FRAME_PREFIX}_{index:012d}"


# ---------------------------------------------------------------------------
# Stage primitives (also used by the standalone CLI subcommands)

def run_edges_stage(
    frames: Sequence[Path],
    indices: Sequence[int],
    out_dir: Path,
    canny: CannyParams,
    target_size: int,
    workers: int = 4,
) -> list[Path]:
    """Edge maps for the chosen frames, one PNG per frame, frame-parallel."""
    out_dir.mkdir(parents=True, exist_ok=True)

    def one(i: int) -> Path:
        rgb = em.load_rgb(frames[i])
        edge = em.edge_map_for_frame(
            rgb,
            target_size=target_size,
            low_threshold=canny.low_threshold,
            high_threshold=canny.high_threshold,
            gaussian_sigma=canny.gaussian_sigma,
            kernel_size=canny.kernel_size,
            canny_before_resize=canny.before_resize,
        )
        return em.save_edge_map(edge, out_dir / f"{_frame_name(i)}.png")

    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, indices))


def run_generation_stage(
    config: PipelineConfig,
    indices: Sequence[int],
    edges_dir: Path,
    out_dir: Path,
    jobs_dir: Path,
    logs_dir: Path,
    job_tag: str,
) -> bk.BackendJob:
    out_dir.mkdir(parents=True, exist_ok=True)
    requests = [
        bk.GenerationRequest(
            edge_map_path=edges_dir / f"{_frame_name(i)}.png",
            output_path=out_dir / f"{_frame_name(i)}.png",
            positive_prompt=config.positive_prompt,
            negative_prompt=config.negative_prompt,
            seed=config.seed,
            steps=config.steps,
        )
        for i in indices
    ]
    job = bk.BackendJob(
        job_id=job_tag, kind=bk.JobKind.GENERATE, requests=tuple(requests)
    )
    manifest = bk.write_manifest(job, jobs_dir)
    finished = bk.run_backend(
        config.generate_command,
        manifest,
        timeout_s=config.backend_timeout_s,
        log_path=logs_dir / f"{job_tag}.stderr.log",
    )
    if finished.returncode != 0:
        raise BackendError(
            f"generation backend exited {finished.returncode}: "
            f"{finished.diagnostics[:500]}"
        )
    return finished


def run_pose_stage(
    config: PipelineConfig,
    indices: Sequence[int],
    images_dir: Path,
    out_dir: Path,
    jobs_dir: Path,
    logs_dir: Path,
    job_tag: str,
    skip_missing_inputs: bool = False,
) -> bk.BackendJob:
    out_dir.mkdir(parents=True, exist_ok=True)
    requests = []
    for i in indices:
        image = images_dir / f"{_frame_name(i)}.png"
        if skip_missing_inputs and not image.exists():
            continue
        requests.append(
            bk.PoseRequest(
                image_path=image,
                output_pose_path=out_dir / f"{_frame_name(i)}_keypoints.json",
            )
        )
    job = bk.BackendJob(
        job_id=job_tag, kind=bk.JobKind.ESTIMATE_POSE, requests=tuple(requests)
    )
    manifest = bk.write_manifest(job, jobs_dir)
    finished = bk.run_backend(
        config.pose_command,
        manifest,
        timeout_s=config.backend_timeout_s,
        log_path=logs_dir / f"{job_tag}.stderr.log",
    )
    if finished.returncode != 0:
        raise BackendError(
            f"pose backend exited {finished.returncode}: {finished.diagnostics[:500]}"
        )
    return finished


def load_poses_rescaled(
    poses_dir: Path,
    n_frames: int,
    image_size: tuple[int, int],
    person: str = "largest",
    sample_rate: float = 30.0,
) -> TrajectorySet:
    """Assemble pose documents into trajectories in original-frame pixels.

    Pose documents carry the canvas they were estimated on (``canvas_size``);
    coordinates measured on a rescaled canvas (e.g. the generated 512 x 512
    images) are mapped back to the original frame size here so every
    downstream stage works in one pixel space.
    """
    frames = load_pose_directory(poses_dir, person=person, n_frames=n_frames)
    traj = _assemble(frames, sample_rate)
    width, height = image_size
    updates: dict = {}
    # Rescale per frame: documents may mix canvases (merged selective runs).
    scale_x = np.ones(n_frames)
    scale_y = np.ones(n_frames)
    for pose in frames:
        cw, ch = pose.image_size
        if (cw, ch) != (width, height):
            scale_x[pose.frame_index] = width / cw
            scale_y[pose.frame_index] = height / ch
    if np.any(scale_x != 1.0) or np.any(scale_y != 1.0):
        for joint in traj.joints():
            track = traj.track(joint)
            updates[joint] = track.replace(x=track.x * scale_x, y=track.y * scale_y)
        traj = traj.replace_tracks(updates)
    return traj


def _assemble(frames, sample_rate):
    from .model import assemble_trajectories

    return assemble_trajectories(frames, sample_rate)


# ---------------------------------------------------------------------------
# Run manifest bookkeeping

class _RunManifest:
    def __init__(self, run_dir: Path, config_hash: str):
        self.path = run_dir / RUN_MANIFEST
        self.config_hash = config_hash
        if self.path.exists():
            self.doc = json.loads(self.path.read_text())
            if self.doc.get("config_hash") != config_hash:
                # Different config: every cached stage is stale.
                self.doc = self._fresh()
        else:
            self.doc = self._fresh()

    def _fresh(self) -> dict:
        return {
            "schema": RUN_SCHEMA_VERSION,
            "config_hash": self.config_hash,
            "stages": {},
        }

    def stage_done(self, name: str) -> bool:
        entry = self.doc["stages"].get(name)
        return bool(entry and entry.get("status") == "done")

    def mark(self, name: str, status: str, duration_s: float, **extra) -> None:
        self.doc["stages"][name] = {
            "status": status,
            "duration_s": round(duration_s, 3),
            "finished_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
            **extra,
        }
        self.save()

    def save(self) -> None:
        self.path.write_text(json.dumps(self.doc, indent=2, sort_keys=True) + "\n")


@dataclass
class RunResult:
    run_dir: Path
    executed_stages: list[str]
    skipped_stages: list[str]
    report: ErrorReport | None = None


# ---------------------------------------------------------------------------
# Full pipeline

def run_full(config: PipelineConfig, subdir: str | None = None) -> RunResult:
    """Execute the regeneration workflow end to end (resumable)."""
    config.validate()
    run_dir = Path(config.run_dir) if subdir is None else Path(config.run_dir) / subdir
    run_dir.mkdir(parents=True, exist_ok=True)
    chash = config.config_hash()
    config.save(run_dir / "config.json")
    manifest = _RunManifest(run_dir, chash)
    jobs_dir = run_dir / "jobs"
    logs_dir = run_dir / "logs"

    frames = discover_frames(config.frames_dir)
    n_frames = len(frames)
    image_size = frame_image_size(frames[0])
    sample_rate = 30.0

    kept = (
        decimate_plan(n_frames, config.decimate_k)
        if config.decimate_k > 1
        else list(range(n_frames))
    )
    kept_set = set(kept)

    state: dict = {}

    def stage_prepass(out: Path) -> dict:
        # Pose backend on the ORIGINAL frames, staged under canonical names.
        staged = run_dir / "prepass_frames"
        staged.mkdir(parents=True, exist_ok=True)
        for i, frame in enumerate(frames):
            target = staged / f"{_frame_name(i)}.png"
            if not target.exists():
                shutil.copyfile(frame, target)
        run_pose_stage(
            config, range(n_frames), staged, out, jobs_dir, logs_dir,
            job_tag=f"prepass-{chash[:8]}",
        )
        return {}

    def stage_selection(out: Path) -> dict:
        out.mkdir(parents=True, exist_ok=True)
        raw = load_poses_rescaled(
            run_dir / "poses_prepass", n_frames, image_size,
            config.person_selection, sample_rate,
        )
        flagged: set[int] = set()
        try:
            swap = correct_swaps(
                gate_by_confidence(raw, config.refine.confidence_threshold),
                config.refine.swap_noise_floor_px,
                use_arm_cue=config.refine.use_arm_cue,
            )
            flagged.update(swap.swapped_frames)
            flagged.update(swap.review_frames)
        except GaitPipelineError:
            pass
        selected = select_frames_for_regeneration(
            raw,
            threshold=config.refine.confidence_threshold,
            outlier_residual_px=config.refine.outlier_residual_px,
            flagged_frames=flagged,
        )
        (out / "selection.json").write_text(
            json.dumps(sorted(selected)) + "\n"
        )
        return {"selected": len(selected)}

    def _selected_frames() -> list[int]:
        if not config.selective:
            return [i for i in range(n_frames) if i in kept_set]
        sel = json.loads((run_dir / "selection" / "selection.json").read_text())
        return [i for i in sel if i in kept_set]

    def stage_edges(out: Path) -> dict:
        indices = _selected_frames()
        run_edges_stage(frames, indices, out, config.canny, config.target_size, config.workers)
        return {"frames": len(indices)}

    def stage_generate(out: Path) -> dict:
        indices = _selected_frames()
        if not indices:
            # Selective mode with nothing flagged: no backend call needed.
            out.mkdir(parents=True, exist_ok=True)
            return {"requests": 0}
        job = run_generation_stage(
            config, indices, run_dir / "edges", out, jobs_dir, logs_dir,
            job_tag=f"generate-{chash[:8]}",
        )
        return {"requests": len(job.requests), "missing": len(job.missing_outputs)}

    def stage_pose(out: Path) -> dict:
        indices = _selected_frames()
        if not indices:
            out.mkdir(parents=True, exist_ok=True)
            return {"requests": 0}
        job = run_pose_stage(
            config, indices, run_dir / "generated", out, jobs_dir, logs_dir,
            job_tag=f"pose-{chash[:8]}", skip_missing_inputs=True,
        )
        return {"requests": len(job.requests), "missing": len(job.missing_outputs)}

    def stage_merge(out: Path) -> dict:
        out.mkdir(parents=True, exist_ok=True)
        selected = set(_selected_frames())
        raw_dir = run_dir / "poses_prepass"
        regen_dir = run_dir / "poses_raw"
        copied = 0
        for i in range(n_frames):
            if i not in kept_set:
                continue
            name = f"{_frame_name(i)}_keypoints.json"
            source = regen_dir / name if i in selected and (regen_dir / name).exists() else raw_dir / name
            if source.exists():
                shutil.copyfile(source, out / name)
                copied += 1
        return {"poses": copied}

    def stage_refine(out: Path) -> dict:
        out.mkdir(parents=True, exist_ok=True)
        poses_dir = run_dir / ("poses_merged" if config.selective else "poses_raw")
        traj = load_poses_rescaled(
            poses_dir, n_frames, image_size, config.person_selection, sample_rate
        )
        if config.decimate_k > 1:
            # Dropped frames carry no pose files and are already invalid.
            pass
        refined, report = refine_trajectories(traj, config.refine)
        trajectories_to_csv(refined, out / "trajectories.csv")
        write_trajectory_poses(refined, out / "documents", image_size, FRAME_PREFIX)
        (out / "refine_report.json").write_text(
            json.dumps(
                {
                    "gated_samples": report.gated_samples,
                    "interpolated_samples": report.interpolated_samples,
                    "swapped_frames": list(report.swapped_frames),
                    "swap_orientation": report.swap_orientation,
                    "review_frames": list(report.review_frames),
                    "swap_correction_skipped": report.swap_correction_skipped,
                },
                indent=2,
                sort_keys=True,
            )
            + "\n"
        )
        return {"swapped": len(report.swapped_frames)}

    def stage_kinematics(out: Path) -> dict:
        out.mkdir(parents=True, exist_ok=True)
        traj = trajectories_from_csv(run_dir / "poses_refined" / "trajectories.csv")
        angles = compute_joint_angles(traj, config.meta)
        if config.refine.filter_angles:
            angles = filter_angle_series(
                angles, sample_rate, config.refine.cutoff_hz,
                config.refine.butterworth_order, config.refine.zero_phase,
            )
        angles_to_csv(angles, out / "angles.csv")
        return {}

    def stage_cycles(out: Path) -> dict:
        out.mkdir(parents=True, exist_ok=True)
        if config.events_file is None:
            (out / "SKIPPED.txt").write_text("no events file configured\n")
            return {"skipped": 1}
        events = load_events(config.events_file)
        angles = angles_from_csv(run_dir / "kinematics" / "angles.csv")
        ensembles, notes = build_ensembles(angles, events)
        ensembles_to_csv(ensembles, out / "ensembles.csv")
        plot_data_to_csv({"pipeline": ensembles}, out / "plot_data.csv")
        render_cycle_panels({"pipeline": ensembles}, out / "panels.svg")
        if notes:
            (out / "notes.txt").write_text("\n".join(notes) + "\n")
        return {"cycles": sum(e.n_cycles for e in ensembles.values())}

    def stage_report(out: Path) -> dict:
        out.mkdir(parents=True, exist_ok=True)
        report = build_run_report(config, run_dir, n_frames, image_size, sample_rate)
        report.save(out / "report.json")
        (out / "report.txt").write_text(render_report_table(report))
        state["report"] = report
        return {}

    if config.selective:
        stages: list[tuple[str, str, Callable[[Path], dict]]] = [
            ("prepass", "poses_prepass", stage_prepass),
            ("selection", "selection", stage_selection),
            ("edges", "edges", stage_edges),
            ("generate", "generated", stage_generate),
            ("pose", "poses_raw", stage_pose),
            ("merge", "poses_merged", stage_merge),
        ]
    else:
        stages = [
            ("edges", "edges", stage_edges),
            ("generate", "generated", stage_generate),
            ("pose", "poses_raw", stage_pose),
        ]
    stages += [
        ("refine", "poses_refined", stage_refine),
        ("kinematics", "kinematics", stage_kinematics),
        ("cycles", "cycles", stage_cycles),
        ("report", "report", stage_report),
    ]

    executed: list[str] = []
    skipped: list[str] = []
    rebuild = False
    for name, dirname, fn in stages:
        stage_dir = run_dir / dirname
        if not rebuild and manifest.stage_done(name) and stage_dir.exists():
            skipped.append(name)
            continue
        rebuild = True
        if stage_dir.exists():
            shutil.rmtree(stage_dir)
        stage_dir.mkdir(parents=True, exist_ok=True)
        started = time.monotonic()
        try:
            extra = fn(stage_dir)
        except BackendError as exc:
            manifest.mark(name, "failed", time.monotonic() - started, error=str(exc))
            raise
        except GaitPipelineError as exc:
            manifest.mark(name, "failed", time.monotonic() - started, error=str(exc))
            raise StageError(name, str(exc)) from exc
        manifest.mark(name, "done", time.monotonic() - started, **(extra or {}))
        executed.append(name)

    return RunResult(
        run_dir=run_dir,
        executed_stages=executed,
        skipped_stages=skipped,
        report=state.get("report"),
    )


# ---------------------------------------------------------------------------
# Report assembly (recomputable from persisted stage outputs alone)

def _role_for_side(side: Side, meta: SequenceMeta) -> LimbRole:
    return LimbRole.PROSTHETIC if side is meta.prosthetic_side else LimbRole.INTACT


def build_run_report(
    config: PipelineConfig,
    run_dir: Path,
    n_frames: int,
    image_size: tuple[int, int],
    sample_rate: float,
    method: str = "pipeline",
) -> ErrorReport:
    notes: list[str] = []
    coordinates: list[CoordinateRow] = []
    kinematics_rows: list[KinematicRow] = []
    improvements: dict[str, float] = {}

    raw_dir = run_dir / ("poses_prepass" if config.selective else "poses_raw")
    failure: dict[str, dict[str, float]] = {}
    if raw_dir.exists():
        poses = load_pose_directory(
            raw_dir, person=config.person_selection, n_frames=n_frames
        )
        stats = failure_frame_stats(poses, config.refine.confidence_threshold)
        failure[method] = {config.meta.camera_view.value: round(stats.percent, 3)}

    truth_traj = None
    if config.truth_trajectories_csv:
        truth_traj = trajectories_from_csv(config.truth_trajectories_csv)
        refined = trajectories_from_csv(run_dir / "poses_refined" / "trajectories.csv")
        for side in Side:
            try:
                res = coordinate_mae(refined, truth_traj, side_joints(side))
            except GaitPipelineError as exc:
                notes.append(f"coordinate MAE {side.value}: {exc}")
                continue
            coordinates.append(
                CoordinateRow(
                    method=method,
                    limb_role=_role_for_side(side, config.meta),
                    mae_px=res.mae,
                    sd_px=res.sd,
                    n=res.n,
                )
            )

    if config.truth_angles_csv and config.events_file:
        truth_angles = angles_from_csv(config.truth_angles_csv)
        events = load_events(config.events_file)
        truth_ens, _ = build_ensembles(truth_angles, events)
        pred_angles = angles_from_csv(run_dir / "kinematics" / "angles.csv")
        pred_ens, _ = build_ensembles(pred_angles, events)
        for side in Side:
            if side not in pred_ens or side not in truth_ens:
                continue
            result = angle_mae(pred_ens[side], truth_ens[side])
            role = _role_for_side(side, config.meta)
            for joint, res in result.per_joint.items():
                kinematics_rows.append(
                    KinematicRow(
                        method=method, limb_role=role, joint=joint,
                        mae_deg=res.mae, sd_deg=res.sd,
                    )
                )
            kinematics_rows.append(
                KinematicRow(
                    method=method, limb_role=role, joint="all",
                    mae_deg=result.pooled.mae, sd_deg=result.pooled.sd,
                )
            )

    scale = ScaleEstimate.none()
    if config.meta.subject_height_cm:
        # Height in pixels from the refined trajectories' vertical extent.
        try:
            refined = trajectories_from_csv(
                run_dir / "poses_refined" / "trajectories.csv"
            )
            height_px = _subject_height_px(refined)
            if height_px is not None:
                scale = estimate_scale(config.meta.subject_height_cm, height_px)
        except (OSError, GaitPipelineError) as exc:
            notes.append(f"scale estimate unavailable: {exc}")

    return ErrorReport(
        coordinates=tuple(coordinates),
        kinematics=tuple(kinematics_rows),
        failure_percent_by_view=failure,
        improvement_by_role=improvements,
        scale=scale,
        notes=tuple(notes),
    )


def _subject_height_px(traj: TrajectorySet) -> float | None:
    """Median vertical extent from neck to the lower ankle, scaled to full
    stature by the standard ~1.18 neck-to-ankle fraction of body height."""
    from .model import JointId

    needed = (JointId.NECK, JointId.L_ANKLE, JointId.R_ANKLE)
    if not all(traj.has_joint(j) for j in needed):
        return None
    neck = traj.track(JointId.NECK)
    la = traj.track(JointId.L_ANKLE)
    ra = traj.track(JointId.R_ANKLE)
    ok = neck.valid & la.valid & ra.valid
    if not ok.any():
        return None
    lower = np.maximum(la.y[ok], ra.y[ok])
    extent = float(np.median(lower - neck.y[ok]))
    if extent <= 0:
        return None
    return extent * 1.18


# ---------------------------------------------------------------------------
# Method comparison (raw pose pass vs regeneration workflow)

def run_compare(config: PipelineConfig) -> RunResult:
    """Run the raw-pose baseline and the regeneration workflow on the same
    frames and emit a comparative report with improvement percentages."""
    config.validate()
    run_dir = Path(config.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)

    regen_cfg = replace(config, run_dir=str(run_dir))
    regen_result = run_full(regen_cfg, subdir="regenerated")

    raw_cfg = replace(config, run_dir=str(run_dir), selective=False)
    raw_result = _run_raw_baseline(raw_cfg, run_dir / "rawpose")

    report = _compare_reports(config, run_dir)
    report_dir = run_dir / "compare"
    report_dir.mkdir(parents=True, exist_ok=True)
    report.save(report_dir / "report.json")
    (report_dir / "report.txt").write_text(render_report_table(report))

    # Combined plot data across both methods when cycles ran.
    per_method: dict[str, dict[Side, CycleEnsemble]] = {}
    if config.events_file:
        events = load_events(config.events_file)
        for method, sub in (("raw_pose", "rawpose"), ("regenerated", "regenerated")):
            angles_csv = run_dir / sub / "kinematics" / "angles.csv"
            if angles_csv.exists():
                ens, _ = build_ensembles(angles_from_csv(angles_csv), events)
                per_method[method] = ens
        if config.truth_angles_csv:
            ens, _ = build_ensembles(angles_from_csv(config.truth_angles_csv), events)
            per_method["truth"] = ens
        if per_method:
            plot_data_to_csv(per_method, report_dir / "plot_data.csv")
            render_cycle_panels(per_method, report_dir / "panels.svg")

    return RunResult(
        run_dir=run_dir,
        executed_stages=regen_result.executed_stages + raw_result.executed_stages,
        skipped_stages=regen_result.skipped_stages + raw_result.skipped_stages,
        report=report,
    )


def _run_raw_baseline(config: PipelineConfig, run_dir: Path) -> RunResult:
    """Pose backend directly on the original frames, then the same
    refinement and analysis stages."""
    run_dir.mkdir(parents=True, exist_ok=True)
    chash = config.config_hash()
    manifest = _RunManifest(run_dir, chash)
    jobs_dir = run_dir / "jobs"
    logs_dir = run_dir / "logs"
    frames = discover_frames(config.frames_dir)
    n_frames = len(frames)
    image_size = frame_image_size(frames[0])
    sample_rate = 30.0

    def stage_pose(out: Path) -> dict:
        staged = run_dir / "frames_staged"
        staged.mkdir(parents=True, exist_ok=True)
        for i, frame in enumerate(frames):
            target = staged / f"{_frame_name(i)}.png"
            if not target.exists():
                shutil.copyfile(frame, target)
        run_pose_stage(
            config, range(n_frames), staged, out, jobs_dir, logs_dir,
            job_tag=f"rawpose-{chash[:8]}",
        )
        return {}

    def stage_refine(out: Path) -> dict:
        out.mkdir(parents=True, exist_ok=True)
        traj = load_poses_rescaled(
            run_dir / "poses_raw", n_frames, image_size,
            config.person_selection, sample_rate,
        )
        refined, _report = refine_trajectories(traj, config.refine)
        trajectories_to_csv(refined, out / "trajectories.csv")
        return {}

    def stage_kinematics(out: Path) -> dict:
        out.mkdir(parents=True, exist_ok=True)
        traj = trajectories_from_csv(run_dir / "poses_refined" / "trajectories.csv")
        angles = compute_joint_angles(traj, config.meta)
        angles_to_csv(angles, out / "angles.csv")
        return {}

    def stage_cycles(out: Path) -> dict:
        out.mkdir(parents=True, exist_ok=True)
        if config.events_file is None:
            (out / "SKIPPED.txt").write_text("no events file configured\n")
            return {"skipped": 1}
        events = load_events(config.events_file)
        angles = angles_from_csv(run_dir / "kinematics" / "angles.csv")
        ensembles, notes = build_ensembles(angles, events)
        ensembles_to_csv(ensembles, out / "ensembles.csv")
        if notes:
            (out / "notes.txt").write_text("\n".join(notes) + "\n")
        return {}

    stages = [
        ("pose", "poses_raw", stage_pose),
        ("refine", "poses_refined", stage_refine),
        ("kinematics", "kinematics", stage_kinematics),
        ("cycles", "cycles", stage_cycles),
    ]
    executed: list[str] = []
    skipped: list[str] = []
    rebuild = False
    for name, dirname, fn in stages:
        stage_dir = run_dir / dirname
        if not rebuild and manifest.stage_done(name) and stage_dir.exists():
            skipped.append(name)
            continue
        rebuild = True
        if stage_dir.exists():
            shutil.rmtree(stage_dir)
        stage_dir.mkdir(parents=True, exist_ok=True)
        started = time.monotonic()
        try:
            extra = fn(stage_dir)
        except BackendError as exc:
            manifest.mark(name, "failed", time.monotonic() - started, error=str(exc))
            raise
        except GaitPipelineError as exc:
            manifest.mark(name, "failed", time.monotonic() - started, error=str(exc))
            raise StageError(name, str(exc)) from exc
        manifest.mark(name, "done", time.monotonic() - started, **(extra or {}))
        executed.append(name)
    return RunResult(run_dir=run_dir, executed_stages=executed, skipped_stages=skipped)


def _compare_reports(config: PipelineConfig, run_dir: Path) -> ErrorReport:
    """Table-shaped comparison: method x limb role x metric, with the
    coordinate improvement percentage on each limb role."""
    notes: list[str] = []
    coordinates: list[CoordinateRow] = []
    kinematics_rows: list[KinematicRow] = []
    failure: dict[str, dict[str, float]] = {}
    improvements: dict[str, float] = {}

    frames = discover_frames(config.frames_dir)
    n_frames = len(frames)
    view = config.meta.camera_view.value
    methods = {"raw_pose": run_dir / "rawpose", "regenerated": run_dir / "regenerated"}

    for method, sub in methods.items():
        raw_poses = sub / ("poses_prepass" if (method == "regenerated" and config.selective) else "poses_raw")
        if raw_poses.exists():
            poses = load_pose_directory(
                raw_poses, person=config.person_selection, n_frames=n_frames
            )
            stats = failure_frame_stats(poses, config.refine.confidence_threshold)
            failure[method] = {view: round(stats.percent, 3)}

    truth_traj = (
        trajectories_from_csv(config.truth_trajectories_csv)
        if config.truth_trajectories_csv
        else None
    )
    mae_by_role_method: dict[tuple[str, str], float] = {}
    if truth_traj is not None:
        for method, sub in methods.items():
            csv = sub / "poses_refined" / "trajectories.csv"
            if not csv.exists():
                continue
            refined = trajectories_from_csv(csv)
            for side in Side:
                role = _role_for_side(side, config.meta)
                try:
                    res = coordinate_mae(refined, truth_traj, side_joints(side))
                except GaitPipelineError as exc:
                    notes.append(f"{method}/{side.value}: {exc}")
                    continue
                coordinates.append(
                    CoordinateRow(
                        method=method, limb_role=role,
                        mae_px=res.mae, sd_px=res.sd, n=res.n,
                    )
                )
                mae_by_role_method[(role.value, method)] = res.mae
        for role in LimbRole:
            before = mae_by_role_method.get((role.value, "raw_pose"))
            after = mae_by_role_method.get((role.value, "regenerated"))
            if before and after is not None and before > 0:
                improvements[role.value] = improvement_percent(before, after)

    if config.truth_angles_csv and config.events_file:
        events = load_events(config.events_file)
        truth_ens, _ = build_ensembles(angles_from_csv(config.truth_angles_csv), events)
        for method, sub in methods.items():
            angles_csv = sub / "kinematics" / "angles.csv"
            if not angles_csv.exists():
                continue
            pred_ens, _ = build_ensembles(angles_from_csv(angles_csv), events)
            for side in Side:
                if side not in pred_ens or side not in truth_ens:
                    continue
                result = angle_mae(pred_ens[side], truth_ens[side])
                role = _role_for_side(side, config.meta)
                for joint, res in result.per_joint.items():
                    kinematics_rows.append(
                        KinematicRow(
                            method=method, limb_role=role, joint=joint,
                            mae_deg=res.mae, sd_deg=res.sd,
                        )
                    )
                kinematics_rows.append(
                    KinematicRow(
                        method=method, limb_role=role, joint="all",
                        mae_deg=result.pooled.mae, sd_deg=result.pooled.sd,
                    )
                )

    scale = ScaleEstimate.none()
    if config.meta.subject_height_cm:
        csv = run_dir / "regenerated" / "poses_refined" / "trajectories.csv"
        if csv.exists():
            height_px = _subject_height_px(trajectories_from_csv(csv))
            if height_px:
                scale = estimate_scale(config.meta.subject_height_cm, height_px)

    return ErrorReport(
        coordinates=tuple(coordinates),
        kinematics=tuple(kinematics_rows),
        failure_percent_by_view=failure,
        improvement_by_role=improvements,
        scale=scale,
        notes=tuple(notes),
    )
