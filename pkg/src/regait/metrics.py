"""Error quantification: coordinate and kinematic MAE, failure-frame
statistics, improvement percentages and pixel-to-metric scaling, plus the
report document that ties them together.

MAE here means the mean Euclidean distance in pixels for coordinates and
the mean absolute difference in degrees for angles, both computed only over
samples valid in prediction AND ground truth. Standard deviations are taken
over samples; that choice is recorded in the report.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import EmptySeriesError
from .gaitcycle import CycleEnsemble
from .kinematics import ANGLE_JOINTS
from .model import (
    LOWER_LIMB_JOINTS,
    LOWER_LIMB_LEFT,
    LOWER_LIMB_RIGHT,
    FramePose,
    JointId,
    Side,
    TrajectorySet,
)

REPORT_SCHEMA_VERSION = "1"
PIXEL_DISPLAY_CAP = 100.0  # coordinate errors above this render as ">100"


class LimbRole(Enum):
    PROSTHETIC = "prosthetic"
    INTACT = "intact"


def side_joints(side: Side) -> tuple[JointId, ...]:
    return LOWER_LIMB_LEFT if side is Side.LEFT else LOWER_LIMB_RIGHT


@dataclass(frozen=True)
class MaeResult:
    mae: float
    sd: float
    n: int


def coordinate_mae(
    pred: TrajectorySet,
    truth: TrajectorySet,
    joints: Iterable[JointId] = LOWER_LIMB_JOINTS,
) -> MaeResult:
    """Mean and SD of per-sample Euclidean distances over jointly valid
    samples of the given joints."""
    if pred.n_frames != truth.n_frames:
        raise ValueError(
            f"frame ranges differ: {pred.n_frames} vs {truth.n_frames}"
        )
    distances = []
    for joint in joints:
        if not (pred.has_joint(joint) and truth.has_joint(joint)):
            continue
        p, t = pred.track(joint), truth.track(joint)
        both = p.valid & t.valid
        if both.any():
            distances.append(np.hypot(p.x[both] - t.x[both], p.y[both] - t.y[both]))
    if not distances:
        raise EmptySeriesError("no jointly valid samples between prediction and truth")
    d = np.concatenate(distances)
    return MaeResult(mae=float(d.mean()), sd=float(d.std(ddof=0)), n=int(d.size))


@dataclass(frozen=True)
class AngleMae:
    per_joint: Mapping[str, MaeResult]
    pooled: MaeResult


def angle_mae(pred: CycleEnsemble, truth: CycleEnsemble) -> AngleMae:
    """MAE between the 101-point ensemble mean curves, per joint and pooled."""
    if pred.side is not truth.side:
        raise ValueError(f"sides differ: {pred.side.value} vs {truth.side.value}")
    per_joint: dict[str, MaeResult] = {}
    pooled: list[np.ndarray] = []
    for joint in ANGLE_JOINTS:
        p = pred.mean[joint]
        t = truth.mean[joint]
        both = np.isfinite(p) & np.isfinite(t)
        if not both.any():
            continue
        diff = np.abs(p[both] - t[both])
        per_joint[joint] = MaeResult(
            mae=float(diff.mean()), sd=float(diff.std(ddof=0)), n=int(diff.size)
        )
        pooled.append(diff)
    if not pooled:
        raise EmptySeriesError("ensembles share no valid points")
    alldiff = np.concatenate(pooled)
    return AngleMae(
        per_joint=per_joint,
        pooled=MaeResult(
            mae=float(alldiff.mean()), sd=float(alldiff.std(ddof=0)), n=int(alldiff.size)
        ),
    )


@dataclass(frozen=True)
class FailureStats:
    n_frames: int
    failed_frames: tuple[int, ...]

    @property
    def percent(self) -> float:
        return 100.0 * len(self.failed_frames) / self.n_frames if self.n_frames else 0.0


def failure_frame_stats(
    poses: Sequence[FramePose], threshold: float = 0.5
) -> FailureStats:
    """A frame fails when any of the 8 lower-limb joints is missing or has
    confidence below ``threshold``."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold {threshold} outside [0, 1]")
    failed = []
    for pose in poses:
        for joint in LOWER_LIMB_JOINTS:
            kp = pose.get(joint)
            if kp is None or kp.confidence < threshold:
                failed.append(pose.frame_index)
                break
    return FailureStats(n_frames=len(poses), failed_frames=tuple(failed))


def improvement_percent(mae_before: float, mae_after: float) -> float:
    """Relative error reduction, full precision; round only for display."""
    if mae_before <= 0:
        raise ValueError(f"mae_before must be positive, got {mae_before}")
    return 100.0 * (mae_before - mae_after) / mae_before


def format_improvement(percent: float) -> str:
    return f"{round(percent):d}%"


def format_px(value: float) -> str:
    """Coordinate errors above the display cap render as '>100'."""
    if value > PIXEL_DISPLAY_CAP:
        return ">100"
    return f"{value:.2f}"


class ScaleSource(Enum):
    SUBJECT_HEIGHT = "subject_height"
    NONE = "none"


@dataclass(frozen=True)
class ScaleEstimate:
    cm_per_pixel: float | None
    source: ScaleSource

    @classmethod
    def none(cls) -> "ScaleEstimate":
        return cls(cm_per_pixel=None, source=ScaleSource.NONE)


def estimate_scale(subject_height_cm: float, subject_height_px: float) -> ScaleEstimate:
    """cm-per-pixel from an assumed subject height and its pixel extent."""
    if subject_height_cm <= 0 or subject_height_px <= 0:
        raise ValueError(
            f"heights must be positive, got {subject_height_cm} cm / {subject_height_px} px"
        )
    return ScaleEstimate(
        cm_per_pixel=subject_height_cm / subject_height_px,
        source=ScaleSource.SUBJECT_HEIGHT,
    )


# ---------------------------------------------------------------------------
# Report document

@dataclass(frozen=True)
class CoordinateRow:
    method: str
    limb_role: LimbRole
    mae_px: float
    sd_px: float
    n: int


@dataclass(frozen=True)
class KinematicRow:
    method: str
    limb_role: LimbRole
    joint: str  # hip | knee | ankle | all
    mae_deg: float
    sd_deg: float


@dataclass(frozen=True)
class ErrorReport:
    """Machine-readable error accounting for one sequence or comparison."""

    coordinates: tuple[CoordinateRow, ...] = ()
    kinematics: tuple[KinematicRow, ...] = ()
    failure_percent_by_view: Mapping[str, Mapping[str, float]] = field(
        default_factory=dict
    )  # method -> view -> percent
    improvement_by_role: Mapping[str, float] = field(default_factory=dict)
    scale: ScaleEstimate = field(default_factory=ScaleEstimate.none)
    sd_definition: str = "over samples"
    schema_version: str = REPORT_SCHEMA_VERSION
    notes: tuple[str, ...] = ()

    def to_json(self) -> str:
        doc = {
            "schema_version": self.schema_version,
            "sd_definition": self.sd_definition,
            "coordinates_px": [
                {
                    "method": r.method,
                    "limb_role": r.limb_role.value,
                    "mae": r.mae_px,
                    "sd": r.sd_px,
                    "n": r.n,
                }
                for r in self.coordinates
            ],
            "kinematics_deg": [
                {
                    "method": r.method,
                    "limb_role": r.limb_role.value,
                    "joint": r.joint,
                    "mae": r.mae_deg,
                    "sd": r.sd_deg,
                }
                for r in self.kinematics
            ],
            "failure_percent_by_view": {
                m: dict(v) for m, v in self.failure_percent_by_view.items()
            },
            "improvement_percent_by_role": dict(self.improvement_by_role),
            "scale": {
                "cm_per_pixel": self.scale.cm_per_pixel,
                "source": self.scale.source.value,
            },
            "notes": list(self.notes),
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json() + "\n")
        return path


def render_report_table(report: ErrorReport) -> str:
    """Human-readable table: method x limb role x metric."""
    lines: list[str] = []
    methods = sorted({r.method for r in report.coordinates})
    if report.coordinates:
        lines.append("Joint coordinates MAE (SD), pixels")
        header = f"{'limb':<12}" + "".join(f"{m:>22}" for m in methods)
        lines.append(header)
        for role in LimbRole:
            cells = []
            for method in methods:
                row = next(
                    (
                        r
                        for r in report.coordinates
                        if r.method == method and r.limb_role is role
                    ),
                    None,
                )
                cells.append(
                    f"{format_px(row.mae_px)} ({format_px(row.sd_px)})" if row else "-"
                )
            lines.append(f"{role.value:<12}" + "".join(f"{c:>22}" for c in cells))
        lines.append("")
    kin_methods = sorted({r.method for r in report.kinematics})
    if report.kinematics:
        lines.append("Joint kinematics MAE (SD), degrees")
        lines.append(f"{'limb/joint':<16}" + "".join(f"{m:>22}" for m in kin_methods))
        for role in LimbRole:
            for joint in (*ANGLE_JOINTS, "all"):
                rows = [
                    next(
                        (
                            r
                            for r in report.kinematics
                            if r.method == m and r.limb_role is role and r.joint == joint
                        ),
                        None,
                    )
                    for m in kin_methods
                ]
                if not any(rows):
                    continue
                cells = [
                    f"{r.mae_deg:.2f} ({r.sd_deg:.2f})" if r else "-" for r in rows
                ]
                lines.append(
                    f"{role.value + '/' + joint:<16}"
                    + "".join(f"{c:>22}" for c in cells)
                )
        lines.append("")
    if report.improvement_by_role:
        lines.append("Coordinate MAE reduction by the regeneration workflow")
        for role, pct in sorted(report.improvement_by_role.items()):
            lines.append(f"  {role}: {format_improvement(pct)}")
        lines.append("")
    if report.failure_percent_by_view:
        lines.append("Frames with incomplete lower-limb keypoints, % of total")
        for method, views in sorted(report.failure_percent_by_view.items()):
            for view, pct in sorted(views.items()):
                lines.append(f"  {method:<12} {view:<20} {pct:.1f}%")
        lines.append("")
    if report.scale.cm_per_pixel is not None:
        lines.append(
            f"Scale: {report.scale.cm_per_pixel:.3f} cm/px "
            f"(source: {report.scale.source.value})"
        )
    for note in report.notes:
        lines.append(f"note: {note}")
    return "\n".join(lines).rstrip() + "\n"
