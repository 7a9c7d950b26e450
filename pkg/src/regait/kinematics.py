"""2D sagittal inverse kinematics: hip, knee and ankle angles.

Sign conventions (image y grows downward; "vertical" means the +y image
direction):

* hip: signed angle between the thigh (hip -> knee) and the downward
  vertical through the hip; positive when the knee lies anterior (flexion).
* knee: signed deviation of the shank (knee -> ankle) from the extended
  thigh line; positive when the ankle falls posterior to it (flexion).
* ankle: signed angle between the foot (ankle -> toe) and the
  anterior-pointing perpendicular to the shank; positive when the toe is
  rotated toward the shank (dorsiflexion).

All angles come from atan2 of cross/dot products, never acos, so signs are
native and precision holds near 0 and 180 degrees. Because the image y axis
points down, cross-product signs are the mirror of the usual math
convention; the formulas below bake that in and the test suite pins them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import (
    DegenerateSegmentError,
    DirectionAmbiguousError,
    ViewUnsupportedError,
)
from .model import (
    JointId,
    Keypoint2D,
    SequenceMeta,
    Side,
    TrajectorySet,
    WalkingDirection,
)

COINCIDENT_EPS = 1e-9
DIRECTION_MARGIN_PX_PER_FRAME = 0.2  # 2 px/frame typical gait speed x 0.1

SIDE_JOINTS: Mapping[Side, Mapping[str, JointId]] = {
    Side.LEFT: {
        "hip": JointId.L_HIP,
        "knee": JointId.L_KNEE,
        "ankle": JointId.L_ANKLE,
        "toe": JointId.L_BIG_TOE,
    },
    Side.RIGHT: {
        "hip": JointId.R_HIP,
        "knee": JointId.R_KNEE,
        "ankle": JointId.R_ANKLE,
        "toe": JointId.R_BIG_TOE,
    },
}


@dataclass(frozen=True)
class AnteriorDirection:
    """Unit vector along the walking direction in the image plane."""

    sign: int  # +1 for +x, -1 for -x

    def __post_init__(self):
        if self.sign not in (-1, 1):
            raise ValueError(f"sign must be +1 or -1, got {self.sign}")

    @classmethod
    def from_walking_direction(cls, direction: WalkingDirection) -> "AnteriorDirection":
        if direction is WalkingDirection.IMAGE_PLUS_X:
            return cls(1)
        if direction is WalkingDirection.IMAGE_MINUS_X:
            return cls(-1)
        raise ValueError("AUTO direction must be inferred from trajectories")


def infer_walking_direction(
    traj: TrajectorySet, margin_px_per_frame: float = DIRECTION_MARGIN_PX_PER_FRAME
) -> AnteriorDirection:
    """Infer the anterior direction from the mean horizontal displacement of
    the mid-hip keypoint.

    Requires the hip valid in at least half the frames and a mean
    displacement above the ambiguity margin.
    """
    track = traj.track(JointId.MID_HIP)
    valid_idx = np.flatnonzero(track.valid)
    if len(valid_idx) < max(2, traj.n_frames // 2):
        raise DirectionAmbiguousError(
            f"mid-hip valid in only {len(valid_idx)}/{traj.n_frames} frames"
        )
    span = valid_idx[-1] - valid_idx[0]
    if span == 0:
        raise DirectionAmbiguousError("mid-hip valid in a single frame")
    mean_velocity = (track.x[valid_idx[-1]] - track.x[valid_idx[0]]) / span
    if abs(mean_velocity) <= margin_px_per_frame:
        raise DirectionAmbiguousError(
            f"mean hip displacement {mean_velocity:.3f} px/frame is within the "
            f"{margin_px_per_frame} px/frame ambiguity margin; set the walking "
            "direction explicitly"
        )
    return AnteriorDirection(1 if mean_velocity > 0 else -1)


def resolve_anterior(traj: TrajectorySet, meta: SequenceMeta) -> AnteriorDirection:
    """Configured direction wins; AUTO falls back to inference."""
    if meta.walking_direction is WalkingDirection.AUTO:
        return infer_walking_direction(traj)
    return AnteriorDirection.from_walking_direction(meta.walking_direction)


def _segment(a: Keypoint2D, b: Keypoint2D, what: str) -> tuple[float, float]:
    dx, dy = b.x - a.x, b.y - a.y
    if math.hypot(dx, dy) < COINCIDENT_EPS:
        raise DegenerateSegmentError(f"{what}: keypoints coincide at ({a.x}, {a.y})")
    return dx, dy


def hip_angle(hip: Keypoint2D, knee: Keypoint2D, anterior: AnteriorDirection) -> float:
    """Thigh versus the downward vertical, positive toward anterior."""
    vx, vy = _segment(hip, knee, "thigh")
    return math.degrees(math.atan2(anterior.sign * vx, vy))


def knee_angle(
    hip: Keypoint2D, knee: Keypoint2D, ankle: Keypoint2D, anterior: AnteriorDirection
) -> float:
    """Shank deviation from the extended thigh line, positive when the ankle
    is posterior (flexion)."""
    ux, uy = _segment(hip, knee, "thigh")
    sx, sy = _segment(knee, ankle, "shank")
    cross = ux * sy - uy * sx
    dot = ux * sx + uy * sy
    return anterior.sign * math.degrees(math.atan2(cross, dot))


def ankle_angle(
    knee: Keypoint2D, ankle: Keypoint2D, toe: Keypoint2D, anterior: AnteriorDirection
) -> float:
    """Foot versus the anterior perpendicular to the shank, positive for
    dorsiflexion (toe rotated toward the shank)."""
    sx, sy = _segment(knee, ankle, "shank")
    fx, fy = _segment(ankle, toe, "foot")
    # Anterior-pointing 90-degree line to the shank.
    px, py = anterior.sign * sy, -anterior.sign * sx
    cross = px * fy - py * fx
    dot = px * fx + py * fy
    return -anterior.sign * math.degrees(math.atan2(cross, dot))


@dataclass(frozen=True)
class JointAngleSeries:
    """Hip/knee/ankle angle series for one side with per-sample validity."""

    side: Side
    hip_deg: np.ndarray
    knee_deg: np.ndarray
    ankle_deg: np.ndarray
    hip_valid: np.ndarray
    knee_valid: np.ndarray
    ankle_valid: np.ndarray
    camera_near: bool = True

    def __post_init__(self):
        n = len(self.hip_deg)
        for name in ("knee_deg", "ankle_deg", "hip_valid", "knee_valid", "ankle_valid"):
            if len(getattr(self, name)) != n:
                raise ValueError("angle series lengths differ")

    @property
    def n_frames(self) -> int:
        return len(self.hip_deg)

    def series(self, joint: str) -> tuple[np.ndarray, np.ndarray]:
        """(values, validity) for joint in {'hip', 'knee', 'ankle'}."""
        return getattr(self, f"{joint}_deg"), getattr(self, f"{joint}_valid")


ANGLE_JOINTS = ("hip", "knee", "ankle")


def compute_joint_angles(
    traj: TrajectorySet, meta: SequenceMeta
) -> dict[Side, JointAngleSeries]:
    """Per-frame hip/knee/ankle angles for both sides.

    Requires a sagittal camera view. The camera-near side is the validity
    domain of the method; the far side is still computed for failure
    statistics but flagged ``camera_near=False`` and excluded from kinematic
    acceptance metrics. An angle is defined only where all its constituent
    keypoints are valid (degenerate frames are marked invalid, not raised).
    """
    if not meta.camera_view.is_sagittal:
        raise ViewUnsupportedError(
            f"joint angles need a sagittal view, got {meta.camera_view.value}"
        )
    anterior = resolve_anterior(traj, meta)
    near = meta.camera_view.near_side
    n = traj.n_frames
    result: dict[Side, JointAngleSeries] = {}
    for side, joints in SIDE_JOINTS.items():
        hip = np.full(n, np.nan)
        knee = np.full(n, np.nan)
        ankle = np.full(n, np.nan)
        hip_ok = np.zeros(n, dtype=bool)
        knee_ok = np.zeros(n, dtype=bool)
        ankle_ok = np.zeros(n, dtype=bool)
        for i in range(n):
            p_hip = traj.point(joints["hip"], i)
            p_knee = traj.point(joints["knee"], i)
            p_ankle = traj.point(joints["ankle"], i)
            p_toe = traj.point(joints["toe"], i)
            if p_hip and p_knee:
                try:
                    hip[i] = hip_angle(p_hip, p_knee, anterior)
                    hip_ok[i] = True
                except DegenerateSegmentError:
                    pass
            if p_hip and p_knee and p_ankle:
                try:
                    knee[i] = knee_angle(p_hip, p_knee, p_ankle, anterior)
                    knee_ok[i] = True
                except DegenerateSegmentError:
                    pass
            if p_knee and p_ankle and p_toe:
                try:
                    ankle[i] = ankle_angle(p_knee, p_ankle, p_toe, anterior)
                    ankle_ok[i] = True
                except DegenerateSegmentError:
                    pass
        result[side] = JointAngleSeries(
            side=side,
            hip_deg=hip,
            knee_deg=knee,
            ankle_deg=ankle,
            hip_valid=hip_ok,
            knee_valid=knee_ok,
            ankle_valid=ankle_ok,
            camera_near=(side == near),
        )
    return result


def filter_angle_series(
    angles: Mapping[Side, JointAngleSeries],
    sample_rate: float,
    cutoff_hz: float = 6.0,
    order: int = 4,
    zero_phase: bool = True,
) -> dict[Side, JointAngleSeries]:
    """Optionally low-pass the angle series themselves.

    Coordinates are normally filtered upstream and angles inherit their
    smoothness; this extra pass exists behind a config switch for users who
    want the filter applied to angles as well. Each contiguous valid run is
    filtered independently; runs shorter than the zero-phase padding pass
    through unchanged.
    """
    from .filters import lowpass

    min_len = 3 * order + 1 if zero_phase else 1
    out: dict[Side, JointAngleSeries] = {}
    for side, series in angles.items():
        updates: dict[str, np.ndarray] = {}
        for joint in ANGLE_JOINTS:
            values, valid = series.series(joint)
            filtered = values.copy()
            i = 0
            n = len(values)
            while i < n:
                if not valid[i]:
                    i += 1
                    continue
                j = i
                while j < n and valid[j]:
                    j += 1
                if j - i >= min_len:
                    filtered[i:j] = lowpass(
                        values[i:j], sample_rate, cutoff_hz, order, zero_phase
                    )
                i = j
            updates[f"{joint}_deg"] = filtered
        out[side] = JointAngleSeries(
            side=side,
            hip_valid=series.hip_valid,
            knee_valid=series.knee_valid,
            ankle_valid=series.ankle_valid,
            camera_near=series.camera_near,
            **updates,
        )
    return out


# ---------------------------------------------------------------------------
# CSV export / import

_ANGLES_HEADER = (
    "frame,side,hip_deg,knee_deg,ankle_deg,hip_valid,knee_valid,ankle_valid"
)


def angles_to_csv(angles: Mapping[Side, JointAngleSeries], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [_ANGLES_HEADER]
    for side in (Side.LEFT, Side.RIGHT):
        if side not in angles:
            continue
        s = angles[side]
        for i in range(s.n_frames):
            def fmt(v, ok):
                return f"{v:.6f}" if ok else ""
            lines.append(
                f"{i},{side.value},{fmt(s.hip_deg[i], s.hip_valid[i])},"
                f"{fmt(s.knee_deg[i], s.knee_valid[i])},"
                f"{fmt(s.ankle_deg[i], s.ankle_valid[i])},"
                f"{int(s.hip_valid[i])},{int(s.knee_valid[i])},{int(s.ankle_valid[i])}"
            )
    path.write_text("\n".join(lines) + "\n")
    return path


def angles_from_csv(path: str | Path) -> dict[Side, JointAngleSeries]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != _ANGLES_HEADER:
        raise ValueError(f"unexpected angle CSV header in {path}")
    per_side: dict[Side, list] = {Side.LEFT: [], Side.RIGHT: []}
    for line in lines[1:]:
        frame, side, hip, knee, ankle, hv, kv, av = line.split(",")
        per_side[Side(side)].append(
            (
                int(frame),
                float(hip) if hip else np.nan,
                float(knee) if knee else np.nan,
                float(ankle) if ankle else np.nan,
                hv == "1",
                kv == "1",
                av == "1",
            )
        )
    out = {}
    for side, rows in per_side.items():
        if not rows:
            continue
        rows.sort()
        arr = np.asarray(rows, dtype=float)
        out[side] = JointAngleSeries(
            side=side,
            hip_deg=arr[:, 1],
            knee_deg=arr[:, 2],
            ankle_deg=arr[:, 3],
            hip_valid=arr[:, 4].astype(bool),
            knee_valid=arr[:, 5].astype(bool),
            ankle_valid=arr[:, 6].astype(bool),
        )
    return out
