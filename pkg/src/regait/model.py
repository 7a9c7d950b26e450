"""Domain types shared by every stage: skeleton layout, per-frame poses,
per-joint trajectories, gait events and sequence metadata.

Coordinate conventions
----------------------
Image coordinates: x grows rightward, y grows DOWNWARD (row index). All
pixel positions are float. A keypoint that was not detected is represented
explicitly as invalid (absent from :class:`FramePose`, mask ``False`` in
:class:`TrajectorySet`), never as a silent ``(0, 0)``.

All types are value objects: construct once, never mutate. Trajectory
arrays are marked read-only so accidental in-place edits fail loudly;
refinement stages return new objects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import FrameIndexGapError


class JointId(IntEnum):
    """BODY_25 keypoint indices (the canonical skeleton for this toolkit)."""

    NOSE = 0
    NECK = 1
    R_SHOULDER = 2
    R_ELBOW = 3
    R_WRIST = 4
    L_SHOULDER = 5
    L_ELBOW = 6
    L_WRIST = 7
    MID_HIP = 8
    R_HIP = 9
    R_KNEE = 10
    R_ANKLE = 11
    L_HIP = 12
    L_KNEE = 13
    L_ANKLE = 14
    R_EYE = 15
    L_EYE = 16
    R_EAR = 17
    L_EAR = 18
    L_BIG_TOE = 19
    L_SMALL_TOE = 20
    L_HEEL = 21
    R_BIG_TOE = 22
    R_SMALL_TOE = 23
    R_HEEL = 24


N_BODY25_JOINTS = 25
N_BODY25_VALUES = 75  # 25 x (x, y, confidence)

# The eight lower-body joints the analysis runs on. Big toe anchors the foot
# vector; the small-toe variant is deliberately not used.
LOWER_LIMB_LEFT = (JointId.L_HIP, JointId.L_KNEE, JointId.L_ANKLE, JointId.L_BIG_TOE)
LOWER_LIMB_RIGHT = (JointId.R_HIP, JointId.R_KNEE, JointId.R_ANKLE, JointId.R_BIG_TOE)
LOWER_LIMB_JOINTS = LOWER_LIMB_LEFT + LOWER_LIMB_RIGHT

# Left/right pairs used to score a relabeling (hip, knee, ankle, toe jointly).
SWAP_COST_PAIRS = tuple(zip(LOWER_LIMB_LEFT, LOWER_LIMB_RIGHT))

# All lower-limb pairs that get exchanged when a frame is relabeled, so the
# skeleton stays internally consistent.
SWAP_ALL_PAIRS = SWAP_COST_PAIRS + (
    (JointId.L_SMALL_TOE, JointId.R_SMALL_TOE),
    (JointId.L_HEEL, JointId.R_HEEL),
)

WRIST_JOINTS = (JointId.L_WRIST, JointId.R_WRIST)

DEFAULT_IMAGE_SIZE = (1280, 720)
DEFAULT_SAMPLE_RATE = 30.0


class Side(Enum):
    LEFT = "left"
    RIGHT = "right"

    @property
    def opposite(self) -> "Side":
        return Side.RIGHT if self is Side.LEFT else Side.LEFT


class CameraView(Enum):
    ANTERIOR_FRONTAL = "anterior_frontal"
    POSTERIOR_FRONTAL = "posterior_frontal"
    LEFT_SAGITTAL = "left_sagittal"
    RIGHT_SAGITTAL = "right_sagittal"

    @property
    def is_sagittal(self) -> bool:
        return self in (CameraView.LEFT_SAGITTAL, CameraView.RIGHT_SAGITTAL)

    @property
    def near_side(self) -> "Side | None":
        """Side closest to the camera; only defined for sagittal views."""
        if self is CameraView.LEFT_SAGITTAL:
            return Side.LEFT
        if self is CameraView.RIGHT_SAGITTAL:
            return Side.RIGHT
        return None


class WalkingDirection(Enum):
    IMAGE_PLUS_X = "image_plus_x"
    IMAGE_MINUS_X = "image_minus_x"
    AUTO = "auto"


class EventKind(Enum):
    HEEL_STRIKE = "heel_strike"


@dataclass(frozen=True)
class Keypoint2D:
    """A detected 2D keypoint in pixel coordinates with its confidence."""

    x: float
    y: float
    confidence: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite keypoint coordinates ({self.x}, {self.y})")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")

    def distance_to(self, other: "Keypoint2D") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class FramePose:
    """Keypoints of the analyzed person in one frame.

    ``keypoints`` only holds detected joints; an absent entry means the
    joint is invalid in this frame.
    """

    frame_index: int
    keypoints: Mapping[JointId, Keypoint2D]
    image_size: tuple[int, int] = DEFAULT_IMAGE_SIZE

    def __post_init__(self):
        w, h = self.image_size
        if w <= 0 or h <= 0:
            raise ValueError(f"image_size must be positive, got {self.image_size}")

    def get(self, joint: JointId) -> Keypoint2D | None:
        return self.keypoints.get(joint)

    def valid(self, joint: JointId) -> bool:
        return joint in self.keypoints


@dataclass(frozen=True)
class GaitEvent:
    """A heel-strike annotation delimiting gait cycles."""

    frame_index: int
    side: Side
    kind: EventKind = EventKind.HEEL_STRIKE


@dataclass(frozen=True)
class SequenceMeta:
    """Per-sequence acquisition metadata required by downstream stages."""

    camera_view: CameraView
    prosthetic_side: Side
    walking_direction: WalkingDirection = WalkingDirection.AUTO
    subject_height_cm: float | None = None


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class JointTrack:
    """Time series of one joint: coordinates, confidence and validity.

    ``valid`` marks samples usable by metrics and kinematics; ``interpolated``
    marks the subset of valid samples that were filled by gap interpolation
    rather than measured.
    """

    x: np.ndarray
    y: np.ndarray
    confidence: np.ndarray
    valid: np.ndarray
    interpolated: np.ndarray

    def __post_init__(self):
        n = len(self.x)
        for name in ("y", "confidence", "valid", "interpolated"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"track arrays have mixed lengths ({name})")
        object.__setattr__(self, "x", _readonly(np.asarray(self.x, dtype=float)))
        object.__setattr__(self, "y", _readonly(np.asarray(self.y, dtype=float)))
        object.__setattr__(
            self, "confidence", _readonly(np.asarray(self.confidence, dtype=float))
        )
        object.__setattr__(self, "valid", _readonly(np.asarray(self.valid, dtype=bool)))
        object.__setattr__(
            self, "interpolated", _readonly(np.asarray(self.interpolated, dtype=bool))
        )

    def __len__(self) -> int:
        return len(self.x)

    @classmethod
    def empty(cls, n_frames: int) -> "JointTrack":
        z = np.zeros(n_frames)
        f = np.zeros(n_frames, dtype=bool)
        return cls(x=z, y=z.copy(), confidence=z.copy(), valid=f, interpolated=f.copy())

    def replace(self, **updates: np.ndarray) -> "JointTrack":
        fields = {k: getattr(self, k) for k in ("x", "y", "confidence", "valid", "interpolated")}
        fields.update(updates)
        return JointTrack(**fields)


@dataclass(frozen=True)
class TrajectorySet:
    """Per-joint time series over a frame sequence, the unit every
    refinement stage transforms."""

    tracks: Mapping[JointId, JointTrack]
    sample_rate: float = DEFAULT_SAMPLE_RATE
    n_frames: int = 0

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        tracks = dict(self.tracks)
        if not tracks:
            raise ValueError("TrajectorySet needs at least one joint track")
        n = self.n_frames or len(next(iter(tracks.values())))
        for joint, track in tracks.items():
            if len(track) != n:
                raise ValueError(f"track length mismatch for {joint.name}")
        object.__setattr__(self, "tracks", tracks)
        object.__setattr__(self, "n_frames", n)

    @property
    def duration_s(self) -> float:
        return self.n_frames / self.sample_rate

    def joints(self) -> tuple[JointId, ...]:
        return tuple(sorted(self.tracks, key=int))

    def track(self, joint: JointId) -> JointTrack:
        return self.tracks[joint]

    def has_joint(self, joint: JointId) -> bool:
        return joint in self.tracks

    def replace_tracks(self, updates: Mapping[JointId, JointTrack]) -> "TrajectorySet":
        tracks = dict(self.tracks)
        tracks.update(updates)
        return TrajectorySet(tracks=tracks, sample_rate=self.sample_rate)

    def point(self, joint: JointId, frame: int) -> Keypoint2D | None:
        """Keypoint at (joint, frame), or None when invalid."""
        track = self.tracks.get(joint)
        if track is None or not track.valid[frame]:
            return None
        return Keypoint2D(
            float(track.x[frame]), float(track.y[frame]), float(track.confidence[frame])
        )


def assemble_trajectories(
    frames: Sequence[FramePose],
    sample_rate: float = DEFAULT_SAMPLE_RATE,
    joints: Iterable[JointId] = tuple(JointId),
) -> TrajectorySet:
    """Stack ordered per-frame poses into per-joint series.

    Frames must be sorted with contiguous ``frame_index``; invalid keypoints
    become mask ``False`` samples with zeroed coordinates.
    """
    if not frames:
        raise ValueError("no frames to assemble")
    first = frames[0].frame_index
    for offset, frame in enumerate(frames):
        if frame.frame_index != first + offset:
            raise FrameIndexGapError(
                f"expected frame {first + offset}, got {frame.frame_index}"
            )
    n = len(frames)
    tracks: dict[JointId, JointTrack] = {}
    for joint in joints:
        x = np.zeros(n)
        y = np.zeros(n)
        conf = np.zeros(n)
        valid = np.zeros(n, dtype=bool)
        for i, frame in enumerate(frames):
            kp = frame.get(joint)
            if kp is not None:
                x[i], y[i], conf[i] = kp.x, kp.y, kp.confidence
                valid[i] = True
        tracks[joint] = JointTrack(
            x=x, y=y, confidence=conf, valid=valid, interpolated=np.zeros(n, dtype=bool)
        )
    return TrajectorySet(tracks=tracks, sample_rate=sample_rate)
