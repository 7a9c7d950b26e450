"""Forward-kinematics synthetic gait oracle.

Generates exact ground-truth trajectories (keypoints, joint angles, heel
strikes) by chaining leg segments from the hip using the same angle
conventions the kinematics module inverts, so
``compute_joint_angles(forward_kinematics(m))`` recovers the model's angle
series to numerical precision. Corrupted variants emulate the failure modes
of raw pose estimation: missed detections, coordinate noise and left/right
swaps, all seeded and logged for exact scoring.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import FrameOutOfBoundsError
from .kinematics import JointAngleSeries
from .model import (
    DEFAULT_SAMPLE_RATE,
    SWAP_ALL_PAIRS,
    GaitEvent,
    JointId,
    JointTrack,
    Side,
    TrajectorySet,
)

MAX_HARMONICS = 3


@dataclass(frozen=True)
class JointWave:
    """Truncated Fourier series for one joint angle over the gait cycle.

    value(phase) = mean + sum_k amp[k] * cos(2 pi (k+1) (phase - shift[k]))
    with phase in cycles.
    """

    mean_deg: float
    amplitudes_deg: tuple[float, ...] = ()
    shifts: tuple[float, ...] = ()

    def __post_init__(self):
        if len(self.amplitudes_deg) > MAX_HARMONICS:
            raise ValueError(f"at most {MAX_HARMONICS} harmonics supported")
        if len(self.shifts) != len(self.amplitudes_deg):
            raise ValueError("need one shift per harmonic")

    def value(self, phase: np.ndarray | float) -> np.ndarray | float:
        out = self.mean_deg + np.zeros_like(np.asarray(phase, dtype=float))
        for k, (amp, shift) in enumerate(zip(self.amplitudes_deg, self.shifts)):
            out = out + amp * np.cos(2.0 * np.pi * (k + 1) * (np.asarray(phase) - shift))
        return out


@dataclass(frozen=True)
class SideAsymmetry:
    """Per-side deviation emulating prosthetic gait: scaled amplitudes and a
    phase shift of the whole cycle."""

    amplitude_scale: float = 1.0
    phase_offset_cycles: float = 0.0


@dataclass(frozen=True)
class GaitModel:
    cadence_hz: float = 1.0
    hip: JointWave = JointWave(3.0, (22.0,), (0.0,))
    knee: JointWave = JointWave(25.0, (-18.0, 12.0), (0.10, 0.35))
    ankle: JointWave = JointWave(-2.0, (8.0, 5.0), (0.40, 0.08))
    thigh_px: float = 120.0
    shank_px: float = 110.0
    foot_px: float = 45.0
    pelvis_velocity_px_per_frame: float = 3.0
    pelvis_start: tuple[float, float] = (200.0, 320.0)
    image_size: tuple[int, int] = (1280, 720)
    anterior_sign: int = 1
    left: SideAsymmetry = SideAsymmetry()
    right: SideAsymmetry = SideAsymmetry()
    arm_swing_gain: float = 0.45

    def __post_init__(self):
        if self.cadence_hz <= 0:
            raise ValueError(f"cadence must be positive, got {self.cadence_hz}")
        for name in ("thigh_px", "shank_px", "foot_px"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.anterior_sign not in (-1, 1):
            raise ValueError("anterior_sign must be +1 or -1")

    def asymmetry(self, side: Side) -> SideAsymmetry:
        return self.left if side is Side.LEFT else self.right

    def phase(self, side: Side, frame: np.ndarray | float, sample_rate: float):
        """Heel-strike clock for one side in cycles; legs run half a cycle
        apart. Strikes fire at integer crossings."""
        base = 0.0 if side is Side.LEFT else 0.5
        return self.cadence_hz * np.asarray(frame, dtype=float) / sample_rate + base

    def angles_deg(self, side: Side, phase) -> dict[str, np.ndarray]:
        """Joint angles at the given clock positions. The side's asymmetry
        phase offset shifts the waveform against the side's own heel strikes,
        displacing its normalized cycle curve the way a prosthetic limb's
        pattern is displaced against the intact limb's."""
        asym = self.asymmetry(side)
        p = np.asarray(phase, dtype=float) + asym.phase_offset_cycles
        out = {}
        for joint, wave in (("hip", self.hip), ("knee", self.knee), ("ankle", self.ankle)):
            out[joint] = wave.mean_deg + asym.amplitude_scale * (
                wave.value(p) - wave.mean_deg
            )
        return out


def standing_model(**overrides) -> GaitModel:
    """Zero-amplitude model: straight legs, all angles identically 0."""
    still = dict(
        hip=JointWave(0.0),
        knee=JointWave(0.0),
        ankle=JointWave(0.0),
        pelvis_velocity_px_per_frame=0.0,
    )
    still.update(overrides)
    return GaitModel(**still)


@dataclass(frozen=True)
class SynthResult:
    trajectories: TrajectorySet
    angles: dict[Side, JointAngleSeries]
    events: list[GaitEvent]
    model: GaitModel


def _rotate(vx: np.ndarray, vy: np.ndarray, psi: np.ndarray):
    c, s = np.cos(psi), np.sin(psi)
    return c * vx - s * vy, s * vx + c * vy


def forward_kinematics(
    model: GaitModel,
    n_frames: int = 180,
    sample_rate: float = DEFAULT_SAMPLE_RATE,
) -> SynthResult:
    """Build exact keypoint trajectories from the angle model.

    Segments chain from the hip: the thigh leaves the downward vertical by
    the hip angle (toward anterior positive), the shank deviates from the
    extended thigh line by the knee angle (posterior positive), and the foot
    leaves the anterior perpendicular of the shank by the ankle angle
    (dorsiflexion positive). Heel-strike events fire at every integer
    crossing of each side's model clock.
    """
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    frames = np.arange(n_frames)
    a = float(model.anterior_sign)
    x0, y0 = model.pelvis_start
    pelvis_x = x0 + a * model.pelvis_velocity_px_per_frame * frames
    pelvis_y = np.full(n_frames, y0)

    ones = np.ones(n_frames)
    tracks: dict[JointId, dict[str, np.ndarray]] = {}

    def put(joint: JointId, x: np.ndarray, y: np.ndarray):
        tracks[joint] = {"x": x, "y": y}

    put(JointId.MID_HIP, pelvis_x, pelvis_y)
    put(JointId.NECK, pelvis_x.copy(), pelvis_y - 100.0)

    angles_out: dict[Side, JointAngleSeries] = {}
    events: list[GaitEvent] = []
    for side in (Side.LEFT, Side.RIGHT):
        phase = model.phase(side, frames, sample_rate)
        angles = model.angles_deg(side, phase)
        th = np.radians(angles["hip"])
        tk = np.radians(angles["knee"])
        ta = np.radians(angles["ankle"])

        hip_x, hip_y = pelvis_x, pelvis_y
        ux, uy = a * np.sin(th), np.cos(th)
        knee_x = hip_x + model.thigh_px * ux
        knee_y = hip_y + model.thigh_px * uy
        sx, sy = _rotate(ux, uy, a * tk)
        ankle_x = knee_x + model.shank_px * sx
        ankle_y = knee_y + model.shank_px * sy
        px, py = a * sy, -a * sx
        fx, fy = _rotate(px, py, -a * ta)
        toe_x = ankle_x + model.foot_px * fx
        toe_y = ankle_y + model.foot_px * fy

        wrist_x = pelvis_x - model.arm_swing_gain * (ankle_x - pelvis_x)
        wrist_y = pelvis_y - 60.0

        joints = {
            Side.LEFT: (JointId.L_HIP, JointId.L_KNEE, JointId.L_ANKLE,
                        JointId.L_BIG_TOE, JointId.L_WRIST),
            Side.RIGHT: (JointId.R_HIP, JointId.R_KNEE, JointId.R_ANKLE,
                         JointId.R_BIG_TOE, JointId.R_WRIST),
        }[side]
        put(joints[0], hip_x.copy(), hip_y.copy())
        put(joints[1], knee_x, knee_y)
        put(joints[2], ankle_x, ankle_y)
        put(joints[3], toe_x, toe_y)
        put(joints[4], wrist_x, wrist_y)

        angles_out[side] = JointAngleSeries(
            side=side,
            hip_deg=angles["hip"],
            knee_deg=angles["knee"],
            ankle_deg=angles["ankle"],
            hip_valid=ones.astype(bool),
            knee_valid=ones.astype(bool),
            ankle_valid=ones.astype(bool),
        )

        # Heel strikes: first frame at or past each integer of the clock.
        phase0 = model.phase(side, 0, sample_rate)
        phase_end = model.phase(side, n_frames - 1, sample_rate)
        m = math.ceil(phase0 - 1e-12)
        while m <= phase_end + 1e-12:
            t_star = (m - phase0) * sample_rate / model.cadence_hz
            frame = int(math.ceil(t_star - 1e-9))
            if 0 <= frame < n_frames:
                events.append(GaitEvent(frame_index=frame, side=side))
            m += 1

    w, h = model.image_size
    for joint, arrs in tracks.items():
        bad = (arrs["x"] < 0) | (arrs["x"] >= w) | (arrs["y"] < 0) | (arrs["y"] >= h)
        if bad.any():
            frame = int(np.flatnonzero(bad)[0])
            raise FrameOutOfBoundsError(
                frame, f"{joint.name} leaves the {w}x{h} image at frame {frame}"
            )

    joint_tracks = {
        joint: JointTrack(
            x=arrs["x"],
            y=arrs["y"],
            confidence=np.ones(n_frames),
            valid=np.ones(n_frames, dtype=bool),
            interpolated=np.zeros(n_frames, dtype=bool),
        )
        for joint, arrs in tracks.items()
    }
    traj = TrajectorySet(tracks=joint_tracks, sample_rate=sample_rate)
    events.sort(key=lambda e: (e.frame_index, e.side.value))
    return SynthResult(trajectories=traj, angles=angles_out, events=events, model=model)


# ---------------------------------------------------------------------------
# Corruption

@dataclass(frozen=True)
class CorruptionSpec:
    """What to break, exactly; everything is frame-indexed and bounded."""

    dropout: Mapping[JointId, tuple[int, ...]] = field(default_factory=dict)
    noise_sd_px: float = 0.0
    noise_joints: tuple[JointId, ...] | None = None  # None = every track
    swap_frames: tuple[int, ...] = ()
    confidence: Mapping[JointId, Mapping[int, float]] = field(default_factory=dict)

    def validate(self, n_frames: int) -> None:
        for joint, frames in self.dropout.items():
            for f in frames:
                if not 0 <= f < n_frames:
                    raise ValueError(f"dropout frame {f} for {joint.name} out of bounds")
        for f in self.swap_frames:
            if not 0 <= f < n_frames:
                raise ValueError(f"swap frame {f} out of bounds")
        for joint, overrides in self.confidence.items():
            for f, c in overrides.items():
                if not 0 <= f < n_frames:
                    raise ValueError(f"confidence frame {f} for {joint.name} out of bounds")
                if not 0.0 <= c <= 1.0:
                    raise ValueError(f"confidence {c} outside [0, 1]")
        if self.noise_sd_px < 0:
            raise ValueError("noise_sd_px must be >= 0")


@dataclass(frozen=True)
class CorruptionLog:
    """Exact record of what was injected, for oracle scoring."""

    seed: int
    noise_sd_px: float
    noised_joints: tuple[str, ...]
    dropouts: tuple[tuple[str, int], ...]
    swap_frames: tuple[int, ...]
    confidence_overrides: tuple[tuple[str, int, float], ...]

    def to_json(self) -> str:
        return json.dumps(
            {
                "seed": self.seed,
                "noise_sd_px": self.noise_sd_px,
                "noised_joints": list(self.noised_joints),
                "dropouts": [list(d) for d in self.dropouts],
                "swap_frames": list(self.swap_frames),
                "confidence_overrides": [list(c) for c in self.confidence_overrides],
            },
            indent=2,
            sort_keys=True,
        )

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json() + "\n")
        return path


@dataclass(frozen=True)
class CorruptionResult:
    trajectories: TrajectorySet
    log: CorruptionLog


def corrupt(traj: TrajectorySet, spec: CorruptionSpec, rng_seed: int = 0) -> CorruptionResult:
    """Apply the corruption spec deterministically (fixed seed, fixed joint
    order) and log every injected defect."""
    spec.validate(traj.n_frames)
    rng = np.random.default_rng(rng_seed)
    joints = traj.joints()
    noise_targets = tuple(spec.noise_joints) if spec.noise_joints is not None else joints

    arrays = {
        j: {name: getattr(traj.track(j), name).copy()
            for name in ("x", "y", "confidence", "valid", "interpolated")}
        for j in joints
    }

    if spec.noise_sd_px > 0:
        for joint in joints:  # fixed iteration order keeps the stream stable
            if joint not in noise_targets:
                continue
            arr = arrays[joint]
            sel = arr["valid"]
            arr["x"][sel] += rng.normal(0.0, spec.noise_sd_px, int(sel.sum()))
            arr["y"][sel] += rng.normal(0.0, spec.noise_sd_px, int(sel.sum()))

    overrides = []
    for joint in sorted(spec.confidence, key=int):
        for frame in sorted(spec.confidence[joint]):
            value = spec.confidence[joint][frame]
            arrays[joint]["confidence"][frame] = value
            overrides.append((joint.name, int(frame), float(value)))

    dropouts = []
    for joint in sorted(spec.dropout, key=int):
        for frame in sorted(spec.dropout[joint]):
            arr = arrays[joint]
            arr["valid"][frame] = False
            arr["confidence"][frame] = 0.0
            dropouts.append((joint.name, int(frame)))

    swap_frames = tuple(sorted(int(f) for f in set(spec.swap_frames)))
    if swap_frames:
        idx = np.asarray(swap_frames, dtype=int)
        for left, right in SWAP_ALL_PAIRS:
            if left not in arrays or right not in arrays:
                continue
            la, ra = arrays[left], arrays[right]
            for name in ("x", "y", "confidence", "valid", "interpolated"):
                tmp = la[name][idx].copy()
                la[name][idx] = ra[name][idx]
                ra[name][idx] = tmp

    tracks = {j: JointTrack(**arrs) for j, arrs in arrays.items()}
    log = CorruptionLog(
        seed=rng_seed,
        noise_sd_px=spec.noise_sd_px,
        noised_joints=tuple(j.name for j in joints if j in noise_targets and spec.noise_sd_px > 0),
        dropouts=tuple(dropouts),
        swap_frames=swap_frames,
        confidence_overrides=tuple(overrides),
    )
    return CorruptionResult(
        trajectories=TrajectorySet(tracks=tracks, sample_rate=traj.sample_rate),
        log=log,
    )
