from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from regait.gaitcycle import save_events
from regait.kinematics import angles_to_csv, compute_joint_angles
from regait.model import CameraView, SequenceMeta, Side, WalkingDirection
from regait.backend import mock_pose_backend
from regait.poseio import trajectories_to_csv
from regait.synth import CorruptionSpec, GaitModel, forward_kinematics

MOCK_GENERATE_CMD = (sys.executable, "-m", "regait.cli", "mock-generate")
MOCK_POSE_CMD = (sys.executable, "-m", "regait.cli", "mock-pose")


@dataclass
class Scenario:
    """A complete synthetic pipeline fixture on disk."""

    root: Path
    frames_dir: Path
    pose_source: Path
    truth_trajectories_csv: Path
    truth_angles_csv: Path
    events_csv: Path
    n_frames: int
    truth: object


def write_frames(directory: Path, n_frames: int, size=(1280, 720)) -> None:
    """Plain synthetic video frames: a bright block drifting over a dark
    background (content only matters to the edge stage)."""
    directory.mkdir(parents=True, exist_ok=True)
    w, h = size
    for i in range(n_frames):
        img = np.full((h, w, 3), 24, dtype=np.uint8)
        x0 = 100 + 3 * i
        img[200:520, x0 : x0 + 160] = 216
        Image.fromarray(img, "RGB").save(directory / f"frame_{i:012d}.png")


def build_scenario(
    root: Path,
    n_frames: int = 180,
    corruption: CorruptionSpec | None = None,
    seed: int = 0,
    model: GaitModel | None = None,
) -> Scenario:
    """Materialize frames, mock pose source, truth CSVs and events."""
    model = model or GaitModel()
    result = forward_kinematics(model, n_frames, 30.0)
    frames_dir = root / "frames"
    write_frames(frames_dir, n_frames, model.image_size)
    pose_source = root / "pose_source"
    mock_pose_backend(
        result.trajectories,
        corruption or CorruptionSpec(),
        out_dir=pose_source,
        rng_seed=seed,
        image_size=model.image_size,
    )
    truth_traj = trajectories_to_csv(result.trajectories, root / "truth_trajectories.csv")
    truth_angles = angles_to_csv(result.angles, root / "truth_angles.csv")
    events = save_events(result.events, root / "events.csv")
    return Scenario(
        root=root,
        frames_dir=frames_dir,
        pose_source=pose_source,
        truth_trajectories_csv=truth_traj,
        truth_angles_csv=truth_angles,
        events_csv=events,
        n_frames=n_frames,
        truth=result,
    )


@pytest.fixture(scope="session")
def walk():
    """Default 180-frame synthetic walk at 30 fps (6 s)."""
    return forward_kinematics(GaitModel(), 180, 30.0)


@pytest.fixture(scope="session")
def meta_right_sagittal():
    return SequenceMeta(
        camera_view=CameraView.RIGHT_SAGITTAL,
        prosthetic_side=Side.RIGHT,
    )


@pytest.fixture(scope="session")
def meta_plus_x():
    return SequenceMeta(
        camera_view=CameraView.RIGHT_SAGITTAL,
        prosthetic_side=Side.RIGHT,
        walking_direction=WalkingDirection.IMAGE_PLUS_X,
    )


@pytest.fixture(scope="session")
def walk_angles(walk, meta_right_sagittal):
    return compute_joint_angles(walk.trajectories, meta_right_sagittal)


def max_abs(a: np.ndarray) -> float:
    return float(np.max(np.abs(np.asarray(a))))
