"""Reading and writing pose documents in the BODY_25 output schema.

One JSON document per frame, ``people`` holding a flat
``pose_keypoints_2d`` array of 75 numbers (25 triples of x, y, confidence).
Zero-confidence triples encode an undetected joint. Files follow the
``<prefix>_%012d_keypoints.json`` ordinal naming convention.
"""

from __future__ import annotations

import json
import re
from pathlib import Path
import numpy as np

from .errors import (
    MultiplePeopleError,
    NoPersonDetectedError,
    PoseDocumentError,
)
from .model import (
    DEFAULT_IMAGE_SIZE,
    DEFAULT_SAMPLE_RATE,
    N_BODY25_VALUES,
    FramePose,
    JointId,
    Keypoint2D,
    TrajectorySet,
    assemble_trajectories,
)

POSE_FILE_SUFFIX = "_keypoints.json"
_ORDINAL_RE = re.compile(r"_(\d{6,12})_keypoints\.json$")

# "largest" picks the person whose valid keypoints span the largest
# bounding-box area; an int picks by position in the people array.
PersonRule = int | str | None


def pose_filename(prefix: str, frame_index: int) -> str:
    return f"{prefix}_{frame_index:012d}{POSE_FILE_SUFFIX}"


def frame_index_from_name(name: str | Path) -> int:
    match = _ORDINAL_RE.search(Path(name).name)
    if match is None:
        raise PoseDocumentError(f"cannot read frame ordinal from {name!r}")
    return int(match.group(1))


def _bbox_area(triples: np.ndarray) -> float:
    detected = triples[triples[:, 2] > 0.0]
    if len(detected) == 0:
        return 0.0
    spans = detected[:, :2].max(axis=0) - detected[:, :2].min(axis=0)
    return float(spans[0] * spans[1])


def _select_person(people: list, person: PersonRule) -> int:
    if len(people) == 1:
        return 0
    if person is None:
        raise MultiplePeopleError(
            f"{len(people)} people detected and no selection rule configured"
        )
    if isinstance(person, int):
        if not 0 <= person < len(people):
            raise PoseDocumentError(f"person index {person} out of range")
        return person
    if person == "largest":
        areas = [_bbox_area(p) for p in people]
        return int(np.argmax(areas))
    raise PoseDocumentError(f"unknown person selection rule {person!r}")


def parse_pose_document(
    data: bytes | str,
    frame_index: int,
    image_size: tuple[int, int] | None = None,
    person: PersonRule = None,
) -> FramePose:
    """Parse one pose document into a :class:`FramePose`.

    Raises :class:`NoPersonDetectedError` for empty scenes and
    :class:`MultiplePeopleError` when several people are present but no
    selection rule was given.
    """
    try:
        doc = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise PoseDocumentError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "people" not in doc:
        raise PoseDocumentError("document has no 'people' array")
    people_raw = doc["people"]
    if not isinstance(people_raw, list):
        raise PoseDocumentError("'people' is not an array")

    people: list[np.ndarray] = []
    for entry in people_raw:
        values = entry.get("pose_keypoints_2d") if isinstance(entry, dict) else None
        if not isinstance(values, list) or len(values) != N_BODY25_VALUES:
            count = len(values) if isinstance(values, list) else "missing"
            raise PoseDocumentError(
                f"person must carry {N_BODY25_VALUES} numbers, got {count}"
            )
        people.append(np.asarray(values, dtype=float).reshape(-1, 3))

    if not people:
        raise NoPersonDetectedError(f"no person in frame {frame_index}")
    triples = people[_select_person(people, person)]

    keypoints: dict[JointId, Keypoint2D] = {}
    for joint in JointId:
        x, y, conf = triples[int(joint)]
        if conf <= 0.0:
            continue
        if not (np.isfinite(x) and np.isfinite(y) and np.isfinite(conf)):
            raise PoseDocumentError(f"non-finite triple for {joint.name}")
        keypoints[joint] = Keypoint2D(float(x), float(y), float(min(conf, 1.0)))

    if image_size is None:
        size = doc.get("canvas_size")
        image_size = tuple(size) if size else DEFAULT_IMAGE_SIZE
    return FramePose(frame_index=frame_index, keypoints=keypoints, image_size=image_size)


def serialize_pose_document(pose: FramePose) -> bytes:
    """Render a FramePose back to the schema; invalid joints become zero
    triples."""
    values = [0.0] * N_BODY25_VALUES
    for joint, kp in pose.keypoints.items():
        base = 3 * int(joint)
        values[base : base + 3] = [kp.x, kp.y, kp.confidence]
    doc = {
        "version": 1.3,
        "canvas_size": list(pose.image_size),
        "people": [{"person_id": [-1], "pose_keypoints_2d": values}],
    }
    return json.dumps(doc, sort_keys=True).encode()


def parse_pose_file(
    path: str | Path,
    frame_index: int | None = None,
    image_size: tuple[int, int] | None = None,
    person: PersonRule = None,
) -> FramePose:
    path = Path(path)
    if frame_index is None:
        frame_index = frame_index_from_name(path)
    return parse_pose_document(path.read_bytes(), frame_index, image_size, person)


def write_pose_file(pose: FramePose, directory: str | Path, prefix: str = "frame") -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / pose_filename(prefix, pose.frame_index)
    path.write_bytes(serialize_pose_document(pose))
    return path


def load_pose_directory(
    directory: str | Path,
    person: PersonRule = "largest",
    image_size: tuple[int, int] | None = None,
    n_frames: int | None = None,
) -> list[FramePose]:
    """Load every pose document in a directory, sorted by frame ordinal.

    Failure isolation: a frame whose document has zero people (or whose file
    is missing when ``n_frames`` is given) yields an empty FramePose, so the
    frame is carried as invalid instead of aborting the batch.
    """
    directory = Path(directory)
    files = {frame_index_from_name(p): p for p in sorted(directory.glob(f"*{POSE_FILE_SUFFIX}"))}
    if not files and not n_frames:
        raise PoseDocumentError(f"no pose documents in {directory}")
    indices = range(n_frames) if n_frames is not None else sorted(files)
    frames: list[FramePose] = []
    for idx in indices:
        path = files.get(idx)
        if path is None:
            frames.append(FramePose(idx, {}, image_size or DEFAULT_IMAGE_SIZE))
            continue
        try:
            frames.append(parse_pose_file(path, idx, image_size, person))
        except NoPersonDetectedError:
            frames.append(FramePose(idx, {}, image_size or DEFAULT_IMAGE_SIZE))
    return frames


def frames_from_trajectories(
    traj: TrajectorySet, image_size: tuple[int, int] = DEFAULT_IMAGE_SIZE
) -> list[FramePose]:
    """Inverse of :func:`assemble_trajectories` over valid samples."""
    frames = []
    for i in range(traj.n_frames):
        keypoints = {}
        for joint in traj.joints():
            kp = traj.point(joint, i)
            if kp is not None:
                keypoints[joint] = kp
        frames.append(FramePose(frame_index=i, keypoints=keypoints, image_size=image_size))
    return frames


def write_trajectory_poses(
    traj: TrajectorySet,
    directory: str | Path,
    image_size: tuple[int, int] = DEFAULT_IMAGE_SIZE,
    prefix: str = "frame",
) -> list[Path]:
    return [
        write_pose_file(pose, directory, prefix)
        for pose in frames_from_trajectories(traj, image_size)
    ]


# ---------------------------------------------------------------------------
# Trajectory CSV persistence (documented in docs/formats.md)

_TRAJ_HEADER = ("frame", "joint", "x", "y", "confidence", "valid", "interpolated")


def trajectories_to_csv(traj: TrajectorySet, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(_TRAJ_HEADER), f"# sample_rate={traj.sample_rate:g}"]
    for joint in traj.joints():
        track = traj.track(joint)
        for i in range(len(track)):
            lines.append(
                f"{i},{joint.name},{track.x[i]:.6f},{track.y[i]:.6f},"
                f"{track.confidence[i]:.6f},{int(track.valid[i])},{int(track.interpolated[i])}"
            )
    path.write_text("\n".join(lines) + "\n")
    return path


def trajectories_from_csv(path: str | Path) -> TrajectorySet:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != ",".join(_TRAJ_HEADER):
        raise PoseDocumentError(f"unexpected trajectory CSV header in {path}")
    sample_rate = DEFAULT_SAMPLE_RATE
    rows: dict[JointId, list[tuple]] = {}
    for line in lines[1:]:
        if line.startswith("#"):
            if line.startswith("# sample_rate="):
                sample_rate = float(line.split("=", 1)[1])
            continue
        frame, joint, x, y, conf, valid, interp = line.split(",")
        rows.setdefault(JointId[joint], []).append(
            (int(frame), float(x), float(y), float(conf), valid == "1", interp == "1")
        )
    from .model import JointTrack  # local import to avoid cycle at module load

    tracks = {}
    for joint, entries in rows.items():
        entries.sort()
        arr = np.asarray([e[1:] for e in entries], dtype=float)
        tracks[joint] = JointTrack(
            x=arr[:, 0],
            y=arr[:, 1],
            confidence=arr[:, 2],
            valid=arr[:, 3].astype(bool),
            interpolated=arr[:, 4].astype(bool),
        )
    return TrajectorySet(tracks=tracks, sample_rate=sample_rate)


def load_pose_directory_as_trajectories(
    directory: str | Path,
    sample_rate: float = DEFAULT_SAMPLE_RATE,
    person: PersonRule = "largest",
    image_size: tuple[int, int] | None = None,
    n_frames: int | None = None,
) -> TrajectorySet:
    frames = load_pose_directory(directory, person, image_size, n_frames)
    return assemble_trajectories(frames, sample_rate)
