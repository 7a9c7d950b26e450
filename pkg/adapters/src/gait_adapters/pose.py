"""BODY_25 pose estimation adapter.

Engines:

* ``openpose``: wraps an OpenPose binary (path from ``--openpose-bin`` or
  the OPENPOSE_BIN environment variable), batching the manifest's images
  through ``--image_dir``/``--write_json`` and renaming the JSON outputs to
  the manifest-declared paths.
* ``heuristic``: a self-contained silhouette estimator for smoke tests:
  thresholds the image, finds the dominant bright blob and lays BODY_25
  keypoints along its vertical axis at fixed anatomical fractions, with the
  per-row blob centroid as the horizontal position. Smoke-grade only; an
  empty scene yields a zero-person document.

Outputs are BODY_25 pose documents (people -> pose_keypoints_2d, 75
numbers) at the manifest-declared paths, nothing else.
"""

from __future__ import annotations

import argparse
import json
import os
import shutil
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from . import EXIT_OK, EXIT_PROTOCOL_ERROR
from .manifest import ManifestError, PoseRequest, load_manifest

N_VALUES = 75

# (BODY_25 index, vertical fraction of the blob height, horizontal nudge in
# blob-width units). Left/right pairs get symmetric nudges.
BODY25_LAYOUT = [
    (0, 0.05, 0.0),    # nose
    (1, 0.14, 0.0),    # neck
    (2, 0.17, -0.16),  # r shoulder
    (5, 0.17, 0.16),   # l shoulder
    (3, 0.30, -0.20),  # r elbow
    (6, 0.30, 0.20),   # l elbow
    (4, 0.42, -0.22),  # r wrist
    (7, 0.42, 0.22),   # l wrist
    (8, 0.52, 0.0),    # mid hip
    (9, 0.53, -0.10),  # r hip
    (12, 0.53, 0.10),  # l hip
    (10, 0.72, -0.11), # r knee
    (13, 0.72, 0.11),  # l knee
    (11, 0.90, -0.12), # r ankle
    (14, 0.90, 0.12),  # l ankle
    (24, 0.96, -0.14), # r heel
    (21, 0.96, 0.14),  # l heel
    (22, 0.985, -0.06),# r big toe
    (19, 0.985, 0.18), # l big toe
    (23, 0.985, -0.02),# r small toe
    (20, 0.985, 0.22), # l small toe
    (15, 0.035, -0.05),# r eye
    (16, 0.035, 0.05), # l eye
    (17, 0.05, -0.09), # r ear
    (18, 0.05, 0.09),  # l ear
]

MIN_BLOB_FRACTION = 0.002


@dataclass(frozen=True)
class AdapterConfig:
    engine: str = "heuristic"
    openpose_bin: str | None = None
    net_resolution: str = "-1x368"

    def validate(self) -> None:
        if self.engine not in ("heuristic", "openpose"):
            raise ValueError(f"unknown engine {self.engine!r}")
        if self.engine == "openpose" and not self.openpose_bin:
            raise ValueError(
                "openpose engine needs --openpose-bin or OPENPOSE_BIN"
            )


def log(event: str, **fields) -> None:
    print(json.dumps({"event": event, **fields}, sort_keys=True), file=sys.stderr)


def zero_person_document() -> dict:
    return {"version": 1.3, "people": []}


# ---------------------------------------------------------------------------
# Heuristic engine

def _dominant_blob(gray: np.ndarray) -> np.ndarray | None:
    """Mask of the largest bright connected region, or None when the scene
    is effectively empty."""
    lo, hi = float(gray.min()), float(gray.max())
    if hi - lo < 16:
        return None
    mask = gray >= (lo + hi) / 2.0
    if mask.sum() < MIN_BLOB_FRACTION * mask.size:
        return None
    # Largest 4-connected component by BFS over the mask.
    labels = np.zeros(mask.shape, dtype=np.int32)
    current = 0
    best_label, best_size = 0, 0
    h, w = mask.shape
    for sy, sx in zip(*np.nonzero(mask)):
        if labels[sy, sx]:
            continue
        current += 1
        stack = [(sy, sx)]
        labels[sy, sx] = current
        size = 0
        while stack:
            y, x = stack.pop()
            size += 1
            for ny, nx in ((y + 1, x), (y - 1, x), (y, x + 1), (y, x - 1)):
                if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] and not labels[ny, nx]:
                    labels[ny, nx] = current
                    stack.append((ny, nx))
        if size > best_size:
            best_label, best_size = current, size
    if best_size < MIN_BLOB_FRACTION * mask.size:
        return None
    return labels == best_label


def estimate_heuristic(image_path: Path) -> dict:
    with Image.open(image_path) as img:
        gray = np.asarray(img.convert("L"), dtype=float)
    blob = _dominant_blob(gray)
    if blob is None:
        return zero_person_document()
    ys, xs = np.nonzero(blob)
    y0, y1 = int(ys.min()), int(ys.max())
    height = max(y1 - y0, 1)
    width = max(int(xs.max()) - int(xs.min()), 1)
    fill = len(ys) / (height * width)
    confidence = float(np.clip(0.3 + 0.6 * fill, 0.3, 0.9))

    values = [0.0] * N_VALUES
    for index, fraction, nudge in BODY25_LAYOUT:
        y = y0 + fraction * height
        row = int(np.clip(round(y), y0, y1))
        row_xs = xs[ys == row]
        center = float(row_xs.mean()) if len(row_xs) else float(xs.mean())
        x = center + nudge * width
        values[3 * index : 3 * index + 3] = [float(x), float(y), confidence]
    return {
        "version": 1.3,
        "canvas_size": [gray.shape[1], gray.shape[0]],
        "people": [{"person_id": [-1], "pose_keypoints_2d": values}],
    }


# ---------------------------------------------------------------------------
# OpenPose binary engine

def run_openpose(config: AdapterConfig, requests: tuple[PoseRequest, ...]) -> dict[Path, dict]:
    """Batch the images through the OpenPose binary and collect its JSON."""
    results: dict[Path, dict] = {}
    with tempfile.TemporaryDirectory(prefix="gait-openpose-") as scratch:
        scratch = Path(scratch)
        image_dir = scratch / "images"
        json_dir = scratch / "json"
        image_dir.mkdir()
        json_dir.mkdir()
        stems = {}
        for i, request in enumerate(requests):
            stem = f"{i:012d}"
            shutil.copyfile(request.image, image_dir / f"{stem}.png")
            stems[stem] = request
        argv = [
            config.openpose_bin,
            "--image_dir", str(image_dir),
            "--write_json", str(json_dir),
            "--display", "0",
            "--render_pose", "0",
            "--model_pose", "BODY_25",
            "--net_resolution", config.net_resolution,
        ]
        proc = subprocess.run(argv, capture_output=True, text=True)
        if proc.returncode != 0:
            raise RuntimeError(
                f"openpose binary exited {proc.returncode}: {proc.stderr[:400]}"
            )
        for path in json_dir.glob("*_keypoints.json"):
            stem = path.name.replace("_keypoints.json", "")
            request = stems.get(stem)
            if request is not None:
                results[request.output] = json.loads(path.read_text())
    return results


# ---------------------------------------------------------------------------
# Entry point

def run(config: AdapterConfig, manifest_path: str) -> int:
    config.validate()
    manifest = load_manifest(manifest_path, expected_kind="estimate_pose")
    failures = 0
    if config.engine == "openpose":
        started = time.monotonic()
        results = run_openpose(config, manifest.requests)
        for request in manifest.requests:
            doc = results.get(request.output, zero_person_document())
            request.output.parent.mkdir(parents=True, exist_ok=True)
            request.output.write_text(json.dumps(doc, sort_keys=True))
        log(
            "done", engine="openpose", requests=len(manifest.requests),
            seconds=round(time.monotonic() - started, 3),
        )
        return EXIT_OK

    for request in manifest.requests:
        started = time.monotonic()
        try:
            doc = estimate_heuristic(request.image)
            request.output.parent.mkdir(parents=True, exist_ok=True)
            request.output.write_text(json.dumps(doc, sort_keys=True))
            log(
                "estimated",
                output=str(request.output),
                people=len(doc["people"]),
                seconds=round(time.monotonic() - started, 3),
                engine="heuristic",
            )
        except Exception as exc:  # per-request isolation
            failures += 1
            log("request_failed", output=str(request.output), error=str(exc))
    log("done", requests=len(manifest.requests), failures=failures)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="BODY_25 pose estimation backend")
    parser.add_argument("--manifest", required=True)
    parser.add_argument("--engine", default="heuristic",
                        choices=["heuristic", "openpose"])
    parser.add_argument("--openpose-bin", default=os.environ.get("OPENPOSE_BIN"))
    parser.add_argument("--net-resolution", default="-1x368")
    args = parser.parse_args(argv)

    config = AdapterConfig(
        engine=args.engine,
        openpose_bin=args.openpose_bin,
        net_resolution=args.net_resolution,
    )
    try:
        config.validate()
    except ValueError as exc:
        log("config_error", error=str(exc))
        return EXIT_PROTOCOL_ERROR
    try:
        return run(config, args.manifest)
    except (ManifestError, RuntimeError, OSError) as exc:
        log("fatal", error=str(exc))
        return EXIT_PROTOCOL_ERROR


if __name__ == "__main__":
    sys.exit(main())
