"""Reader for version-1 backend job manifests.

Schema (JSON): ``version`` ("1"), ``kind`` ("generate" | "estimate_pose"),
``job_id``, ``max_parallel`` and ``requests``. Generation requests carry
``edge_map``, ``output``, ``positive_prompt``, ``negative_prompt``,
``seed``, ``steps`` and an opaque ``extra`` mapping; pose requests carry
``image`` and ``output``. All paths are absolute.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

SUPPORTED_VERSION = "1"


class ManifestError(Exception):
    pass


@dataclass(frozen=True)
class GenerateRequest:
    edge_map: Path
    output: Path
    positive_prompt: str
    negative_prompt: str
    seed: int
    steps: int
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class PoseRequest:
    image: Path
    output: Path


@dataclass(frozen=True)
class Manifest:
    job_id: str
    kind: str
    max_parallel: int
    requests: tuple


def load_manifest(path: str | Path, expected_kind: str) -> Manifest:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    version = doc.get("version")
    if version != SUPPORTED_VERSION:
        raise ManifestError(
            f"unsupported manifest version {version!r} "
            f"(this adapter supports {SUPPORTED_VERSION!r})"
        )
    kind = doc.get("kind")
    if kind != expected_kind:
        raise ManifestError(f"manifest kind {kind!r}, expected {expected_kind!r}")
    requests = []
    for entry in doc.get("requests", []):
        if kind == "generate":
            requests.append(
                GenerateRequest(
                    edge_map=Path(entry["edge_map"]),
                    output=Path(entry["output"]),
                    positive_prompt=entry["positive_prompt"],
                    negative_prompt=entry["negative_prompt"],
                    seed=int(entry.get("seed", 0)),
                    steps=int(entry.get("steps", 20)),
                    extra=dict(entry.get("extra", {})),
                )
            )
        else:
            requests.append(
                PoseRequest(image=Path(entry["image"]), output=Path(entry["output"]))
            )
    if not requests:
        raise ManifestError("manifest lists no requests")
    return Manifest(
        job_id=str(doc.get("job_id", "")),
        kind=kind,
        max_parallel=int(doc.get("max_parallel", 1)),
        requests=tuple(requests),
    )
