"""Adapter tests driven purely through the executable surface (argv in,
files and exit codes out), mirroring how the pipeline invokes them."""

import json
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

SRC = Path(__file__).resolve().parent.parent / "src"

GENERATE = (sys.executable, "-m", "gait_adapters.generate")
POSE = (sys.executable, "-m", "gait_adapters.pose")


def run_adapter(cmd, *args, env_extra=None):
    import os

    env = dict(os.environ)
    env["PYTHONPATH"] = str(SRC) + os.pathsep + env.get("PYTHONPATH", "")
    if env_extra:
        env.update(env_extra)
    return subprocess.run(
        [*cmd, *args], capture_output=True, text=True, env=env, timeout=300
    )


def edge_map_png(path: Path, salt: int = 0) -> Path:
    mask = np.zeros((512, 512), dtype=np.uint8)
    lo, hi = 120 + 6 * salt, 390 - 6 * salt
    mask[lo:hi, lo] = 255
    mask[lo:hi, hi] = 255
    mask[lo, lo:hi] = 255
    mask[hi, lo : hi + 1] = 255
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(mask, "L").save(path)
    return path


def person_png(path: Path, empty: bool = False) -> Path:
    img = np.full((240, 160, 3), 20, dtype=np.uint8)
    if not empty:
        img[20:220, 60:100] = 210  # torso-ish bright column
        img[20:40, 64:96] = 225    # head
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(img, "RGB").save(path)
    return path


def write_manifest(path: Path, kind: str, requests: list[dict]) -> Path:
    doc = {
        "version": "1",
        "job_id": "test-job",
        "kind": kind,
        "max_parallel": 1,
        "requests": requests,
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2))
    return path


def generate_manifest(tmp_path: Path, n: int = 2) -> tuple[Path, list[Path]]:
    requests = []
    outputs = []
    for i in range(n):
        edge = edge_map_png(tmp_path / "in" / f"edge_{i:012d}.png", i)
        out = tmp_path / "out" / f"gen_{i:012d}.png"
        outputs.append(out)
        requests.append(
            {
                "edge_map": str(edge),
                "output": str(out),
                "positive_prompt": "an able-body person walking, intact lower "
                "limbs, 2 legs, full-body portrait, realistic",
                "negative_prompt": "cyborg, amputee, panfuturism",
                "seed": 7,
                "steps": 20,
                "extra": {},
            }
        )
    return write_manifest(tmp_path / "manifest.json", "generate", requests), outputs


class TestGenerateAdapter:
    def test_sketch_outputs_512_png(self, tmp_path):
        manifest, outputs = generate_manifest(tmp_path)
        proc = run_adapter(GENERATE, "--manifest", str(manifest), "--engine", "sketch")
        assert proc.returncode == 0, proc.stderr
        for out in outputs:
            with Image.open(out) as img:
                assert img.size == (512, 512)
                assert img.mode == "RGB"

    def test_prompts_and_timing_logged(self, tmp_path):
        manifest, _ = generate_manifest(tmp_path, n=1)
        proc = run_adapter(GENERATE, "--manifest", str(manifest))
        events = [json.loads(line) for line in proc.stderr.splitlines() if line]
        generated = [e for e in events if e["event"] == "generated"]
        assert generated
        assert "intact lower limbs" in generated[0]["positive_prompt"]
        assert generated[0]["negative_prompt"] == "cyborg, amputee, panfuturism"
        assert generated[0]["seconds"] >= 0
        assert generated[0]["seed"] == 7

    def test_idempotent_given_fixed_seed(self, tmp_path):
        manifest, outputs = generate_manifest(tmp_path, n=1)
        run_adapter(GENERATE, "--manifest", str(manifest))
        first = outputs[0].read_bytes()
        outputs[0].unlink()
        run_adapter(GENERATE, "--manifest", str(manifest))
        assert outputs[0].read_bytes() == first

    def test_unsupported_manifest_version_exit_3(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"version": "99", "kind": "generate",
                                    "job_id": "x", "requests": []}))
        proc = run_adapter(GENERATE, "--manifest", str(path))
        assert proc.returncode == 3
        assert "version" in proc.stderr

    def test_missing_manifest_exit_3(self, tmp_path):
        proc = run_adapter(GENERATE, "--manifest", str(tmp_path / "nope.json"))
        assert proc.returncode == 3

    def test_failed_request_does_not_abort_batch(self, tmp_path):
        manifest, outputs = generate_manifest(tmp_path, n=2)
        doc = json.loads(manifest.read_text())
        doc["requests"][0]["edge_map"] = str(tmp_path / "missing.png")
        manifest.write_text(json.dumps(doc))
        proc = run_adapter(GENERATE, "--manifest", str(manifest))
        assert proc.returncode == 0
        assert not outputs[0].exists()
        assert outputs[1].exists()
        assert "request_failed" in proc.stderr

    def test_writes_nothing_outside_declared_outputs(self, tmp_path):
        manifest, outputs = generate_manifest(tmp_path, n=2)
        before = {p for p in tmp_path.rglob("*") if p.is_file()}
        run_adapter(GENERATE, "--manifest", str(manifest))
        after = {p for p in tmp_path.rglob("*") if p.is_file()}
        assert after - before == set(outputs)


class TestPoseAdapter:
    def test_single_person_document(self, tmp_path):
        image = person_png(tmp_path / "in" / "img_000000000000.png")
        out = tmp_path / "out" / "img_000000000000_keypoints.json"
        manifest = write_manifest(
            tmp_path / "manifest.json", "estimate_pose",
            [{"image": str(image), "output": str(out)}],
        )
        proc = run_adapter(POSE, "--manifest", str(manifest))
        assert proc.returncode == 0, proc.stderr
        doc = json.loads(out.read_text())
        assert len(doc["people"]) == 1
        values = doc["people"][0]["pose_keypoints_2d"]
        assert len(values) == 75
        # Keypoints with confidence lie inside the bright region's bbox.
        triples = np.asarray(values).reshape(-1, 3)
        detected = triples[triples[:, 2] > 0]
        assert len(detected) > 10
        assert detected[:, 0].min() >= 30 and detected[:, 0].max() <= 130
        assert detected[:, 1].min() >= 10 and detected[:, 1].max() <= 230

    def test_empty_scene_zero_person_document(self, tmp_path):
        image = person_png(tmp_path / "in" / "img_000000000000.png", empty=True)
        out = tmp_path / "out" / "img_000000000000_keypoints.json"
        manifest = write_manifest(
            tmp_path / "manifest.json", "estimate_pose",
            [{"image": str(image), "output": str(out)}],
        )
        proc = run_adapter(POSE, "--manifest", str(manifest))
        assert proc.returncode == 0, proc.stderr
        assert json.loads(out.read_text())["people"] == []

    def test_openpose_engine_requires_binary(self, tmp_path):
        image = person_png(tmp_path / "img_000000000000.png")
        manifest = write_manifest(
            tmp_path / "manifest.json", "estimate_pose",
            [{"image": str(image), "output": str(tmp_path / "o_keypoints.json")}],
        )
        proc = run_adapter(
            POSE, "--manifest", str(manifest), "--engine", "openpose",
            env_extra={"OPENPOSE_BIN": ""},
        )
        assert proc.returncode == 3
        assert "openpose" in proc.stderr.lower()

    def test_wrong_kind_rejected(self, tmp_path):
        manifest, _ = generate_manifest(tmp_path, n=1)
        proc = run_adapter(POSE, "--manifest", str(manifest))
        assert proc.returncode == 3


@pytest.mark.skipif(shutil.which("regait") is None,
                    reason="primary CLI not installed")
class TestProtocolConformance:
    def test_generate_adapter_conforms(self, tmp_path):
        proc = run_adapter(
            ("regait",), "conformance", "--workdir", str(tmp_path),
            "generate", sys.executable, "-m", "gait_adapters.generate",
            "--engine", "sketch",
        )
        assert proc.returncode == 0, proc.stderr + proc.stdout

    def test_pose_adapter_conforms(self, tmp_path):
        proc = run_adapter(
            ("regait",), "conformance", "--workdir", str(tmp_path),
            "estimate_pose", sys.executable, "-m", "gait_adapters.pose",
            "--engine", "heuristic",
        )
        assert proc.returncode == 0, proc.stderr + proc.stdout
