import hashlib
import json
import shutil
import sys
from pathlib import Path

import pytest

from conftest import MOCK_GENERATE_CMD, MOCK_POSE_CMD, build_scenario
from regait.gaitcycle import build_ensembles, load_events
from regait.kinematics import angles_from_csv
from regait.metrics import LimbRole, angle_mae
from regait.model import CameraView, JointId, SequenceMeta, Side
from regait.pipeline import PipelineConfig, run_compare, run_full
from regait.synth import CorruptionSpec

LIGHT_CORRUPTION = CorruptionSpec(
    noise_sd_px=1.2,
    dropout={JointId.R_ANKLE: (40, 41), JointId.L_KNEE: (100,)},
    swap_frames=(77, 78),
)

META = SequenceMeta(camera_view=CameraView.RIGHT_SAGITTAL, prosthetic_side=Side.RIGHT)


@pytest.fixture(scope="module")
def scenario(tmp_path_factory):
    return build_scenario(
        tmp_path_factory.mktemp("scenario"), corruption=LIGHT_CORRUPTION, seed=4
    )


def make_config(scenario, run_dir: Path, pose_cmd=None, **overrides) -> PipelineConfig:
    defaults = dict(
        frames_dir=str(scenario.frames_dir),
        run_dir=str(run_dir),
        generate_command=MOCK_GENERATE_CMD,
        pose_command=pose_cmd
        or (*MOCK_POSE_CMD, "--pose-source", str(scenario.pose_source)),
        meta=META,
        events_file=str(scenario.events_csv),
        truth_trajectories_csv=str(scenario.truth_trajectories_csv),
        truth_angles_csv=str(scenario.truth_angles_csv),
        target_size=96,
        workers=2,
    )
    defaults.update(overrides)
    return PipelineConfig(**defaults)


def tree_digest(run_dir: Path, exclude=("run.json",)) -> dict[str, str]:
    digest = {}
    for path in sorted(run_dir.rglob("*")):
        if path.is_dir() or path.name in exclude:
            continue
        digest[str(path.relative_to(run_dir))] = hashlib.sha256(
            path.read_bytes()
        ).hexdigest()
    return digest


def counting_wrapper(tmp_path: Path, name: str) -> tuple[Path, tuple[str, ...]]:
    """Backend command that counts its invocations, then delegates to the
    regait mock subcommands."""
    counter = tmp_path / f"{name}.count"
    counter.write_text("0")
    script = tmp_path / f"{name}_wrapper.py"
    script.write_text(
        "import subprocess, sys\n"
        "from pathlib import Path\n"
        "counter = Path(sys.argv[1])\n"
        "counter.write_text(str(int(counter.read_text()) + 1))\n"
        "sys.exit(subprocess.call([sys.executable, '-m', 'regait.cli', *sys.argv[2:]]))\n"
    )
    return counter, (sys.executable, str(script), str(counter))


@pytest.fixture(scope="module")
def full_run(scenario, tmp_path_factory):
    run_dir = tmp_path_factory.mktemp("run")
    config = make_config(scenario, run_dir)
    return config, run_full(config)


class TestFullRun:
    @pytest.fixture()
    def run(self, full_run):
        return full_run

    def test_stage_outputs_persisted(self, run):
        _, result = run
        for sub in (
            "edges", "generated", "poses_raw", "poses_refined",
            "kinematics", "cycles", "report",
        ):
            assert (result.run_dir / sub).is_dir(), sub
        assert (result.run_dir / "run.json").is_file()
        assert (result.run_dir / "poses_refined" / "trajectories.csv").is_file()
        assert (result.run_dir / "cycles" / "ensembles.csv").is_file()
        assert (result.run_dir / "report" / "report.json").is_file()

    def test_identity_generation_copies_edge_maps(self, run):
        _, result = run
        edges = sorted((result.run_dir / "edges").glob("*.png"))
        generated = sorted((result.run_dir / "generated").glob("*.png"))
        assert len(edges) == len(generated) == 180
        assert edges[0].read_bytes() == generated[0].read_bytes()

    def test_swaps_detected_and_logged(self, run):
        _, result = run
        report = json.loads(
            (result.run_dir / "poses_refined" / "refine_report.json").read_text()
        )
        assert report["swapped_frames"] == [77, 78]

    def test_angle_mae_under_ground_truth_quality(self, run):
        _, result = run
        rows = [
            r for r in result.report.kinematics if r.joint == "all"
        ]
        assert rows, "report carries pooled kinematic rows"
        for row in rows:
            assert row.mae_deg < 1.7, (row.limb_role, row.mae_deg)

    def test_rerun_is_fully_cached(self, run):
        config, first = run
        again = run_full(config)
        assert again.executed_stages == []
        assert set(again.skipped_stages) == set(first.executed_stages)

    def test_stage_isolation_regenerates_dependents_only(self, run):
        config, _ = run
        run_dir = Path(config.run_dir)
        shutil.rmtree(run_dir / "kinematics")
        result = run_full(config)
        assert result.executed_stages == ["kinematics", "cycles", "report"]
        assert "refine" in result.skipped_stages


class TestResumeSkipsBackends:
    def test_second_run_makes_no_backend_calls(self, scenario, tmp_path):
        gen_counter, gen_cmd = counting_wrapper(tmp_path, "gen")
        pose_counter, pose_cmd = counting_wrapper(tmp_path, "pose")
        config = make_config(
            scenario,
            tmp_path / "run",
            generate_command=(*gen_cmd, "mock-generate"),
            pose_cmd=(*pose_cmd, "mock-pose", "--pose-source", str(scenario.pose_source)),
        )
        run_full(config)
        assert gen_counter.read_text() == "1"
        assert pose_counter.read_text() == "1"
        result = run_full(config)
        assert result.executed_stages == []
        assert gen_counter.read_text() == "1"
        assert pose_counter.read_text() == "1"


class TestDeterminism:
    def test_repeated_runs_bit_identical(self, scenario, tmp_path):
        run_dir = tmp_path / "run"
        config = make_config(scenario, run_dir)
        run_full(config)
        first = tree_digest(run_dir)
        shutil.rmtree(run_dir)
        run_full(config)
        second = tree_digest(run_dir)
        assert first == second
        assert len(first) > 500  # sanity: the tree is substantial


class TestSelective:
    def test_generation_job_contains_exactly_flagged_frames(
        self, tmp_path_factory
    ):
        root = tmp_path_factory.mktemp("selective")
        bad_frames = tuple(range(0, 180, 10))  # 18 frames = 10%
        corruption = CorruptionSpec(
            dropout={JointId.R_ANKLE: bad_frames, JointId.R_KNEE: bad_frames}
        )
        scenario = build_scenario(root, corruption=corruption, seed=8)
        config = make_config(scenario, root / "run", selective=True)
        result = run_full(config)
        selected = json.loads(
            (result.run_dir / "selection" / "selection.json").read_text()
        )
        assert selected == sorted(bad_frames)
        manifest_path = next((result.run_dir / "jobs").glob("manifest_generate_*.json"))
        manifest = json.loads(manifest_path.read_text())
        requested = sorted(
            int(Path(r["edge_map"]).stem.split("_")[1]) for r in manifest["requests"]
        )
        assert requested == sorted(bad_frames)
        # Merged poses: regenerated for flagged frames, raw elsewhere.
        merged = result.run_dir / "poses_merged"
        assert len(list(merged.glob("*_keypoints.json"))) == 180

    def test_clean_scenario_selects_nothing_and_skips_generation(
        self, tmp_path_factory
    ):
        root = tmp_path_factory.mktemp("selective_clean")
        scenario = build_scenario(root, corruption=None, seed=1)
        config = make_config(scenario, root / "run", selective=True)
        # An empty generation job is a legitimate outcome in selective mode;
        # the pipeline must not abort on it.
        result = run_full(config)
        selected = json.loads(
            (result.run_dir / "selection" / "selection.json").read_text()
        )
        assert selected == []


class TestDecimation:
    def test_k3_cycle_curves_close_to_full_run(self, tmp_path_factory):
        root = tmp_path_factory.mktemp("decimate")
        scenario = build_scenario(root, corruption=None, seed=2)
        full_cfg = make_config(scenario, root / "run_full")
        deci_cfg = make_config(scenario, root / "run_k3", decimate_k=3)
        run_full(full_cfg)
        run_full(deci_cfg)
        events = load_events(scenario.events_csv)
        curves = {}
        for name, cfg in (("full", full_cfg), ("k3", deci_cfg)):
            angles = angles_from_csv(Path(cfg.run_dir) / "kinematics" / "angles.csv")
            ens, _ = build_ensembles(angles, events)
            curves[name] = ens
        # Generation processed 61 of 180 frames.
        manifest_path = next(
            (Path(deci_cfg.run_dir) / "jobs").glob("manifest_generate_*.json")
        )
        assert len(json.loads(manifest_path.read_text())["requests"]) == 61
        for side in Side:
            result = angle_mae(curves["k3"][side], curves["full"][side])
            assert result.pooled.mae < 0.5, (side, result.pooled.mae)


class TestCompare:
    def test_table_shaped_report_with_improvement(self, tmp_path_factory):
        root = tmp_path_factory.mktemp("compare")
        # Raw pose estimation struggles on the prosthetic (right) side of the
        # original frames; the regenerated frames pose cleanly.
        raw_corruption = CorruptionSpec(
            noise_sd_px=1.0,
            noise_joints=tuple(JointId),
            dropout={
                JointId.R_ANKLE: tuple(range(10, 40)),
                JointId.R_BIG_TOE: tuple(range(10, 40)),
            },
            swap_frames=tuple(range(60, 75)),
            confidence={JointId.R_KNEE: {f: 0.2 for f in range(90, 110)}},
        )
        scenario = build_scenario(root, corruption=CorruptionSpec(noise_sd_px=0.5), seed=3)
        from regait.backend import mock_pose_backend

        raw_source = root / "raw_pose_source"
        mock_pose_backend(
            scenario.truth.trajectories, raw_corruption, out_dir=raw_source, rng_seed=11
        )
        pose_cmd = (
            *MOCK_POSE_CMD,
            "--pose-source", str(scenario.pose_source),
            "--route", f"frames_staged={raw_source}",
            "--route", f"prepass_frames={raw_source}",
        )
        config = make_config(scenario, root / "run", pose_cmd=pose_cmd)
        result = run_compare(config)
        report = result.report
        assert (root / "run" / "compare" / "report.json").is_file()
        coords = {
            (r.method, r.limb_role): r.mae_px for r in report.coordinates
        }
        # Regeneration must beat the raw pass on the prosthetic side while
        # staying comparable on the intact side.
        assert coords[("regenerated", LimbRole.PROSTHETIC)] < coords[
            ("raw_pose", LimbRole.PROSTHETIC)
        ]
        assert abs(
            coords[("regenerated", LimbRole.INTACT)]
            - coords[("raw_pose", LimbRole.INTACT)]
        ) < 2.0
        assert report.improvement_by_role["prosthetic"] > 20.0
        fail = report.failure_percent_by_view
        assert fail["raw_pose"]["right_sagittal"] > fail["regenerated"]["right_sagittal"]

    def test_identical_methods_improve_zero(self, tmp_path_factory):
        root = tmp_path_factory.mktemp("compare_same")
        scenario = build_scenario(root, corruption=None, seed=5)
        config = make_config(scenario, root / "run")
        result = run_compare(config)
        for role, pct in result.report.improvement_by_role.items():
            assert abs(pct) < 1e-6, (role, pct)
