"""Command-line interface.

Subcommands mirror the pipeline stages plus the synthetic oracle, the
backend conformance checker and the mock backends. Exit codes: 0 success,
1 usage error, 2 stage failure, 3 backend failure.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import __version__
from . import backend as bk
from . import edgemap as em
from . import pipeline as pl
from .errors import BackendError, ConfigError, GaitPipelineError
from .gaitcycle import build_ensembles, ensembles_to_csv, load_events, save_events
from .kinematics import angles_from_csv, angles_to_csv, compute_joint_angles
from .metrics import render_report_table
from .model import CameraView, SequenceMeta, Side, WalkingDirection
from .poseio import (
    load_pose_directory_as_trajectories,
    trajectories_from_csv,
    trajectories_to_csv,
    write_trajectory_poses,
)
from .refine import RefineConfig, refine_trajectories
from .synth import CorruptionSpec, GaitModel, SideAsymmetry, corrupt, forward_kinematics

click.exceptions.UsageError.exit_code = 1

EXIT_STAGE_FAILURE = 2
EXIT_BACKEND_FAILURE = 3


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


@click.group()
@click.version_option(version=__version__, prog_name="regait")
def main() -> None:
    """Markerless gait analysis via edge-conditioned frame regeneration."""


# ---------------------------------------------------------------------------
# Configuration plumbing

def _meta_options(fn):
    fn = click.option(
        "--camera-view",
        type=click.Choice([v.value for v in CameraView]),
        default=CameraView.RIGHT_SAGITTAL.value,
        show_default=True,
        help="Camera position relative to the subject.",
    )(fn)
    fn = click.option(
        "--prosthetic-side",
        type=click.Choice([s.value for s in Side]),
        default=Side.RIGHT.value,
        show_default=True,
        help="Side wearing the prosthesis.",
    )(fn)
    fn = click.option(
        "--walking-direction",
        type=click.Choice([w.value for w in WalkingDirection]),
        default=WalkingDirection.AUTO.value,
        show_default=True,
        help="Anterior direction in the image; auto infers it from hip motion.",
    )(fn)
    fn = click.option(
        "--subject-height-cm", type=float, default=None,
        help="Subject stature for the cm-per-pixel scale estimate.",
    )(fn)
    return fn


def _refine_options(fn):
    fn = click.option(
        "--confidence-threshold", type=float, default=0.50, show_default=True,
        help="Keypoints below this likelihood are removed before interpolation.",
    )(fn)
    fn = click.option(
        "--cutoff-hz", type=float, default=6.0, show_default=True,
        help="Low-pass cutoff frequency.",
    )(fn)
    fn = click.option(
        "--filter-order", type=int, default=4, show_default=True,
        help="Butterworth order (even).",
    )(fn)
    fn = click.option(
        "--no-zero-phase", is_flag=True, default=False,
        help="Single forward pass instead of forward-backward filtering.",
    )(fn)
    fn = click.option(
        "--max-interp-gap", type=int, default=15, show_default=True,
        help="Longest interior gap (frames) the spline may fill.",
    )(fn)
    fn = click.option(
        "--gate-per-frame", is_flag=True, default=False,
        help="Drop whole frames (not single joints) failing the confidence gate.",
    )(fn)
    fn = click.option(
        "--filter-angles", is_flag=True, default=False,
        help="Additionally low-pass the angle series (coordinates are always "
             "filtered).",
    )(fn)
    return fn


def _build_meta(camera_view, prosthetic_side, walking_direction, subject_height_cm):
    return SequenceMeta(
        camera_view=CameraView(camera_view),
        prosthetic_side=Side(prosthetic_side),
        walking_direction=WalkingDirection(walking_direction),
        subject_height_cm=subject_height_cm,
    )


def _build_refine(
    confidence_threshold, cutoff_hz, filter_order, no_zero_phase,
    max_interp_gap, gate_per_frame, filter_angles=False,
):
    return RefineConfig(
        confidence_threshold=confidence_threshold,
        butterworth_order=filter_order,
        cutoff_hz=cutoff_hz,
        zero_phase=not no_zero_phase,
        max_interp_gap=max_interp_gap,
        gate_per_frame=gate_per_frame,
        filter_angles=filter_angles,
    )


# ---------------------------------------------------------------------------
# Stage subcommands

@main.command()
@click.option("--frames", "frames_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--low", type=float, default=em.DEFAULT_LOW_THRESHOLD, show_default=True,
              help="Hysteresis low threshold on gradient magnitude.")
@click.option("--high", type=float, default=em.DEFAULT_HIGH_THRESHOLD, show_default=True,
              help="Hysteresis high threshold on gradient magnitude.")
@click.option("--sigma", type=float, default=em.DEFAULT_SIGMA, show_default=True,
              help="Gaussian blur sigma.")
@click.option("--target-size", type=int, default=em.CONDITIONING_SIZE, show_default=True,
              help="Square conditioning-image size expected by the generator.")
@click.option("--canny-before-resize", is_flag=True, default=False,
              help="Detect at native resolution, then rescale the edge mask.")
@click.option("--workers", type=int, default=4, show_default=True)
def edges(frames_dir, out_dir, low, high, sigma, target_size, canny_before_resize, workers):
    """Compute Canny edge maps for every frame."""
    try:
        frames = pl.discover_frames(frames_dir)
        params = pl.CannyParams(
            low_threshold=low, high_threshold=high, gaussian_sigma=sigma,
            before_resize=canny_before_resize,
        )
        written = pl.run_edges_stage(
            frames, range(len(frames)), Path(out_dir), params, target_size, workers
        )
    except GaitPipelineError as exc:
        _fail(EXIT_STAGE_FAILURE, str(exc))
    click.echo(f"wrote {len(written)} edge maps to {out_dir}")


@main.command()
@click.option("--edges", "edges_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--backend", "backend_cmd", required=True,
              help="Generation backend command (shell-split).")
@click.option("--positive-prompt", default=bk.POSITIVE_PROMPT, show_default=True)
@click.option("--negative-prompt", default=bk.NEGATIVE_PROMPT, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True,
              help="Generation seed, fixed per run for reproducibility.")
@click.option("--steps", type=int, default=20, show_default=True)
@click.option("--timeout-s", type=float, default=600.0, show_default=True)
def generate(edges_dir, out_dir, backend_cmd, positive_prompt, negative_prompt,
             seed, steps, timeout_s):
    """Send edge maps to the generation backend."""
    edges_dir = Path(edges_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    requests = [
        bk.GenerationRequest(
            edge_map_path=p, output_path=out / p.name,
            positive_prompt=positive_prompt, negative_prompt=negative_prompt,
            seed=seed, steps=steps,
        )
        for p in sorted(edges_dir.glob("*.png"))
    ]
    try:
        job = bk.BackendJob.create(bk.JobKind.GENERATE, requests)
        manifest = bk.write_manifest(job, out / ".jobs")
        finished = bk.run_backend(backend_cmd.split(), manifest, timeout_s=timeout_s)
    except GaitPipelineError as exc:
        _fail(EXIT_BACKEND_FAILURE, str(exc))
    if finished.status is not bk.JobStatus.DONE:
        _fail(
            EXIT_BACKEND_FAILURE,
            f"generation failed (exit {finished.returncode}, "
            f"{len(finished.missing_outputs)} missing outputs)",
        )
    click.echo(f"generated {len(requests)} images into {out_dir}")


@main.command()
@click.option("--images", "images_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--backend", "backend_cmd", required=True,
              help="Pose backend command (shell-split).")
@click.option("--timeout-s", type=float, default=600.0, show_default=True)
def pose(images_dir, out_dir, backend_cmd, timeout_s):
    """Run the pose backend over a directory of images."""
    images_dir = Path(images_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    requests = [
        bk.PoseRequest(
            image_path=p, output_pose_path=out / f"{p.stem}_keypoints.json"
        )
        for p in sorted(images_dir.glob("*.png"))
    ]
    try:
        job = bk.BackendJob.create(bk.JobKind.ESTIMATE_POSE, requests)
        manifest = bk.write_manifest(job, out / ".jobs")
        finished = bk.run_backend(backend_cmd.split(), manifest, timeout_s=timeout_s)
    except GaitPipelineError as exc:
        _fail(EXIT_BACKEND_FAILURE, str(exc))
    if finished.status is not bk.JobStatus.DONE:
        _fail(
            EXIT_BACKEND_FAILURE,
            f"pose estimation failed (exit {finished.returncode}, "
            f"{len(finished.missing_outputs)} missing outputs)",
        )
    click.echo(f"estimated {len(requests)} poses into {out_dir}")


@main.command()
@click.option("--poses", "poses_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_csv", required=True, type=click.Path())
@click.option("--sample-rate", type=float, default=30.0, show_default=True)
@_refine_options
def refine(poses_dir, out_csv, sample_rate, **refine_kwargs):
    """Gate, interpolate, fix swaps and filter a pose directory into
    trajectories CSV."""
    config = _build_refine(**refine_kwargs)
    try:
        traj = load_pose_directory_as_trajectories(poses_dir, sample_rate=sample_rate)
        refined, report = refine_trajectories(traj, config)
        trajectories_to_csv(refined, out_csv)
    except GaitPipelineError as exc:
        _fail(EXIT_STAGE_FAILURE, str(exc))
    click.echo(
        f"refined trajectories -> {out_csv} "
        f"(gated {report.gated_samples} samples, filled {report.interpolated_samples}, "
        f"swapped {len(report.swapped_frames)} frames)"
    )


@main.command()
@click.option("--trajectories", "traj_csv", required=True, type=click.Path(exists=True))
@click.option("--out", "out_csv", required=True, type=click.Path())
@_meta_options
def kinematics(traj_csv, out_csv, **meta_kwargs):
    """Hip/knee/ankle angles from refined trajectories."""
    meta = _build_meta(**meta_kwargs)
    try:
        traj = trajectories_from_csv(traj_csv)
        angles = compute_joint_angles(traj, meta)
        angles_to_csv(angles, out_csv)
    except GaitPipelineError as exc:
        _fail(EXIT_STAGE_FAILURE, str(exc))
    click.echo(f"angles -> {out_csv}")


@main.command()
@click.option("--angles", "angles_csv", required=True, type=click.Path(exists=True))
@click.option("--events", "events_csv", required=True, type=click.Path(exists=True))
@click.option("--out", "out_csv", required=True, type=click.Path())
@click.option("--svg", "svg_path", type=click.Path(), default=None,
              help="Optionally render ensemble panels to this SVG.")
def cycles(angles_csv, events_csv, out_csv, svg_path):
    """Segment heel-strike cycles, normalize to 101 points and aggregate."""
    try:
        events = load_events(events_csv)
        angles = angles_from_csv(angles_csv)
        ensembles, notes = build_ensembles(angles, events)
        ensembles_to_csv(ensembles, out_csv)
        if svg_path:
            from .svgplot import render_cycle_panels

            render_cycle_panels({"pipeline": ensembles}, svg_path)
    except GaitPipelineError as exc:
        _fail(EXIT_STAGE_FAILURE, str(exc))
    for note in notes:
        click.echo(f"note: {note}", err=True)
    click.echo(f"ensembles -> {out_csv}")


@main.command(name="eval")
@click.option("--trajectories", "traj_csv", required=True, type=click.Path(exists=True))
@click.option("--truth", "truth_csv", required=True, type=click.Path(exists=True))
@click.option("--prosthetic-side", type=click.Choice([s.value for s in Side]),
              default=Side.RIGHT.value, show_default=True)
def eval_cmd(traj_csv, truth_csv, prosthetic_side):
    """Coordinate MAE of trajectories against ground truth, per limb role."""
    from .metrics import coordinate_mae, side_joints

    try:
        pred = trajectories_from_csv(traj_csv)
        truth = trajectories_from_csv(truth_csv)
        prosthetic = Side(prosthetic_side)
        for side in Side:
            role = "prosthetic" if side is prosthetic else "intact"
            res = coordinate_mae(pred, truth, side_joints(side))
            click.echo(f"{role:<12} MAE {res.mae:.3f} px (SD {res.sd:.3f}, n={res.n})")
    except GaitPipelineError as exc:
        _fail(EXIT_STAGE_FAILURE, str(exc))


# ---------------------------------------------------------------------------
# Orchestrated runs

def _config_from_options(overrides) -> pl.PipelineConfig:
    missing = [k for k in ("frames_dir", "run_dir") if not overrides.get(k)]
    if missing:
        raise click.UsageError(f"--config or {missing} required")
    return pl.PipelineConfig(
        frames_dir=overrides["frames_dir"],
        run_dir=overrides["run_dir"],
        generate_command=tuple(overrides["generate_command"].split()),
        pose_command=tuple(overrides["pose_command"].split()),
        meta=overrides["meta"],
        refine=overrides["refine"],
        events_file=overrides.get("events_file"),
        truth_trajectories_csv=overrides.get("truth_trajectories_csv"),
        truth_angles_csv=overrides.get("truth_angles_csv"),
        selective=bool(overrides.get("selective")),
        decimate_k=overrides.get("decimate_k") or 1,
        workers=overrides.get("workers") or 4,
        seed=overrides.get("seed") or 0,
        target_size=overrides.get("target_size") or em.CONDITIONING_SIZE,
    )


def _pipeline_options(fn):
    fn = click.option("--config", "config_file", type=click.Path(exists=True),
                      default=None,
                      help="JSON pipeline config; takes precedence over flags.")(fn)
    fn = click.option("--frames", "frames_dir", type=click.Path(), default=None)(fn)
    fn = click.option("--run-dir", type=click.Path(), default=None)(fn)
    fn = click.option("--generate-backend", "generate_command", default=None,
                      help="Generation backend command (shell-split).")(fn)
    fn = click.option("--pose-backend", "pose_command", default=None,
                      help="Pose backend command (shell-split).")(fn)
    fn = click.option("--events", "events_file", type=click.Path(exists=True),
                      default=None, help="Heel-strike events CSV.")(fn)
    fn = click.option("--truth-trajectories", type=click.Path(exists=True), default=None)(fn)
    fn = click.option("--truth-angles", type=click.Path(exists=True), default=None)(fn)
    fn = click.option("--selective", is_flag=True, default=False,
                      help="Regenerate only poorly estimated frames.")(fn)
    fn = click.option("--decimate-k", type=int, default=1, show_default=True,
                      help="Process every k-th frame; interpolation restores the rest.")(fn)
    fn = click.option("--workers", type=int, default=4, show_default=True)(fn)
    fn = click.option("--seed", type=int, default=0, show_default=True)(fn)
    fn = click.option("--target-size", type=int, default=em.CONDITIONING_SIZE,
                      show_default=True)(fn)
    fn = _meta_options(fn)
    fn = _refine_options(fn)
    return fn


def _gather_config(kwargs) -> pl.PipelineConfig:
    meta = _build_meta(
        kwargs.pop("camera_view"), kwargs.pop("prosthetic_side"),
        kwargs.pop("walking_direction"), kwargs.pop("subject_height_cm"),
    )
    refine_cfg = _build_refine(
        kwargs.pop("confidence_threshold"), kwargs.pop("cutoff_hz"),
        kwargs.pop("filter_order"), kwargs.pop("no_zero_phase"),
        kwargs.pop("max_interp_gap"), kwargs.pop("gate_per_frame"),
        kwargs.pop("filter_angles"),
    )
    config_file = kwargs.pop("config_file")
    kwargs["meta"] = meta
    kwargs["refine"] = refine_cfg
    kwargs["truth_trajectories_csv"] = kwargs.pop("truth_trajectories")
    kwargs["truth_angles_csv"] = kwargs.pop("truth_angles")
    if config_file:
        return pl.PipelineConfig.load(config_file)
    if not kwargs.get("generate_command") or not kwargs.get("pose_command"):
        raise click.UsageError("--generate-backend and --pose-backend are required")
    return _config_from_options(kwargs)


@main.command(name="pipeline")
@_pipeline_options
def pipeline_cmd(**kwargs):
    """Run the full workflow into a resumable run directory."""
    try:
        config = _gather_config(kwargs)
        result = pl.run_full(config)
    except ConfigError as exc:
        raise click.UsageError(str(exc))
    except BackendError as exc:
        _fail(EXIT_BACKEND_FAILURE, str(exc))
    except GaitPipelineError as exc:
        _fail(EXIT_STAGE_FAILURE, str(exc))
    click.echo(
        f"run complete: {result.run_dir} "
        f"(executed {', '.join(result.executed_stages) or 'nothing'};"
        f" cached {', '.join(result.skipped_stages) or 'nothing'})"
    )


@main.command()
@_pipeline_options
def compare(**kwargs):
    """Raw pose pass vs regeneration workflow, with improvement percentages."""
    try:
        config = _gather_config(kwargs)
        result = pl.run_compare(config)
    except ConfigError as exc:
        raise click.UsageError(str(exc))
    except BackendError as exc:
        _fail(EXIT_BACKEND_FAILURE, str(exc))
    except GaitPipelineError as exc:
        _fail(EXIT_STAGE_FAILURE, str(exc))
    if result.report is not None:
        click.echo(render_report_table(result.report))
    click.echo(f"comparison written to {result.run_dir / 'compare'}")


# ---------------------------------------------------------------------------
# Synthetic oracle

@main.command()
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--n-frames", type=int, default=180, show_default=True)
@click.option("--sample-rate", type=float, default=30.0, show_default=True)
@click.option("--cadence", type=float, default=1.0, show_default=True,
              help="Gait cycles per second.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--noise-sd", type=float, default=0.0, show_default=True,
              help="Coordinate noise SD in pixels.")
@click.option("--swap-frames", default="", help="Comma-separated frames to swap L/R.")
@click.option("--phase-offset-right", type=float, default=0.0, show_default=True,
              help="Right-side waveform shift in cycle fractions.")
def synth(out_dir, n_frames, sample_rate, cadence, seed, noise_sd, swap_frames,
          phase_offset_right):
    """Emit a synthetic ground-truth fixture: pose documents, truth angle
    CSV, events CSV and a corruption log."""
    out = Path(out_dir)
    model = GaitModel(
        cadence_hz=cadence, right=SideAsymmetry(phase_offset_cycles=phase_offset_right)
    )
    try:
        result = forward_kinematics(model, n_frames, sample_rate)
        spec = CorruptionSpec(
            noise_sd_px=noise_sd,
            swap_frames=tuple(
                int(f) for f in swap_frames.split(",") if f.strip()
            ),
        )
        corrupted = corrupt(result.trajectories, spec, seed)
        write_trajectory_poses(corrupted.trajectories, out / "poses", model.image_size)
        trajectories_to_csv(result.trajectories, out / "truth_trajectories.csv")
        angles_to_csv(result.angles, out / "truth_angles.csv")
        save_events(result.events, out / "events.csv")
        corrupted.log.save(out / "corruption_log.json")
    except GaitPipelineError as exc:
        _fail(EXIT_STAGE_FAILURE, str(exc))
    click.echo(f"synthetic fixture -> {out}")


# ---------------------------------------------------------------------------
# Backend protocol tooling

@main.command(context_settings={"ignore_unknown_options": True})
@click.option("--workdir", type=click.Path(), default=None,
              help="Scratch directory (temporary by default); must precede "
                   "the backend command.")
@click.argument("kind", type=click.Choice(["generate", "estimate_pose"]))
@click.argument("backend_cmd", nargs=-1, required=True,
                type=click.UNPROCESSED)
def conformance(kind, backend_cmd, workdir):
    """Check that a backend honors the manifest protocol.

    Everything after KIND is the backend command line.
    """
    import tempfile

    job_kind = bk.JobKind(kind)
    scratch = workdir or tempfile.mkdtemp(prefix="regait-conformance-")
    try:
        result = bk.check_conformance(list(backend_cmd), job_kind, scratch)
    except GaitPipelineError as exc:
        _fail(EXIT_BACKEND_FAILURE, str(exc))
    for issue in result.issues:
        click.echo(f"FAIL {issue}", err=True)
    if not result.ok:
        _fail(EXIT_BACKEND_FAILURE, f"{len(result.issues)} conformance issues")
    click.echo(f"conformance OK ({result.checked_outputs} outputs verified)")


@main.command(name="mock-generate")
@click.option("--manifest", "manifest_path", required=True, type=click.Path())
@click.option("--fail-frames", default="", help="Comma-separated frame ordinals to fail.")
def mock_generate(manifest_path, fail_frames):
    """Identity generation mock: copies each edge map to its output path."""
    if not Path(manifest_path).is_file():
        _fail(EXIT_BACKEND_FAILURE, f"manifest {manifest_path} not found")
    try:
        fails = tuple(int(f) for f in fail_frames.split(",") if f.strip())
        code = bk.run_identity_generation(manifest_path, fails)
    except GaitPipelineError as exc:
        _fail(EXIT_BACKEND_FAILURE, str(exc))
    sys.exit(code)


@main.command(name="mock-pose")
@click.option("--manifest", "manifest_path", required=True, type=click.Path())
@click.option("--pose-source", required=True, type=click.Path(),
              help="Directory of pre-rendered pose documents keyed by ordinal.")
@click.option("--route", "routes", multiple=True, metavar="SUBSTR=DIR",
              help="Serve images whose path contains SUBSTR from DIR instead.")
def mock_pose(manifest_path, pose_source, routes):
    """Pose mock: serves pre-rendered pose documents by frame ordinal."""
    if not Path(manifest_path).is_file():
        _fail(EXIT_BACKEND_FAILURE, f"manifest {manifest_path} not found")
    if not Path(pose_source).is_dir():
        _fail(EXIT_BACKEND_FAILURE, f"pose source {pose_source} not found")
    parsed_routes = []
    for route in routes:
        if "=" not in route:
            raise click.UsageError(f"--route needs SUBSTR=DIR, got {route!r}")
        substr, directory = route.split("=", 1)
        parsed_routes.append((substr, directory))
    try:
        code = bk.run_pose_source_backend(manifest_path, pose_source, parsed_routes)
    except GaitPipelineError as exc:
        _fail(EXIT_BACKEND_FAILURE, str(exc))
    sys.exit(code)


if __name__ == "__main__":
    main()
