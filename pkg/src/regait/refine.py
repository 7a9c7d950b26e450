"""Trajectory refinement: confidence gating, spline gap interpolation,
zero-phase low-pass filtering, left/right swap correction, and the frame
selection rules that drive selective regeneration and decimation.

The canonical order is gate -> interpolate -> correct_swaps -> filter; swap
correction runs before filtering so the filter never smooths across a label
flip.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from . import filters
from .errors import EmptySeriesError, SwapSeedNotFoundError, TooFewFramesError
from .model import (
    LOWER_LIMB_JOINTS,
    SWAP_ALL_PAIRS,
    SWAP_COST_PAIRS,
    JointId,
    JointTrack,
    TrajectorySet,
)

DEFAULT_CONFIDENCE_THRESHOLD = 0.50
DEFAULT_FILTER_ORDER = 4
DEFAULT_CUTOFF_HZ = 6.0
DEFAULT_MAX_INTERP_GAP = 15  # 0.5 s at 30 fps; longer gaps stay invalid
DEFAULT_SWAP_NOISE_FLOOR_PX = 10.0
DEFAULT_OUTLIER_RESIDUAL_PX = 20.0
ARM_CUE_CORR_THRESHOLD = 0.2
ARM_CUE_WINDOW = 30


@dataclass(frozen=True)
class RefineConfig:
    """Parameters of the refinement chain."""

    confidence_threshold: float = DEFAULT_CONFIDENCE_THRESHOLD
    butterworth_order: int = DEFAULT_FILTER_ORDER
    cutoff_hz: float = DEFAULT_CUTOFF_HZ
    zero_phase: bool = True
    max_interp_gap: int = DEFAULT_MAX_INTERP_GAP
    gate_per_frame: bool = False
    swap_noise_floor_px: float = DEFAULT_SWAP_NOISE_FLOOR_PX
    outlier_residual_px: float = DEFAULT_OUTLIER_RESIDUAL_PX
    use_arm_cue: bool = True
    filter_angles: bool = False

    def validate(self, sample_rate: float | None = None) -> None:
        if not 0.0 <= self.confidence_threshold <= 1.0:
            raise ValueError(
                f"confidence_threshold {self.confidence_threshold} outside [0, 1]"
            )
        if self.butterworth_order <= 0 or self.butterworth_order % 2 != 0:
            raise ValueError(f"butterworth_order must be even positive, got {self.butterworth_order}")
        if self.cutoff_hz <= 0:
            raise ValueError(f"cutoff_hz must be positive, got {self.cutoff_hz}")
        if sample_rate is not None and self.cutoff_hz >= sample_rate / 2:
            raise ValueError(
                f"cutoff {self.cutoff_hz} Hz must stay below Nyquist ({sample_rate / 2} Hz)"
            )
        if self.max_interp_gap < 0:
            raise ValueError("max_interp_gap must be >= 0")


# ---------------------------------------------------------------------------
# Confidence gating

def gate_by_confidence(
    traj: TrajectorySet,
    threshold: float = DEFAULT_CONFIDENCE_THRESHOLD,
    per_frame: bool = False,
) -> TrajectorySet:
    """Invalidate samples whose confidence falls below ``threshold``.

    Coordinates are untouched so nothing downstream ever reads a gated value
    by accident through the mask. Per-frame mode additionally drops every
    joint of a frame in which any lower-limb joint fails the gate.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold {threshold} outside [0, 1]")
    updates: dict[JointId, JointTrack] = {}
    for joint in traj.joints():
        track = traj.track(joint)
        keep = track.valid & (track.confidence >= threshold)
        updates[joint] = track.replace(valid=keep, interpolated=track.interpolated & keep)
    gated = traj.replace_tracks(updates)
    if not per_frame:
        return gated
    bad_frames = np.zeros(traj.n_frames, dtype=bool)
    for joint in LOWER_LIMB_JOINTS:
        if traj.has_joint(joint):
            track = traj.track(joint)
            bad_frames |= track.valid & (track.confidence < threshold)
    updates = {}
    for joint in gated.joints():
        track = gated.track(joint)
        keep = track.valid & ~bad_frames
        updates[joint] = track.replace(valid=keep, interpolated=track.interpolated & keep)
    return gated.replace_tracks(updates)


# ---------------------------------------------------------------------------
# Gap interpolation

def interpolate_gaps(
    traj: TrajectorySet, max_gap: int = DEFAULT_MAX_INTERP_GAP
) -> TrajectorySet:
    """Fill interior invalid runs of length <= ``max_gap`` per joint with a
    natural cubic spline fitted to that joint's valid samples.

    Filled samples are marked valid + interpolated; leading/trailing gaps
    stay invalid. Joints with fewer than 4 valid samples cannot support a
    spline and pass through untouched (downstream consumers will report
    them as empty series where it matters).
    """
    updates: dict[JointId, JointTrack] = {}
    for joint in traj.joints():
        track = traj.track(joint)
        if track.valid.all() or not track.valid.any():
            continue
        try:
            x, fx = filters.fill_gaps(track.x, track.valid, max_gap)
            y, fy = filters.fill_gaps(track.y, track.valid, max_gap)
        except EmptySeriesError:
            continue
        fill = fx | fy
        if not fill.any():
            continue
        updates[joint] = track.replace(
            x=x,
            y=y,
            valid=track.valid | fill,
            interpolated=track.interpolated | fill,
        )
    return traj.replace_tracks(updates) if updates else traj


# ---------------------------------------------------------------------------
# Low-pass filtering

def butterworth_lowpass(
    series: np.ndarray,
    sample_rate: float,
    cutoff_hz: float = DEFAULT_CUTOFF_HZ,
    order: int = DEFAULT_FILTER_ORDER,
    zero_phase: bool = True,
) -> np.ndarray:
    """Low-pass one fully valid series; see :func:`regait.filters.lowpass`."""
    return filters.lowpass(series, sample_rate, cutoff_hz, order, zero_phase)


def filter_trajectories(traj: TrajectorySet, config: RefineConfig) -> TrajectorySet:
    """Filter x/y of every joint over each contiguous valid span.

    Spans shorter than the zero-phase padding (3x order) cannot be filtered
    and pass through unchanged.
    """
    config.validate(traj.sample_rate)
    min_len = 3 * config.butterworth_order + 1 if config.zero_phase else 1
    updates: dict[JointId, JointTrack] = {}
    for joint in traj.joints():
        track = traj.track(joint)
        if not track.valid.any():
            continue
        x = track.x.copy()
        y = track.y.copy()
        changed = False
        for start, stop in _valid_runs(track.valid):
            if stop - start < min_len:
                continue
            x[start:stop] = filters.lowpass(
                x[start:stop], traj.sample_rate, config.cutoff_hz,
                config.butterworth_order, config.zero_phase,
            )
            y[start:stop] = filters.lowpass(
                y[start:stop], traj.sample_rate, config.cutoff_hz,
                config.butterworth_order, config.zero_phase,
            )
            changed = True
        if changed:
            updates[joint] = track.replace(x=x, y=y)
    return traj.replace_tracks(updates) if updates else traj


def _valid_runs(valid: np.ndarray) -> list[tuple[int, int]]:
    runs = []
    i = 0
    n = len(valid)
    while i < n:
        if not valid[i]:
            i += 1
            continue
        j = i
        while j < n and valid[j]:
            j += 1
        runs.append((i, j))
        i = j
    return runs


# ---------------------------------------------------------------------------
# Left/right swap correction

@dataclass(frozen=True)
class SwapResult:
    """Outcome of swap correction."""

    trajectories: TrajectorySet
    swapped_frames: tuple[int, ...]
    review_frames: tuple[int, ...] = ()
    orientation: str = "unverified"  # arm_cue_consistent | arm_cue_flipped | unverified


def _pair_positions(traj: TrajectorySet, frame: int, flipped: bool) -> dict:
    """Positions of the cost pairs at ``frame`` under an assignment."""
    out = {}
    for left, right in SWAP_COST_PAIRS:
        lt, rt = traj.track(left), traj.track(right)
        if not (lt.valid[frame] and rt.valid[frame]):
            continue
        lpos = np.array((lt.x[frame], lt.y[frame]))
        rpos = np.array((rt.x[frame], rt.y[frame]))
        out[(left, right)] = (rpos, lpos) if flipped else (lpos, rpos)
    return out


class _PairTracker:
    """Constant-velocity reference for the labeled pairs.

    Position-only matching is ambiguous while the legs cross each other
    (twice per cycle the flipped assignment momentarily looks closer);
    predicting each joint forward by its last velocity resolves that, since
    a label flip would require both joints to reverse direction.
    """

    def __init__(self, positions: dict, frame: int):
        self.state: dict = {
            key: {"pos": pos, "vel": (None, None), "frame": frame}
            for key, pos in positions.items()
        }

    def predict(self, key, frame: int):
        entry = self.state[key]
        dt = frame - entry["frame"]
        out = []
        for pos, vel in zip(entry["pos"], entry["vel"]):
            out.append(pos if vel is None else pos + vel * dt)
        return out

    def cost(self, candidate: dict, frame: int) -> float | None:
        common = candidate.keys() & self.state.keys()
        if not common:
            return None
        total = 0.0
        for key in common:
            predicted = self.predict(key, frame)
            for cand, pred in zip(candidate[key], predicted):
                total += float(np.hypot(*(cand - pred)))
        return total

    def update(self, chosen: dict, frame: int) -> None:
        for key, positions in chosen.items():
            entry = self.state.get(key)
            if entry is None:
                self.state[key] = {
                    "pos": positions, "vel": (None, None), "frame": frame
                }
                continue
            dt = frame - entry["frame"]
            vel = tuple(
                (new - old) / dt for new, old in zip(positions, entry["pos"])
            )
            self.state[key] = {"pos": positions, "vel": vel, "frame": frame}


def _horizontal_velocity_correlation(
    traj: TrajectorySet, a: JointId, b: JointId
) -> float | None:
    """Pearson correlation of frame-to-frame horizontal velocities over
    frames where both joints are valid in consecutive frames."""
    if not (traj.has_joint(a) and traj.has_joint(b)):
        return None
    ta, tb = traj.track(a), traj.track(b)
    ok = ta.valid & tb.valid
    pair_ok = ok[:-1] & ok[1:]
    if pair_ok.sum() < 10:
        return None
    va = np.diff(ta.x)[pair_ok]
    vb = np.diff(tb.x)[pair_ok]
    if np.std(va) < 1e-12 or np.std(vb) < 1e-12:
        return None
    return float(np.corrcoef(va, vb)[0, 1])


def _arm_cue_correlations(traj: TrajectorySet) -> list[float]:
    cors = []
    for wrist, ankle in (
        (JointId.L_WRIST, JointId.L_ANKLE),
        (JointId.R_WRIST, JointId.R_ANKLE),
    ):
        c = _horizontal_velocity_correlation(traj, wrist, ankle)
        if c is not None:
            cors.append(c)
    return cors


def _windowed_review_frames(traj: TrajectorySet, window: int) -> list[int]:
    """Frames inside windows where an ipsilateral wrist/ankle pair moves with
    positive horizontal-velocity correlation (arm and leg swinging together,
    which normal gait does not do)."""
    flagged: set[int] = set()
    for wrist, ankle in (
        (JointId.L_WRIST, JointId.L_ANKLE),
        (JointId.R_WRIST, JointId.R_ANKLE),
    ):
        if not (traj.has_joint(wrist) and traj.has_joint(ankle)):
            continue
        tw, ta = traj.track(wrist), traj.track(ankle)
        for start in range(0, traj.n_frames, window):
            stop = min(start + window, traj.n_frames)
            ok = tw.valid[start:stop] & ta.valid[start:stop]
            pair_ok = ok[:-1] & ok[1:]
            if pair_ok.sum() < 10:
                continue
            vw = np.diff(tw.x[start:stop])[pair_ok]
            va = np.diff(ta.x[start:stop])[pair_ok]
            if np.std(vw) < 1e-12 or np.std(va) < 1e-12:
                continue
            if float(np.corrcoef(vw, va)[0, 1]) > ARM_CUE_CORR_THRESHOLD:
                flagged.update(range(start, stop))
    return sorted(flagged)


def _apply_flips(traj: TrajectorySet, flips: np.ndarray) -> TrajectorySet:
    if not flips.any():
        return traj
    updates: dict[JointId, JointTrack] = {}
    for left, right in SWAP_ALL_PAIRS:
        if not (traj.has_joint(left) and traj.has_joint(right)):
            continue
        lt, rt = traj.track(left), traj.track(right)
        new_l = {}
        new_r = {}
        for name in ("x", "y", "confidence", "valid", "interpolated"):
            la = getattr(lt, name).copy()
            ra = getattr(rt, name).copy()
            la[flips], ra[flips] = ra[flips], la[flips].copy()
            new_l[name] = la
            new_r[name] = ra
        updates[left] = JointTrack(**new_l)
        updates[right] = JointTrack(**new_r)
    return traj.replace_tracks(updates)


def correct_swaps(
    traj: TrajectorySet,
    noise_floor_px: float = DEFAULT_SWAP_NOISE_FLOOR_PX,
    use_arm_cue: bool = True,
) -> SwapResult:
    """Detect and undo left/right label swaps of the lower-limb pairs.

    Every frame is assigned the labeling (identity or flipped) that
    minimizes the summed Euclidean distance of the hip/knee/ankle/toe pairs
    to the last accepted frame, seeded at the frame of maximum left-right
    ankle separation where the labeling is least ambiguous. A consistency
    pass cannot see a globally swapped sequence, so the ipsilateral
    arm-versus-leg swing cue resolves the overall orientation when wrists
    are available; sequences without a usable cue are reported unverified.

    Raises :class:`SwapSeedNotFoundError` when no frame separates the ankles
    beyond ``noise_floor_px``.
    """
    for left, right in SWAP_COST_PAIRS:
        if not (traj.has_joint(left) and traj.has_joint(right)):
            raise ValueError(f"missing lower-limb pair {left.name}/{right.name}")

    lt = traj.track(JointId.L_ANKLE)
    rt = traj.track(JointId.R_ANKLE)
    both = lt.valid & rt.valid
    separation = np.where(both, np.hypot(lt.x - rt.x, lt.y - rt.y), -1.0)
    if separation.max() <= noise_floor_px:
        raise SwapSeedNotFoundError(
            f"max ankle separation {separation.max():.1f}px is below the "
            f"{noise_floor_px:.1f}px noise floor"
        )
    seed = int(np.argmax(separation))

    flips = np.zeros(traj.n_frames, dtype=bool)
    for order in (range(seed + 1, traj.n_frames), range(seed - 1, -1, -1)):
        tracker = _PairTracker(_pair_positions(traj, seed, flipped=False), seed)
        for frame in order:
            identity = _pair_positions(traj, frame, flipped=False)
            if not identity:
                continue
            flipped = _pair_positions(traj, frame, flipped=True)
            cost_id = tracker.cost(identity, frame)
            cost_fl = tracker.cost(flipped, frame)
            if cost_id is None:
                continue
            flip_here = cost_fl is not None and cost_fl < cost_id
            flips[frame] = flip_here
            tracker.update(flipped if flip_here else identity, frame)

    corrected = _apply_flips(traj, flips)
    orientation = "unverified"
    review: list[int] = []
    if use_arm_cue:
        cors = _arm_cue_correlations(corrected)
        if cors:
            if float(np.mean(cors)) > ARM_CUE_CORR_THRESHOLD:
                # Arm swings with the ipsilateral leg: global orientation is
                # wrong, flip everything.
                flips = ~flips
                corrected = _apply_flips(traj, flips)
                orientation = "arm_cue_flipped"
            else:
                orientation = "arm_cue_consistent"
            review = _windowed_review_frames(corrected, ARM_CUE_WINDOW)

    swapped = tuple(int(i) for i in np.flatnonzero(flips))
    return SwapResult(
        trajectories=corrected,
        swapped_frames=swapped,
        review_frames=tuple(review),
        orientation=orientation,
    )


# ---------------------------------------------------------------------------
# Frame selection for selective regeneration

def _median_filter_residuals(track: JointTrack, window: int = 5) -> np.ndarray:
    """Residual of each coordinate against a centered rolling median over
    valid neighbors; NaN where undefined.

    Windows are replicate-padded at the sequence ends so a truncated,
    one-sided window does not read steady fast motion as an outlier.
    """
    n = len(track)
    half = window // 2
    residual = np.full(n, np.nan)
    for i in range(n):
        if not track.valid[i]:
            continue
        idx = np.clip(np.arange(i - half, i + half + 1), 0, n - 1)
        sel = track.valid[idx]
        if sel.sum() < 3:
            continue
        med_x = np.median(track.x[idx][sel])
        med_y = np.median(track.y[idx][sel])
        residual[i] = max(abs(track.x[i] - med_x), abs(track.y[i] - med_y))
    return residual


def select_frames_for_regeneration(
    raw: TrajectorySet,
    threshold: float = DEFAULT_CONFIDENCE_THRESHOLD,
    outlier_residual_px: float = DEFAULT_OUTLIER_RESIDUAL_PX,
    flagged_frames: Iterable[int] = (),
) -> set[int]:
    """Frames whose raw pose estimates need the regeneration workflow.

    Union of: frames with any lower-limb joint missing or below the
    confidence gate, frames flagged by swap correction (passed in by the
    caller), and frames where any lower-limb coordinate deviates from its
    5-frame rolling median by more than ``outlier_residual_px``.
    """
    selected: set[int] = set(int(f) for f in flagged_frames)
    for joint in LOWER_LIMB_JOINTS:
        if not raw.has_joint(joint):
            selected.update(range(raw.n_frames))
            continue
        track = raw.track(joint)
        bad = ~track.valid | (track.confidence < threshold)
        selected.update(int(i) for i in np.flatnonzero(bad))
        residual = _median_filter_residuals(track)
        with np.errstate(invalid="ignore"):
            outliers = residual > outlier_residual_px
        selected.update(int(i) for i in np.flatnonzero(outliers))
    return selected


# ---------------------------------------------------------------------------
# Frame decimation

def decimate_plan(n_frames: int, keep_every_k: int) -> list[int]:
    """Frames to keep when decimating by ``k``: every k-th plus the final
    frame; the dropped frames are restored later by gap interpolation."""
    if keep_every_k < 1:
        raise ValueError(f"keep_every_k must be >= 1, got {keep_every_k}")
    if n_frames <= 0:
        raise ValueError("n_frames must be positive")
    kept = sorted(set(range(0, n_frames, keep_every_k)) | {n_frames - 1})
    if len(kept) < 4:
        raise TooFewFramesError(
            f"decimation by {keep_every_k} keeps only {len(kept)} of {n_frames} "
            "frames; interpolation needs at least 4"
        )
    return kept


# ---------------------------------------------------------------------------
# Full chain

@dataclass(frozen=True)
class RefineReport:
    """What the refinement chain did, for the run log."""

    gated_samples: int
    interpolated_samples: int
    swapped_frames: tuple[int, ...]
    swap_orientation: str
    review_frames: tuple[int, ...]
    swap_correction_skipped: str | None = None


def refine_trajectories(
    traj: TrajectorySet, config: RefineConfig
) -> tuple[TrajectorySet, RefineReport]:
    """Run gate -> interpolate -> correct_swaps -> filter with the
    configured parameters."""
    config.validate(traj.sample_rate)
    gated = gate_by_confidence(
        traj, config.confidence_threshold, per_frame=config.gate_per_frame
    )
    n_gated = sum(
        int((traj.track(j).valid & ~gated.track(j).valid).sum()) for j in traj.joints()
    )
    filled = interpolate_gaps(gated, config.max_interp_gap)
    n_filled = sum(
        int((filled.track(j).interpolated & ~gated.track(j).interpolated).sum())
        for j in filled.joints()
    )
    skipped = None
    try:
        swap = correct_swaps(
            filled, config.swap_noise_floor_px, use_arm_cue=config.use_arm_cue
        )
        unswapped = swap.trajectories
        swapped_frames = swap.swapped_frames
        orientation = swap.orientation
        review = swap.review_frames
    except SwapSeedNotFoundError as exc:
        skipped = str(exc)
        unswapped = filled
        swapped_frames = ()
        orientation = "skipped"
        review = ()
    smoothed = filter_trajectories(unswapped, config)
    report = RefineReport(
        gated_samples=n_gated,
        interpolated_samples=n_filled,
        swapped_frames=swapped_frames,
        swap_orientation=orientation,
        review_frames=review,
        swap_correction_skipped=skipped,
    )
    return smoothed, report
