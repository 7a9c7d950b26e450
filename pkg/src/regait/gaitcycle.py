"""Heel-strike delimited cycle segmentation, 0-100% time normalization and
cross-cycle ensemble statistics.

A gait cycle is the interval between consecutive heel strikes of the same
foot. Events are an ingested artifact (manually identified or emitted by
the synthetic oracle); automatic detection is intentionally out of scope,
though :class:`EventDetector` leaves a seam for future detectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence

import numpy as np

from .errors import (
    CycleRejectedError,
    InsufficientEventsError,
    NoEventsError,
    NonMonotonicEventsError,
    EventFileError,
)
from .kinematics import ANGLE_JOINTS, JointAngleSeries
from .model import EventKind, GaitEvent, Side, TrajectorySet

N_CYCLE_SAMPLES = 101  # 0%, 1%, ..., 100%
MIN_CYCLE_VALID_FRACTION = 0.9

_EVENTS_HEADER = "frame,side,kind"
_SIDE_ALIASES = {"left": Side.LEFT, "l": Side.LEFT, "right": Side.RIGHT, "r": Side.RIGHT}
_KIND_ALIASES = {"heel_strike": EventKind.HEEL_STRIKE, "hs": EventKind.HEEL_STRIKE}


class EventDetector(Protocol):
    """Interface for future automatic heel-strike detectors."""

    def detect(self, traj: TrajectorySet) -> list[GaitEvent]: ...


def load_events(path: str | Path) -> list[GaitEvent]:
    """Read and validate a gait-event CSV (header ``frame,side,kind``)."""
    lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines:
        raise NoEventsError(f"{path} is empty")
    if lines[0].lower() != _EVENTS_HEADER:
        raise EventFileError(f"expected header '{_EVENTS_HEADER}' in {path}")
    events: list[GaitEvent] = []
    for line in lines[1:]:
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 3:
            raise EventFileError(f"bad event row {line!r}")
        frame_s, side_s, kind_s = parts
        side = _SIDE_ALIASES.get(side_s.lower())
        if side is None:
            raise EventFileError(f"unknown side {side_s!r}")
        kind = _KIND_ALIASES.get(kind_s.lower())
        if kind is None:
            raise EventFileError(f"unknown event kind {kind_s!r}")
        try:
            frame = int(frame_s)
        except ValueError as exc:
            raise EventFileError(f"bad frame index {frame_s!r}") from exc
        events.append(GaitEvent(frame_index=frame, side=side, kind=kind))
    if not events:
        raise NoEventsError(f"{path} has a header but no events")
    for side in Side:
        frames = [e.frame_index for e in events if e.side is side]
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise NonMonotonicEventsError(
                f"{side.value} events are not strictly increasing: {frames}"
            )
    events.sort(key=lambda e: (e.frame_index, e.side.value))
    return events


def save_events(events: Sequence[GaitEvent], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [_EVENTS_HEADER]
    for e in events:
        lines.append(f"{e.frame_index},{e.side.value},{e.kind.value}")
    path.write_text("\n".join(lines) + "\n")
    return path


def segment_cycles(events: Iterable[GaitEvent], side: Side) -> list[tuple[int, int]]:
    """(start, end) frame pairs between consecutive same-side heel strikes:
    n events yield n - 1 cycles."""
    frames = sorted(
        e.frame_index
        for e in events
        if e.side is side and e.kind is EventKind.HEEL_STRIKE
    )
    if len(frames) < 2:
        raise InsufficientEventsError(
            f"need >=2 {side.value} heel strikes to form a cycle, got {len(frames)}"
        )
    return list(zip(frames[:-1], frames[1:]))


@dataclass(frozen=True)
class NormalizedCycle:
    """One gait cycle resampled to 101 points (0..100% inclusive)."""

    side: Side
    hip_deg: np.ndarray
    knee_deg: np.ndarray
    ankle_deg: np.ndarray
    hip_valid: np.ndarray
    knee_valid: np.ndarray
    ankle_valid: np.ndarray
    start_frame: int
    end_frame: int

    def __post_init__(self):
        for name in ("hip_deg", "knee_deg", "ankle_deg"):
            if len(getattr(self, name)) != N_CYCLE_SAMPLES:
                raise ValueError(f"{name} must have {N_CYCLE_SAMPLES} samples")

    def series(self, joint: str) -> tuple[np.ndarray, np.ndarray]:
        return getattr(self, f"{joint}_deg"), getattr(self, f"{joint}_valid")


def _resample_linear(
    values: np.ndarray, valid: np.ndarray, t: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Linear resampling at fractional frame positions; a sample is valid
    only when the frames bracketing it are valid."""
    lo = np.floor(t).astype(int)
    hi = np.ceil(t).astype(int)
    frac = t - lo
    out = np.full(len(t), np.nan)
    ok = valid[lo] & valid[hi]
    v0 = values[lo]
    v1 = values[hi]
    out[ok] = v0[ok] * (1.0 - frac[ok]) + v1[ok] * frac[ok]
    return out, ok


def normalize_cycle(
    angles: JointAngleSeries,
    cycle: tuple[int, int],
    min_valid_fraction: float = MIN_CYCLE_VALID_FRACTION,
) -> NormalizedCycle:
    """Resample one cycle onto t_k = start + k (end - start) / 100.

    Each joint needs at least ``min_valid_fraction`` of the cycle's frames
    valid; a joint below that is emitted fully invalid, and the cycle is
    rejected outright when every joint falls below.
    """
    start, end = cycle
    if not 0 <= start < end < angles.n_frames:
        raise ValueError(f"cycle {cycle} outside the {angles.n_frames}-frame series")
    t = start + np.arange(N_CYCLE_SAMPLES) * (end - start) / 100.0
    span = slice(start, end + 1)
    out: dict[str, np.ndarray] = {}
    usable = 0
    for joint in ANGLE_JOINTS:
        values, valid = angles.series(joint)
        fraction = float(valid[span].mean())
        if fraction < min_valid_fraction:
            out[f"{joint}_deg"] = np.full(N_CYCLE_SAMPLES, np.nan)
            out[f"{joint}_valid"] = np.zeros(N_CYCLE_SAMPLES, dtype=bool)
            continue
        resampled, ok = _resample_linear(values, valid, t)
        out[f"{joint}_deg"] = resampled
        out[f"{joint}_valid"] = ok
        usable += 1
    if usable == 0:
        raise CycleRejectedError(
            f"cycle [{start}, {end}] has no joint with >= "
            f"{min_valid_fraction:.0%} validity"
        )
    return NormalizedCycle(side=angles.side, start_frame=start, end_frame=end, **out)


@dataclass(frozen=True)
class CycleEnsemble:
    """Pointwise mean and sample SD across the accepted cycles of one side."""

    side: Side
    cycles: tuple[NormalizedCycle, ...]
    mean: Mapping[str, np.ndarray]      # joint -> (101,)
    sd: Mapping[str, np.ndarray]        # joint -> (101,)
    count: Mapping[str, np.ndarray]     # joint -> cycles valid per point

    @property
    def n_cycles(self) -> int:
        return len(self.cycles)


def ensemble_stats(cycles: Sequence[NormalizedCycle]) -> CycleEnsemble:
    """Pointwise masked mean and sample SD (SD of a single cycle is 0)."""
    if not cycles:
        raise ValueError("no accepted cycles to aggregate")
    sides = {c.side for c in cycles}
    if len(sides) != 1:
        raise ValueError(f"cycles mix sides: {sorted(s.value for s in sides)}")
    mean: dict[str, np.ndarray] = {}
    sd: dict[str, np.ndarray] = {}
    count: dict[str, np.ndarray] = {}
    for joint in ANGLE_JOINTS:
        values = np.stack([c.series(joint)[0] for c in cycles])
        valid = np.stack([c.series(joint)[1] for c in cycles])
        n = valid.sum(axis=0)
        safe = np.where(valid, values, 0.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            m = np.where(n > 0, safe.sum(axis=0) / np.maximum(n, 1), np.nan)
            centered = np.where(valid, values - m, 0.0)
            var = np.where(n > 1, (centered**2).sum(axis=0) / np.maximum(n - 1, 1), 0.0)
        s = np.sqrt(var)
        s[n == 0] = np.nan
        mean[joint] = m
        sd[joint] = s
        count[joint] = n
    return CycleEnsemble(
        side=cycles[0].side, cycles=tuple(cycles), mean=mean, sd=sd, count=count
    )


def build_ensembles(
    angles: Mapping[Side, JointAngleSeries],
    events: Sequence[GaitEvent],
    min_valid_fraction: float = MIN_CYCLE_VALID_FRACTION,
) -> tuple[dict[Side, CycleEnsemble], list[str]]:
    """Segment, normalize and aggregate cycles for every side present.

    Returns the ensembles plus human-readable notes about rejected cycles
    and sides without enough events.
    """
    ensembles: dict[Side, CycleEnsemble] = {}
    notes: list[str] = []
    for side, series in angles.items():
        try:
            cycles = segment_cycles(events, side)
        except InsufficientEventsError as exc:
            notes.append(str(exc))
            continue
        accepted = []
        for cycle in cycles:
            try:
                accepted.append(normalize_cycle(series, cycle, min_valid_fraction))
            except CycleRejectedError as exc:
                notes.append(str(exc))
        if accepted:
            ensembles[side] = ensemble_stats(accepted)
        else:
            notes.append(f"no accepted cycles on the {side.value} side")
    return ensembles, notes


# ---------------------------------------------------------------------------
# CSV outputs

_ENSEMBLE_HEADER = "percent,side,joint,mean_deg,sd_deg,n_cycles"


def ensembles_to_csv(
    ensembles: Mapping[Side, CycleEnsemble], path: str | Path
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [_ENSEMBLE_HEADER]
    for side in (Side.LEFT, Side.RIGHT):
        ens = ensembles.get(side)
        if ens is None:
            continue
        for joint in ANGLE_JOINTS:
            for k in range(N_CYCLE_SAMPLES):
                m = ens.mean[joint][k]
                s = ens.sd[joint][k]
                n = int(ens.count[joint][k])
                m_s = f"{m:.6f}" if np.isfinite(m) else ""
                s_s = f"{s:.6f}" if np.isfinite(s) else ""
                lines.append(f"{k},{side.value},{joint},{m_s},{s_s},{n}")
    path.write_text("\n".join(lines) + "\n")
    return path


def ensembles_from_csv(path: str | Path) -> dict[Side, dict[str, dict[str, np.ndarray]]]:
    """Read back an ensemble CSV as side -> joint -> {mean, sd, n}."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != _ENSEMBLE_HEADER:
        raise ValueError(f"unexpected ensemble CSV header in {path}")
    out: dict[Side, dict[str, dict[str, np.ndarray]]] = {}
    for line in lines[1:]:
        k, side_s, joint, m_s, s_s, n_s = line.split(",")
        side = Side(side_s)
        store = out.setdefault(side, {}).setdefault(
            joint,
            {
                "mean": np.full(N_CYCLE_SAMPLES, np.nan),
                "sd": np.full(N_CYCLE_SAMPLES, np.nan),
                "n": np.zeros(N_CYCLE_SAMPLES),
            },
        )
        k = int(k)
        store["mean"][k] = float(m_s) if m_s else np.nan
        store["sd"][k] = float(s_s) if s_s else np.nan
        store["n"][k] = int(n_s)
    return out


def plot_data_to_csv(
    per_method: Mapping[str, Mapping[Side, CycleEnsemble]], path: str | Path
) -> Path:
    """Long-format plot feed: percent vs mean/sd per joint, side and method."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["percent,method,side,joint,mean_deg,sd_deg"]
    for method in sorted(per_method):
        for side in (Side.LEFT, Side.RIGHT):
            ens = per_method[method].get(side)
            if ens is None:
                continue
            for joint in ANGLE_JOINTS:
                for k in range(N_CYCLE_SAMPLES):
                    m = ens.mean[joint][k]
                    s = ens.sd[joint][k]
                    if not np.isfinite(m):
                        continue
                    lines.append(
                        f"{k},{method},{side.value},{joint},{m:.6f},"
                        f"{s if np.isfinite(s) else 0.0:.6f}"
                    )
    path.write_text("\n".join(lines) + "\n")
    return path
