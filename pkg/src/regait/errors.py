"""Exception hierarchy shared across the toolkit.

Batch stages catch :class:`GaitPipelineError` subclasses per frame or per
joint and degrade to invalid samples; anything else is a programming error
and propagates.
"""

from __future__ import annotations


class GaitPipelineError(Exception):
    """Base class for all recoverable toolkit errors."""


# ---------------------------------------------------------------------------
# Pose document ingestion

class PoseDocumentError(GaitPipelineError):
    """Malformed pose document (bad JSON, wrong triple count, ...)."""


class NoPersonDetectedError(PoseDocumentError):
    """Pose document contains zero people."""


class MultiplePeopleError(PoseDocumentError):
    """More than one person present and no selection rule configured."""


class FrameIndexGapError(GaitPipelineError):
    """Frame sequence is not contiguous."""


# ---------------------------------------------------------------------------
# Refinement

class EmptySeriesError(GaitPipelineError):
    """A joint series has too few valid samples for the requested operation."""


class SwapSeedNotFoundError(GaitPipelineError):
    """No frame with left/right separation above the noise floor."""


class TooFewFramesError(GaitPipelineError):
    """Decimation would keep fewer frames than interpolation needs."""


# ---------------------------------------------------------------------------
# Kinematics

class DegenerateSegmentError(GaitPipelineError):
    """Two keypoints of a segment coincide; the angle is undefined."""


class DirectionAmbiguousError(GaitPipelineError):
    """Mean hip displacement too small to infer the walking direction."""


class ViewUnsupportedError(GaitPipelineError):
    """Operation requires a sagittal camera view."""


# ---------------------------------------------------------------------------
# Gait cycles

class EventFileError(GaitPipelineError):
    """Unreadable or invalid gait event file."""


class NoEventsError(EventFileError):
    """Event file contains no events."""


class NonMonotonicEventsError(EventFileError):
    """Same-side events are not strictly increasing in frame index."""


class InsufficientEventsError(GaitPipelineError):
    """Fewer than two same-side heel strikes; no cycle can be formed."""


class CycleRejectedError(GaitPipelineError):
    """Cycle validity below the acceptance fraction; excluded from stats."""


# ---------------------------------------------------------------------------
# Synthetic oracle

class FrameOutOfBoundsError(GaitPipelineError):
    """Forward kinematics placed a keypoint outside the image."""

    def __init__(self, frame_index: int, message: str = ""):
        self.frame_index = frame_index
        super().__init__(message or f"keypoint out of bounds at frame {frame_index}")


# ---------------------------------------------------------------------------
# Backend bridge

class ManifestError(GaitPipelineError):
    """Invalid backend job manifest."""


class EmptyJobError(ManifestError):
    """Job contains no requests."""


class DuplicateOutputError(ManifestError):
    """Two requests share an output path."""


class BackendError(GaitPipelineError):
    """Backend executable failed, timed out, or left outputs missing."""


# ---------------------------------------------------------------------------
# Pipeline

class StageError(GaitPipelineError):
    """A pipeline stage failed in a way that prevents continuing."""

    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"stage '{stage}': {message}")


class ConfigError(GaitPipelineError):
    """Invalid pipeline configuration."""
