"""regait: markerless gait analysis for lower-limb prosthetic users.

Batch toolkit around a regeneration workflow: native Canny edge maps
condition an external image-generation backend that redraws each frame with
intact-looking limbs, a pose backend extracts BODY_25 keypoints from the
regenerated frames, and native signal refinement plus 2D sagittal inverse
kinematics turn the keypoints into normalized gait-cycle curves and error
reports. Pretrained models live entirely behind a manifest/subprocess
protocol; bundled mocks make every stage runnable and deterministic on CPU.
"""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    CameraView,
    FramePose,
    GaitEvent,
    JointId,
    JointTrack,
    Keypoint2D,
    SequenceMeta,
    Side,
    TrajectorySet,
    WalkingDirection,
    assemble_trajectories,
)
