"""Object-complete LiDAR frames by temporal object fusion, plus distillation losses.

The pipeline: detect (given boxes) -> track -> canonicalize and merge each
track's views -> paste the merged object back into every frame. A synthetic
LiDAR simulator supplies ground truth for evaluation.
"""

from .completion import FusionConfig, FusionError, fuse_sequence, run_pipeline, subsample_added_points
from .core import BoundingBox3D, PointCloud, RigidTransform, apply_transform, compose, points_in_box
from .distill import DistillationConfig, LossBreakdown, distillation_loss, kl_divergence, total_loss
from .evaluation import chamfer, coverage, evaluate_sequence, tracking_score
from .frames import DetectedInstance, Frame, Sequence
from .registration import CanonicalObject, IcpParams, canonicalize, icp_register, merge_track
from .simulate import SceneConfig, generate
from .tracking import Track, greedy_track, track_instances_from_ids

__version__ = "0.1.0"

__all__ = [
    "BoundingBox3D",
    "CanonicalObject",
    "DetectedInstance",
    "DistillationConfig",
    "Frame",
    "FusionConfig",
    "FusionError",
    "IcpParams",
    "LossBreakdown",
    "PointCloud",
    "RigidTransform",
    "SceneConfig",
    "Sequence",
    "Track",
    "apply_transform",
    "canonicalize",
    "chamfer",
    "compose",
    "coverage",
    "distillation_loss",
    "evaluate_sequence",
    "fuse_sequence",
    "generate",
    "greedy_track",
    "icp_register",
    "kl_divergence",
    "merge_track",
    "points_in_box",
    "run_pipeline",
    "subsample_added_points",
    "total_loss",
    "track_instances_from_ids",
    "tracking_score",
]
