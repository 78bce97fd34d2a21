"""Completion, tracking and registration metrics against simulator ground truth."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import PointCloud, RigidTransform, points_in_box_mask
from .frames import Sequence
from .registration import canonicalize
from .spatial import VoxelGrid, nearest_neighbors


def coverage(completed: PointCloud, gt_full: PointCloud, radius: float) -> float:
    """Fraction of ground-truth points with a completed point within ``radius``."""
    if len(gt_full) == 0:
        raise ValueError("ground-truth cloud is empty")
    if not radius > 0:
        raise ValueError("radius must be positive")
    if len(completed) == 0:
        return 0.0
    hit = VoxelGrid(completed.xyz, radius).has_neighbor(gt_full.xyz, radius)
    return float(hit.mean())


def chamfer(a: PointCloud, b: PointCloud) -> float:
    """Symmetric mean nearest-neighbor distance (not squared), in meters."""
    if len(a) == 0 or len(b) == 0:
        raise ValueError("chamfer distance needs two non-empty clouds")
    d_ab, _ = nearest_neighbors(b.xyz, a.xyz)
    d_ba, _ = nearest_neighbors(a.xyz, b.xyz)
    return 0.5 * (float(d_ab.mean()) + float(d_ba.mean()))


def _associations(tracks) -> set[tuple[tuple[int, int], tuple[int, int]]]:
    pairs = set()
    for track in tracks:
        occ = track.occurrences
        for a, b in zip(occ, occ[1:]):
            if b[0] == a[0] + 1:
                pairs.add((a, b))
    return pairs


def tracking_score(pred, gt, sequence: Sequence | None = None) -> tuple[float, float]:
    """Precision and recall of adjacent-frame associations.

    A predicted link between consecutive frames is correct when both ends belong
    to the same ground-truth chain. Empty denominators score 1.0.
    """
    gt_owner = {}
    for track in gt:
        for key in track.occurrences:
            gt_owner[key] = track.track_id
    valid = set(sequence.instance_keys()) if sequence is not None else set(gt_owner)
    for track in pred:
        for key in track.occurrences:
            if key not in valid:
                raise ValueError(f"track {track.track_id} references (frame {key[0]}, instance {key[1]}) outside the sequence")
    pred_links = _associations(pred)
    gt_links = _associations(gt)
    correct = sum(1 for a, b in pred_links if a in gt_owner and gt_owner.get(a) == gt_owner.get(b))
    precision = correct / len(pred_links) if pred_links else 1.0
    recall = correct / len(gt_links) if gt_links else 1.0
    return precision, recall


def transform_error(estimated: RigidTransform, truth: RigidTransform) -> tuple[float, float]:
    """Rotation error in degrees and translation error in meters of ``estimated * truth^-1``."""
    residual = estimated @ truth.inverse()
    cos = (np.trace(residual.rotation) - 1.0) / 2.0
    angle = math.degrees(math.acos(min(1.0, max(-1.0, cos))))
    return angle, float(np.linalg.norm(residual.translation))


@dataclass
class ObjectEval:
    instance_id: int
    coverage: list[float] = field(default_factory=list)
    chamfer: list[float] = field(default_factory=list)

    def summary(self) -> dict:
        cov = self.coverage or [0.0]
        return {
            "instance_id": self.instance_id,
            "frames": len(self.coverage),
            "coverage_min": min(cov),
            "coverage_mean": float(np.mean(cov)),
            "chamfer_mean": float(np.mean(self.chamfer)) if self.chamfer else None,
        }


@dataclass
class EvalReport:
    objects: list[ObjectEval]
    coverage_radius: float
    precision: float | None = None
    recall: float | None = None
    rotation_error_deg: list[float] = field(default_factory=list)
    translation_error_m: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        out = {
            "coverage_radius": self.coverage_radius,
            "objects": [o.summary() for o in self.objects],
            "tracking": None if self.precision is None else {"precision": self.precision, "recall": self.recall},
        }
        if self.rotation_error_deg:
            out["registration"] = {"rotation_error_deg": self.rotation_error_deg, "translation_error_m": self.translation_error_m}
        return out

    def summary_lines(self) -> list[str]:
        lines = [f"coverage radius {self.coverage_radius:g} m"]
        for o in self.objects:
            s = o.summary()
            lines.append(
                f"object {s['instance_id']}: frames={s['frames']} coverage min={s['coverage_min']:.4f} mean={s['coverage_mean']:.4f}"
            )
        if self.precision is not None:
            lines.append(f"tracking precision={self.precision:.4f} recall={self.recall:.4f}")
        return lines


def evaluate_sequence(fused: Sequence, truth, coverage_radius: float = 0.1, tracks=None) -> EvalReport:
    """Per-object coverage and chamfer of every fused instance against its full surface.

    Instances are matched to ground truth by ``instance_id``; their in-box points
    are canonicalized with the frame's box before comparison.
    """
    per_object: dict[int, ObjectEval] = {}
    for frame in fused.frames:
        for inst in frame.instances:
            gt = truth.full_surfaces.get(inst.instance_id)
            if gt is None:
                continue
            pts = frame.cloud.select(points_in_box_mask(inst.box, frame.cloud.xyz))
            canon = canonicalize(pts, inst.box)
            entry = per_object.setdefault(inst.instance_id, ObjectEval(inst.instance_id))
            entry.coverage.append(coverage(canon, gt, coverage_radius))
            if len(canon):
                entry.chamfer.append(chamfer(canon, gt))
    report = EvalReport([per_object[k] for k in sorted(per_object)], coverage_radius)
    if tracks is not None:
        report.precision, report.recall = tracking_score(tracks, truth.tracks, fused)
    return report


__all__ = [
    "EvalReport",
    "ObjectEval",
    "chamfer",
    "coverage",
    "evaluate_sequence",
    "tracking_score",
    "transform_error",
]
