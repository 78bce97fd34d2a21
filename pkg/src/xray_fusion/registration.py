"""Canonicalization of instance clouds and multi-view merging.

Two merge strategies share one slot: ``"geometry"`` trusts the boxes and simply
stacks canonicalized views, ``"icp"`` additionally refines each view against the
points accumulated so far with point-to-point ICP. A learned registration method
would be a third strategy with the same contract.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import BoundingBox3D, PointCloud, RigidTransform, apply_transform
from .spatial import RadiusIndex

STRATEGIES = ("geometry", "icp")


class RegistrationError(ValueError):
    pass


class NoOverlapError(RegistrationError):
    pass


@dataclass(frozen=True)
class IcpParams:
    max_iterations: int = 50
    convergence_tol: float = 1e-4
    max_correspondence_dist: float = 0.5

    def __post_init__(self):
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        if self.convergence_tol < 0 or not self.max_correspondence_dist > 0:
            raise ValueError("convergence_tol must be >= 0 and max_correspondence_dist > 0")


@dataclass(frozen=True)
class RegistrationResult:
    """Outcome of :func:`icp_register`.

    ``residual_rmse`` is the RMSE over inlier correspondences at the returned
    transform. ``rmse_trace`` holds the truncated RMSE (outliers charged at
    ``max_correspondence_dist``) of the initial pose and of every accepted
    iterate; this is the quantity ICP minimizes, so it never increases.
    """

    transform: RigidTransform
    residual_rmse: float
    iterations: int
    rmse_trace: tuple[float, ...] = ()
    inlier_rmse_trace: tuple[float, ...] = ()


@dataclass(frozen=True, eq=False)
class CanonicalObject:
    """Merged object cloud in its box frame (center at origin, zero yaw).

    ``point_frames[k]`` is the frame index that contributed point k, which lets
    fusion tell a frame's own points from those borrowed from other frames.
    """

    track_id: int
    cloud: PointCloud
    source_count: int
    point_frames: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    icp_residuals: tuple[float, ...] = ()


def canonicalize(instance_cloud: PointCloud, box: BoundingBox3D) -> PointCloud:
    return apply_transform(box.pose().inverse(), instance_cloud)


def repose(canonical_cloud: PointCloud, box: BoundingBox3D) -> PointCloud:
    """Inverse of :func:`canonicalize`: place a canonical cloud at ``box``'s pose."""
    return apply_transform(box.pose(), canonical_cloud)


def kabsch(src: np.ndarray, dst: np.ndarray) -> RigidTransform:
    """Least-squares rigid transform taking ``src`` points onto ``dst``.

    With fewer than three points, or collinear points, only the translation is
    fitted.
    """
    mu_s, mu_d = src.mean(axis=0), dst.mean(axis=0)
    a, b = src - mu_s, dst - mu_d
    if len(src) < 3 or np.linalg.matrix_rank(a, tol=1e-9 * max(1.0, np.abs(a).max())) < 2:
        return RigidTransform(np.eye(3), mu_d - mu_s)
    u, _, vt = np.linalg.svd(a.T @ b)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    rot = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return RigidTransform(rot, mu_d - rot @ mu_s)


def _match(grid: RadiusIndex, pts: np.ndarray, radius: float):
    dist, idx = grid.nearest_within(pts, radius)
    inlier = np.isfinite(dist)
    if not inlier.any():
        raise NoOverlapError("no overlap: no correspondences within max_correspondence_dist")
    d2 = dist[inlier] ** 2
    inlier_rmse = float(np.sqrt(d2.mean()))
    truncated = float(np.sqrt((d2.sum() + (len(pts) - len(d2)) * radius * radius) / len(pts)))
    return truncated, inlier_rmse, inlier, idx


def icp_register(source: PointCloud, target: PointCloud, params: IcpParams | None = None) -> RegistrationResult:
    """Point-to-point ICP aligning ``source`` onto ``target``.

    Each iteration matches every moved source point to its nearest target point
    within ``max_correspondence_dist``, fits a rigid update on the inliers
    (Kabsch) and applies it. Iteration stops when the truncated RMSE improves by
    less than ``convergence_tol`` or after ``max_iterations`` updates; a step
    that would raise it (possible only through rounding) is discarded.
    """
    params = params or IcpParams()
    if len(source) == 0 or len(target) == 0:
        raise RegistrationError("icp_register needs non-empty source and target clouds")
    radius = params.max_correspondence_dist
    grid = RadiusIndex(target.xyz, radius)
    src, tgt = source.xyz, target.xyz

    current = RigidTransform.identity()
    moved = src
    cost, rmse, inlier, idx = _match(grid, moved, radius)
    trace, inlier_trace = [cost], [rmse]
    iterations = 0
    for it in range(1, params.max_iterations + 1):
        step = kabsch(moved[inlier], tgt[idx[inlier]])
        candidate = step @ current
        cand_moved = src @ candidate.rotation.T + candidate.translation
        cand = _match(grid, cand_moved, radius)
        if cand[0] > cost:
            break
        improvement = cost - cand[0]
        current, moved = candidate, cand_moved
        cost, rmse, inlier, idx = cand
        trace.append(cost)
        inlier_trace.append(rmse)
        iterations = it
        if improvement < params.convergence_tol:
            break
    return RegistrationResult(current, rmse, iterations, tuple(trace), tuple(inlier_trace))


def merge_track(
    views,
    strategy: str = "geometry",
    params: IcpParams | None = None,
    track_id: int = 0,
    frame_indices=None,
) -> CanonicalObject:
    """Merge the views of one track into a single canonical cloud.

    ``views`` is an ordered sequence of ``(cloud, box)`` pairs, each cloud in the
    same frame as its box. ``frame_indices`` labels the views for provenance and
    defaults to 0..n-1. With ``"icp"`` the first view seeds the accumulated cloud
    and every later view is registered against everything merged before it; a
    view that cannot be registered is appended as-is.
    """
    views = list(views)
    if not views:
        raise ValueError("merge_track needs at least one view")
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown merge strategy {strategy!r}; expected one of {STRATEGIES}")
    if frame_indices is None:
        frame_indices = range(len(views))
    frame_indices = list(frame_indices)
    if len(frame_indices) != len(views):
        raise ValueError("frame_indices must label every view")

    parts: list[PointCloud] = []
    labels: list[np.ndarray] = []
    residuals: list[float] = []
    accumulated = PointCloud()
    for k, ((cloud, box), frame) in enumerate(zip(views, frame_indices)):
        canon = canonicalize(cloud, box)
        if strategy == "icp" and k > 0:
            try:
                result = icp_register(canon, accumulated, params)
            except RegistrationError:
                residuals.append(float("nan"))
            else:
                canon = apply_transform(result.transform, canon)
                residuals.append(result.residual_rmse)
        parts.append(canon)
        labels.append(np.full(len(canon), frame, dtype=np.int64))
        if strategy == "icp":
            accumulated = PointCloud.concatenate([accumulated, canon])
    merged = PointCloud.concatenate(parts)
    return CanonicalObject(
        track_id=track_id,
        cloud=merged,
        source_count=len(views),
        point_frames=np.concatenate(labels),
        icp_residuals=tuple(residuals),
    )
