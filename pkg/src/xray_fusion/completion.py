"""Object-complete frames: track, merge each track's views, paste them back.

Every original point of a frame is kept. For each instance the merged object of
its track is posed into the instance's box and the points it borrows from other
frames that land inside that box are appended; those borrowed points are what
the subsampling budget applies to.
"""

from __future__ import annotations

import math
import os
from fractions import Fraction
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import PointCloud, points_in_box_mask
from .frames import Frame, Sequence
from .registration import STRATEGIES, CanonicalObject, IcpParams, merge_track, repose
from .simulate import stream
from .tracking import Track, greedy_track, track_instances_from_ids

__all__ = [
    "Frame",
    "Sequence",
    "FusionConfig",
    "FusionError",
    "fuse_sequence",
    "merge_tracks",
    "run_pipeline",
    "subsample_added_points",
    "worker_count",
]

_STREAM_SUBSAMPLE = 3


class FusionError(ValueError):
    pass


@dataclass(frozen=True)
class FusionConfig:
    """Fusion settings.

    ``subsample_factor`` caps the points added to a frame at
    ``floor(factor * original frame size)``; ``math.inf`` disables the cap.
    """

    strategy: str = "geometry"
    subsample_factor: float = 1.5
    seed: int = 0
    icp: IcpParams = field(default_factory=IcpParams)

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if math.isnan(self.subsample_factor) or self.subsample_factor < 0:
            raise ValueError("subsample_factor must be >= 0")


def worker_count() -> int:
    """Thread cap from ``XRAY_THREADS`` (default: CPU count). Results never depend on it."""
    raw = os.environ.get("XRAY_THREADS")
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ValueError(f"XRAY_THREADS must be an integer, got {raw!r}") from None
        return max(1, n)
    return os.cpu_count() or 1


def _parallel_map(fn, items):
    items = list(items)
    n = min(worker_count(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def subsample_budget(original_count: int, n_new: int, factor: float) -> int:
    if math.isinf(factor):
        return n_new
    # exact rational product: a float product can round up across an integer
    return min(n_new, math.floor(Fraction(factor) * original_count))


def _keep_lowest(keys: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` smallest keys, returned in ascending index order."""
    if k >= len(keys):
        return np.arange(len(keys))
    if k <= 0:
        return np.zeros(0, dtype=np.int64)
    chosen = np.argpartition(keys, k - 1)[:k]
    return np.sort(chosen)


def subsample_added_points(original_count: int, new_points: PointCloud, factor: float, rng: np.random.Generator) -> PointCloud:
    """Uniformly keep ``min(len(new_points), floor(factor * original_count))`` points, order preserved."""
    if factor < 0:
        raise ValueError("factor must be >= 0")
    k = subsample_budget(original_count, len(new_points), factor)
    # uniform random priorities; the k smallest form a uniform k-subset
    keys = rng.random(len(new_points))
    return new_points.select(_keep_lowest(keys, k))


def _instance_track_map(seq: Sequence, tracks) -> dict[tuple[int, int], int]:
    valid = set(seq.instance_keys())
    owner = {}
    for pos, track in enumerate(tracks):
        for key in track.occurrences:
            if key not in valid:
                raise FusionError(f"track {track.track_id} references missing instance (frame {key[0]}, instance {key[1]})")
            if key in owner:
                raise FusionError(f"instance (frame {key[0]}, instance {key[1]}) belongs to more than one track")
            owner[key] = pos
    return owner


def _track_views(seq: Sequence, track: Track):
    views = []
    for f, i in track.occurrences:
        frame = seq.frames[f]
        box = frame.instances[i].box
        views.append((frame.cloud.select(points_in_box_mask(box, frame.cloud.xyz)), box))
    return views


def merge_tracks(seq: Sequence, tracks, cfg: FusionConfig) -> list[CanonicalObject]:
    """Merged canonical object for every track, in track order."""
    _instance_track_map(seq, tracks)

    def work(track):
        try:
            return merge_track(_track_views(seq, track), cfg.strategy, cfg.icp, track.track_id, track.frames())
        except ValueError as exc:
            raise FusionError(f"track {track.track_id}: {exc}") from exc

    return _parallel_map(work, tracks)


def _fuse_frame(frame: Frame, owners, objects, cfg: FusionConfig):
    """Return the fused frame and its count of (added, kept) points."""
    if not frame.instances:
        return frame, 0, 0
    added, keys = [], []
    for i, inst in enumerate(frame.instances):
        pos = owners.get((frame.index, i))
        if pos is None:
            continue
        obj = objects[pos]
        borrowed = obj.cloud.select(obj.point_frames != frame.index)
        if len(borrowed) == 0:
            continue
        placed = repose(borrowed, inst.box)
        # whatever lands outside the box would change the frame's background
        inside = points_in_box_mask(inst.box, placed.xyz)
        added.append(placed.select(inside))
        keys.append(stream(cfg.seed, _STREAM_SUBSAMPLE, obj.track_id, frame.index).random(len(borrowed))[inside])
    original = frame.cloud
    if not added:
        return frame.with_cloud(original, len(original)), 0, 0
    new_points = PointCloud.concatenate(added)
    k = subsample_budget(len(original), len(new_points), cfg.subsample_factor)
    kept = new_points.select(_keep_lowest(np.concatenate(keys), k))
    fused = PointCloud.concatenate([original, kept])
    return frame.with_cloud(fused, len(original)), len(new_points), len(kept)


def fuse_sequence(seq: Sequence, tracks, cfg: FusionConfig, objects=None) -> Sequence:
    """Object-complete version of ``seq``.

    Output frames keep their index, timestamp, pose and instances. Frames
    without instances come back unchanged.
    """
    seq_out, _ = _fuse(seq, list(tracks), cfg, objects)
    return seq_out


def _fuse(seq: Sequence, tracks, cfg: FusionConfig, objects=None):
    owners = _instance_track_map(seq, tracks)
    if objects is None:
        objects = merge_tracks(seq, tracks, cfg)
    results = _parallel_map(lambda fr: _fuse_frame(fr, owners, objects, cfg), seq.frames)
    frames = tuple(r[0] for r in results)
    stats = [(fr.index, n_new, n_kept) for fr, (_, n_new, n_kept) in zip(seq.frames, results)]
    return Sequence(seq.name, frames), stats


def run_pipeline(seq: Sequence, cfg: FusionConfig, tracking_mode: str = "greedy", tracks=None):
    """Track, merge and fuse a sequence.

    Pass ``tracks`` to skip tracking and use them as given. Returns
    ``(fused_sequence, tracks, report)``; the report is plain data suitable
    for JSON.
    """
    seq.check_time_order()
    if tracks is not None:
        tracks = list(tracks)
        tracking_mode = "given"
    elif tracking_mode == "greedy":
        tracks = greedy_track(seq)
    elif tracking_mode in ("instance_ids", "ids"):
        tracks = track_instances_from_ids(seq)
    else:
        raise ValueError(f"unknown tracking mode {tracking_mode!r}")
    objects = merge_tracks(seq, tracks, cfg)
    fused, stats = _fuse(seq, tracks, cfg, objects)
    report = {
        "sequence": seq.name,
        "strategy": cfg.strategy,
        "tracking_mode": {"ids": "instance_ids"}.get(tracking_mode, tracking_mode),
        "subsample_factor": cfg.subsample_factor if math.isfinite(cfg.subsample_factor) else "inf",
        "tracks": [
            {
                "track_id": obj.track_id,
                "views": obj.source_count,
                "merged_points": len(obj.cloud),
                "icp_residuals": [None if math.isnan(r) else r for r in obj.icp_residuals],
            }
            for obj in objects
        ],
        "frames": [{"index": i, "candidate_points": n_new, "added_points": n_kept} for i, n_new, n_kept in stats],
        "totals": {
            "candidate_points": sum(s[1] for s in stats),
            "added_points": sum(s[2] for s in stats),
        },
    }
    return fused, tracks, report
