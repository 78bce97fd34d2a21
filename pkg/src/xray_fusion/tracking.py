"""Greedy frame-to-frame tracking and id-based track assembly.

Only the greedy nearest-neighbor association is provided. A Kalman-filter or
re-identification tracker would plug in as another function with the same
signature: ``Sequence -> list[Track]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import box_max_dimension
from .frames import DetectedInstance, Sequence

__all__ = ["DetectedInstance", "Track", "greedy_track", "track_instances_from_ids", "association_radius"]


@dataclass(frozen=True)
class Track:
    track_id: int
    occurrences: tuple[tuple[int, int], ...]

    def __post_init__(self):
        occ = tuple((int(f), int(i)) for f, i in self.occurrences)
        frames = [f for f, _ in occ]
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise ValueError(f"track {self.track_id}: frame indices must be strictly increasing")
        object.__setattr__(self, "occurrences", occ)

    def __len__(self) -> int:
        return len(self.occurrences)

    def frames(self) -> list[int]:
        return [f for f, _ in self.occurrences]


def association_radius(a, b) -> float:
    """Gating radius between two boxes: twice the largest dimension of either."""
    return 2.0 * max(box_max_dimension(a), box_max_dimension(b))


def greedy_track(sequence: Sequence) -> list[Track]:
    """Chain detections into tracks by greedy nearest-neighbor matching.

    Instances of frame i are visited in index order. Each claims the nearest
    still-unclaimed instance of frame i+1 that has the same class and lies
    within ``association_radius``; ties go to the lower index. An instance with
    no candidate ends its track, and every unclaimed instance in frame i+1
    starts a new one. Distances are measured between box centers in global
    coordinates.
    """
    sequence.check_time_order()
    tracks: list[list[tuple[int, int]]] = []
    # track slot owning each instance of the current frame
    owner: list[int] = []
    prev_boxes = prev_labels = None
    for frame in sequence.frames:
        boxes = frame.global_boxes()
        labels = [inst.class_label for inst in frame.instances]
        new_owner = [-1] * len(boxes)
        if prev_boxes is not None and boxes:
            centers = np.array([b.center for b in boxes])
            claimed = np.zeros(len(boxes), dtype=bool)
            for i, box in enumerate(prev_boxes):
                d = np.linalg.norm(centers - np.asarray(box.center), axis=1)
                best = -1
                for j in range(len(boxes)):
                    if claimed[j] or labels[j] != prev_labels[i]:
                        continue
                    if d[j] > association_radius(box, boxes[j]):
                        continue
                    if best < 0 or d[j] < d[best]:
                        best = j
                if best >= 0:
                    claimed[best] = True
                    new_owner[best] = owner[i]
                    tracks[owner[i]].append((frame.index, best))
        for j in range(len(boxes)):
            if new_owner[j] < 0:
                new_owner[j] = len(tracks)
                tracks.append([(frame.index, j)])
        owner, prev_boxes, prev_labels = new_owner, boxes, labels
    return [Track(k, tuple(occ)) for k, occ in enumerate(tracks)]


def track_instances_from_ids(sequence: Sequence) -> list[Track]:
    """One track per distinct ``instance_id``, sorted by id. Gaps are allowed."""
    chains: dict[int, list[tuple[int, int]]] = {}
    for frame in sequence.frames:
        seen = set()
        for i, inst in enumerate(frame.instances):
            if inst.instance_id is None:
                raise ValueError(f"frame {frame.index} instance {i} has no instance_id")
            if inst.instance_id in seen:
                raise ValueError(f"frame {frame.index} repeats instance_id {inst.instance_id}")
            seen.add(inst.instance_id)
            chains.setdefault(int(inst.instance_id), []).append((frame.index, i))
    return [Track(tid, tuple(chains[tid])) for tid in sorted(chains)]
