"""Frame and sequence containers shared by tracking, fusion, simulation and I/O."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .core import BoundingBox3D, PointCloud, RigidTransform

CLASS_LABELS = ("vehicle", "pedestrian", "cyclist")


@dataclass(frozen=True)
class DetectedInstance:
    box: BoundingBox3D
    class_label: str = "vehicle"
    score: float = 1.0
    instance_id: int | None = None

    def __post_init__(self):
        if self.class_label not in CLASS_LABELS:
            raise ValueError(f"unknown class label {self.class_label!r}; expected one of {CLASS_LABELS}")
        if not 0.0 <= float(self.score) <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class Frame:
    """One LiDAR sweep.

    ``cloud`` and instance boxes are in the ego frame; ``ego_pose`` maps ego to
    global coordinates. ``original_count`` is set on fused frames: the first
    ``original_count`` points are the sensor's own, the rest were added.
    """

    index: int
    timestamp_us: int
    ego_pose: RigidTransform
    cloud: PointCloud
    instances: tuple[DetectedInstance, ...] = ()
    original_count: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))

    def global_boxes(self) -> list[BoundingBox3D]:
        return [inst.box.transformed(self.ego_pose) for inst in self.instances]

    def with_cloud(self, cloud: PointCloud, original_count: int | None = None) -> "Frame":
        return replace(self, cloud=cloud, original_count=original_count)


@dataclass(frozen=True)
class Sequence:
    name: str
    frames: tuple[Frame, ...] = field(default_factory=tuple)

    def __post_init__(self):
        frames = tuple(self.frames)
        for i, f in enumerate(frames):
            if f.index != i:
                raise ValueError(f"frame {i} carries index {f.index}; indices must run 0..n-1")
        object.__setattr__(self, "frames", frames)

    def __len__(self) -> int:
        return len(self.frames)

    def check_time_order(self) -> None:
        for a, b in zip(self.frames, self.frames[1:]):
            if b.timestamp_us <= a.timestamp_us:
                raise ValueError(
                    f"frame {b.index} timestamp {b.timestamp_us} does not follow frame {a.index} ({a.timestamp_us})"
                )

    def instance_keys(self) -> list[tuple[int, int]]:
        return [(f.index, i) for f in self.frames for i in range(len(f.instances))]
