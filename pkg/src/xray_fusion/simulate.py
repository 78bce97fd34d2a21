"""Synthetic LiDAR sequences with known object surfaces and identities.

Objects are boxes or upright cylinders whose surfaces are sampled uniformly by
area every frame. A sampled point is returned when it is within range, its
face points toward the sensor, and the straight segment from the sensor to it
crosses no other object's box. That is enough to reproduce the one-sided,
self-occluded look of a real sweep without tracing a mesh.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import BoundingBox3D, PointCloud, RigidTransform, yaw_matrix
from .frames import CLASS_LABELS, DetectedInstance, Frame, Sequence
from .tracking import Track

SHAPES = ("box", "cylinder")
# samples sit this far inside the true surface, plus the longest clipped noise
# vector (3 sigma per axis), so rounding and noise never push a point out of its box
SURFACE_INSET = 1e-3

_STREAM_FRAME, _STREAM_SURFACE, _STREAM_BOXNOISE = 0, 1, 2


def stream(*key: int) -> np.random.Generator:
    """Counter-based generator keyed by a tuple of non-negative integers."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) & 0xFFFFFFFFFFFFFFFF for k in key])))


@dataclass(frozen=True)
class SceneObject:
    shape: str
    size: tuple[float, float, float]
    trajectory: tuple[tuple[float, float, float, float], ...]  # per-frame (cx, cy, cz, yaw)
    class_label: str = "vehicle"
    instance_id: int | None = None

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"object shape must be one of {SHAPES}, got {self.shape!r}")
        size = tuple(float(v) for v in self.size)
        if len(size) != 3 or min(size) <= 0:
            raise ValueError(f"object size must be three positive numbers, got {self.size}")
        traj = tuple(tuple(float(v) for v in pose) for pose in self.trajectory)
        if any(len(p) != 4 for p in traj):
            raise ValueError("trajectory entries must be (cx, cy, cz, yaw)")
        if self.class_label not in CLASS_LABELS:
            raise ValueError(f"unknown class label {self.class_label!r}")
        object.__setattr__(self, "size", size)
        object.__setattr__(self, "trajectory", traj)

    def box(self, frame: int) -> BoundingBox3D:
        cx, cy, cz, yaw = self.trajectory[frame]
        return BoundingBox3D((cx, cy, cz), self.size, yaw)


@dataclass(frozen=True)
class GroundPlane:
    z: float = 0.0
    extent: float = 30.0
    points_per_m2: float = 2.0


@dataclass(frozen=True)
class SceneConfig:
    n_frames: int
    objects: tuple[SceneObject, ...]
    ego_trajectory: tuple[tuple[float, float, float, float], ...]  # per-frame (x, y, z, yaw)
    points_per_m2: float = 100.0
    lidar_range: float = 80.0
    noise_sigma: float = 0.0
    seed: int = 0
    ground: GroundPlane | None = None
    frame_interval_us: int = 100_000
    min_points: int = 1
    name: str = "synthetic"

    def __post_init__(self):
        objects = tuple(self.objects)
        ego = tuple(tuple(float(v) for v in p) for p in self.ego_trajectory)
        if self.n_frames < 1:
            raise ValueError("n_frames must be >= 1")
        if not (self.points_per_m2 > 0 and self.lidar_range > 0):
            raise ValueError("points_per_m2 and lidar_range must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.frame_interval_us <= 0:
            raise ValueError("frame_interval_us must be positive")
        if len(ego) != self.n_frames or any(len(p) != 4 for p in ego):
            raise ValueError(f"ego_trajectory must hold {self.n_frames} (x, y, z, yaw) poses")
        for k, obj in enumerate(objects):
            if len(obj.trajectory) != self.n_frames:
                raise ValueError(f"object {k} trajectory has {len(obj.trajectory)} poses, expected {self.n_frames}")
        ids = [self.object_id(k, o) for k, o in enumerate(objects)]
        if len(set(ids)) != len(ids):
            raise ValueError("object instance ids must be unique")
        object.__setattr__(self, "objects", objects)
        object.__setattr__(self, "ego_trajectory", ego)

    @property
    def surface_inset(self) -> float:
        return SURFACE_INSET + 3.0 * math.sqrt(3.0) * self.noise_sigma

    @staticmethod
    def object_id(k: int, obj: SceneObject) -> int:
        return k if obj.instance_id is None else int(obj.instance_id)

    def ego_pose(self, frame: int) -> RigidTransform:
        x, y, z, yaw = self.ego_trajectory[frame]
        # built from a quaternion so that serialization round-trips exactly
        return RigidTransform.from_quaternion((math.cos(yaw / 2.0), 0.0, 0.0, math.sin(yaw / 2.0)), (x, y, z))


@dataclass
class GroundTruth:
    """Reference data emitted next to a simulated sequence.

    ``full_surfaces`` maps instance id to a dense canonical-frame sample of the
    whole object surface; ``boxes`` holds per-frame global boxes by id.
    """

    full_surfaces: dict[int, PointCloud]
    tracks: list[Track]
    boxes: list[dict[int, BoundingBox3D]] = field(default_factory=list)


def sample_surface(shape: str, size, density: float, rng: np.random.Generator, inset: float = SURFACE_INSET):
    """Area-uniform samples of a canonical shape surface and their outward normals."""
    l, w, h = (float(v) for v in size)
    pts, nrm = [], []
    if shape == "box":
        half = np.array([l, w, h]) / 2.0
        for axis in range(3):
            u, v = [a for a in range(3) if a != axis]
            area = 4.0 * half[u] * half[v]
            for sign in (-1.0, 1.0):
                n = int(round(area * density))
                p = np.empty((n, 3))
                p[:, axis] = sign * (half[axis] - inset)
                p[:, u] = rng.uniform(-1.0, 1.0, n) * (half[u] - inset)
                p[:, v] = rng.uniform(-1.0, 1.0, n) * (half[v] - inset)
                normal = np.zeros((n, 3))
                normal[:, axis] = sign
                pts.append(p)
                nrm.append(normal)
    elif shape == "cylinder":
        r = min(l, w) / 2.0
        n = int(round(2.0 * math.pi * r * h * density))
        theta = rng.uniform(0.0, 2.0 * math.pi, n)
        radial = np.column_stack([np.cos(theta), np.sin(theta), np.zeros(n)])
        p = radial * (r - inset)
        p[:, 2] = rng.uniform(-h / 2.0 + inset, h / 2.0 - inset, n)
        pts.append(p)
        nrm.append(radial)
        for sign in (-1.0, 1.0):
            n = int(round(math.pi * r * r * density))
            rad = (r - inset) * np.sqrt(rng.uniform(0.0, 1.0, n))
            ang = rng.uniform(0.0, 2.0 * math.pi, n)
            p = np.column_stack([rad * np.cos(ang), rad * np.sin(ang), np.full(n, sign * (h / 2.0 - inset))])
            normal = np.zeros((n, 3))
            normal[:, 2] = sign
            pts.append(p)
            nrm.append(normal)
    else:
        raise ValueError(f"unknown shape {shape!r}")
    return np.concatenate(pts), np.concatenate(nrm)


def segment_hits_box(origin: np.ndarray, ends: np.ndarray, box: BoundingBox3D, eps: float = 1e-9) -> np.ndarray:
    """Whether each open segment ``origin -> ends[i]`` passes through the box interior."""
    rot = yaw_matrix(box.yaw)
    o = rot.T @ (np.asarray(origin, dtype=float) - np.asarray(box.center))
    d = (np.asarray(ends, dtype=float) - np.asarray(origin, dtype=float)) @ rot
    half = np.asarray(box.size) / 2.0
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (-half - o) / d
        t2 = (half - o) / d
    lo = np.minimum(t1, t2)
    hi = np.maximum(t1, t2)
    parallel = d == 0.0
    inside_slab = np.abs(o) < half
    lo = np.where(parallel, np.where(inside_slab, -np.inf, np.inf), lo)
    hi = np.where(parallel, np.where(inside_slab, np.inf, -np.inf), hi)
    tmin = lo.max(axis=1)
    tmax = hi.min(axis=1)
    return (tmin < tmax) & (tmax > eps) & (tmin < 1.0 - eps)


def visible_mask(sensor, xyz, normals, occluders, lidar_range: float) -> np.ndarray:
    """Range, back-face and occlusion test for world-frame surface samples."""
    sensor = np.asarray(sensor, dtype=float)
    to_sensor = sensor - xyz
    mask = np.einsum("ij,ij->i", to_sensor, to_sensor) <= lidar_range * lidar_range
    mask &= np.einsum("ij,ij->i", normals, to_sensor) > 0.0
    for box in occluders:
        idx = np.flatnonzero(mask)
        if len(idx) == 0:
            break
        mask[idx[segment_hits_box(sensor, xyz[idx], box)]] = False
    return mask


def _to_float32(a: np.ndarray) -> np.ndarray:
    return a.astype(np.float32).astype(np.float64)


def _simulate_frame(cfg: SceneConfig, f: int):
    rng = stream(cfg.seed, _STREAM_FRAME, f)
    ego = cfg.ego_pose(f)
    sensor = ego.translation
    boxes = [obj.box(f) for obj in cfg.objects]
    chunks, owners = [], []
    for k, (obj, box) in enumerate(zip(cfg.objects, boxes)):
        local, normals = sample_surface(obj.shape, obj.size, cfg.points_per_m2, rng, cfg.surface_inset)
        rot = yaw_matrix(box.yaw)
        xyz = local @ rot.T + np.asarray(box.center)
        nrm = normals @ rot.T
        others = [b for j, b in enumerate(boxes) if j != k]
        keep = visible_mask(sensor, xyz, nrm, others, cfg.lidar_range)
        chunks.append(xyz[keep])
        owners.append(np.full(int(keep.sum()), k))
    if cfg.ground is not None:
        g = cfg.ground
        area = (2.0 * g.extent) ** 2
        n = int(round(area * g.points_per_m2))
        xy = rng.uniform(-g.extent, g.extent, (n, 2)) + sensor[:2]
        xyz = np.column_stack([xy, np.full(n, g.z)])
        nrm = np.tile([0.0, 0.0, 1.0], (n, 1))
        keep = visible_mask(sensor, xyz, nrm, boxes, cfg.lidar_range)
        chunks.append(xyz[keep])
        owners.append(np.full(int(keep.sum()), -1))
    xyz = np.concatenate(chunks) if chunks else np.zeros((0, 3))
    owner = np.concatenate(owners) if owners else np.zeros(0, dtype=int)
    # truncated at 3 sigma so noisy points stay inside their (inset-padded) box
    noise = np.clip(rng.normal(0.0, 1.0, xyz.shape), -3.0, 3.0) * cfg.noise_sigma if cfg.noise_sigma > 0 else 0.0
    intensity = rng.uniform(0.0, 1.0, len(xyz))
    ego_xyz = (xyz + noise - ego.translation) @ ego.rotation
    cloud = PointCloud(_to_float32(ego_xyz), _to_float32(intensity))

    inv = ego.inverse()
    instances = []
    frame_boxes = {}
    for k, (obj, box) in enumerate(zip(cfg.objects, boxes)):
        oid = cfg.object_id(k, obj)
        frame_boxes[oid] = box
        if np.count_nonzero(owner == k) >= cfg.min_points:
            instances.append(DetectedInstance(box.transformed(inv), obj.class_label, 1.0, oid))
    frame = Frame(f, f * cfg.frame_interval_us, ego, cloud, tuple(instances))
    return frame, frame_boxes


def generate(cfg: SceneConfig) -> tuple[Sequence, GroundTruth]:
    """Render every frame of ``cfg``; fully determined by ``cfg.seed``."""
    frames, boxes = [], []
    for f in range(cfg.n_frames):
        frame, fb = _simulate_frame(cfg, f)
        frames.append(frame)
        boxes.append(fb)
    seq = Sequence(cfg.name, tuple(frames))

    surfaces = {}
    for k, obj in enumerate(cfg.objects):
        oid = cfg.object_id(k, obj)
        pts, _ = sample_surface(obj.shape, obj.size, cfg.points_per_m2, stream(cfg.seed, _STREAM_SURFACE, k), cfg.surface_inset)
        surfaces[oid] = PointCloud(_to_float32(pts))
    chains: dict[int, list[tuple[int, int]]] = {}
    for frame in seq.frames:
        for i, inst in enumerate(frame.instances):
            chains.setdefault(inst.instance_id, []).append((frame.index, i))
    tracks = [Track(oid, tuple(chains[oid])) for oid in sorted(chains)]
    return seq, GroundTruth(surfaces, tracks, boxes)


def inject_box_noise(seq: Sequence, yaw_sigma: float, center_sigma: float, seed: int) -> Sequence:
    """Perturb every instance box's yaw and center with Gaussian noise; points are untouched."""
    if yaw_sigma < 0 or center_sigma < 0:
        raise ValueError("noise sigmas must be >= 0")
    frames = []
    for frame in seq.frames:
        rng = stream(seed, _STREAM_BOXNOISE, frame.index)
        instances = []
        for inst in frame.instances:
            dyaw = rng.normal(0.0, 1.0)
            dc = rng.normal(0.0, 1.0, 3)
            box = inst.box
            yaw = box.yaw + yaw_sigma * dyaw if yaw_sigma > 0 else box.yaw
            center = tuple(np.asarray(box.center) + center_sigma * dc) if center_sigma > 0 else box.center
            instances.append(replace(inst, box=BoundingBox3D(center, box.size, yaw)))
        frames.append(replace(frame, instances=tuple(instances)))
    return Sequence(seq.name, tuple(frames))


# ---------------------------------------------------------------------------
# Ready-made scenes


def orbit_scene(
    n_frames: int = 20,
    size=(4.0, 2.0, 1.5),
    distance: float = 10.0,
    elevation: float = 4.0,
    points_per_m2: float = 100.0,
    noise_sigma: float = 0.0,
    seed: int = 0,
    start_angle: float = 0.0,
    arc: float = 2.0 * math.pi,
    alternate: bool = True,
) -> SceneConfig:
    """A static box-car watched from evenly spaced viewpoints around it.

    With ``alternate`` the sensor switches between ``elevation`` above and
    below the object's center so that over a full orbit every face, bottom
    included, is seen; otherwise it always stays above.
    """
    h = float(size[2])
    center = (0.0, 0.0, h / 2.0)
    ego = []
    for f in range(n_frames):
        a = start_angle + arc * f / n_frames
        z = center[2] + (elevation if f % 2 == 0 or not alternate else -elevation)
        x, y = distance * math.cos(a), distance * math.sin(a)
        ego.append((x, y, z, math.atan2(-y, -x)))
    car = SceneObject("box", size, tuple((*center, 0.0) for _ in range(n_frames)), "vehicle", 0)
    return SceneConfig(
        n_frames=n_frames,
        objects=(car,),
        ego_trajectory=tuple(ego),
        points_per_m2=points_per_m2,
        lidar_range=4.0 * distance,
        noise_sigma=noise_sigma,
        seed=seed,
        name="orbit",
    )


_CLASS_SIZES = {
    "vehicle": ((3.8, 1.8, 1.5), (5.0, 2.2, 2.0)),
    "pedestrian": ((0.5, 0.5, 1.6), (0.9, 0.9, 1.9)),
    "cyclist": ((1.6, 0.6, 1.5), (2.0, 0.9, 1.8)),
}


def _random_object(rng, label, start, heading, speed, n_frames, dt, instance_id):
    lo, hi = _CLASS_SIZES[label]
    size = tuple(rng.uniform(lo, hi))
    shape = "cylinder" if label == "pedestrian" else "box"
    if shape == "cylinder":
        size = (size[0], size[0], size[2])
    traj = []
    for f in range(n_frames):
        x = start[0] + speed * dt * f * math.cos(heading)
        y = start[1] + speed * dt * f * math.sin(heading)
        traj.append((x, y, size[2] / 2.0, heading))
    return SceneObject(shape, size, tuple(traj), label, instance_id)


def separated_scene(seed: int, n_objects: int = 6, n_frames: int = 8, spacing: float = 30.0, ground: bool = True) -> SceneConfig:
    """Objects on a coarse grid, far enough apart that no two ever share an association radius.

    Largest box dimension is 5 m, so the widest gate is 10 m; grid spacing of
    30 m minus at most 2 x 2 m of drift per object keeps every pair beyond it.
    """
    rng = stream(seed, 7)
    dt = 0.1
    n_frames = int(n_frames)
    cells = [(i, j) for i in range(-2, 3) for j in range(-2, 3) if (i, j) != (0, 0)]
    chosen = rng.permutation(len(cells))[:n_objects]
    objects = []
    for k, c in enumerate(chosen):
        label = CLASS_LABELS[int(rng.integers(len(CLASS_LABELS)))]
        start = (cells[c][0] * spacing + rng.uniform(-2, 2), cells[c][1] * spacing + rng.uniform(-2, 2))
        speed = rng.uniform(0.0, 2.0 / max(n_frames * dt, dt))
        objects.append(_random_object(rng, label, start, rng.uniform(-math.pi, math.pi), speed, n_frames, dt, k))
    ego = tuple((0.5 * f, 0.0, 1.8, 0.0) for f in range(n_frames))
    return SceneConfig(
        n_frames=n_frames,
        objects=tuple(objects),
        ego_trajectory=ego,
        points_per_m2=20.0,
        lidar_range=120.0,
        noise_sigma=0.01,
        seed=seed,
        ground=GroundPlane(z=-0.05, extent=40.0, points_per_m2=0.5) if ground else None,
        min_points=0,
        name=f"separated-{seed}",
    )


def crossing_scene(seed: int, n_objects: int = 4, n_frames: int = 10) -> SceneConfig:
    """Same-class vehicles driving through a shared intersection point.

    Trajectories converge so that association gates overlap heavily and the
    greedy order of claims matters.
    """
    rng = stream(seed, 8)
    dt = 0.1
    objects = []
    for k in range(n_objects):
        heading = rng.uniform(-math.pi, math.pi)
        speed = rng.uniform(8.0, 20.0)
        # positioned so the object passes near the origin mid-sequence
        t_mid = n_frames * dt / 2.0
        start = (-speed * t_mid * math.cos(heading) + rng.uniform(-1, 1), -speed * t_mid * math.sin(heading) + rng.uniform(-1, 1))
        objects.append(_random_object(rng, "vehicle", start, heading, speed, n_frames, dt, k))
    ego = tuple((-25.0, 0.0, 1.8, 0.0) for _ in range(n_frames))
    return SceneConfig(
        n_frames=n_frames,
        objects=tuple(objects),
        ego_trajectory=ego,
        points_per_m2=10.0,
        lidar_range=120.0,
        seed=seed,
        min_points=0,
        name=f"crossing-{seed}",
    )


def scene_config_from_dict(data: dict) -> SceneConfig:
    """Build a :class:`SceneConfig` from plain data (as parsed from a config file).

    An object may give ``pose: [cx, cy, cz, yaw]`` instead of a full trajectory
    to stay put for the whole sequence; ``ego_trajectory`` accepts the same
    shorthand via ``ego_pose``. Alternatively ``preset`` (``orbit``, ``separated``
    or ``crossing``) with keyword overrides builds the matching scene helper.
    """
    data = dict(data)
    preset = data.pop("preset", None)
    if preset == "orbit":
        return orbit_scene(**data)
    if preset == "separated":
        return separated_scene(**data)
    if preset == "crossing":
        return crossing_scene(**data)
    if preset is not None:
        raise ValueError(f"unknown scene preset {preset!r}")
    try:
        n = int(data["n_frames"])
        objects = []
        for k, o in enumerate(data.get("objects", [])):
            if "trajectory" in o:
                traj = o["trajectory"]
            elif "pose" in o:
                traj = [o["pose"]] * n
            else:
                raise ValueError(f"objects[{k}] needs 'trajectory' or 'pose'")
            objects.append(SceneObject(o.get("shape", "box"), o["size"], traj, o.get("class", "vehicle"), o.get("instance_id")))
        if "ego_trajectory" in data:
            ego = data["ego_trajectory"]
        else:
            ego = [data.get("ego_pose", [0.0, 0.0, 1.8, 0.0])] * n
        ground = data.get("ground")
        return SceneConfig(
            n_frames=n,
            objects=tuple(objects),
            ego_trajectory=tuple(ego),
            points_per_m2=float(data.get("points_per_m2", 100.0)),
            lidar_range=float(data.get("lidar_range", 80.0)),
            noise_sigma=float(data.get("noise_sigma", 0.0)),
            seed=int(data.get("seed", 0)),
            ground=GroundPlane(**ground) if ground else None,
            frame_interval_us=int(data.get("frame_interval_us", 100_000)),
            min_points=int(data.get("min_points", 1)),
            name=str(data.get("name", "synthetic")),
        )
    except KeyError as exc:
        raise ValueError(f"scene config missing field {exc.args[0]!r}") from None
