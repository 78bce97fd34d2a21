"""Geometric primitives: point clouds, rigid transforms and yaw-oriented boxes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

_ORTHO_TOL = 1e-9


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def normalize_angle(angle: float) -> float:
    """Wrap an angle into [-pi, pi). Values already in range are returned untouched."""
    angle = float(angle)
    if -math.pi <= angle < math.pi:
        return angle
    wrapped = math.remainder(angle, 2.0 * math.pi)
    if wrapped >= math.pi:
        wrapped -= 2.0 * math.pi
    if wrapped < -math.pi:
        wrapped = -math.pi
    return wrapped


def yaw_matrix(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Ordered 3D points with a per-point intensity in [0, 1].

    ``xyz`` is an (N, 3) float64 array in meters and ``intensity`` an (N,) float64
    array. Both are read-only; transforms return new clouds and never reorder.
    """

    xyz: np.ndarray
    intensity: np.ndarray

    def __init__(self, xyz=None, intensity=None):
        xyz = np.zeros((0, 3)) if xyz is None else np.array(xyz, dtype=np.float64, copy=True)
        xyz = xyz.reshape(-1, 3)
        if intensity is None:
            intensity = np.zeros(len(xyz))
        intensity = np.array(intensity, dtype=np.float64, copy=True).reshape(-1)
        if len(intensity) != len(xyz):
            raise ValueError(f"intensity has {len(intensity)} entries for {len(xyz)} points")
        if not np.all(np.isfinite(xyz)):
            raise ValueError("point coordinates must be finite")
        if len(intensity) and (intensity.min() < 0.0 or intensity.max() > 1.0):
            raise ValueError("intensity must lie in [0, 1]")
        object.__setattr__(self, "xyz", _frozen(xyz))
        object.__setattr__(self, "intensity", _frozen(intensity))

    @classmethod
    def from_array(cls, points: np.ndarray) -> "PointCloud":
        """Build from an (N, 4) array of x, y, z, intensity."""
        points = np.asarray(points, dtype=np.float64).reshape(-1, 4)
        return cls(points[:, :3], points[:, 3])

    def to_array(self) -> np.ndarray:
        return np.column_stack([self.xyz, self.intensity])

    def __len__(self) -> int:
        return len(self.xyz)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PointCloud):
            return NotImplemented
        return np.array_equal(self.xyz, other.xyz) and np.array_equal(self.intensity, other.intensity)

    __hash__ = None

    def __repr__(self) -> str:
        return f"PointCloud(n={len(self)})"

    def select(self, index) -> "PointCloud":
        return PointCloud(self.xyz[index], self.intensity[index])

    @staticmethod
    def concatenate(clouds) -> "PointCloud":
        clouds = list(clouds)
        if not clouds:
            return PointCloud()
        return PointCloud(
            np.concatenate([c.xyz for c in clouds]),
            np.concatenate([c.intensity for c in clouds]),
        )


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """A rotation followed by a translation: p -> R p + t."""

    rotation: np.ndarray
    translation: np.ndarray
    # Unit quaternion this transform was built from, kept so that serialization
    # writes back the exact same numbers.
    _quaternion: tuple | None = field(default=None, repr=False, compare=False)

    def __init__(self, rotation=None, translation=None, _quaternion=None):
        rotation = np.eye(3) if rotation is None else np.array(rotation, dtype=np.float64, copy=True)
        translation = np.zeros(3) if translation is None else np.array(translation, dtype=np.float64, copy=True)
        if rotation.shape != (3, 3) or translation.shape != (3,):
            raise ValueError("rotation must be 3x3 and translation a 3-vector")
        if not (np.all(np.isfinite(rotation)) and np.all(np.isfinite(translation))):
            raise ValueError("transform entries must be finite")
        if np.abs(rotation.T @ rotation - np.eye(3)).max() > _ORTHO_TOL:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(rotation) - 1.0) > _ORTHO_TOL:
            raise ValueError("rotation must have determinant +1")
        object.__setattr__(self, "rotation", _frozen(rotation))
        object.__setattr__(self, "translation", _frozen(translation))
        object.__setattr__(self, "_quaternion", _quaternion)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    @classmethod
    def from_yaw(cls, yaw: float, translation=(0.0, 0.0, 0.0)) -> "RigidTransform":
        return cls(yaw_matrix(yaw), translation)

    @classmethod
    def from_quaternion(cls, wxyz, translation=(0.0, 0.0, 0.0)) -> "RigidTransform":
        w, x, y, z = (float(v) for v in wxyz)
        norm = math.sqrt(w * w + x * x + y * y + z * z)
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"quaternion norm {norm} is not 1 within 1e-6")
        w, x, y, z = w / norm, x / norm, y / norm, z / norm
        rot = np.array([
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ])
        # re-orthonormalize so the 1e-9 invariant holds after renormalization
        u, _, vt = np.linalg.svd(rot)
        rot = u @ vt
        return cls(rot, translation, _quaternion=tuple(float(v) for v in wxyz))

    def quaternion(self) -> tuple[float, float, float, float]:
        """Rotation as a unit quaternion (w, x, y, z) with w >= 0."""
        if self._quaternion is not None:
            return self._quaternion
        m = self.rotation
        tr = m[0, 0] + m[1, 1] + m[2, 2]
        if tr > 0:
            s = 2.0 * math.sqrt(tr + 1.0)
            q = (0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s)
        elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
            s = 2.0 * math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2])
            q = ((m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s)
        elif m[1, 1] > m[2, 2]:
            s = 2.0 * math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2])
            q = ((m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s)
        else:
            s = 2.0 * math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1])
            q = ((m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s)
        if q[0] < 0:
            q = tuple(-v for v in q)
        n = math.sqrt(sum(v * v for v in q))
        return tuple(float(v / n) for v in q)

    @property
    def yaw(self) -> float:
        """Heading of the rotated x axis in the xy plane."""
        return math.atan2(self.rotation[1, 0], self.rotation[0, 0])

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return compose(self, other)

    def __eq__(self, other) -> bool:
        if not isinstance(other, RigidTransform):
            return NotImplemented
        return np.array_equal(self.rotation, other.rotation) and np.array_equal(self.translation, other.translation)

    __hash__ = None


@dataclass(frozen=True)
class BoundingBox3D:
    """Box with center (x, y, z), size (length, width, height) and heading yaw.

    Length runs along the box's local x axis. Yaw is wrapped into [-pi, pi).
    """

    center: tuple[float, float, float]
    size: tuple[float, float, float]
    yaw: float = 0.0

    def __post_init__(self):
        center = tuple(float(v) for v in self.center)
        size = tuple(float(v) for v in self.size)
        if len(center) != 3 or len(size) != 3:
            raise ValueError("center and size must have three components")
        if not all(math.isfinite(v) for v in center + size + (float(self.yaw),)):
            raise ValueError("box fields must be finite")
        if min(size) <= 0:
            raise ValueError(f"box sizes must be positive, got {size}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "size", size)
        object.__setattr__(self, "yaw", normalize_angle(self.yaw))

    def pose(self) -> RigidTransform:
        """Box-local to parent-frame transform."""
        return RigidTransform.from_yaw(self.yaw, self.center)

    def transformed(self, t: RigidTransform) -> "BoundingBox3D":
        """Re-express the box in another frame; only the heading of ``t`` affects yaw."""
        center = t.rotation @ np.asarray(self.center) + t.translation
        return BoundingBox3D(tuple(center), self.size, self.yaw + t.yaw)

    def corners(self) -> np.ndarray:
        l, w, h = self.size
        signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=float)
        local = signs * np.array([l, w, h]) / 2.0
        return local @ yaw_matrix(self.yaw).T + np.asarray(self.center)


def apply_transform(t: RigidTransform, pc: PointCloud) -> PointCloud:
    if len(pc) == 0:
        return pc
    return PointCloud(pc.xyz @ t.rotation.T + t.translation, pc.intensity)


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Transform equivalent to applying ``b`` first, then ``a``."""
    return RigidTransform(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def points_in_box_mask(box: BoundingBox3D, xyz: np.ndarray) -> np.ndarray:
    xyz = np.asarray(xyz, dtype=np.float64).reshape(-1, 3)
    local = (xyz - np.asarray(box.center)) @ yaw_matrix(box.yaw)
    half = np.asarray(box.size) / 2.0
    return np.all(np.abs(local) <= half, axis=1)


def points_in_box(box: BoundingBox3D, pc: PointCloud) -> np.ndarray:
    """Indices of points inside the closed box (boundary points count as inside)."""
    return np.flatnonzero(points_in_box_mask(box, pc.xyz))


def box_max_dimension(box: BoundingBox3D) -> float:
    return max(box.size)
