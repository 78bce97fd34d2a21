"""On-disk formats.

Sequence directory::

    manifest.json          # format_version, name, per-frame records
    points/000000.bin      # little-endian float32 (x, y, z, intensity) records

Ground truth written by the simulator lives in ``<dir>/truth/``. Tensor files
are ``b"XRTN"``, a u32 rank, u32 dims, then a row-major float32 payload.
"""

from __future__ import annotations

import json
import math
import struct
from pathlib import Path

import numpy as np

from .core import BoundingBox3D, PointCloud, RigidTransform
from .frames import DetectedInstance, Frame, Sequence
from .simulate import GroundTruth, SceneConfig, scene_config_from_dict
from .tracking import Track

FORMAT_VERSION = 1
MANIFEST = "manifest.json"
TRUTH_DIR = "truth"
TRUTH_FILE = "truth.json"
TENSOR_MAGIC = b"XRTN"
_POINT_DTYPE = np.dtype("<f4")


class FormatError(ValueError):
    pass


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True, allow_nan=False) + "\n")


# ---------------------------------------------------------------------------
# point blobs


def write_points(pc: PointCloud, path) -> None:
    Path(path).write_bytes(pc.to_array().astype(_POINT_DTYPE).tobytes())


def read_points(path) -> PointCloud:
    raw = Path(path).read_bytes()
    if len(raw) % 16:
        raise FormatError(f"{path}: size {len(raw)} is not a multiple of 16 bytes")
    arr = np.frombuffer(raw, dtype=_POINT_DTYPE).reshape(-1, 4).astype(np.float64)
    try:
        return PointCloud.from_array(arr)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None


# ---------------------------------------------------------------------------
# boxes, poses, instances


def box_to_dict(box: BoundingBox3D) -> dict:
    (cx, cy, cz), (l, w, h) = box.center, box.size
    return {"cx": cx, "cy": cy, "cz": cz, "l": l, "w": w, "h": h, "yaw": box.yaw}


def box_from_dict(d: dict, where: str) -> BoundingBox3D:
    try:
        return BoundingBox3D((d["cx"], d["cy"], d["cz"]), (d["l"], d["w"], d["h"]), d["yaw"])
    except KeyError as exc:
        raise FormatError(f"{where}.box: missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{where}.box: {exc}") from None


def _pose_to_dict(t: RigidTransform) -> dict:
    return {"quaternion": list(t.quaternion()), "translation": [float(v) for v in t.translation]}


def _pose_from_dict(d: dict, where: str) -> RigidTransform:
    try:
        q, tr = d["quaternion"], d["translation"]
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{where}.ego_pose: missing field {exc.args[0] if exc.args else ''!r}") from None
    if len(q) != 4 or len(tr) != 3:
        raise FormatError(f"{where}.ego_pose: quaternion needs 4 values (wxyz) and translation 3")
    try:
        return RigidTransform.from_quaternion(q, tr)
    except ValueError as exc:
        raise FormatError(f"{where}.ego_pose: {exc}") from None


def _instance_to_dict(inst: DetectedInstance) -> dict:
    d = {"class": inst.class_label, "score": inst.score, "box": box_to_dict(inst.box)}
    if inst.instance_id is not None:
        d["instance_id"] = inst.instance_id
    return d


def _instance_from_dict(d: dict, where: str) -> DetectedInstance:
    if "class" not in d or "box" not in d:
        raise FormatError(f"{where}: instance needs 'class' and 'box'")
    try:
        iid = d.get("instance_id")
        return DetectedInstance(box_from_dict(d["box"], where), d["class"], float(d.get("score", 1.0)), None if iid is None else int(iid))
    except FormatError:
        raise
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{where}: {exc}") from None


# ---------------------------------------------------------------------------
# sequences


def write_sequence(seq: Sequence, directory) -> None:
    directory = Path(directory)
    (directory / "points").mkdir(parents=True, exist_ok=True)
    records = []
    for frame in seq.frames:
        rel = f"points/{frame.index:06d}.bin"
        write_points(frame.cloud, directory / rel)
        rec = {
            "index": frame.index,
            "timestamp_us": int(frame.timestamp_us),
            "ego_pose": _pose_to_dict(frame.ego_pose),
            "points_file": rel,
            "instances": [_instance_to_dict(i) for i in frame.instances],
        }
        if frame.original_count is not None:
            rec["original_count"] = int(frame.original_count)
        records.append(rec)
    _dump_json({"format_version": FORMAT_VERSION, "name": seq.name, "frames": records}, directory / MANIFEST)


def read_sequence(directory) -> Sequence:
    directory = Path(directory)
    path = directory / MANIFEST
    if not path.is_file():
        raise FormatError(f"{path}: manifest not found")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise FormatError(f"{path}: manifest must be an object")
    if data.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format_version {data.get('format_version')!r}")
    if "name" not in data or not isinstance(data.get("frames"), list):
        raise FormatError(f"{path}: manifest needs 'name' and a 'frames' list")
    frames = []
    for k, rec in enumerate(data["frames"]):
        where = f"frames[{k}]"
        for key in ("index", "timestamp_us", "ego_pose", "points_file", "instances"):
            if key not in rec:
                raise FormatError(f"{where}: missing field {key!r}")
        if rec["index"] != k:
            raise FormatError(f"{where}.index: expected {k}, got {rec['index']!r}")
        blob = directory / rec["points_file"]
        if Path(rec["points_file"]).is_absolute() or not blob.is_file():
            raise FormatError(f"{where}.points_file: {rec['points_file']!r} does not exist under {directory}")
        cloud = read_points(blob)
        original = rec.get("original_count")
        frames.append(
            Frame(
                index=k,
                timestamp_us=int(rec["timestamp_us"]),
                ego_pose=_pose_from_dict(rec["ego_pose"], where),
                cloud=cloud,
                instances=tuple(_instance_from_dict(d, f"{where}.instances[{j}]") for j, d in enumerate(rec["instances"])),
                original_count=None if original is None else int(original),
            )
        )
    return Sequence(str(data["name"]), tuple(frames))


# ---------------------------------------------------------------------------
# tracks and ground truth


def tracks_to_dict(tracks) -> list[dict]:
    return [{"track_id": t.track_id, "occurrences": [list(o) for o in t.occurrences]} for t in tracks]


def tracks_from_dict(items) -> list[Track]:
    try:
        return [Track(int(d["track_id"]), tuple(tuple(o) for o in d["occurrences"])) for d in items]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed track list: {exc}") from None


def write_tracks(tracks, path, sequence_name: str = "") -> None:
    _dump_json({"format_version": FORMAT_VERSION, "sequence": sequence_name, "tracks": tracks_to_dict(tracks)}, Path(path))


def read_tracks(path) -> list[Track]:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None
    if data.get("format_version") != FORMAT_VERSION or "tracks" not in data:
        raise FormatError(f"{path}: not a version {FORMAT_VERSION} tracks file")
    return tracks_from_dict(data["tracks"])


def write_truth(truth: GroundTruth, directory) -> None:
    directory = Path(directory) / TRUTH_DIR
    (directory / "surfaces").mkdir(parents=True, exist_ok=True)
    objects = []
    for oid in sorted(truth.full_surfaces):
        rel = f"surfaces/obj_{oid:06d}.bin"
        write_points(truth.full_surfaces[oid], directory / rel)
        objects.append({"instance_id": oid, "surface_file": rel})
    boxes = [[{"instance_id": oid, "box": box_to_dict(b)} for oid, b in sorted(fb.items())] for fb in truth.boxes]
    _dump_json(
        {"format_version": FORMAT_VERSION, "objects": objects, "tracks": tracks_to_dict(truth.tracks), "boxes": boxes},
        directory / TRUTH_FILE,
    )


def read_truth(directory) -> GroundTruth:
    """Read ground truth from ``directory`` or from its ``truth/`` subdirectory."""
    directory = Path(directory)
    if not (directory / TRUTH_FILE).is_file():
        directory = directory / TRUTH_DIR
    path = directory / TRUTH_FILE
    if not path.is_file():
        raise FormatError(f"{path}: ground truth not found")
    data = json.loads(path.read_text())
    surfaces = {int(o["instance_id"]): read_points(directory / o["surface_file"]) for o in data["objects"]}
    boxes = [{int(d["instance_id"]): box_from_dict(d["box"], "boxes") for d in fb} for fb in data["boxes"]]
    return GroundTruth(surfaces, tracks_from_dict(data["tracks"]), boxes)


def load_scene_config(path) -> SceneConfig:
    """Scene config from a JSON or YAML file (chosen by extension)."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() in (".yaml", ".yml"):
        import yaml

        data = yaml.safe_load(text)
    else:
        data = json.loads(text)
    if not isinstance(data, dict):
        raise FormatError(f"{path}: scene config must be a mapping")
    return scene_config_from_dict(data)


# ---------------------------------------------------------------------------
# tensors


def write_tensor(array, path) -> None:
    a = np.asarray(array, dtype=np.float64)
    if a.ndim == 0:
        a = a.reshape(1)
    if not np.all(np.isfinite(a)):
        raise ValueError("tensor entries must be finite")
    header = TENSOR_MAGIC + struct.pack(f"<I{a.ndim}I", a.ndim, *a.shape)
    Path(path).write_bytes(header + np.ascontiguousarray(a, dtype="<f4").tobytes())


def read_tensor(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != TENSOR_MAGIC:
        raise FormatError(f"{path}: missing XRTN magic")
    if len(raw) < 8:
        raise FormatError(f"{path}: truncated header")
    (ndim,) = struct.unpack_from("<I", raw, 4)
    end = 8 + 4 * ndim
    if ndim == 0 or len(raw) < end:
        raise FormatError(f"{path}: bad rank {ndim}")
    dims = struct.unpack_from(f"<{ndim}I", raw, 8)
    if min(dims) == 0:
        raise FormatError(f"{path}: dimensions must be positive, got {dims}")
    count = math.prod(dims)
    if len(raw) - end != 4 * count:
        raise FormatError(f"{path}: payload holds {(len(raw) - end) / 4:g} values, shape {dims} needs {count}")
    a = np.frombuffer(raw, dtype="<f4", offset=end).reshape(dims).astype(np.float64)
    if not np.all(np.isfinite(a)):
        raise FormatError(f"{path}: non-finite values")
    return a


# ---------------------------------------------------------------------------
# PLY


def export_ply(pc: PointCloud, path, color=(200, 200, 200)) -> None:
    """ASCII PLY with float x, y, z and uchar red, green, blue.

    ``color`` is one RGB triple or an (N, 3) array of per-point colors.
    """
    colors = np.asarray(color, dtype=np.int64)
    if colors.ndim == 1:
        colors = np.tile(colors, (len(pc), 1))
    if colors.shape != (len(pc), 3) or colors.min(initial=0) < 0 or colors.max(initial=0) > 255:
        raise ValueError("color must be an RGB triple or one 0..255 triple per point")
    xyz = pc.xyz.astype(np.float32)
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(pc)}",
        "property float x",
        "property float y",
        "property float z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
        "end_header",
    ]
    lines += [
        f"{np.format_float_positional(x, unique=True, trim='-')} {np.format_float_positional(y, unique=True, trim='-')} "
        f"{np.format_float_positional(z, unique=True, trim='-')} {r} {g} {b}"
        for (x, y, z), (r, g, b) in zip(xyz, colors)
    ]
    Path(path).write_text("\n".join(lines) + "\n")
