import numpy as np
import pytest

from xray_fusion.core import BoundingBox3D, PointCloud, RigidTransform
from xray_fusion.frames import DetectedInstance, Frame, Sequence
from xray_fusion.simulate import orbit_scene


ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, name: str, ok: bool, detail: str) -> None:
    """Remember one acceptance result; printed in the terminal summary."""
    ACCEPTANCE_LINES[number] = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    print(ACCEPTANCE_LINES[number])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_frame(index, boxes, cloud=None, labels=None, ego=None, ids=None):
    """Frame with one instance per box; boxes given in the ego frame."""
    labels = labels or ["vehicle"] * len(boxes)
    ids = ids if ids is not None else [None] * len(boxes)
    instances = [DetectedInstance(b, lab, 1.0, i) for b, lab, i in zip(boxes, labels, ids)]
    return Frame(index, index * 100_000, ego or RigidTransform.identity(), cloud or PointCloud(), tuple(instances))


def box(cx=0.0, cy=0.0, cz=0.0, l=4.0, w=2.0, h=1.5, yaw=0.0):
    return BoundingBox3D((cx, cy, cz), (l, w, h), yaw)


@pytest.fixture(scope="session")
def small_orbit():
    """8-frame orbit of a box-car with mild sensor noise, shared across tests."""
    from xray_fusion.simulate import generate

    return generate(orbit_scene(n_frames=8, points_per_m2=40.0, noise_sigma=0.005, seed=3))


@pytest.fixture
def empty_sequence():
    return Sequence("empty", ())





def random_sequence(seed: int, max_frames: int = 4, fused: bool = False) -> Sequence:
    """Sequence with random poses, boxes and float32-representable clouds."""
    from xray_fusion.frames import CLASS_LABELS

    rng = np.random.default_rng(seed)
    frames = []
    for f in range(int(rng.integers(0, max_frames + 1))):
        q = rng.normal(size=4)
        ego = RigidTransform.from_quaternion(q / np.linalg.norm(q), rng.normal(size=3) * 10)
        n = int(rng.integers(0, 60))
        arr = np.column_stack([rng.normal(size=(n, 3)) * 20, rng.uniform(0, 1, n)]).astype(np.float32).astype(np.float64)
        cloud = PointCloud.from_array(arr)
        insts = []
        for k in range(int(rng.integers(0, 4))):
            b = BoundingBox3D(tuple(rng.normal(size=3) * 5), tuple(rng.uniform(0.2, 5, 3)), float(rng.uniform(-np.pi, np.pi)))
            iid = int(rng.integers(0, 100)) if rng.random() < 0.7 else None
            insts.append(DetectedInstance(b, CLASS_LABELS[k % len(CLASS_LABELS)], float(rng.random()), iid))
        original = int(rng.integers(0, n + 1)) if fused else None
        frames.append(Frame(f, f * 100_000 + int(rng.integers(0, 1000)), ego, cloud, tuple(insts), original))
    return Sequence(f"random-{seed}", tuple(frames))
__all__ = ["box", "make_frame", "random_sequence", "record_criterion"]
