import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xray_fusion.core import (
    BoundingBox3D,
    PointCloud,
    RigidTransform,
    apply_transform,
    box_max_dimension,
    compose,
    normalize_angle,
    points_in_box,
    points_in_box_mask,
)

angles = st.floats(-20.0, 20.0, allow_nan=False)
coords = st.floats(-50.0, 50.0, allow_nan=False)


def _random_rotation(rng):
    q = rng.normal(size=4)
    return RigidTransform.from_quaternion(q / np.linalg.norm(q), rng.uniform(-10, 10, 3))


def test_identity_leaves_cloud_unchanged(rng):
    pc = PointCloud(rng.normal(size=(50, 3)), rng.uniform(size=50))
    assert apply_transform(RigidTransform.identity(), pc) == pc


def test_pure_translation():
    out = apply_transform(RigidTransform(translation=(1, 2, 3)), PointCloud([[0, 0, 0]]))
    np.testing.assert_array_equal(out.xyz, [[1, 2, 3]])


def test_quarter_turn_maps_x_to_y():
    out = apply_transform(RigidTransform.from_yaw(math.pi / 2), PointCloud([[1, 0, 0]]))
    np.testing.assert_allclose(out.xyz, [[0, 1, 0]], atol=1e-15)


def test_transform_keeps_intensity_and_order(rng):
    pc = PointCloud(rng.normal(size=(20, 3)), rng.uniform(size=20))
    out = apply_transform(RigidTransform.from_yaw(0.3, (1, 1, 1)), pc)
    np.testing.assert_array_equal(out.intensity, pc.intensity)


def test_compose_identity_and_inverse(rng):
    t = _random_rotation(rng)
    assert compose(RigidTransform.identity(), t) == t
    back = compose(t, t.inverse())
    np.testing.assert_allclose(back.matrix(), np.eye(4), atol=1e-9)


def test_two_eighth_turns_make_a_quarter_turn():
    q = RigidTransform.from_yaw(math.pi / 4)
    half = compose(q, q)
    # independent oracle: product of explicit matrices
    c = math.cos(math.pi / 4)
    m = np.array([[c, -c, 0], [c, c, 0], [0, 0, 1]])
    np.testing.assert_allclose(half.rotation, m @ m, atol=1e-12)
    assert half.yaw == pytest.approx(math.pi / 2)


def test_compose_applies_right_operand_first():
    a = RigidTransform.from_yaw(math.pi / 2)
    b = RigidTransform(translation=(1, 0, 0))
    out = apply_transform(compose(a, b), PointCloud([[0, 0, 0]]))
    np.testing.assert_allclose(out.xyz, [[0, 1, 0]], atol=1e-15)


def test_rejects_non_rotation():
    with pytest.raises(ValueError):
        RigidTransform(np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(ValueError):
        RigidTransform(np.eye(3) * 1.01)
    with pytest.raises(ValueError):
        RigidTransform.from_quaternion((1.0, 0.1, 0.0, 0.0))


def test_quaternion_round_trip(rng):
    for _ in range(20):
        q = rng.normal(size=4)
        q /= np.linalg.norm(q)
        t = RigidTransform.from_quaternion(q)
        assert t.quaternion() == tuple(q)
        # recomputed from the matrix: same rotation up to sign
        fresh = RigidTransform(t.rotation).quaternion()
        assert np.allclose(fresh, q, atol=1e-9) or np.allclose(fresh, -q, atol=1e-9)


def test_pointcloud_validation():
    with pytest.raises(ValueError):
        PointCloud([[0, 0, 0]], [0.5, 0.5])
    with pytest.raises(ValueError):
        PointCloud([[np.nan, 0, 0]])
    with pytest.raises(ValueError):
        PointCloud([[0, 0, 0]], [1.5])
    assert len(PointCloud()) == 0


def test_pointcloud_is_read_only():
    pc = PointCloud([[1, 2, 3]])
    with pytest.raises(ValueError):
        pc.xyz[0, 0] = 5.0


def test_pointcloud_array_round_trip(rng):
    arr = np.column_stack([rng.normal(size=(9, 3)), rng.uniform(size=9)])
    assert np.array_equal(PointCloud.from_array(arr).to_array(), arr)


@pytest.mark.parametrize(
    "angle, expected",
    [(0.0, 0.0), (math.pi, -math.pi), (-math.pi, -math.pi), (3 * math.pi, -math.pi), (2 * math.pi + 0.5, 0.5)],
)
def test_normalize_angle(angle, expected):
    assert normalize_angle(angle) == pytest.approx(expected, abs=1e-12)


@given(angles)
def test_normalize_angle_range_and_idempotence(a):
    n = normalize_angle(a)
    assert -math.pi <= n < math.pi
    assert normalize_angle(n) == n
    assert math.isclose(math.cos(n), math.cos(a), abs_tol=1e-9)
    assert math.isclose(math.sin(n), math.sin(a), abs_tol=1e-9)


def test_box_membership_examples():
    b = BoundingBox3D((0, 0, 0), (4, 2, 2), 0.0)
    assert points_in_box_mask(b, np.array([[0.0, 0, 0]]))[0]
    assert points_in_box_mask(b, np.array([[2.0, 1, 1]]))[0]  # corner counts as inside
    rotated = BoundingBox3D((5, 0, 0), (4, 2, 2), math.pi / 2)
    mask = points_in_box_mask(rotated, np.array([[5.0, 1.9, 0], [5.0, 2.1, 0]]))
    assert mask.tolist() == [True, False]


def test_points_in_box_returns_sorted_indices():
    b = BoundingBox3D((0, 0, 0), (2, 2, 2), 0.0)
    pc = PointCloud([[5, 0, 0], [0, 0, 0], [9, 9, 9], [0.5, 0.5, 0.5]])
    assert points_in_box(b, pc).tolist() == [1, 3]


@pytest.mark.parametrize("size, expected", [((4, 2, 1.5), 4), ((1, 1, 1), 1), ((2, 5, 3), 5)])
def test_box_max_dimension(size, expected):
    assert box_max_dimension(BoundingBox3D((0, 0, 0), size, 0.0)) == expected


def test_box_validation():
    with pytest.raises(ValueError):
        BoundingBox3D((0, 0, 0), (1, 0, 1), 0.0)
    assert BoundingBox3D((0, 0, 0), (1, 1, 1), 3 * math.pi).yaw == pytest.approx(-math.pi)


def test_box_corners_lie_on_box():
    b = BoundingBox3D((1, 2, 3), (4, 2, 1), 0.7)
    c = b.corners()
    assert c.shape == (8, 3)
    assert points_in_box_mask(BoundingBox3D(b.center, tuple(s + 1e-9 for s in b.size), b.yaw), c).all()


@settings(max_examples=60)
@given(st.integers(0, 2**32 - 1))
def test_rigidity(seed):
    rng = np.random.default_rng(seed)
    t = _random_rotation(rng)
    pts = rng.uniform(-20, 20, (30, 3))
    out = apply_transform(t, PointCloud(pts)).xyz
    d0 = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
    d1 = np.linalg.norm(out[:, None] - out[None], axis=-1)
    off = ~np.eye(30, dtype=bool)
    assert np.max(np.abs(d1[off] - d0[off]) / d0[off]) < 1e-9


@settings(max_examples=60)
@given(st.integers(0, 2**32 - 1))
def test_compose_is_associative(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (_random_rotation(rng) for _ in range(3))
    left = compose(compose(a, b), c).matrix()
    right = compose(a, compose(b, c)).matrix()
    np.testing.assert_allclose(left, right, atol=1e-9)


@settings(max_examples=80)
@given(coords, coords, angles, angles, st.integers(0, 2**32 - 1))
def test_box_membership_invariant_under_yaw_motion(cx, cy, yaw, motion_yaw, seed):
    rng = np.random.default_rng(seed)
    b = BoundingBox3D((cx, cy, 0.5), tuple(rng.uniform(0.5, 5, 3)), yaw)
    pts = np.array(b.center) + rng.uniform(-4, 4, (200, 3))
    t = RigidTransform.from_yaw(motion_yaw, rng.uniform(-30, 30, 3))
    moved = apply_transform(t, PointCloud(pts)).xyz
    before = points_in_box_mask(b, pts)
    after = points_in_box_mask(b.transformed(t), moved)
    # points within rounding of a face may flip; compare away from the boundary
    local = (pts - np.array(b.center)) @ np.array(b.pose().rotation)
    margin = np.min(np.array(b.size) / 2 - np.abs(local), axis=1)
    clear = np.abs(margin) > 1e-9
    assert np.array_equal(before[clear], after[clear])
