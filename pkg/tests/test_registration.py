import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xray_fusion.core import BoundingBox3D, PointCloud, RigidTransform, apply_transform, points_in_box
from xray_fusion.evaluation import chamfer, transform_error
from xray_fusion.registration import (
    IcpParams,
    NoOverlapError,
    RegistrationError,
    canonicalize,
    icp_register,
    kabsch,
    merge_track,
    repose,
)
from xray_fusion.simulate import generate, inject_box_noise, orbit_scene, sample_surface


def car_surface(n_per_m2=40.0, seed=0):
    pts, _ = sample_surface("box", (4.0, 2.0, 1.5), n_per_m2, np.random.default_rng(seed))
    return PointCloud(pts)


def test_canonicalize_examples():
    pc = PointCloud([[1.0, 2.0, 3.0]])
    assert canonicalize(pc, BoundingBox3D((0, 0, 0), (1, 1, 1), 0.0)) == pc
    out = canonicalize(PointCloud([[1.0, 0, 0]]), BoundingBox3D((5, 0, 0), (1, 1, 1), math.pi / 2))
    np.testing.assert_allclose(out.xyz, [[0.0, 4.0, 0.0]], atol=1e-12)


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1))
def test_canonicalize_round_trip_and_rigidity(seed):
    rng = np.random.default_rng(seed)
    b = BoundingBox3D(tuple(rng.uniform(-50, 50, 3)), (4, 2, 1.5), rng.uniform(-4, 4))
    pc = PointCloud(rng.uniform(-60, 60, (40, 3)))
    c = canonicalize(pc, b)
    np.testing.assert_allclose(repose(c, b).xyz, pc.xyz, atol=1e-9)
    d0 = np.linalg.norm(pc.xyz[1:] - pc.xyz[0], axis=1)
    d1 = np.linalg.norm(c.xyz[1:] - c.xyz[0], axis=1)
    np.testing.assert_allclose(d1, d0, rtol=1e-12)


def test_kabsch_recovers_exact_transform(rng):
    src = rng.normal(size=(30, 3))
    t = RigidTransform.from_quaternion(np.array([0.9, 0.1, -0.3, 0.2]) / np.linalg.norm([0.9, 0.1, -0.3, 0.2]), (1, 2, 3))
    est = kabsch(src, apply_transform(t, PointCloud(src)).xyz)
    np.testing.assert_allclose(est.matrix(), t.matrix(), atol=1e-10)


def test_kabsch_degenerate_inputs_fit_translation_only():
    est = kabsch(np.array([[0.0, 0, 0]]), np.array([[1.0, 2, 3]]))
    np.testing.assert_array_equal(est.rotation, np.eye(3))
    np.testing.assert_allclose(est.translation, [1, 2, 3])
    line = np.array([[0.0, 0, 0], [1, 0, 0], [2, 0, 0]])
    est = kabsch(line, line + 0.5)
    np.testing.assert_array_equal(est.rotation, np.eye(3))


def test_icp_identical_clouds():
    pc = car_surface()
    assert len(pc) >= 1000
    res = icp_register(pc, pc)
    np.testing.assert_allclose(res.transform.matrix(), np.eye(4), atol=1e-6)
    assert res.residual_rmse < 1e-9


def test_icp_single_points():
    res = icp_register(PointCloud([[0, 0, 0]]), PointCloud([[1, 2, 3]]), IcpParams(max_correspondence_dist=5.0))
    np.testing.assert_array_equal(res.transform.rotation, np.eye(3))
    np.testing.assert_allclose(res.transform.translation, [1, 2, 3])


def test_icp_errors():
    pc = car_surface()
    with pytest.raises(RegistrationError):
        icp_register(PointCloud(), pc)
    with pytest.raises(RegistrationError):
        icp_register(pc, PointCloud())
    far = apply_transform(RigidTransform(translation=(100, 0, 0)), pc)
    with pytest.raises(NoOverlapError, match="no overlap"):
        icp_register(far, pc)


def test_icp_known_perturbation():
    # 10 degrees and 0.5 m: recovered within 0.5 degrees and 2 cm
    target = car_surface()
    t = RigidTransform.from_yaw(math.radians(10), (0.5, 0, 0))
    res = icp_register(apply_transform(t, target), target)
    rot, trans = transform_error(res.transform, t.inverse())
    assert rot < 0.5 and trans < 0.02
    assert res.iterations <= IcpParams().max_iterations


@settings(max_examples=25, deadline=None)
@given(st.floats(-15, 15), st.floats(0, 2 * math.pi), st.floats(0, 1.0), st.integers(0, 1000))
def test_icp_recovers_rigid_motion_of_same_cloud(yaw_deg, heading, frac, seed):
    # same points on both sides; 0.5 * diameter caps the translation, 1 mm / 0.1 degree tolerance
    target = car_surface(n_per_m2=15.0, seed=seed)
    assert len(target) >= 500
    diameter = float(np.linalg.norm(np.ptp(target.xyz, axis=0)))
    shift = 0.5 * diameter * frac
    t = RigidTransform.from_yaw(math.radians(yaw_deg), (shift * math.cos(heading), shift * math.sin(heading), 0.0))
    params = IcpParams(max_iterations=200, convergence_tol=1e-9, max_correspondence_dist=diameter)
    res = icp_register(apply_transform(t, target), target, params)
    rot, trans = transform_error(res.transform, t.inverse())
    assert rot < 0.1 and trans < 1e-3


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_icp_trace_never_increases(seed):
    rng = np.random.default_rng(seed)
    target = car_surface(seed=seed % 97)
    t = RigidTransform.from_yaw(rng.uniform(-0.3, 0.3), (*rng.uniform(-0.5, 0.5, 2), 0.0))
    src = PointCloud(apply_transform(t, target).xyz + rng.normal(0, 0.01, target.xyz.shape))
    res = icp_register(src, target)
    trace = np.array(res.rmse_trace)
    assert len(trace) == res.iterations + 1
    assert np.all(np.diff(trace) <= 0.0)
    assert res.residual_rmse >= 0 and res.residual_rmse == res.inlier_rmse_trace[-1]


def test_params_validation():
    with pytest.raises(ValueError):
        IcpParams(max_iterations=-1)
    with pytest.raises(ValueError):
        IcpParams(max_correspondence_dist=0.0)


def _views(seq, frames=None):
    out = []
    for f in frames or range(len(seq.frames)):
        fr = seq.frames[f]
        b = fr.instances[0].box
        out.append((fr.cloud.select(points_in_box(b, fr.cloud)), b))
    return out


def test_merge_single_view(small_orbit):
    seq, _ = small_orbit
    (cloud, b), = _views(seq, [0])
    for strategy in ("geometry", "icp"):
        obj = merge_track([(cloud, b)], strategy)
        assert obj.source_count == 1 and obj.cloud == canonicalize(cloud, b)


def test_geometry_merge_is_concatenation(small_orbit):
    seq, _ = small_orbit
    views = _views(seq)
    obj = merge_track(views, "geometry", frame_indices=range(10, 18))
    assert len(obj.cloud) == sum(len(c) for c, _ in views)
    assert obj.source_count == len(views)
    np.testing.assert_array_equal(np.unique(obj.point_frames), np.arange(10, 18))
    expected = PointCloud.concatenate([canonicalize(c, b) for c, b in views])
    assert obj.cloud == expected


def test_merge_errors(small_orbit):
    seq, _ = small_orbit
    with pytest.raises(ValueError):
        merge_track([], "geometry")
    with pytest.raises(ValueError):
        merge_track(_views(seq, [0]), "learned")
    with pytest.raises(ValueError):
        merge_track(_views(seq, [0, 1]), "geometry", frame_indices=[0])


def test_icp_merge_falls_back_on_no_overlap():
    a = (car_surface(), BoundingBox3D((0, 0, 0), (4, 2, 1.5), 0.0))
    far = apply_transform(RigidTransform(translation=(50, 0, 0)), a[0])
    obj = merge_track([a, (far, a[1])], "icp")
    assert obj.source_count == 2 and len(obj.cloud) == 2 * len(a[0])
    assert math.isnan(obj.icp_residuals[0])


@pytest.mark.parametrize("seed", range(3))
def test_two_view_noisy_yaw_icp_beats_geometry(seed):
    # adjacent orbit views, the second box yaw carries +5 degrees of noise
    seq, truth = generate(orbit_scene(n_frames=20, noise_sigma=0.01, alternate=False, seed=seed, start_angle=0.7 * seed))
    surface = truth.full_surfaces[0]
    (c0, b0), (_, b1) = _views(seq, [0, 1])
    noisy = BoundingBox3D(b1.center, b1.size, b1.yaw + math.radians(5))
    # crop with a margin so the tilted box does not shave off the object's ends
    crop = BoundingBox3D(b1.center, tuple(s + 0.6 for s in b1.size), noisy.yaw)
    c1 = seq.frames[1].cloud.select(points_in_box(crop, seq.frames[1].cloud))
    views = [(c0, b0), (c1, noisy)]
    geo = chamfer(merge_track(views, "geometry").cloud, surface)
    icp = chamfer(merge_track(views, "icp", IcpParams(200, 1e-6, 0.2)).cloud, surface)
    assert icp < geo


def test_icp_merge_reduces_yaw_error_under_box_noise():
    seq, _ = generate(orbit_scene(n_frames=8, noise_sigma=0.01, alternate=False, seed=2))
    noisy = inject_box_noise(seq, math.radians(5), 0.0, seed=9)
    errs_geo, errs_icp = [], []
    (c0, b0), = _views(seq, [0])
    for f in range(1, 4):
        fr, b_true, b = seq.frames[f], seq.frames[f].instances[0].box, noisy.frames[f].instances[0].box
        crop = BoundingBox3D(b.center, tuple(s + 0.6 for s in b.size), b.yaw)
        view = fr.cloud.select(points_in_box(crop, fr.cloud))
        res = icp_register(canonicalize(view, b), canonicalize(c0, b0), IcpParams(200, 1e-6, 0.2))
        errs_geo.append(abs(math.degrees(b.yaw - b_true.yaw)))
        errs_icp.append(abs(math.degrees(res.transform.yaw - (b.yaw - b_true.yaw))))
    assert np.mean(errs_icp) < 0.5 * np.mean(errs_geo)
