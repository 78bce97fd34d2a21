import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import box, make_frame
from xray_fusion.completion import (
    FusionConfig,
    FusionError,
    fuse_sequence,
    run_pipeline,
    subsample_added_points,
    subsample_budget,
    worker_count,
)
from xray_fusion.core import PointCloud, points_in_box_mask
from xray_fusion.frames import Sequence
from xray_fusion.simulate import generate, inject_box_noise, separated_scene
from xray_fusion.tracking import Track, greedy_track, track_instances_from_ids


def _cloud(n, rng):
    return PointCloud(rng.normal(size=(n, 3)), rng.uniform(size=n))


def test_subsample_examples(rng):
    new = _cloud(2000, rng)
    assert len(subsample_added_points(1000, new, 1.5, rng)) == 1500
    assert len(subsample_added_points(1000, new.select(slice(0, 1000)), 1.5, rng)) == 1000
    assert len(subsample_added_points(1000, new, 0.0, rng)) == 0
    assert subsample_added_points(3, new, math.inf, rng) == new
    with pytest.raises(ValueError):
        subsample_added_points(10, new, -0.5, rng)


def test_subsample_preserves_order_and_draws_from_input(rng):
    new = PointCloud(np.arange(300, dtype=float).repeat(3).reshape(-1, 3))
    kept = subsample_added_points(100, new, 1.0, rng).xyz[:, 0]
    assert len(kept) == 100 and np.all(np.diff(kept) > 0) and set(kept) <= set(range(300))


def test_subsample_is_uniform():
    # each of 20 points kept in 5 of 20 slots: inclusion frequency 0.25
    new = PointCloud(np.arange(20, dtype=float).repeat(3).reshape(-1, 3))
    counts = np.zeros(20)
    for s in range(4000):
        kept = subsample_added_points(5, new, 1.0, np.random.default_rng(s)).xyz[:, 0].astype(int)
        counts[kept] += 1
    freq = counts / 4000
    # binomial sd is about 0.007; allow 5 sd
    assert np.abs(freq - 0.25).max() < 0.035


@settings(max_examples=300)
@given(st.integers(0, 10**6), st.integers(0, 5000), st.one_of(st.floats(0, 50), st.just(math.inf)))
def test_budget_law(original, n_new, factor):
    if math.isinf(factor):
        expected = n_new
    else:
        p, q = factor.as_integer_ratio()
        expected = min(n_new, (p * original) // q)
    assert subsample_budget(original, n_new, factor) == expected


def test_fusion_config_validation():
    with pytest.raises(ValueError):
        FusionConfig(strategy="gedi")
    with pytest.raises(ValueError):
        FusionConfig(subsample_factor=-1)
    with pytest.raises(ValueError):
        FusionConfig(subsample_factor=float("nan"))


def test_worker_count(monkeypatch):
    monkeypatch.setenv("XRAY_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("XRAY_THREADS", "0")
    assert worker_count() == 1
    monkeypatch.setenv("XRAY_THREADS", "many")
    with pytest.raises(ValueError):
        worker_count()


def test_frame_without_instances_is_returned_unchanged(rng):
    f0 = make_frame(0, [], cloud=_cloud(50, rng))
    seq = Sequence("s", (f0,))
    out, tracks, report = run_pipeline(seq, FusionConfig())
    assert out.frames[0] is f0 and tracks == [] and report["totals"]["added_points"] == 0


def _two_view_sequence(rng):
    b = box(cx=10.0, cz=0.75)
    frames = []
    for f in range(2):
        inside = rng.uniform(-1, 1, (40 + 10 * f, 3)) * np.array([1.9, 0.9, 0.7]) + np.array(b.center)
        background = rng.uniform(-30, 30, (25, 3)) + np.array([0, 0, 10])
        xyz = np.vstack([background[:12], inside, background[12:]])
        cloud = PointCloud(xyz, rng.uniform(size=len(xyz)))
        frames.append(make_frame(f, [b], cloud=cloud, ids=[1]))
    return Sequence("two", tuple(frames))


def test_static_object_union(rng):
    seq = _two_view_sequence(rng)
    tracks = track_instances_from_ids(seq)
    out = fuse_sequence(seq, tracks, FusionConfig(subsample_factor=math.inf))
    counts = [int(points_in_box_mask(f.instances[0].box, f.cloud.xyz).sum()) for f in seq.frames]
    for fused in out.frames:
        assert int(points_in_box_mask(fused.instances[0].box, fused.cloud.xyz).sum()) == sum(counts)
    assert out.frames[1].original_count == len(seq.frames[1].cloud)


def test_fused_frames_keep_metadata(rng):
    seq = _two_view_sequence(rng)
    out = fuse_sequence(seq, track_instances_from_ids(seq), FusionConfig())
    for a, b in zip(seq.frames, out.frames):
        assert (a.index, a.timestamp_us, a.ego_pose, a.instances) == (b.index, b.timestamp_us, b.ego_pose, b.instances)


def test_missing_or_shared_instances_are_errors(rng):
    seq = _two_view_sequence(rng)
    with pytest.raises(FusionError):
        fuse_sequence(seq, [Track(0, ((0, 0), (1, 3)))], FusionConfig())
    with pytest.raises(FusionError):
        fuse_sequence(seq, [Track(0, ((0, 0),)), Track(1, ((0, 0), (1, 0)))], FusionConfig())


def check_superset_and_background(seq, fused):
    for a, b in zip(seq.frames, fused.frames):
        n = len(a.cloud)
        if b is a:
            continue
        assert b.original_count == n
        # original points form a bit-identical prefix
        assert np.array_equal(b.cloud.xyz[:n], a.cloud.xyz) and np.array_equal(b.cloud.intensity[:n], a.cloud.intensity)
        in_any = np.zeros(len(b.cloud), dtype=bool)
        for inst in b.instances:
            in_any |= points_in_box_mask(inst.box, b.cloud.xyz)
        bg_before = a.cloud.to_array()[~in_any[:n]]
        bg_after = b.cloud.to_array()[~in_any]
        assert np.array_equal(bg_before, bg_after)


@pytest.mark.parametrize("strategy", ["geometry", "icp"])
@pytest.mark.parametrize("factor", [0.0, 0.3, 1.5, math.inf])
def test_superset_and_background_invariants(strategy, factor):
    seq, _ = generate(separated_scene(4, n_objects=3, n_frames=4))
    seq = inject_box_noise(seq, 0.03, 0.02, seed=4) if strategy == "icp" else seq
    fused, _, report = run_pipeline(seq, FusionConfig(strategy=strategy, subsample_factor=factor, seed=2))
    check_superset_and_background(seq, fused)
    for stats, frame in zip(report["frames"], seq.frames):
        assert stats["added_points"] == subsample_budget(len(frame.cloud), stats["candidate_points"], factor)


def test_pipeline_modes_agree_on_separated_scene():
    seq, truth = generate(separated_scene(9, n_objects=4, n_frames=4))
    cfg = FusionConfig(seed=5)
    by_ids, id_tracks, _ = run_pipeline(seq, cfg, "instance_ids")
    greedy, g_tracks, _ = run_pipeline(seq, cfg, "greedy")
    assert [t.occurrences for t in id_tracks] == [t.occurrences for t in truth.tracks]
    # track ids differ between modes and feed the RNG, so compare without subsampling
    cfg = FusionConfig(seed=5, subsample_factor=math.inf)
    a, _, _ = run_pipeline(seq, cfg, "instance_ids")
    b, _, _ = run_pipeline(seq, cfg, "greedy")
    for fa, fb in zip(a.frames, b.frames):
        assert sorted(map(tuple, fa.cloud.to_array())) == sorted(map(tuple, fb.cloud.to_array()))


def test_pipeline_report_contents():
    seq, _ = generate(separated_scene(1, n_objects=2, n_frames=3))
    _, tracks, report = run_pipeline(seq, FusionConfig(strategy="icp"), "greedy")
    assert len(report["tracks"]) == len(tracks)
    for entry, track in zip(report["tracks"], tracks):
        assert entry["views"] == len(track) and len(entry["icp_residuals"]) == len(track) - 1
    assert report["totals"]["added_points"] == sum(f["added_points"] for f in report["frames"])
    with pytest.raises(ValueError):
        run_pipeline(seq, FusionConfig(), "hungarian")


@pytest.mark.parametrize("threads", ["1", "4"])
def test_thread_count_does_not_change_output(monkeypatch, threads):
    seq, _ = generate(separated_scene(2, n_objects=4, n_frames=3))
    monkeypatch.setenv("XRAY_THREADS", "1")
    ref, _, _ = run_pipeline(seq, FusionConfig(seed=3))
    monkeypatch.setenv("XRAY_THREADS", threads)
    out, _, _ = run_pipeline(seq, FusionConfig(seed=3))
    assert all(a.cloud == b.cloud for a, b in zip(ref.frames, out.frames))
