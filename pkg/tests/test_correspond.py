import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wiretrack.correspond import (
    ControlPoint,
    match_control_points,
    merge_line_pairs,
    sample_control_points,
    search_candidates,
)
from wiretrack.geometry import look_at, project_points, world_to_camera
from wiretrack.wiremodel import Segment2D, project_profile


def horizontal_cp(u=100.0, v=100.0):
    # edge along +x, normal (0, 1)
    return ControlPoint(x3d=np.zeros(3), uv=np.array([u, v]), normal=np.array([0.0, 1.0]), edge=0)


def hseg(v, u0=50.0, u1=150.0):
    return Segment2D([u0, v], [u1, v])


def profile_segment(length, **kw):
    return Segment2D([0, 0], [length, 0], edge=0, X0=np.zeros(3), X1=np.array([1.0, 0, 0]), **kw)


# ------------------------------------------------------------------ sampling


@pytest.mark.parametrize("length, expected", [(100, 11), (5, 2), (19.99, 2), (20, 3)])
def test_sample_counts(length, expected):
    assert len(sample_control_points([profile_segment(length)], spacing=10)) == expected


def test_sample_endpoints_included():
    cps = sample_control_points([profile_segment(100)], spacing=10)
    np.testing.assert_allclose(cps[0].uv, [0, 0])
    np.testing.assert_allclose(cps[-1].uv, [100, 0])
    np.testing.assert_allclose(cps[0].x3d, [0, 0, 0])
    np.testing.assert_allclose(cps[-1].x3d, [1, 0, 0])


def test_sample_normal_is_unit_and_perpendicular():
    seg = Segment2D([3, 4], [40, -7], edge=2, X0=np.zeros(3), X1=np.ones(3))
    for cp in sample_control_points([seg]):
        assert np.linalg.norm(cp.normal) == pytest.approx(1.0, abs=1e-9)
        assert abs(cp.normal @ seg.direction) < 1e-9
        assert cp.edge == 2


def test_degenerate_segment_skipped():
    seg = Segment2D([1, 1], [1, 1], edge=0, X0=np.zeros(3), X1=np.ones(3))
    assert sample_control_points([seg, profile_segment(30)]) != []
    assert sample_control_points([seg]) == []


def test_sample_requires_3d():
    with pytest.raises(ValueError):
        sample_control_points([Segment2D([0, 0], [10, 0])])


def test_equal_depths_give_linear_midpoint():
    seg = profile_segment(100, z0=4.0, z1=4.0)
    cps = sample_control_points([seg], spacing=50)
    np.testing.assert_allclose(cps[1].x3d, [0.5, 0, 0])


def test_control_points_reproject_onto_profile(cube, k, corner_pose):
    prof = project_profile(cube, corner_pose, k)
    cps = sample_control_points(prof, spacing=10)
    uv = project_points(k, world_to_camera(corner_pose, np.array([c.x3d for c in cps])))
    err = np.linalg.norm(uv - np.array([c.uv for c in cps]), axis=1)
    assert err.max() < 1e-6


def test_linear_midpoint_offset_on_receding_edge(cube, k):
    """Edges receding in depth make the 3D midpoint project away from the image midpoint."""
    pose = look_at([2.2, 1.2, 0.9], [0, 0, 0])
    prof = project_profile(cube, pose, k)
    offsets = []
    for s in prof:
        mid3 = world_to_camera(pose, 0.5 * (s.X0 + s.X1)[None])[0]
        offsets.append(np.linalg.norm(project_points(k, mid3[None])[0] - 0.5 * (s.p0 + s.p1)))
    # the depth-corrected sampler has no such offset, see the reprojection test above
    assert max(offsets) > 0.2


# ------------------------------------------------------------------ search


def test_parallel_segment_offset():
    hyps = search_candidates(horizontal_cp(), [hseg(103)], radius=20)
    assert len(hyps) == 1
    assert hyps[0].signed_distance == pytest.approx(3.0)
    np.testing.assert_allclose(hyps[0].uv_matched, [100, 103])


def test_nothing_within_radius():
    assert search_candidates(horizontal_cp(), [hseg(130)], radius=20) == []


def test_k_nearest():
    segs = [hseg(100 + d) for d in (16, 2, 8, 1, 4)]
    hyps = search_candidates(horizontal_cp(), segs, radius=20, k_max=3)
    assert [h.signed_distance for h in hyps] == pytest.approx([1, 2, 4])
    assert [h.segment_index for h in hyps] == [3, 1, 4]


def test_perpendicular_segment_rejected():
    crossing = Segment2D([100, 90], [100, 110])
    assert search_candidates(horizontal_cp(), [crossing], orient_tol=22.5) == []


def test_foot_slack():
    cp = horizontal_cp(u=100)
    assert search_candidates(cp, [hseg(105, 100.9, 160)]) != []
    assert search_candidates(cp, [hseg(105, 101.1, 160)]) == []


def test_tilted_segment_uses_crossing_point():
    cp = horizontal_cp()
    seg = Segment2D([50, 95], [150, 105])  # crosses u=100 at v=100
    (h,) = search_candidates(cp, [seg], orient_tol=10)
    assert h.signed_distance == pytest.approx(0.0, abs=1e-12)


def test_no_segments():
    assert match_control_points([horizontal_cp()], []) == [[]]
    assert match_control_points([], [hseg(100)]) == []


def random_segments(seed, n=40):
    rng = np.random.default_rng(seed)
    p0 = rng.uniform(0, 200, (n, 2))
    ang = rng.uniform(0, np.pi, n)
    L = rng.uniform(5, 80, n)
    return [Segment2D(a, a + l * np.array([np.cos(t), np.sin(t)])) for a, t, l in zip(p0, ang, L)]


def random_cp(seed):
    rng = np.random.default_rng(seed + 1)
    t = rng.uniform(0, np.pi)
    return ControlPoint(np.zeros(3), rng.uniform(20, 180, 2), np.array([-np.sin(t), np.cos(t)]), 0)


@settings(max_examples=200)
@given(
    st.integers(0, 10_000),
    st.floats(1, 40),
    st.floats(1, 40),
    st.floats(1, 60),
    st.floats(1, 60),
    st.integers(1, 5),
)
def test_search_invariants(seed, r_a, r_b, o_a, o_b, k_max):
    segs = random_segments(seed)
    cp = random_cp(seed)
    r_lo, r_hi = sorted((r_a, r_b))
    o_lo, o_hi = sorted((o_a, o_b))
    big = search_candidates(cp, segs, radius=r_hi, orient_tol=o_hi, k_max=100)
    small = search_candidates(cp, segs, radius=r_lo, orient_tol=o_lo, k_max=100)
    assert {h.segment_index for h in small} <= {h.segment_index for h in big}
    hyps = search_candidates(cp, segs, radius=r_hi, orient_tol=o_hi, k_max=k_max)
    assert len(hyps) <= k_max
    d = [abs(h.signed_distance) for h in hyps]
    assert d == sorted(d)
    for h in hyps:
        assert abs(h.signed_distance) <= r_hi
        np.testing.assert_allclose(h.uv_matched, cp.uv + h.signed_distance * cp.normal, atol=1e-6)


# ------------------------------------------------------------------ twin-flank merging


def flank_pair(gap=3.0, dark=True):
    # segments oriented with the dark side on their left
    upper = Segment2D([0, 100], [80, 100])      # left normal (0, 1): points down
    lower = Segment2D([80, 100 + gap], [0, 100 + gap])  # left normal (0, -1): points up
    return (upper, lower) if dark else (Segment2D(upper.p1, upper.p0), Segment2D(lower.p1, lower.p0))


def test_merge_dark_line_flanks():
    merged = merge_line_pairs(list(flank_pair(3.0)))
    assert len(merged) == 1
    s = merged[0]
    np.testing.assert_allclose([s.p0[1], s.p1[1]], [101.5, 101.5])
    assert s.length == pytest.approx(80)


def test_bright_band_not_merged_by_default():
    pair = list(flank_pair(3.0, dark=False))
    assert len(merge_line_pairs(pair)) == 2
    assert len(merge_line_pairs(pair, polarity="bright")) == 1
    assert len(merge_line_pairs(pair, polarity="any")) == 1


def test_merge_gap_and_overlap_limits():
    assert len(merge_line_pairs(list(flank_pair(6.0)), max_gap=4.0)) == 2
    upper = Segment2D([0, 100], [80, 100])
    lower = Segment2D([200, 103], [120, 103])
    assert len(merge_line_pairs([upper, lower])) == 2


def test_merge_leaves_parallel_same_direction_alone():
    a = Segment2D([0, 100], [80, 100])
    b = Segment2D([0, 103], [80, 103])
    assert merge_line_pairs([a, b]) == [a, b]


def test_merge_bad_polarity():
    with pytest.raises(ValueError):
        merge_line_pairs([], polarity="grey")
