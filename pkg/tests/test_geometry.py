import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from wiretrack.errors import LogNearPiError, LookAtDegenerateError, NoConvergenceError, NonPositiveDepthError
from wiretrack.geometry import (
    CameraIntrinsics,
    Pose,
    Twist,
    compose,
    exp_twist,
    invert,
    load_intrinsics,
    log_pose,
    look_at,
    pose_error,
    pose_from_json,
    pose_to_json,
    project_point,
    project_points,
    rot_z,
    save_intrinsics,
    transform_point,
    undistort_point,
    world_to_camera,
)

finite = st.floats(-10, 10, allow_nan=False)
vec3 = st.tuples(finite, finite, finite).map(np.array)


def random_pose(seed: int) -> Pose:
    rng = np.random.default_rng(seed)
    R = Rotation.random(random_state=seed).as_matrix()
    return Pose(R, rng.uniform(-5, 5, 3))


poses = st.integers(0, 2**31 - 1).map(random_pose)


def assert_pose_close(a: Pose, b: Pose, tol=1e-9):
    np.testing.assert_allclose(a.R, b.R, atol=tol)
    np.testing.assert_allclose(a.t, b.t, atol=tol)


# ------------------------------------------------------------------ compose / invert


def test_compose_identity_left():
    T = random_pose(3)
    assert_pose_close(compose(Pose.identity(), T), T)


def test_compose_translations_add():
    a = Pose.from_translation([1, 0, 0])
    b = Pose.from_translation([0, 2, 0])
    assert_pose_close(compose(a, b), Pose.from_translation([1, 2, 0]))


def test_compose_rotations():
    q = Pose(rot_z(np.pi / 2), np.zeros(3))
    assert_pose_close(compose(q, q), Pose(rot_z(np.pi), np.zeros(3)))


def test_compose_applies_right_operand_first():
    a = Pose(rot_z(np.pi / 2), [0, 0, 0])
    b = Pose.from_translation([1, 0, 0])
    x = np.array([0.0, 0.0, 0.0])
    # b moves the origin to (1,0,0), a then rotates it onto the y axis
    np.testing.assert_allclose(transform_point(compose(a, b), x), [0, 1, 0], atol=1e-12)
    np.testing.assert_allclose(transform_point(a @ b, x), transform_point(a, transform_point(b, x)))


def test_invert_identity():
    assert_pose_close(invert(Pose.identity()), Pose.identity())


def test_invert_translation():
    assert_pose_close(invert(Pose.from_translation([1, -2, 3])), Pose.from_translation([-1, 2, -3]))


def test_invert_random_poses():
    for seed in range(100):
        T = random_pose(seed)
        assert_pose_close(compose(T, invert(T)), Pose.identity())


@given(poses)
def test_double_inverse(T):
    assert_pose_close(invert(invert(T)), T)


def test_transform_point_examples():
    np.testing.assert_allclose(transform_point(Pose.identity(), [1, 2, 3]), [1, 2, 3])
    np.testing.assert_allclose(transform_point(Pose.from_translation([0, 0, 5]), [0, 0, 0]), [0, 0, 5])
    np.testing.assert_allclose(transform_point(Pose(rot_z(np.pi / 2), np.zeros(3)), [1, 0, 0]), [0, 1, 0], atol=1e-15)


def test_pose_is_immutable():
    T = Pose.identity()
    with pytest.raises(ValueError):
        T.t[0] = 1.0


# ------------------------------------------------------------------ look_at


def test_look_at_puts_target_on_optical_axis():
    pose = look_at([3.0, 2.0, 1.5], [0.1, -0.2, 0.3])
    xc = world_to_camera(pose, np.array([[0.1, -0.2, 0.3]]))[0]
    assert xc[2] > 0
    np.testing.assert_allclose(xc[:2], 0, atol=1e-12)


def test_look_at_keeps_world_up_at_image_top():
    pose = look_at([5.0, 0.0, 0.0], [0, 0, 0])
    k = CameraIntrinsics(500, 500, 320, 240)
    above = project_point(k, world_to_camera(pose, np.array([[0, 0, 1.0]]))[0])
    assert above[1] < 240


def test_look_at_degenerate():
    with pytest.raises(LookAtDegenerateError):
        look_at([1, 1, 1], [1, 1, 1])


def test_look_at_along_up_falls_back():
    pose = look_at([0, 0, 5], [0, 0, 0])
    np.testing.assert_allclose(pose.R.T @ pose.R, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(pose.R[:, 2], [0, 0, -1], atol=1e-12)


# ------------------------------------------------------------------ projection


def test_project_optical_axis(k):
    np.testing.assert_allclose(project_point(k, [0, 0, 5]), [320, 240])


def test_project_offset(k):
    np.testing.assert_allclose(project_point(k, [1, 0, 5]), [420, 240])


def test_project_distortion_polynomial():
    k = CameraIntrinsics(500, 500, 320, 240, k1=-0.1)
    # normalized (0.2, 0): factor 1 - 0.1 * 0.04 = 0.996
    np.testing.assert_allclose(project_point(k, [0.2, 0, 1.0]), [419.6, 240], atol=1e-9)


@pytest.mark.parametrize("z", [0.0, -1.0, 1e-10])
def test_project_rejects_nonpositive_depth(k, z):
    with pytest.raises(NonPositiveDepthError):
        project_point(k, [0.1, 0.1, z])


def test_project_points_matches_single(k_distorted, rng):
    X = rng.uniform([-1, -1, 2], [1, 1, 6], (20, 3))
    batch = project_points(k_distorted, X)
    for x, uv in zip(X, batch):
        np.testing.assert_allclose(project_point(k_distorted, x), uv)


@given(vec3, st.floats(0.1, 50))
def test_projection_scale_invariance_without_distortion(x, lam):
    k = CameraIntrinsics(500, 500, 320, 240)
    x = x.copy()
    x[2] = abs(x[2]) + 0.5
    np.testing.assert_allclose(project_point(k, lam * x), project_point(k, x), rtol=1e-9, atol=1e-9)


# ------------------------------------------------------------------ undistortion


def test_undistort_pinhole_inverse(k):
    np.testing.assert_allclose(undistort_point(k, [420, 140]), [0.2, -0.2])


def test_undistort_principal_point(k_distorted):
    np.testing.assert_allclose(undistort_point(k_distorted, [318, 242]), [0, 0], atol=1e-15)


def test_undistort_round_trip_in_frame(k_distorted, rng):
    uv = rng.uniform([0, 0], [639, 479], (1000, 2))
    for p in uv:
        xy = undistort_point(k_distorted, p)
        back = project_point(k_distorted, [xy[0], xy[1], 1.0])
        assert np.max(np.abs(back - p)) < 1e-6


@settings(max_examples=200)
@given(
    st.floats(-0.3, 0.3),
    st.floats(-0.1, 0.1),
    st.floats(0, 0.999).map(np.sqrt),
    st.floats(0, 2 * np.pi),
)
def test_undistort_round_trip_property(k1, k2, r, phi):
    k = CameraIntrinsics(500, 500, 320, 240, k1=k1, k2=k2)
    xy = r * np.array([np.cos(phi), np.sin(phi)])
    r2 = xy @ xy
    # only points where the distortion map is still monotonic are invertible
    if 1 + 3 * k1 * r2 + 5 * k2 * r2 * r2 <= 0.05:
        return
    uv = project_point(k, [xy[0], xy[1], 1.0])
    back = project_point(k, [*undistort_point(k, uv), 1.0])
    assert np.max(np.abs(back - uv)) < 1e-6


def test_undistort_iteration_cap():
    k = CameraIntrinsics(500, 500, 320, 240, k1=-0.3, k2=0.1)
    uv = [600.0, 450.0]
    undistort_point(k, uv)
    with pytest.raises(NoConvergenceError):
        undistort_point(k, uv, max_iter=1)


# ------------------------------------------------------------------ exp / log


def test_exp_zero_twist():
    assert_pose_close(exp_twist(np.zeros(6)), Pose.identity())


def test_exp_pure_translation():
    assert_pose_close(exp_twist(Twist([0, 0, 0], [1, 2, 3])), Pose.from_translation([1, 2, 3]))


def test_exp_pure_rotation():
    assert_pose_close(exp_twist([0, 0, np.pi / 2, 0, 0, 0]), Pose(rot_z(np.pi / 2), np.zeros(3)))


def test_exp_matches_matrix_exponential(rng):
    from scipy.linalg import expm

    xi = rng.normal(size=6)
    M = np.zeros((4, 4))
    w, u = xi[:3], xi[3:]
    M[:3, :3] = [[0, -w[2], w[1]], [w[2], 0, -w[0]], [-w[1], w[0], 0]]
    M[:3, 3] = u
    np.testing.assert_allclose(exp_twist(xi).matrix(), expm(M), atol=1e-12)


@settings(max_examples=300)
@given(st.floats(1e-6, np.pi - 1e-3), st.integers(0, 2**31 - 1))
def test_exp_log_inverse(theta, seed):
    rng = np.random.default_rng(seed)
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    xi = np.concatenate([theta * axis, rng.uniform(-3, 3, 3)])
    np.testing.assert_allclose(log_pose(exp_twist(xi)).vector(), xi, atol=1e-9)


@given(poses)
def test_log_exp_inverse(T):
    try:
        xi = log_pose(T)
    except LogNearPiError:
        return
    assert_pose_close(exp_twist(xi), T)


def test_log_near_pi():
    with pytest.raises(LogNearPiError):
        log_pose(Pose(rot_z(np.pi), np.zeros(3)))


def test_log_small_angle_is_accurate():
    xi = np.array([1e-7, -2e-7, 3e-8, 0.1, 0.2, 0.3])
    np.testing.assert_allclose(log_pose(exp_twist(xi)).vector(), xi, atol=1e-15)


# ------------------------------------------------------------------ pose_error


def test_pose_error_examples():
    T = random_pose(11)
    assert pose_error(T, T) == pytest.approx((0, 0), abs=1e-6)
    shifted = Pose(T.R, T.t + [0.01, 0, 0])
    dt, dr = pose_error(T, shifted)
    assert dt == pytest.approx(0.01)
    assert dr == pytest.approx(0, abs=1e-6)
    rotated = Pose(T.R @ rot_z(np.radians(2)), T.t)
    dt, dr = pose_error(T, rotated)
    assert dt == 0
    assert dr == pytest.approx(2.0, abs=1e-9)


# ------------------------------------------------------------------ serialization


def test_quaternion_canonical_sign():
    for seed in range(50):
        q = random_pose(seed).quaternion()
        assert q[0] >= 0
        assert np.linalg.norm(q) == pytest.approx(1.0)


def test_pose_json_round_trip():
    T = random_pose(5)
    back = pose_from_json(json.loads(json.dumps(pose_to_json(T))))
    assert_pose_close(back, T, tol=1e-12)


def test_intrinsics_file_round_trip(tmp_path, k_distorted):
    path = tmp_path / "k.json"
    save_intrinsics(k_distorted, path)
    assert set(json.loads(path.read_text())) == {"width", "height", "fx", "fy", "cx", "cy", "k1", "k2"}
    assert load_intrinsics(path) == k_distorted


def test_intrinsics_requires_all_keys():
    d = CameraIntrinsics(500, 500, 320, 240).to_dict()
    del d["k2"]
    with pytest.raises(KeyError):
        CameraIntrinsics.from_dict(d)


def test_intrinsics_validation():
    with pytest.raises(ValueError):
        CameraIntrinsics(-1, 500, 320, 240)
    with pytest.raises(ValueError):
        CameraIntrinsics(500, 500, 700, 240)
