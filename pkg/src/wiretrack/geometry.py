"""Rigid transforms, pinhole projection with radial distortion, and SE(3) exp/log.

Poses are camera-to-world: ``Pose.R @ x_cam + Pose.t`` gives world coordinates.
Camera frame is x right, y down, z along the optical axis.
Twists are 6-vectors ordered ``(rotation, translation)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import LogNearPiError, LookAtDegenerateError, NoConvergenceError, NonPositiveDepthError

DEPTH_EPS = 1e-9


def _frozen(a, shape) -> np.ndarray:
    arr = np.array(a, dtype=float).reshape(shape)
    arr.setflags(write=False)
    return arr


def skew(w) -> np.ndarray:
    return np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform with a 3x3 rotation and a translation in meters."""

    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "R", _frozen(self.R, (3, 3)))
        object.__setattr__(self, "t", _frozen(self.t, (3,)))

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    @classmethod
    def from_translation(cls, t) -> "Pose":
        return cls(np.eye(3), t)

    @classmethod
    def from_quaternion(cls, q, t) -> "Pose":
        """Build from a (w, x, y, z) quaternion; it is normalized first."""
        q = np.asarray(q, dtype=float)
        R = Rotation.from_quat([q[1], q[2], q[3], q[0]]).as_matrix()
        return cls(R, t)

    @classmethod
    def from_matrix(cls, T) -> "Pose":
        T = np.asarray(T, dtype=float)
        return cls(T[:3, :3], T[:3, 3])

    def quaternion(self) -> np.ndarray:
        """Unit quaternion (w, x, y, z) with w >= 0."""
        x, y, z, w = Rotation.from_matrix(self.R).as_quat()
        q = np.array([w, x, y, z])
        if q[0] < 0 or (q[0] == 0 and next(v for v in q[1:] if v != 0) < 0):
            q = -q
        return q

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.R
        T[:3, 3] = self.t
        return T

    def __matmul__(self, other: "Pose") -> "Pose":
        return compose(self, other)

    def __repr__(self):
        q = np.round(self.quaternion(), 6)
        return f"Pose(t={np.round(self.t, 6).tolist()}, q={q.tolist()})"


def rot_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])


def rot_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


def compose(a: Pose, b: Pose) -> Pose:
    """Return a∘b: apply ``b`` first, then ``a``."""
    return Pose(a.R @ b.R, a.R @ b.t + a.t)


def invert(t: Pose) -> Pose:
    Rt = t.R.T
    return Pose(Rt, -Rt @ t.t)


def transform_point(t: Pose, x) -> np.ndarray:
    return t.R @ np.asarray(x, dtype=float) + t.t


def transform_points(t: Pose, X) -> np.ndarray:
    """Vectorized :func:`transform_point` over an (N, 3) array."""
    return np.asarray(X, dtype=float) @ t.R.T + t.t


def world_to_camera(camera_pose: Pose, X) -> np.ndarray:
    """Express world points (N, 3) in the frame of a camera-to-world pose."""
    return (np.asarray(X, dtype=float) - camera_pose.t) @ camera_pose.R


def look_at(center, target, up=(0.0, 0.0, 1.0)) -> Pose:
    """Camera-to-world pose at ``center`` whose optical axis passes through ``target``.

    Roll-free with respect to ``up``. When the viewing direction is parallel to
    ``up`` the world y-axis is used instead.
    """
    center = np.asarray(center, dtype=float)
    z = np.asarray(target, dtype=float) - center
    n = np.linalg.norm(z)
    if n < 1e-12:
        raise LookAtDegenerateError("camera center coincides with the look-at point")
    z = z / n
    up = np.asarray(up, dtype=float)
    x = np.cross(z, up)
    if np.linalg.norm(x) < 1e-9:
        x = np.cross(z, np.array([0.0, -1.0, 0.0]))
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return Pose(np.column_stack([x, y, z]), center)


# --------------------------------------------------------------------- intrinsics


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    k1: float = 0.0
    k2: float = 0.0
    width: int = 640
    height: int = 480

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0, self.cx], [0, self.fy, self.cy], [0, 0, 1.0]])

    def to_dict(self) -> dict:
        return {
            "width": int(self.width),
            "height": int(self.height),
            "fx": float(self.fx),
            "fy": float(self.fy),
            "cx": float(self.cx),
            "cy": float(self.cy),
            "k1": float(self.k1),
            "k2": float(self.k2),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraIntrinsics":
        keys = ("width", "height", "fx", "fy", "cx", "cy", "k1", "k2")
        missing = [k for k in keys if k not in d]
        if missing:
            raise KeyError(f"intrinsics missing keys: {', '.join(missing)}")
        return cls(
            fx=float(d["fx"]),
            fy=float(d["fy"]),
            cx=float(d["cx"]),
            cy=float(d["cy"]),
            k1=float(d["k1"]),
            k2=float(d["k2"]),
            width=int(d["width"]),
            height=int(d["height"]),
        )


def load_intrinsics(path) -> CameraIntrinsics:
    return CameraIntrinsics.from_dict(json.loads(Path(path).read_text()))


def save_intrinsics(k: CameraIntrinsics, path) -> None:
    Path(path).write_text(json.dumps(k.to_dict(), indent=2) + "\n")


# --------------------------------------------------------------------- projection


def distort_normalized(k: CameraIntrinsics, xy) -> np.ndarray:
    xy = np.asarray(xy, dtype=float)
    r2 = np.sum(xy * xy, axis=-1, keepdims=True)
    return xy * (1.0 + k.k1 * r2 + k.k2 * r2 * r2)


def normalized_to_pixel(k: CameraIntrinsics, xy_d) -> np.ndarray:
    xy_d = np.asarray(xy_d, dtype=float)
    return np.stack([k.fx * xy_d[..., 0] + k.cx, k.fy * xy_d[..., 1] + k.cy], axis=-1)


def project_point(k: CameraIntrinsics, x_cam) -> np.ndarray:
    """Project one camera-frame point to pixels."""
    x_cam = np.asarray(x_cam, dtype=float)
    if x_cam[2] <= DEPTH_EPS:
        raise NonPositiveDepthError(f"point depth {x_cam[2]:g} m is not in front of the camera")
    return project_points(k, x_cam[None, :])[0]


def project_points(k: CameraIntrinsics, X_cam) -> np.ndarray:
    """Vectorized projection of camera-frame points (N, 3) to pixels (N, 2).

    Raises if any depth is at or below ``DEPTH_EPS``.
    """
    X_cam = np.asarray(X_cam, dtype=float)
    z = X_cam[:, 2]
    if np.any(z <= DEPTH_EPS):
        raise NonPositiveDepthError("point behind or on the camera plane")
    xy = X_cam[:, :2] / z[:, None]
    return normalized_to_pixel(k, distort_normalized(k, xy))


def undistort_point(k: CameraIntrinsics, uv, max_iter: int = 50, tol: float = 1e-14) -> np.ndarray:
    """Pixel to undistorted normalized coordinates by Newton iteration."""
    uv = np.asarray(uv, dtype=float)
    xd = np.array([(uv[0] - k.cx) / k.fx, (uv[1] - k.cy) / k.fy])
    if k.k1 == 0.0 and k.k2 == 0.0:
        return xd
    x = xd.copy()
    for _ in range(max_iter):
        r2 = x @ x
        f = 1.0 + k.k1 * r2 + k.k2 * r2 * r2
        df = k.k1 + 2.0 * k.k2 * r2
        res = x * f - xd
        if np.max(np.abs(res)) < tol:
            return x
        J = f * np.eye(2) + 2.0 * df * np.outer(x, x)
        try:
            step = np.linalg.solve(J, res)
        except np.linalg.LinAlgError:
            break
        x = x - step
        if not np.all(np.isfinite(x)):
            break
    r2 = x @ x
    res = x * (1.0 + k.k1 * r2 + k.k2 * r2 * r2) - xd
    if np.all(np.isfinite(res)) and np.max(np.abs(res)) < 1e-12:
        return x
    raise NoConvergenceError(f"undistortion did not converge for pixel {uv.tolist()}")


# --------------------------------------------------------------------- SE(3)


@dataclass(frozen=True, eq=False)
class Twist:
    rot: np.ndarray
    trans: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rot", _frozen(self.rot, (3,)))
        object.__setattr__(self, "trans", _frozen(self.trans, (3,)))

    @classmethod
    def from_vector(cls, xi) -> "Twist":
        xi = np.asarray(xi, dtype=float)
        return cls(xi[:3], xi[3:6])

    def vector(self) -> np.ndarray:
        return np.concatenate([self.rot, self.trans])


def _so3_coeffs(theta: float):
    # A = sin/θ, B = (1-cos)/θ², C = (θ-sin)/θ³
    if theta < 1e-4:
        t2 = theta * theta
        return 1 - t2 / 6 + t2 * t2 / 120, 0.5 - t2 / 24 + t2 * t2 / 720, 1 / 6 - t2 / 120 + t2 * t2 / 5040
    s, c = np.sin(theta), np.cos(theta)
    return s / theta, (1 - c) / theta**2, (theta - s) / theta**3


def so3_exp(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    theta = float(np.linalg.norm(w))
    A, B, _ = _so3_coeffs(theta)
    W = skew(w)
    return np.eye(3) + A * W + B * (W @ W)


def exp_twist(xi) -> Pose:
    """Exponential map from a twist (or 6-vector ``[rot, trans]``) to a Pose."""
    v = xi.vector() if isinstance(xi, Twist) else np.asarray(xi, dtype=float)
    w, u = v[:3], v[3:6]
    theta = float(np.linalg.norm(w))
    A, B, C = _so3_coeffs(theta)
    W = skew(w)
    W2 = W @ W
    R = np.eye(3) + A * W + B * W2
    V = np.eye(3) + B * W + C * W2
    return Pose(R, V @ u)


def rotation_angle(R) -> float:
    c = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    # atan2 form stays accurate near 0 and π
    s = 0.5 * np.linalg.norm(np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]]))
    return float(np.arctan2(s, c))


def log_pose(t: Pose) -> Twist:
    """Logarithm map; defined for rotation angles below π − 1e-6."""
    R = t.R
    theta = rotation_angle(R)
    if theta > np.pi - 1e-6:
        raise LogNearPiError(f"rotation angle {theta:.9f} rad is too close to pi")
    vee = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    A, B, _ = _so3_coeffs(theta)
    w = vee / (2.0 * A)
    W = skew(w)
    if theta < 1e-4:
        D = 1.0 / 12.0 + theta**2 / 720.0
    else:
        D = (1.0 - A / (2.0 * B)) / theta**2
    V_inv = np.eye(3) - 0.5 * W + D * (W @ W)
    return Twist(w, V_inv @ t.t)


def pose_error(a: Pose, b: Pose) -> tuple[float, float]:
    """(translation distance in m, relative rotation angle in degrees)."""
    dt = float(np.linalg.norm(a.t - b.t))
    ang = rotation_angle(a.R.T @ b.R)
    return dt, float(np.degrees(ang))


def pose_to_json(p: Pose) -> dict:
    return {"t": p.t.tolist(), "q": p.quaternion().tolist()}


def pose_from_json(d: dict) -> Pose:
    return Pose.from_quaternion(d["q"], d["t"])
