"""Planar checkerboard calibration from known inner-corner positions.

Closed-form start from per-view homographies, then a joint nonlinear
refinement of focal lengths, principal point, two radial terms and every
view's pose.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares
from scipy.spatial.transform import Rotation

from .errors import (
    DegenerateConfigurationError,
    DegenerateMotionError,
    InsufficientViewsError,
    NoConvergenceError,
)
from .geometry import CameraIntrinsics, Pose, invert, project_points, world_to_camera

MIN_VIEWS = 3
# relative singular-value floor for the conic system
CONIC_RANK_TOL = 1e-9


@dataclass(frozen=True)
class BoardSpec:
    """Checkerboard geometry, counted in inner corners."""

    nx: int
    ny: int
    square_m: float

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError("a board needs at least 2x2 inner corners")
        if self.square_m <= 0:
            raise ValueError("square size must be positive")

    @property
    def n_corners(self) -> int:
        return self.nx * self.ny

    def object_points(self) -> np.ndarray:
        """Corner positions on the board plane (z = 0), row-major: x fastest."""
        r, c = np.mgrid[0 : self.ny, 0 : self.nx]
        return np.column_stack([c.ravel(), r.ravel()]).astype(float) * self.square_m


@dataclass(frozen=True, eq=False)
class CalibrationView:
    corners: np.ndarray  # (nx*ny, 2) pixels, row-major board order

    def __post_init__(self):
        c = np.asarray(self.corners, dtype=float)
        if c.ndim != 2 or c.shape[1] != 2:
            raise ValueError("corners must be an (N, 2) array")
        object.__setattr__(self, "corners", c)


@dataclass
class CalibrationResult:
    intrinsics: CameraIntrinsics
    poses: list  # camera-to-board Pose per view
    rms: float
    initial_rms: float
    converged: bool

    def report(self) -> dict:
        return {
            "rms_px": self.rms,
            "initial_rms_px": self.initial_rms,
            "converged": self.converged,
            "views": [{"t": p.t.tolist(), "q": p.quaternion().tolist()} for p in self.poses],
        }


# --------------------------------------------------------------------- homography


def _normalizer(pts: np.ndarray) -> np.ndarray:
    c = pts.mean(axis=0)
    d = np.sqrt(np.mean(np.sum((pts - c) ** 2, axis=1)))
    if d <= 0:
        raise DegenerateConfigurationError("all points coincide")
    s = np.sqrt(2.0) / d
    return np.array([[s, 0, -s * c[0]], [0, s, -s * c[1]], [0, 0, 1.0]])


def _collinear(pts: np.ndarray) -> bool:
    sv = np.linalg.svd(pts - pts.mean(axis=0), compute_uv=False)
    return sv[-1] <= 1e-9 * max(sv[0], 1e-300)


def estimate_homography(board_pts, img_pts) -> np.ndarray:
    """Normalized DLT homography mapping board-plane points to pixels, h33 = 1."""
    src = np.asarray(board_pts, dtype=float)
    dst = np.asarray(img_pts, dtype=float)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 2:
        raise ValueError("point arrays must both be (N, 2)")
    if len(src) < 4:
        raise DegenerateConfigurationError(f"need at least 4 points, got {len(src)}")
    if _collinear(src) or _collinear(dst):
        raise DegenerateConfigurationError("points are collinear")
    Ts, Td = _normalizer(src), _normalizer(dst)
    s = src @ Ts[:2, :2].T + Ts[:2, 2]
    d = dst @ Td[:2, :2].T + Td[:2, 2]
    n = len(s)
    A = np.zeros((2 * n, 9))
    A[0::2, 0:2] = s
    A[0::2, 2] = 1.0
    A[0::2, 6:8] = -d[:, :1] * s
    A[0::2, 8] = -d[:, 0]
    A[1::2, 3:5] = s
    A[1::2, 5] = 1.0
    A[1::2, 6:8] = -d[:, 1:] * s
    A[1::2, 8] = -d[:, 1]
    _, sv, Vt = np.linalg.svd(A)
    if sv[-2] <= 1e-12 * sv[0]:
        raise DegenerateConfigurationError("homography is not determined by these points")
    Hn = Vt[-1].reshape(3, 3)
    H = np.linalg.solve(Td, Hn @ Ts)
    if abs(H[2, 2]) < 1e-15:
        raise DegenerateConfigurationError("homography has h33 = 0")
    return H / H[2, 2]


# --------------------------------------------------------------------- closed form


def _v(H: np.ndarray, i: int, j: int) -> np.ndarray:
    hi, hj = H[:, i], H[:, j]
    return np.array(
        [
            hi[0] * hj[0],
            hi[0] * hj[1] + hi[1] * hj[0],
            hi[1] * hj[1],
            hi[2] * hj[0] + hi[0] * hj[2],
            hi[2] * hj[1] + hi[1] * hj[2],
            hi[2] * hj[2],
        ]
    )


def _intrinsics_from_homographies(Hs: list[np.ndarray], width: int, height: int) -> np.ndarray:
    """Zero-skew camera matrix from the image of the absolute conic."""
    # condition the system by working in pixel coordinates scaled to ~1
    s = 1.0 / max(width, height)
    N = np.diag([s, s, 1.0])
    V = []
    for H in Hs:
        Hn = N @ H
        V.append(_v(Hn, 0, 1))
        V.append(_v(Hn, 0, 0) - _v(Hn, 1, 1))
    # zero skew: B12 = 0
    V.append(np.array([0.0, 1.0, 0.0, 0.0, 0.0, 0.0]))
    V = np.array(V)
    _, sv, Vt = np.linalg.svd(V)
    if sv[-2] <= CONIC_RANK_TOL * sv[0]:
        raise DegenerateMotionError("board orientations do not constrain the intrinsics")
    b = Vt[-1]
    B11, B12, B22, B13, B23, B33 = b
    den = B11 * B22 - B12 * B12
    if den == 0 or B11 == 0:
        raise DegenerateMotionError("conic system is singular")
    v0 = (B12 * B13 - B11 * B23) / den
    lam = B33 - (B13 * B13 + v0 * (B12 * B13 - B11 * B23)) / B11
    a2, b2 = lam / B11, lam * B11 / den
    if a2 <= 0 or b2 <= 0:
        raise DegenerateMotionError("conic is not positive definite; views too similar")
    alpha, beta = np.sqrt(a2), np.sqrt(b2)
    u0 = -B13 * alpha * alpha / lam
    K = np.array([[alpha, 0.0, u0], [0.0, beta, v0], [0.0, 0.0, 1.0]])
    return np.linalg.solve(N, K)


def _extrinsics_from_homography(K: np.ndarray, H: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Board-to-camera rotation and translation."""
    Kinv = np.linalg.inv(K)
    h1, h2, h3 = (Kinv @ H[:, i] for i in range(3))
    lam = 1.0 / np.linalg.norm(h1)
    if (lam * h3)[2] < 0:
        lam = -lam  # board in front of the camera
    r1, r2 = lam * h1, lam * h2
    R = np.column_stack([r1, r2, np.cross(r1, r2)])
    U, _, Vt = np.linalg.svd(R)
    R = U @ Vt
    if np.linalg.det(R) < 0:
        R = U @ np.diag([1.0, 1.0, -1.0]) @ Vt
    return R, lam * h3


# --------------------------------------------------------------------- refinement


def _project(params: np.ndarray, obj: np.ndarray, n_views: int) -> np.ndarray:
    fx, fy, cx, cy, k1, k2 = params[:6]
    ext = params[6:].reshape(n_views, 6)
    R = Rotation.from_rotvec(ext[:, :3]).as_matrix()
    P = np.concatenate([obj, np.zeros((len(obj), 1))], axis=1)
    Xc = np.einsum("vij,nj->vni", R, P) + ext[:, None, 3:]
    xy = Xc[..., :2] / Xc[..., 2:3]
    r2 = np.sum(xy * xy, axis=-1, keepdims=True)
    xy = xy * (1.0 + k1 * r2 + k2 * r2 * r2)
    return np.stack([fx * xy[..., 0] + cx, fy * xy[..., 1] + cy], axis=-1)


def _rms(params, obj, obs) -> float:
    d = _project(params, obj, len(obs)) - obs
    return float(np.sqrt(np.mean(np.sum(d * d, axis=-1))))


def calibrate_planar(
    board: BoardSpec, views: list[CalibrationView], width: int = 640, height: int = 480, max_nfev: int = 200
) -> CalibrationResult:
    """Intrinsics and per-view poses from checkerboard corners.

    Returned poses are camera-to-board, matching the package convention with
    the board plane as the world frame. ``rms`` is the root mean squared
    per-corner pixel distance at the refined solution.
    """
    if len(views) < MIN_VIEWS:
        raise InsufficientViewsError(f"need at least {MIN_VIEWS} views, got {len(views)}")
    obj = board.object_points()
    obs = []
    for i, v in enumerate(views):
        if len(v.corners) != board.n_corners:
            raise ValueError(f"view {i} has {len(v.corners)} corners, board has {board.n_corners}")
        obs.append(v.corners)
    obs = np.array(obs)

    Hs = [estimate_homography(obj, o) for o in obs]
    K = _intrinsics_from_homographies(Hs, width, height)
    ext = []
    for H in Hs:
        R, t = _extrinsics_from_homography(K, H)
        ext.append(np.concatenate([Rotation.from_matrix(R).as_rotvec(), t]))
    x0 = np.concatenate([[K[0, 0], K[1, 1], K[0, 2], K[1, 2], 0.0, 0.0], np.ravel(ext)])
    initial_rms = _rms(x0, obj, obs)

    def residuals(p):
        return (_project(p, obj, len(obs)) - obs).ravel()

    sol = least_squares(residuals, x0, method="lm", x_scale="jac", max_nfev=max_nfev * len(x0))
    if sol.status <= 0 or not np.all(np.isfinite(sol.x)):
        raise NoConvergenceError(f"refinement did not converge: {sol.message}")
    params = sol.x
    rms = _rms(params, obj, obs)
    if rms > initial_rms:
        params, rms = x0, initial_rms

    fx, fy, cx, cy, k1, k2 = (float(v) for v in params[:6])
    if fx <= 0 or fy <= 0 or not (0 <= cx < width and 0 <= cy < height):
        raise NoConvergenceError("refined intrinsics are outside the valid range")
    k = CameraIntrinsics(fx, fy, cx, cy, k1, k2, width, height)
    poses = []
    for e in params[6:].reshape(len(obs), 6):
        board_to_cam = Pose(Rotation.from_rotvec(e[:3]).as_matrix(), e[3:])
        poses.append(invert(board_to_cam))
    return CalibrationResult(k, poses, rms, initial_rms, bool(sol.success))


def reprojection_rms(k: CameraIntrinsics, board: BoardSpec, views: list[CalibrationView], poses: list[Pose]) -> float:
    """Root mean squared corner error of ``poses`` under ``k``."""
    obj = np.column_stack([board.object_points(), np.zeros(board.n_corners)])
    sq = []
    for v, p in zip(views, poses):
        d = project_points(k, world_to_camera(p, obj)) - v.corners
        sq.append(np.sum(d * d, axis=1))
    return float(np.sqrt(np.mean(np.concatenate(sq))))


# --------------------------------------------------------------------- io


def load_calibration_input(text: str) -> tuple[BoardSpec, list[CalibrationView]]:
    """Parse ``{"board": {"nx", "ny", "square_m"}, "views": [{"corners": [[u, v], ...]}]}``."""
    d = json.loads(text)
    b = d["board"]
    board = BoardSpec(int(b["nx"]), int(b["ny"]), float(b["square_m"]))
    views = [CalibrationView(np.asarray(v["corners"], dtype=float)) for v in d["views"]]
    return board, views


def synthetic_views(
    board: BoardSpec,
    k: CameraIntrinsics,
    n_views: int,
    rng: np.random.Generator,
    noise_px: float = 0.0,
    distance: tuple[float, float] = (0.2, 0.3),
    max_tilt_deg: float = 45.0,
) -> tuple[list[CalibrationView], list[Pose]]:
    """Seeded board views with every corner inside the image."""
    obj = np.column_stack([board.object_points(), np.zeros(board.n_corners)])
    center = obj.mean(axis=0)
    views, poses = [], []
    while len(views) < n_views:
        tilt = np.radians(rng.uniform(10.0, max_tilt_deg))
        axis_ang = rng.uniform(0, 2 * np.pi)
        axis = np.array([np.cos(axis_ang), np.sin(axis_ang), 0.0])
        R_bc = Rotation.from_rotvec(tilt * axis).as_matrix() @ Rotation.from_euler("z", rng.uniform(-0.3, 0.3)).as_matrix()
        z = rng.uniform(*distance)
        shift = rng.uniform(-0.05, 0.05, size=2)
        t = np.array([shift[0], shift[1], z]) - R_bc @ center
        pose = invert(Pose(R_bc, t))
        uv = project_points(k, world_to_camera(pose, obj))
        margin = 5.0
        if np.any(uv < margin) or np.any(uv[:, 0] > k.width - 1 - margin) or np.any(uv[:, 1] > k.height - 1 - margin):
            continue
        if noise_px > 0:
            uv = uv + rng.normal(0.0, noise_px, uv.shape)
        views.append(CalibrationView(uv))
        poses.append(pose)
    return views, poses
