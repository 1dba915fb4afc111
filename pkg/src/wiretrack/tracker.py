"""Per-frame tracking loop: project, detect, match, robustly re-estimate."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .correspond import match_control_points, merge_line_pairs, sample_control_points
from .errors import (
    DegenerateConfigurationError,
    InitializationFailedError,
    InsufficientPointsError,
    WiretrackError,
)
from .estimate import RansacConfig, ransac_pose, solve_pnp
from .geometry import CameraIntrinsics, Pose, compose, invert, look_at, pose_error, rot_z
from .lsd import LsdParams, detect_segments
from .wiremodel import WireframeModel, project_profile

log = logging.getLogger(__name__)

INIT_STARTS = 32
INIT_MAX_RMS = 5.0


class Status(str, enum.Enum):
    TRACKING = "tracking"
    LOST = "lost"


@dataclass(frozen=True)
class TrackerConfig:
    lsd: LsdParams = field(default_factory=LsdParams)
    spacing: float = 10.0
    search_radius: float = 20.0
    orient_tol: float = 22.5
    k_max: int = 3
    ransac: RansacConfig = field(default_factory=RansacConfig)
    cam_to_body: Pose = field(default_factory=Pose.identity)
    # centerline merge of twin flank detections; max_gap <= 0 disables
    pair_gap: float = 4.0
    # control points this close (px) to a profile segment end are skipped
    end_inset: float = 0.0
    # re-project / re-match / re-estimate rounds per frame
    passes: int = 3
    pass_tol_m: float = 1e-4
    pass_tol_deg: float = 0.01

    def __post_init__(self):
        if self.spacing <= 0 or self.search_radius <= 0:
            raise ValueError("spacing and search_radius must be positive")
        if self.k_max < 1 or self.passes < 1:
            raise ValueError("k_max and passes must be at least 1")


@dataclass(frozen=True, eq=False)
class TrackerState:
    frame_index: int
    camera_pose: Pose
    status: Status = Status.TRACKING
    last_inlier_fraction: float = 1.0
    last_rms: float = 0.0
    reason: str = ""
    n_segments: int = 0
    n_control_points: int = 0


def body_pose(camera_pose: Pose, cam_to_body: Pose) -> Pose:
    return compose(camera_pose, invert(cam_to_body))


# --------------------------------------------------------------------- initialization


def init_pose_from_points(
    corrs, k: CameraIntrinsics, n_starts: int = INIT_STARTS, seed: int = 0
) -> Pose:
    """Camera-to-world pose from a handful of clicked 2D-3D correspondences.

    Runs the PnP solver from ``n_starts`` seeded viewpoints around the model
    and keeps the lowest-rms converged solution.
    """
    if len(corrs) < 4:
        raise InsufficientPointsError(f"need at least 4 correspondences, got {len(corrs)}")
    X = np.array([c[0] for c in corrs], dtype=float)
    uv = np.array([c[1] for c in corrs], dtype=float)
    centroid = X.mean(axis=0)
    extent = float(np.max(np.linalg.norm(X - centroid, axis=1)))
    if extent <= 0:
        raise InitializationFailedError("all 3D points coincide")
    extent_px = float(np.max(np.linalg.norm(uv - uv.mean(axis=0), axis=1)))
    dist = k.fx * extent / max(extent_px, 1e-6)
    dist = max(dist, 2.0 * extent)

    rng = np.random.default_rng(seed)
    best = None
    degenerate = 0
    for _ in range(n_starts):
        v = rng.normal(size=3)
        v /= np.linalg.norm(v)
        roll = rng.uniform(-np.pi, np.pi)
        try:
            start = look_at(centroid + dist * v, centroid)
        except WiretrackError:
            continue
        start = Pose(start.R @ rot_z(roll), start.t)
        try:
            res = solve_pnp(corrs, k, start, max_iter=100)
        except DegenerateConfigurationError:
            degenerate += 1
            continue
        except WiretrackError:
            continue
        if res.converged and res.rms_reprojection < INIT_MAX_RMS:
            if best is None or res.rms_reprojection < best.rms_reprojection:
                best = res
    if best is None:
        if degenerate == n_starts:
            raise DegenerateConfigurationError("correspondences do not constrain the pose")
        raise InitializationFailedError(f"no start converged below {INIT_MAX_RMS} px rms")
    return best.pose


# --------------------------------------------------------------------- tracking


def _lost(state: TrackerState, frame_index: int, reason: str, **kw) -> TrackerState:
    return replace(
        state,
        frame_index=frame_index,
        status=Status.LOST,
        last_inlier_fraction=0.0,
        reason=reason,
        **kw,
    )


def track_frame(
    state: TrackerState,
    img,
    model: WireframeModel,
    k: CameraIntrinsics,
    cfg: TrackerConfig = TrackerConfig(),
    frame_index: int | None = None,
) -> TrackerState:
    """Advance the tracker by one frame.

    Failures never raise; they produce a Lost state that keeps the previous
    pose. A Lost state stays Lost until a new state is initialized.
    """
    fi = state.frame_index + 1 if frame_index is None else frame_index
    if state.status is Status.LOST:
        return replace(state, frame_index=fi)

    try:
        segments = detect_segments(img, cfg.lsd)
    except WiretrackError as exc:
        return _lost(state, fi, type(exc).__name__)
    if cfg.pair_gap > 0:
        segments = merge_line_pairs(segments, cfg.pair_gap)
    ransac_cfg = replace(cfg.ransac, rng_seed=int(cfg.ransac.rng_seed) ^ int(fi))

    pose = state.camera_pose
    n_cp = 0
    frac = rms = 0.0
    for _ in range(cfg.passes):
        try:
            profile = project_profile(model, pose, k)
            cps = sample_control_points(profile, cfg.spacing, cfg.end_inset)
            n_cp = len(cps)
            matches = match_control_points(cps, segments, cfg.search_radius, cfg.orient_tol, cfg.k_max)
            result, _, diag = ransac_pose(matches, k, pose, ransac_cfg, return_diagnostics=True)
        except WiretrackError as exc:
            return _lost(state, fi, type(exc).__name__, n_segments=len(segments), n_control_points=n_cp)
        dt, dr = pose_error(pose, result.pose)
        pose = result.pose
        frac = diag.inlier_fraction
        rms = result.rms_reprojection
        if dt < cfg.pass_tol_m and dr < cfg.pass_tol_deg:
            break

    return TrackerState(
        frame_index=fi,
        camera_pose=pose,
        status=Status.TRACKING,
        last_inlier_fraction=frac,
        last_rms=rms,
        n_segments=len(segments),
        n_control_points=n_cp,
    )


class Tracker:
    """Convenience wrapper that owns the loop-carried state for one sequence."""

    def __init__(self, model: WireframeModel, k: CameraIntrinsics, cfg: TrackerConfig = TrackerConfig()):
        self.model = model
        self.k = k
        self.cfg = cfg
        self.state: TrackerState | None = None

    def initialize(self, pose: Pose | None = None, corrs=None, frame_index: int = -1) -> TrackerState:
        if pose is None:
            if corrs is None:
                raise ValueError("initialize needs a pose or correspondences")
            pose = init_pose_from_points(corrs, self.k)
        self.state = TrackerState(frame_index=frame_index, camera_pose=pose)
        return self.state

    def step(self, img) -> TrackerState:
        if self.state is None:
            raise RuntimeError("tracker is not initialized")
        self.state = track_frame(self.state, img, self.model, self.k, self.cfg)
        return self.state

    def body_pose(self) -> Pose:
        return body_pose(self.state.camera_pose, self.cfg.cam_to_body)
