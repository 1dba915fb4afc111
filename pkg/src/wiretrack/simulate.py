"""Synthetic ground truth: orbiting camera, edge renderer, trajectory metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter
from scipy.spatial.transform import Rotation

from .errors import EmptyProfileError, LengthMismatchError
from .geometry import CameraIntrinsics, Pose, look_at, pose_error, project_points, world_to_camera
from .wiremodel import Segment2D, WireframeModel, face_visibility, project_profile

BACKGROUND = 128.0
LINE_WIDTH = 1.5


@dataclass(frozen=True)
class OrbitSpec:
    radius: float = 3.0
    height: float = 1.0
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    revolutions: float = 1.0
    n_frames: int = 200
    look_at: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("orbit radius must be positive")
        if self.n_frames < 1:
            raise ValueError("n_frames must be at least 1")


@dataclass(frozen=True)
class RenderSpec:
    edge_contrast: float = 100.0
    blur_sigma: float = 1.0
    noise_sigma: float = 0.0
    n_clutter: int = 0
    dropout_fraction: float = 0.0
    rng_seed: int = 0
    clutter_length: tuple[float, float] = (20.0, 120.0)

    def __post_init__(self):
        if not 0 <= self.dropout_fraction < 1:
            raise ValueError("dropout_fraction must be in [0, 1)")
        if self.noise_sigma < 0 or self.blur_sigma < 0:
            raise ValueError("noise_sigma and blur_sigma must be non-negative")
        if self.n_clutter < 0:
            raise ValueError("n_clutter must be non-negative")


# camera noise, clutter and dropout of the reference tracking scene
ACCEPTANCE_RENDER = RenderSpec(noise_sigma=0.5, n_clutter=20, dropout_fraction=0.1)


def make_orbit(spec: OrbitSpec) -> list[Pose]:
    """Camera poses on a horizontal circle, each looking at ``spec.look_at``."""
    c = np.asarray(spec.center, dtype=float)
    poses = []
    for i in range(spec.n_frames):
        phi = 2.0 * np.pi * spec.revolutions * i / spec.n_frames
        center = c + np.array([spec.radius * np.cos(phi), spec.radius * np.sin(phi), spec.height])
        poses.append(look_at(center, spec.look_at))
    return poses


def frame_rng(seed: int, frame_index: int) -> np.random.Generator:
    return np.random.default_rng(int(seed) ^ int(frame_index))


# --------------------------------------------------------------------- rendering


def _draw_segment(darkness: np.ndarray, p0, p1, width: float = LINE_WIDTH) -> None:
    """Max-accumulate anti-aliased coverage of a thick segment into ``darkness``."""
    rows, cols = darkness.shape
    pad = width / 2.0 + 1.0
    x0 = max(int(np.floor(min(p0[0], p1[0]) - pad)), 0)
    x1 = min(int(np.ceil(max(p0[0], p1[0]) + pad)), cols - 1)
    y0 = max(int(np.floor(min(p0[1], p1[1]) - pad)), 0)
    y1 = min(int(np.ceil(max(p0[1], p1[1]) + pad)), rows - 1)
    if x1 < x0 or y1 < y0:
        return
    ys, xs = np.mgrid[y0 : y1 + 1, x0 : x1 + 1]
    d = np.asarray(p1, float) - np.asarray(p0, float)
    L2 = float(d @ d)
    px, py = xs - p0[0], ys - p0[1]
    t = np.clip((px * d[0] + py * d[1]) / L2, 0.0, 1.0) if L2 > 0 else np.zeros_like(px)
    dist = np.hypot(px - t * d[0], py - t * d[1])
    cov = np.clip(width / 2.0 + 0.5 - dist, 0.0, 1.0)
    np.maximum(darkness[y0 : y1 + 1, x0 : x1 + 1], cov, out=darkness[y0 : y1 + 1, x0 : x1 + 1])


def clutter_segments(k: CameraIntrinsics, spec: RenderSpec, rng: np.random.Generator) -> list[Segment2D]:
    """Exactly ``spec.n_clutter`` random distractor segments inside the image."""
    lo, hi = spec.clutter_length
    out = []
    for _ in range(spec.n_clutter):
        c = rng.uniform([0, 0], [k.width - 1, k.height - 1])
        ang = rng.uniform(0, np.pi)
        half = 0.5 * rng.uniform(lo, hi) * np.array([np.cos(ang), np.sin(ang)])
        p0 = np.clip(c - half, 0, [k.width - 1, k.height - 1])
        p1 = np.clip(c + half, 0, [k.width - 1, k.height - 1])
        out.append(Segment2D(p0, p1))
    return out


def _apply_dropout(seg: Segment2D, fraction: float, rng: np.random.Generator) -> list[tuple[np.ndarray, np.ndarray]]:
    if fraction <= 0:
        return [(seg.p0, seg.p1)]
    start = rng.uniform(0.0, 1.0 - fraction)
    a = seg.p0 + start * (seg.p1 - seg.p0)
    b = seg.p0 + (start + fraction) * (seg.p1 - seg.p0)
    return [(seg.p0, a), (b, seg.p1)]


def render_frame(model: WireframeModel, pose: Pose, k: CameraIntrinsics, spec: RenderSpec, frame_index: int = 0):
    """Render visible model edges as dark lines on mid-gray.

    Returns ``(uint8 image, ground-truth profile)``; the profile is exactly
    :func:`project_profile` at ``pose``. The frame's random stream is seeded
    with ``spec.rng_seed ^ frame_index``.
    """
    truth = project_profile(model, pose, k)
    rng = frame_rng(spec.rng_seed, frame_index)
    darkness = np.zeros((k.height, k.width))
    for seg in truth:
        for a, b in _apply_dropout(seg, spec.dropout_fraction, rng):
            _draw_segment(darkness, a, b)
    for seg in clutter_segments(k, spec, rng):
        _draw_segment(darkness, seg.p0, seg.p1)
    img = BACKGROUND - spec.edge_contrast * darkness
    if spec.blur_sigma > 0:
        img = gaussian_filter(img, spec.blur_sigma, mode="nearest")
    if spec.noise_sigma > 0:
        img = img + rng.normal(0.0, spec.noise_sigma, img.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8), truth


def visible_vertex_correspondences(model: WireframeModel, pose: Pose, k: CameraIntrinsics, n: int = 5):
    """Exact (x3d, uv) pairs for up to ``n`` in-frame vertices of visible faces."""
    vis = face_visibility(model, pose)
    idx = sorted({v for f, ok in zip(model.faces, vis) if ok for v in f})
    X = model.vertices[idx]
    Xc = world_to_camera(pose, X)
    out = []
    for x, xc in zip(X, Xc):
        if xc[2] <= 0:
            continue
        uv = project_points(k, xc[None])[0]
        if 0 <= uv[0] <= k.width - 1 and 0 <= uv[1] <= k.height - 1:
            out.append((x.copy(), uv))
        if len(out) == n:
            break
    if len(out) < 4:
        raise EmptyProfileError("fewer than 4 model vertices are visible")
    return out


# --------------------------------------------------------------------- evaluation


@dataclass
class TrajectoryMetrics:
    translation_rmse: float
    translation_max: float
    rotation_rmse_deg: float
    rotation_max_deg: float
    tracked_fraction: float
    n_frames: int
    n_tracked: int
    units: str = "m"
    per_frame: list = field(default_factory=list, repr=False)

    def scaled(self, factor: float, units: str) -> "TrajectoryMetrics":
        return TrajectoryMetrics(
            self.translation_rmse * factor,
            self.translation_max * factor,
            self.rotation_rmse_deg,
            self.rotation_max_deg,
            self.tracked_fraction,
            self.n_frames,
            self.n_tracked,
            units,
            [(f, e * factor, r) for f, e, r in self.per_frame],
        )

    def to_dict(self) -> dict:
        return {
            "units": self.units,
            "translation_rmse": self.translation_rmse,
            "translation_max": self.translation_max,
            "rotation_rmse_deg": self.rotation_rmse_deg,
            "rotation_max_deg": self.rotation_max_deg,
            "tracked_fraction": self.tracked_fraction,
            "n_frames": self.n_frames,
            "n_tracked": self.n_tracked,
        }


UNIT_SCALE = {"m": 1.0, "cm": 100.0, "mm": 1000.0}


def evaluate_trajectory(estimated, truth: list[Pose], units: str = "m") -> TrajectoryMetrics:
    """Grade ``(frame, pose, status)`` triples against ground-truth poses.

    Only frames whose status is tracking enter the error statistics. Errors
    are computed in meters and scaled afterwards, so ``cm`` values are the
    meter values times 100.
    """
    if len(estimated) != len(truth):
        raise LengthMismatchError(f"{len(estimated)} estimated vs {len(truth)} truth poses")
    if units not in UNIT_SCALE:
        raise ValueError(f"unknown units {units!r}")
    per_frame = []
    for (frame, pose, status), gt in zip(estimated, truth):
        if str(status).lower() != "tracking":
            continue
        dt, dr = pose_error(pose, gt)
        per_frame.append((frame, dt, dr))
    n = len(truth)
    if per_frame:
        te = np.array([p[1] for p in per_frame])
        re = np.array([p[2] for p in per_frame])
        m = TrajectoryMetrics(
            float(np.sqrt(np.mean(te**2))),
            float(te.max()),
            float(np.sqrt(np.mean(re**2))),
            float(re.max()),
            len(per_frame) / n if n else 0.0,
            n,
            len(per_frame),
            "m",
            per_frame,
        )
    else:
        nan = float("nan")
        m = TrajectoryMetrics(nan, nan, nan, nan, 0.0, n, 0, "m", [])
    return m if units == "m" else m.scaled(UNIT_SCALE[units], units)


def relative_trajectory(poses: list[Pose], scale: float = 1.0) -> np.ndarray:
    """Per-frame motion relative to frame 0: translation (scaled) and xyz Euler angles in degrees."""
    if not poses:
        return np.zeros((0, 6))
    p0 = poses[0]
    rows = []
    for p in poses:
        dt = (p.t - p0.t) * scale
        ang = Rotation.from_matrix(p0.R.T @ p.R).as_euler("xyz", degrees=True)
        rows.append(np.concatenate([dt, ang]))
    return np.array(rows)
