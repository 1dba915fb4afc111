"""Draw a projected model profile over a frame for visual inspection."""

from __future__ import annotations

import numpy as np

from .errors import EmptyProfileError
from .geometry import CameraIntrinsics, Pose
from .wiremodel import Segment2D, WireframeModel, project_profile

TRACKING_COLOR = (0, 220, 0)
LOST_COLOR = (230, 0, 0)
DASH_ON, DASH_OFF = 6.0, 4.0


def _dashes(p0: np.ndarray, p1: np.ndarray):
    d = p1 - p0
    L = float(np.hypot(*d))
    if L == 0:
        return
    u = d / L
    s = 0.0
    while s < L:
        e = min(s + DASH_ON, L)
        yield p0 + s * u, p0 + e * u
        s = e + DASH_OFF


def _raster(p0: np.ndarray, p1: np.ndarray) -> np.ndarray:
    # nearest pixel of points every half pixel: each lit pixel is within 0.71 px of the segment
    n = int(np.ceil(np.hypot(*(p1 - p0)) * 2)) + 1
    s = np.linspace(0.0, 1.0, n)[:, None]
    return np.rint(p0 + s * (p1 - p0)).astype(int)


def draw_profile(gray: np.ndarray, profile: list[Segment2D], lost: bool = False) -> np.ndarray:
    """RGB copy of ``gray`` with the profile drawn solid green, or dashed red when lost."""
    g = np.asarray(gray, dtype=np.uint8)
    rgb = np.repeat(g[..., None], 3, axis=2)
    h, w = g.shape
    color = LOST_COLOR if lost else TRACKING_COLOR
    for seg in profile:
        pieces = _dashes(seg.p0, seg.p1) if lost else [(seg.p0, seg.p1)]
        for a, b in pieces:
            px = _raster(np.asarray(a, float), np.asarray(b, float))
            keep = (px[:, 0] >= 0) & (px[:, 0] < w) & (px[:, 1] >= 0) & (px[:, 1] < h)
            rgb[px[keep, 1], px[keep, 0]] = color
    return rgb


def overlay_frame(
    gray: np.ndarray, model: WireframeModel, k: CameraIntrinsics, pose: Pose, lost: bool = False
) -> tuple[np.ndarray, list[Segment2D]]:
    """Returns the annotated image and the profile that was drawn (empty if out of view)."""
    try:
        profile = project_profile(model, pose, k)
    except EmptyProfileError:
        profile = []
    return draw_profile(gray, profile, lost), profile
