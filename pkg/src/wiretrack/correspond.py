"""Control points on the projected profile and 1D normal search against detected segments."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .wiremodel import Segment2D

log = logging.getLogger(__name__)

FOOT_SLACK = 1.0
MIN_SEGMENT_LENGTH = 1e-6


@dataclass(frozen=True, eq=False)
class ControlPoint:
    x3d: np.ndarray
    uv: np.ndarray
    normal: np.ndarray
    edge: int

    @property
    def orientation(self) -> float:
        """Orientation of the projected edge in [0, π)."""
        return float(np.arctan2(self.normal[0], -self.normal[1])) % np.pi


@dataclass(frozen=True, eq=False)
class MatchHypothesis:
    control_point: ControlPoint
    uv_matched: np.ndarray
    signed_distance: float
    segment_index: int


def sample_control_points(
    profile: list[Segment2D], spacing: float = 10.0, end_inset: float = 0.0
) -> list[ControlPoint]:
    """Evenly spaced points on each projected segment, endpoints included.

    A segment of length L gets ``max(2, floor(L / spacing) + 1)`` points, so the
    count grows with the projected size of the model. When the segment carries
    endpoint depths, the image parameter s maps to the 3D parameter
    ``s z0 / (s z0 + (1 - s) z1)``, so each 3D point projects back onto its
    image point; without depths the 3D endpoints are interpolated with s.

    ``end_inset`` > 0 drops points closer than that many pixels to either end
    of their segment. Model corners are where detected segments are least
    reliable, and a corner point can match the neighbouring edge's detection.
    """
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    if end_inset < 0:
        raise ValueError("end_inset must be non-negative")
    out = []
    skipped = 0
    for seg in profile:
        if seg.X0 is None or seg.X1 is None:
            raise ValueError("profile segments must carry 3D endpoints")
        L = seg.length
        if L < MIN_SEGMENT_LENGTH:
            skipped += 1
            continue
        n = max(2, int(np.floor(L / spacing)) + 1)
        d = (seg.p1 - seg.p0) / L
        normal = np.array([-d[1], d[0]])
        for s in np.linspace(0.0, 1.0, n):
            if end_inset > 0 and min(s, 1.0 - s) * L < end_inset:
                continue
            lam = _depth_corrected(s, seg.z0, seg.z1)
            out.append(
                ControlPoint(
                    x3d=seg.X0 + lam * (seg.X1 - seg.X0),
                    uv=seg.p0 + s * (seg.p1 - seg.p0),
                    normal=normal,
                    edge=-1 if seg.edge is None else seg.edge,
                )
            )
    if skipped:
        log.warning("skipped %d degenerate profile segments", skipped)
    return out


def _depth_corrected(s: float, z0: float | None, z1: float | None) -> float:
    """3D interpolation parameter whose perspective image sits at image parameter ``s``."""
    if z0 is None or z1 is None:
        return float(s)
    den = s * z0 + (1.0 - s) * z1
    return float(s * z0 / den) if den > 0 else float(s)


POLARITIES = ("dark", "bright", "any")


def merge_line_pairs(
    segments: list[Segment2D],
    max_gap: float = 4.0,
    angle_tol: float = 10.0,
    min_overlap: float = 0.5,
    polarity: str = "dark",
) -> list[Segment2D]:
    """Collapse twin detections on either side of a thin line into its centerline.

    A thin dark (or bright) line gives two segments of opposite polarity, one
    per flank. Pairs that are anti-parallel within ``angle_tol`` degrees, no
    more than ``max_gap`` px apart and overlapping by at least ``min_overlap``
    of the shorter one are replaced by the midline spanning their union.
    Segments are oriented with the darker side on their left, so
    ``polarity="dark"`` only pairs flanks that face each other across a dark
    band; the facing flanks of two neighbouring dark lines (a bright gap) are
    left alone. ``"bright"`` is the reverse and ``"any"`` ignores polarity.
    Unpaired segments pass through unchanged; merged ones come first in input
    order of their first member.
    """
    if polarity not in POLARITIES:
        raise ValueError(f"polarity must be one of {POLARITIES}")
    n = len(segments)
    if n < 2:
        return list(segments)
    P0, E, L = _segment_arrays(segments)
    Nrm = np.column_stack([-E[:, 1], E[:, 0]])
    mid = P0 + 0.5 * L[:, None] * E
    anti = (E @ E.T) <= -np.cos(np.radians(angle_tol))
    # separation of j's midpoint from i's line, both ways
    side = np.einsum("ik,ijk->ij", Nrm, mid[None, :, :] - P0[:, None, :])
    sep = np.maximum(np.abs(side), np.abs(side).T)
    # overlap along i's axis
    t0 = np.einsum("ik,ijk->ij", E, P0[None, :, :] - P0[:, None, :])
    t1 = t0 + L[None, :] * (E @ E.T)
    lo = np.maximum(0.0, np.minimum(t0, t1))
    hi = np.minimum(L[:, None], np.maximum(t0, t1))
    overlap = (hi - lo) / np.minimum(L[:, None], L[None, :])
    ok = anti & (sep <= max_gap) & (overlap >= min_overlap)
    if polarity == "dark":
        ok &= (side > 0) & (side.T > 0)
    elif polarity == "bright":
        ok &= (side < 0) & (side.T < 0)
    np.fill_diagonal(ok, False)
    ii, jj = np.nonzero(np.triu(ok))
    order = np.lexsort((jj, ii, sep[ii, jj]))
    taken = np.zeros(n, dtype=bool)
    partner = {}
    for idx in order:
        i, j = int(ii[idx]), int(jj[idx])
        if taken[i] or taken[j]:
            continue
        taken[i] = taken[j] = True
        partner[i] = j
    out = []
    for i in range(n):
        if i in partner:
            j = partner[i]
            off = 0.5 * float(Nrm[i] @ (mid[j] - P0[i]))
            ts = [0.0, float(L[i]), float(t0[i, j]), float(t1[i, j])]
            base = P0[i] + off * Nrm[i]
            out.append(Segment2D(base + min(ts) * E[i], base + max(ts) * E[i]))
        elif not taken[i]:
            out.append(segments[i])
    return out


def _segment_arrays(segments: list[Segment2D]):
    if not segments:
        return np.zeros((0, 2)), np.zeros((0, 2)), np.zeros(0)
    P0 = np.array([s.p0 for s in segments])
    D = np.array([s.p1 for s in segments]) - P0
    L = np.linalg.norm(D, axis=1)
    E = D / np.where(L > 0, L, 1.0)[:, None]
    return P0, E, L


def match_control_points(
    cps: list[ControlPoint],
    segments: list[Segment2D],
    radius: float = 20.0,
    orient_tol: float = 22.5,
    k_max: int = 3,
) -> list[list[MatchHypothesis]]:
    """Run the normal search for every control point at once.

    The search line through a control point follows its edge normal; a
    detected segment yields a hypothesis where it crosses that line, provided
    the orientations agree within ``orient_tol`` degrees, the crossing lies
    within the segment (plus 1 px slack) and no farther than ``radius``.
    Each list holds at most ``k_max`` hypotheses, nearest first.
    """
    if radius <= 0 or k_max < 1:
        raise ValueError("radius must be positive and k_max at least 1")
    if not cps:
        return []
    P0, E, L = _segment_arrays(segments)
    if len(P0) == 0:
        return [[] for _ in cps]
    UV = np.array([c.uv for c in cps])
    N = np.array([c.normal for c in cps])
    T = np.column_stack([-N[:, 1], N[:, 0]])  # edge direction

    M = np.column_stack([-E[:, 1], E[:, 0]])  # segment normals
    cos_diff = np.abs(T @ E.T)  # |cos| of the orientation difference, mod π
    ok = cos_diff >= np.cos(np.radians(orient_tol)) - 1e-12
    ok &= (L > MIN_SEGMENT_LENGTH)[None, :]

    denom = N @ M.T  # (n_cp, n_seg)
    num = np.einsum("jk,jk->j", M, P0)[None, :] - UV @ M.T
    with np.errstate(divide="ignore", invalid="ignore"):
        s = num / denom
    ok &= np.abs(denom) > 1e-12
    ok &= np.abs(s) <= radius
    foot = UV[:, None, :] + s[:, :, None] * N[:, None, :]
    t = np.einsum("ijk,jk->ij", foot - P0[None, :, :], E)
    ok &= (t >= -FOOT_SLACK) & (t <= L[None, :] + FOOT_SLACK)

    out = []
    for i, cp in enumerate(cps):
        js = np.flatnonzero(ok[i])
        if len(js) == 0:
            out.append([])
            continue
        js = js[np.argsort(np.abs(s[i, js]), kind="stable")][:k_max]
        out.append(
            [
                MatchHypothesis(cp, cp.uv + s[i, j] * cp.normal, float(s[i, j]), int(j))
                for j in js
            ]
        )
    return out


def search_candidates(
    cp: ControlPoint,
    segments: list[Segment2D],
    radius: float = 20.0,
    orient_tol: float = 22.5,
    k_max: int = 3,
) -> list[MatchHypothesis]:
    return match_control_points([cp], segments, radius, orient_tol, k_max)[0]
