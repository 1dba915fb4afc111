"""Wireframe models, back-face visibility and projection of the visible profile."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .errors import (
    DegenerateFaceError,
    EmptyProfileError,
    IndexOutOfRangeError,
    ModelParseError,
    NonPlanarFaceError,
)
from .geometry import CameraIntrinsics, Pose, project_points, world_to_camera

PLANARITY_TOL = 1e-6
MIN_FACE_AREA = 1e-12
VISIBILITY_TIE = 1e-9
NEAR_PLANE = 1e-3


@dataclass(frozen=True)
class Segment2D:
    """Image line segment; model-projected ones also carry their 3D endpoints."""

    p0: np.ndarray
    p1: np.ndarray
    edge: int | None = None
    X0: np.ndarray | None = None
    X1: np.ndarray | None = None
    # camera-frame depths of X0 and X1 at the projecting pose
    z0: float | None = None
    z1: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "p0", np.asarray(self.p0, dtype=float))
        object.__setattr__(self, "p1", np.asarray(self.p1, dtype=float))

    @property
    def length(self) -> float:
        return float(np.hypot(*(self.p1 - self.p0)))

    @property
    def orientation(self) -> float:
        """Angle of ``p1 - p0`` folded into [0, π)."""
        d = self.p1 - self.p0
        a = float(np.arctan2(d[1], d[0])) % np.pi
        return 0.0 if a >= np.pi else a

    @property
    def direction(self) -> np.ndarray:
        d = self.p1 - self.p0
        return d / np.linalg.norm(d)


@dataclass(frozen=True, eq=False)
class WireframeModel:
    vertices: np.ndarray
    faces: tuple[tuple[int, ...], ...]
    edges: tuple[tuple[int, int], ...]
    edge_faces: tuple[tuple[int, ...], ...]
    normals: np.ndarray
    centroids: np.ndarray

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def edge_endpoints(self) -> np.ndarray:
        """(E, 2, 3) array of edge endpoint coordinates."""
        idx = np.array(self.edges, dtype=int).reshape(-1, 2)
        return self.vertices[idx]


def _newell_normal(P: np.ndarray) -> np.ndarray:
    n = np.zeros(3)
    for i in range(len(P)):
        a, b = P[i], P[(i + 1) % len(P)]
        n += np.cross(a, b)
    return n  # norm is twice the polygon area


def build_model(vertices, faces) -> WireframeModel:
    """Validate a vertex/face description and derive normals and unique edges."""
    try:
        V = np.asarray(vertices, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ModelParseError(f"vertices are not numeric: {exc}") from None
    if V.ndim != 2 or V.shape[1] != 3:
        raise ModelParseError("vertices must be a list of [x, y, z] triples")
    if not faces:
        raise ModelParseError("model has no faces")

    face_list, normals, centroids = [], [], []
    edge_map: dict[tuple[int, int], list[int]] = {}
    for fi, face in enumerate(faces):
        try:
            f = tuple(int(i) for i in face)
        except (TypeError, ValueError):
            raise ModelParseError(f"face {fi} indices are not integers") from None
        if len(f) < 3:
            raise ModelParseError(f"face {fi} has fewer than 3 vertices")
        bad = [i for i in f if i < 0 or i >= len(V)]
        if bad:
            raise IndexOutOfRangeError(f"face {fi} references vertex {bad[0]} of a {len(V)}-vertex model")
        P = V[list(f)]
        n = _newell_normal(P)
        area = 0.5 * np.linalg.norm(n)
        if area < MIN_FACE_AREA:
            raise DegenerateFaceError(f"face {fi} has area {area:g} m^2")
        n = n / np.linalg.norm(n)
        c = P.mean(axis=0)
        if np.max(np.abs((P - c) @ n)) > PLANARITY_TOL:
            raise NonPlanarFaceError(f"face {fi} is not planar")
        face_list.append(f)
        normals.append(n)
        centroids.append(c)
        for a, b in zip(f, f[1:] + f[:1]):
            key = (min(a, b), max(a, b))
            edge_map.setdefault(key, []).append(fi)

    for key, adj in edge_map.items():
        if len(adj) > 2:
            raise ModelParseError(f"edge {key} is shared by {len(adj)} faces")

    return WireframeModel(
        vertices=V.copy(),
        faces=tuple(face_list),
        edges=tuple(edge_map.keys()),
        edge_faces=tuple(tuple(v) for v in edge_map.values()),
        normals=np.array(normals),
        centroids=np.array(centroids),
    )


def load_model(text: str) -> WireframeModel:
    """Parse the JSON model format ``{"unit": "m", "vertices": [...], "faces": [...]}``."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelParseError(f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict) or "vertices" not in doc or "faces" not in doc:
        raise ModelParseError("model must be an object with 'vertices' and 'faces'")
    if doc.get("unit", "m") != "m":
        raise ModelParseError(f"unsupported unit {doc['unit']!r}; only meters are accepted")
    return build_model(doc["vertices"], doc["faces"])


def load_model_file(path) -> WireframeModel:
    with open(path) as fh:
        return load_model(fh.read())


def model_to_json(model: WireframeModel) -> str:
    doc = {
        "unit": "m",
        "vertices": model.vertices.tolist(),
        "faces": [[int(i) for i in f] for f in model.faces],
    }
    return json.dumps(doc, indent=2) + "\n"


def unit_cube() -> WireframeModel:
    """The bundled 1 m cube centered at the origin."""
    return load_model(resources.files("wiretrack.assets").joinpath("unit_cube.json").read_text())


def box(size=(1.0, 1.0, 1.0), center=(0.0, 0.0, 0.0)) -> WireframeModel:
    sx, sy, sz = np.asarray(size, dtype=float) / 2
    c = np.asarray(center, dtype=float)
    V = np.array(
        [[x, y, z] for z in (-sz, sz) for y in (-sy, sy) for x in (-sx, sx)]
    ) + c
    faces = [
        [0, 2, 3, 1],  # z-
        [4, 5, 7, 6],  # z+
        [0, 1, 5, 4],  # y-
        [2, 6, 7, 3],  # y+
        [0, 4, 6, 2],  # x-
        [1, 3, 7, 5],  # x+
    ]
    return build_model(V, faces)


# --------------------------------------------------------------------- visibility


def face_visibility(model: WireframeModel, camera_pose: Pose) -> np.ndarray:
    """A face is visible when its outward normal points against the camera ray.

    The ray runs from the camera center to the face centroid; near-zero dot
    products (edge-on faces) count as hidden.
    """
    rays = model.centroids - camera_pose.t
    rays /= np.linalg.norm(rays, axis=1, keepdims=True)
    dots = np.einsum("ij,ij->i", model.normals, rays)
    return dots < -VISIBILITY_TIE


def visible_edges(model: WireframeModel, visibility) -> list[int]:
    visibility = np.asarray(visibility, dtype=bool)
    if len(visibility) != model.n_faces:
        raise ValueError("visibility length must equal the face count")
    return [i for i, adj in enumerate(model.edge_faces) if any(visibility[f] for f in adj)]


# --------------------------------------------------------------------- projection


def _clip_interval(Xa: np.ndarray, Xb: np.ndarray, k: CameraIntrinsics):
    """Parameter interval [l0, l1] of X(l) = Xa + l (Xb - Xa) inside the pinhole frustum.

    Each image border is a plane through the camera center, so the clip is
    linear in l.
    """
    d = Xb - Xa
    umax, vmax = k.width - 1.0, k.height - 1.0
    # constraints a + l*b >= 0
    cons = [
        (Xa[2] - NEAR_PLANE, d[2]),
        (k.fx * Xa[0] + k.cx * Xa[2], k.fx * d[0] + k.cx * d[2]),
        ((umax - k.cx) * Xa[2] - k.fx * Xa[0], (umax - k.cx) * d[2] - k.fx * d[0]),
        (k.fy * Xa[1] + k.cy * Xa[2], k.fy * d[1] + k.cy * d[2]),
        ((vmax - k.cy) * Xa[2] - k.fy * Xa[1], (vmax - k.cy) * d[2] - k.fy * d[1]),
    ]
    lo, hi = 0.0, 1.0
    for a, b in cons:
        if abs(b) < 1e-15:
            if a < 0:
                return None
            continue
        r = -a / b
        if b > 0:
            lo = max(lo, r)
        else:
            hi = min(hi, r)
    if hi - lo <= 1e-12:
        return None
    return lo, hi


def _inside(uv, k: CameraIntrinsics) -> bool:
    return 0.0 <= uv[0] <= k.width - 1.0 and 0.0 <= uv[1] <= k.height - 1.0


def _refine_distorted(Xa, Xb, lam_in, lam_out, k, iters=60):
    """Bisect along the 3D edge for the last parameter whose distorted projection is in frame."""
    d = Xb - Xa
    for _ in range(iters):
        mid = 0.5 * (lam_in + lam_out)
        X = Xa + mid * d
        ok = X[2] > NEAR_PLANE and _inside(project_points(k, X[None])[0], k)
        if ok:
            lam_in = mid
        else:
            lam_out = mid
    return lam_in


def _clip_distorted(Xa, Xb, k: CameraIntrinsics, n_samples: int = 65):
    """Clip under radial distortion: coarse sampling, then bisection at each end."""
    d = Xb - Xa
    lams = np.linspace(0.0, 1.0, n_samples)
    Xs = Xa + lams[:, None] * d
    good = Xs[:, 2] > NEAR_PLANE
    inside = np.zeros(n_samples, dtype=bool)
    if np.any(good):
        uv = project_points(k, Xs[good])
        inside[good] = (
            (uv[:, 0] >= 0) & (uv[:, 0] <= k.width - 1) & (uv[:, 1] >= 0) & (uv[:, 1] <= k.height - 1)
        )
    if not inside.any():
        return None
    i0, i1 = np.flatnonzero(inside)[[0, -1]]
    lo = lams[i0] if i0 == 0 else _refine_distorted(Xa, Xb, lams[i0], lams[i0 - 1], k)
    hi = lams[i1] if i1 == n_samples - 1 else _refine_distorted(Xa, Xb, lams[i1], lams[i1 + 1], k)
    if hi - lo <= 1e-12:
        return None
    return lo, hi


def project_profile(model: WireframeModel, camera_pose: Pose, k: CameraIntrinsics) -> list[Segment2D]:
    """Project every visible edge, clipped to the image, keeping 3D provenance.

    The image rectangle is the span of pixel centers, [0, W-1] x [0, H-1].
    """
    vis = face_visibility(model, camera_pose)
    ends_world = model.edge_endpoints()
    distorted = k.k1 != 0.0 or k.k2 != 0.0
    out = []
    for ei in visible_edges(model, vis):
        Xa_w, Xb_w = ends_world[ei]
        Xa, Xb = world_to_camera(camera_pose, ends_world[ei])
        span = _clip_distorted(Xa, Xb, k) if distorted else _clip_interval(Xa, Xb, k)
        if span is None:
            continue
        lo, hi = span
        Xc = np.array([Xa + lo * (Xb - Xa), Xa + hi * (Xb - Xa)])
        uv = project_points(k, Xc)
        uv[:, 0] = np.clip(uv[:, 0], 0.0, k.width - 1.0)
        uv[:, 1] = np.clip(uv[:, 1], 0.0, k.height - 1.0)
        if np.hypot(*(uv[1] - uv[0])) < 1e-9:
            continue
        out.append(
            Segment2D(
                uv[0], uv[1], edge=ei,
                X0=Xa_w + lo * (Xb_w - Xa_w),
                X1=Xa_w + hi * (Xb_w - Xa_w),
                z0=float(Xc[0, 2]),
                z1=float(Xc[1, 2]),
            )
        )
    if not out:
        raise EmptyProfileError("no visible model edge projects into the image")
    return out
