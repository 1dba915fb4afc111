"""Pose from 2D-3D correspondences: damped Gauss-Newton PnP and RANSAC over match hypotheses.

The solver perturbs the world-to-camera transform on the left,
``T_cw <- exp(xi) T_cw``, so Jacobians are expressed in the camera frame and
do not depend on where the world origin sits. Poses going in and out are
camera-to-world.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .correspond import MatchHypothesis
from .errors import (
    DegenerateConfigurationError,
    DivergedBehindCameraError,
    InsufficientPointsError,
    NoConsensusError,
    NonPositiveDepthError,
    NotEnoughMatchesError,
    WiretrackError,
)
from .geometry import DEPTH_EPS, CameraIntrinsics, Pose, exp_twist, invert

STEP_TOL = 1e-8
MAX_COND = 1e12
MAX_ITER = 50
LOCAL_ROUNDS = 4


@dataclass(frozen=True, eq=False)
class PnpResult:
    pose: Pose
    rms_reprojection: float
    iterations: int
    converged: bool
    costs: tuple[float, ...] = ()


@dataclass(frozen=True)
class RansacConfig:
    max_iterations: int = 200
    sample_size: int = 4
    inlier_threshold: float = 2.0
    min_inlier_fraction: float = 0.25
    rng_seed: int = 0

    def __post_init__(self):
        if self.sample_size < 4:
            raise ValueError("sample_size must be at least 4")
        if not 0 < self.min_inlier_fraction <= 1:
            raise ValueError("min_inlier_fraction must be in (0, 1]")
        if self.max_iterations < 1 or self.inlier_threshold <= 0:
            raise ValueError("max_iterations and inlier_threshold must be positive")


# --------------------------------------------------------------------- projection + Jacobian


def _project_with_jacobian(Xc: np.ndarray, k: CameraIntrinsics, want_jac: bool = True):
    """Pixels (N, 2) and d(pixel)/d(twist) (N, 2, 6) for camera-frame points."""
    z = Xc[:, 2]
    inv_z = 1.0 / z
    xn = Xc[:, :2] * inv_z[:, None]
    r2 = np.sum(xn * xn, axis=1)
    f = 1.0 + k.k1 * r2 + k.k2 * r2 * r2
    uv = np.column_stack([k.fx * xn[:, 0] * f + k.cx, k.fy * xn[:, 1] * f + k.cy])
    if not want_jac:
        return uv, None
    n = len(Xc)
    fp = k.k1 + 2.0 * k.k2 * r2
    # d(distorted)/d(normalized)
    Dd = f[:, None, None] * np.eye(2)[None] + 2.0 * fp[:, None, None] * xn[:, :, None] * xn[:, None, :]
    Dd[:, 0, :] *= k.fx
    Dd[:, 1, :] *= k.fy
    # d(normalized)/d(camera point)
    Dn = np.zeros((n, 2, 3))
    Dn[:, 0, 0] = inv_z
    Dn[:, 1, 1] = inv_z
    Dn[:, 0, 2] = -xn[:, 0] * inv_z
    Dn[:, 1, 2] = -xn[:, 1] * inv_z
    A = Dd @ Dn  # (n, 2, 3)
    # d(camera point)/d(rotation) = -[Xc]x
    S = np.zeros((n, 3, 3))
    S[:, 0, 1] = Xc[:, 2]
    S[:, 0, 2] = -Xc[:, 1]
    S[:, 1, 0] = -Xc[:, 2]
    S[:, 1, 2] = Xc[:, 0]
    S[:, 2, 0] = Xc[:, 1]
    S[:, 2, 1] = -Xc[:, 0]
    J = np.concatenate([A @ S, A], axis=2)
    return uv, J


def jacobian_reprojection(x3d, pose: Pose, k: CameraIntrinsics) -> np.ndarray:
    """2x6 derivative of the pixel projection of a world point w.r.t. the twist.

    Columns are (rotation x, y, z, translation x, y, z) of the camera-frame
    perturbation.
    """
    Xc = (np.asarray(x3d, dtype=float) - pose.t) @ pose.R
    if Xc[2] <= DEPTH_EPS:
        raise NonPositiveDepthError("point is not in front of the camera")
    return _project_with_jacobian(Xc[None], k)[1][0]


def perturb(pose: Pose, xi) -> Pose:
    """Apply a twist to a camera-to-world pose in the convention of the Jacobian."""
    return invert(exp_twist(xi) @ invert(pose))


# --------------------------------------------------------------------- Gauss-Newton


def _residuals(R, t, X, uv_obs, normals, k, want_jac=True):
    Xc = X @ R.T + t
    if np.any(Xc[:, 2] <= DEPTH_EPS):
        return None, None, None
    uv, J = _project_with_jacobian(Xc, k, want_jac)
    r = uv - uv_obs
    if normals is not None:
        r = np.einsum("ij,ij->i", r, normals)[:, None]
        if J is not None:
            J = np.einsum("ij,ijk->ik", normals, J)[:, None, :]
    return r, J, uv


def _gauss_newton(X, uv_obs, normals, k, init: Pose, max_iter: int):
    pose_cw = invert(init)
    R, t = pose_cw.R.copy(), pose_cw.t.copy()
    r, J, _ = _residuals(R, t, X, uv_obs, normals, k)
    if r is None:
        raise DivergedBehindCameraError("initial pose puts a point behind the camera")
    cost = float(np.sum(r * r))
    costs = [cost]
    lam = 0.0
    converged = False
    it = 0
    behind = 0
    while it < max_iter:
        it += 1
        Jm = J.reshape(-1, 6)
        H = Jm.T @ Jm
        g = Jm.T @ r.reshape(-1)
        d = np.sqrt(np.diag(H))
        if np.any(d == 0) or np.linalg.cond(H / np.outer(d, d)) > MAX_COND:
            raise DegenerateConfigurationError("normal equations are rank deficient")
        A = H + lam * np.diag(np.diag(H))
        xi = -np.linalg.solve(A, g)
        step = float(np.linalg.norm(xi))
        E = exp_twist(xi)
        R_new = E.R @ R
        t_new = E.R @ t + E.t
        r_new, J_new, _ = _residuals(R_new, t_new, X, uv_obs, normals, k)
        if r_new is None:
            behind += 1
            if behind > 10:
                raise DivergedBehindCameraError("iteration drove a point behind the camera")
            lam = max(1e-4, lam * 10.0)
            continue
        cost_new = float(np.sum(r_new * r_new))
        if cost_new <= cost:
            R, t, r, J, cost = R_new, t_new, r_new, J_new, cost_new
            costs.append(cost)
            lam = 0.0 if lam < 1e-6 else lam / 10.0
            if step < STEP_TOL:
                converged = True
                break
        else:
            if step < STEP_TOL:
                converged = True
                break
            lam = max(1e-4, lam * 10.0)
    n = len(X)
    rms = float(np.sqrt(cost / n))
    pose = invert(Pose(R, t))
    return PnpResult(pose, rms, it, converged, tuple(costs))


def solve_pnp(corrs, k: CameraIntrinsics, init: Pose, max_iter: int = MAX_ITER, normals=None) -> PnpResult:
    """Refine a camera-to-world pose from ``(x3d, uv)`` correspondences.

    Minimizes the summed squared pixel reprojection error. When ``normals``
    (unit 2-vectors, one per correspondence) are given, only the error
    component along each normal is penalized, which is the perpendicular
    distance to an image edge through ``uv``.
    """
    if len(corrs) < 4:
        raise InsufficientPointsError(f"need at least 4 correspondences, got {len(corrs)}")
    X = np.array([c[0] for c in corrs], dtype=float).reshape(-1, 3)
    uv = np.array([c[1] for c in corrs], dtype=float).reshape(-1, 2)
    return solve_pnp_arrays(X, uv, k, init, max_iter, normals)


def solve_pnp_arrays(X, uv, k, init: Pose, max_iter: int = MAX_ITER, normals=None) -> PnpResult:
    if len(X) < 4:
        raise InsufficientPointsError(f"need at least 4 correspondences, got {len(X)}")
    if normals is not None:
        normals = np.asarray(normals, dtype=float).reshape(-1, 2)
        if len(normals) < 6:
            raise InsufficientPointsError("perpendicular residuals need at least 6 correspondences")
    return _gauss_newton(np.asarray(X, float), np.asarray(uv, float), normals, k, init, max_iter)


def reprojection_rms(corrs, k: CameraIntrinsics, pose: Pose) -> float:
    X = np.array([c[0] for c in corrs], dtype=float)
    uv = np.array([c[1] for c in corrs], dtype=float)
    pose_cw = invert(pose)
    r, _, _ = _residuals(pose_cw.R, pose_cw.t, X, uv, None, k, want_jac=False)
    if r is None:
        raise NonPositiveDepthError("point behind the camera")
    return float(np.sqrt(np.mean(np.sum(r * r, axis=1))))


# --------------------------------------------------------------------- RANSAC


@dataclass(frozen=True, eq=False)
class RansacDiagnostics:
    inlier_fraction: float
    n_candidates: int
    best_iteration: int
    selected: np.ndarray = field(repr=False)  # hypothesis index per control point, -1 if outlier


def _pack(matches):
    rows = [hyps for hyps in matches if len(hyps) > 0]
    n = len(rows)
    kmax = max((len(h) for h in rows), default=1)
    X = np.zeros((n, 3))
    N = np.zeros((n, 2))
    H = np.zeros((n, kmax, 2))
    valid = np.zeros((n, kmax), dtype=bool)
    for i, hyps in enumerate(rows):
        cp = hyps[0].control_point
        X[i] = cp.x3d
        N[i] = cp.normal
        for j, h in enumerate(hyps):
            H[i, j] = h.uv_matched
            valid[i, j] = True
    return X, N, H, valid


def _score(pose: Pose, X, N, H, valid, k, threshold, perpendicular):
    pose_cw = invert(pose)
    Xc = X @ pose_cw.R.T + pose_cw.t
    front = Xc[:, 2] > DEPTH_EPS
    uv = np.full((len(X), 2), np.inf)
    if np.any(front):
        uv[front] = _project_with_jacobian(Xc[front], k, want_jac=False)[0]
    diff = uv[:, None, :] - H
    if perpendicular:
        dist = np.abs(np.einsum("ijk,ik->ij", diff, N))
    else:
        dist = np.linalg.norm(diff, axis=2)
    dist = np.where(valid, dist, np.inf)
    dist[~front] = np.inf
    sel = np.argmin(dist, axis=1)
    best = dist[np.arange(len(X)), sel]
    inl = best <= threshold
    rms = float(np.sqrt(np.mean(best[inl] ** 2))) if inl.any() else np.inf
    return inl, sel, rms


def _refit(X, N, H, inl, sel, k, start: Pose, perpendicular: bool) -> PnpResult:
    Xi = X[inl]
    UVi = H[np.flatnonzero(inl), sel[inl]]
    normals = N[inl] if perpendicular and len(Xi) >= 6 else None
    try:
        return solve_pnp_arrays(Xi, UVi, k, start, max_iter=MAX_ITER, normals=normals)
    except WiretrackError as exc:
        raise NoConsensusError(f"refinement on the consensus set failed: {exc}") from None


def ransac_pose(
    matches: list[list[MatchHypothesis]],
    k: CameraIntrinsics,
    prior: Pose,
    cfg: RansacConfig = RansacConfig(),
    perpendicular: bool = True,
    return_diagnostics: bool = False,
):
    """Robust pose from multi-hypothesis matches.

    ``matches`` holds one hypothesis list per control point (nearest first);
    empty lists are ignored. Each iteration fits ``sample_size`` control points
    through their nearest hypotheses, starting from ``prior``. A control point
    supports a candidate pose when any of its hypotheses lies within
    ``inlier_threshold`` of the predicted projection; the closest such
    hypothesis is the one it contributes. With ``perpendicular`` the distance
    is measured along the control point's edge normal, otherwise it is the
    Euclidean pixel distance.

    Returns ``(PnpResult, inlier_flags)`` with one flag per non-empty match
    list, plus :class:`RansacDiagnostics` when requested.
    """
    X, N, H, valid = _pack(matches)
    n = len(X)
    if n < cfg.sample_size:
        raise NotEnoughMatchesError(f"{n} matched control points, need {cfg.sample_size}")
    rng = np.random.default_rng(cfg.rng_seed)

    best = None  # (n_inliers, rms, iteration, inliers, sel, pose)
    n_candidates = 0
    for it in range(cfg.max_iterations):
        idx = np.sort(rng.choice(n, cfg.sample_size, replace=False))
        try:
            cand = solve_pnp_arrays(X[idx], H[idx, 0], k, prior, max_iter=MAX_ITER)
        except WiretrackError:
            continue
        n_candidates += 1
        inl, sel, rms = _score(cand.pose, X, N, H, valid, k, cfg.inlier_threshold, perpendicular)
        count = int(inl.sum())
        if best is None or count > best[0] or (count == best[0] and rms < best[1]):
            best = (count, rms, it, inl, sel, cand.pose)
        if count == n:
            break

    if best is None:
        raise NoConsensusError("no RANSAC sample produced a valid pose")
    count, _, best_it, inl, sel, pose = best
    frac = count / n
    if frac < cfg.min_inlier_fraction or count < cfg.sample_size:
        raise NoConsensusError(f"best inlier fraction {frac:.3f} below {cfg.min_inlier_fraction}")

    # refit on the consensus set, then re-score at the refit and repeat while
    # the selection changes without losing support
    result = _refit(X, N, H, inl, sel, k, pose, perpendicular)
    for _ in range(LOCAL_ROUNDS):
        inl2, sel2, _ = _score(result.pose, X, N, H, valid, k, cfg.inlier_threshold, perpendicular)
        if inl2.sum() < count or (np.array_equal(inl2, inl) and np.array_equal(sel2[inl2], sel[inl])):
            break
        try:
            refit = _refit(X, N, H, inl2, sel2, k, result.pose, perpendicular)
        except NoConsensusError:
            break
        result, inl, sel, count = refit, inl2, sel2, int(inl2.sum())
        frac = count / n
    if not return_diagnostics:
        return result, inl
    selected = np.where(inl, sel, -1)
    diag = RansacDiagnostics(frac, n_candidates, best_it, selected)
    return result, inl, diag
