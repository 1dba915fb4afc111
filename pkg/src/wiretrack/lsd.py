"""Line segment detection with a-contrario validation.

Gaussian down-scaling, 2x2 gradients, level-line region growing seeded in
decreasing gradient order, rectangle approximation, and a
number-of-false-alarms test on the binomial tail. Coordinates are returned
with pixel centers at integer positions, at the input resolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from .errors import ImageTooSmallError
from .wiremodel import Segment2D

NOTDEF = -1024.0
N_BINS = 1024
SIGMA_SCALE = 0.6
QUANT = 2.0
DENSITY_TH = 0.7
MIN_SIZE = 8

# rectangle record layout
X1, Y1, X2, Y2, WIDTH, CX, CY, THETA, DX, DY, PREC, P = range(12)


@dataclass(frozen=True)
class LsdParams:
    scale: float = 0.8
    angle_tolerance: float = 22.5
    gradient_threshold: float | None = None  # None: derived from quantization noise
    nfa_epsilon: float = 1.0
    min_length: float = 15.0

    def __post_init__(self):
        if not 0 < self.scale <= 1:
            raise ValueError("scale must be in (0, 1]")
        if not 0 < self.angle_tolerance < 90:
            raise ValueError("angle_tolerance must be in (0, 90) degrees")
        if self.min_length < 0:
            raise ValueError("min_length must be non-negative")
        if self.nfa_epsilon <= 0:
            raise ValueError("nfa_epsilon must be positive")

    @property
    def rho(self) -> float:
        if self.gradient_threshold is not None:
            return float(self.gradient_threshold)
        return QUANT / math.sin(math.radians(self.angle_tolerance))


# --------------------------------------------------------------------- scaling


def _kernel(sigma: float, h: int, mean: float) -> np.ndarray:
    i = np.arange(2 * h + 1, dtype=float)
    k = np.exp(-0.5 * ((i - mean) / sigma) ** 2)
    return k / k.sum()


def _resample_matrix(n_in: int, scale: float, sigma: float) -> np.ndarray:
    h = int(math.ceil(sigma * math.sqrt(2.0 * 3.0 * math.log(10.0))))
    n_out = int(math.ceil(n_in * scale))
    W = np.zeros((n_out, n_in))
    period = 2 * n_in
    for x in range(n_out):
        xx = x / scale
        xc = int(math.floor(xx + 0.5))
        ker = _kernel(sigma, h, h + xx - xc)
        for i in range(2 * h + 1):
            j = (xc - h + i) % period
            if j >= n_in:
                j = period - 1 - j
            W[x, j] += ker[i]
    return W


def gaussian_downscale(img: np.ndarray, scale: float) -> np.ndarray:
    """Anti-aliased resampling by ``scale`` with symmetric borders."""
    sigma = SIGMA_SCALE / scale if scale < 1.0 else SIGMA_SCALE
    rows, cols = img.shape
    Wx = _resample_matrix(cols, scale, sigma)
    Wy = _resample_matrix(rows, scale, sigma)
    return Wy @ (img @ Wx.T)


# --------------------------------------------------------------------- numba core


@nb.njit(cache=True)
def _level_line_angles(img, rho, n_bins):
    rows, cols = img.shape
    angles = np.full((rows, cols), NOTDEF)
    modgrad = np.zeros((rows, cols))
    max_grad = 0.0
    for y in range(rows - 1):
        for x in range(cols - 1):
            com1 = img[y + 1, x + 1] - img[y, x]
            com2 = img[y, x + 1] - img[y + 1, x]
            gx = com1 + com2
            gy = com1 - com2
            norm = math.sqrt((gx * gx + gy * gy) / 4.0)
            modgrad[y, x] = norm
            if norm > rho:
                angles[y, x] = math.atan2(gx, -gy)
                if norm > max_grad:
                    max_grad = norm
    # bucket pseudo-ordering: strongest bin first, raster order inside a bin
    counts = np.zeros(n_bins, np.int64)
    bins = np.zeros(rows * cols, np.int64)
    n = 0
    for y in range(rows):
        for x in range(cols):
            if angles[y, x] == NOTDEF:
                bins[y * cols + x] = -1
                continue
            b = int(modgrad[y, x] * n_bins / max_grad)
            if b >= n_bins:
                b = n_bins - 1
            bins[y * cols + x] = b
            counts[b] += 1
            n += 1
    start = np.zeros(n_bins, np.int64)
    acc = 0
    for b in range(n_bins - 1, -1, -1):
        start[b] = acc
        acc += counts[b]
    order = np.empty(n, np.int64)
    for idx in range(rows * cols):
        b = bins[idx]
        if b >= 0:
            order[start[b]] = idx
            start[b] += 1
    return angles, modgrad, order


@nb.njit(cache=True, inline="always")
def _is_aligned(angles, x, y, theta, prec):
    a = angles[y, x]
    if a == NOTDEF:
        return False
    d = theta - a
    if d < 0.0:
        d = -d
    if d > 1.5 * math.pi:
        d -= 2.0 * math.pi
        if d < 0.0:
            d = -d
    return d <= prec


@nb.njit(cache=True)
def _angle_diff(a, b):
    d = a - b
    while d <= -math.pi:
        d += 2.0 * math.pi
    while d > math.pi:
        d -= 2.0 * math.pi
    return d


@nb.njit(cache=True)
def _region_grow(x, y, angles, reg_x, reg_y, used, prec):
    rows, cols = angles.shape
    reg_x[0] = x
    reg_y[0] = y
    size = 1
    reg_angle = angles[y, x]
    sumdx = math.cos(reg_angle)
    sumdy = math.sin(reg_angle)
    used[y, x] = 1
    i = 0
    while i < size:
        px = reg_x[i]
        py = reg_y[i]
        for yy in range(py - 1, py + 2):
            for xx in range(px - 1, px + 2):
                if 0 <= xx < cols and 0 <= yy < rows and used[yy, xx] == 0:
                    if _is_aligned(angles, xx, yy, reg_angle, prec):
                        used[yy, xx] = 1
                        reg_x[size] = xx
                        reg_y[size] = yy
                        size += 1
                        a = angles[yy, xx]
                        sumdx += math.cos(a)
                        sumdy += math.sin(a)
                        reg_angle = math.atan2(sumdy, sumdx)
        i += 1
    return size, reg_angle


@nb.njit(cache=True)
def _region_to_rect(reg_x, reg_y, size, modgrad, reg_angle, prec, p, rec):
    x = 0.0
    y = 0.0
    s = 0.0
    for i in range(size):
        w = modgrad[reg_y[i], reg_x[i]]
        x += reg_x[i] * w
        y += reg_y[i] * w
        s += w
    x /= s
    y /= s

    ixx = 0.0
    iyy = 0.0
    ixy = 0.0
    for i in range(size):
        w = modgrad[reg_y[i], reg_x[i]]
        ddx = reg_x[i] - x
        ddy = reg_y[i] - y
        ixx += ddy * ddy * w
        iyy += ddx * ddx * w
        ixy -= ddx * ddy * w
    lam = 0.5 * (ixx + iyy - math.sqrt((ixx - iyy) * (ixx - iyy) + 4.0 * ixy * ixy))
    if abs(ixx) > abs(iyy):
        theta = math.atan2(lam - ixx, ixy)
    else:
        theta = math.atan2(ixy, lam - iyy)
    if abs(_angle_diff(theta, reg_angle)) > prec:
        theta += math.pi

    dx = math.cos(theta)
    dy = math.sin(theta)
    l_min = 0.0
    l_max = 0.0
    w_min = 0.0
    w_max = 0.0
    for i in range(size):
        ddx = reg_x[i] - x
        ddy = reg_y[i] - y
        l = ddx * dx + ddy * dy
        w = -ddx * dy + ddy * dx
        if l > l_max:
            l_max = l
        if l < l_min:
            l_min = l
        if w > w_max:
            w_max = w
        if w < w_min:
            w_min = w
    rec[X1] = x + l_min * dx
    rec[Y1] = y + l_min * dy
    rec[X2] = x + l_max * dx
    rec[Y2] = y + l_max * dy
    rec[WIDTH] = max(w_max - w_min, 1.0)
    rec[CX] = x
    rec[CY] = y
    rec[THETA] = theta
    rec[DX] = dx
    rec[DY] = dy
    rec[PREC] = prec
    rec[P] = p


@nb.njit(cache=True)
def _log_nfa(n, k, p, log_nt):
    """-log10(NFA) for k aligned points out of n with alignment probability p."""
    if n == 0 or k == 0:
        return -log_nt
    if n == k:
        return -log_nt - n * math.log10(p)
    p_term = p / (1.0 - p)
    log1term = (
        math.lgamma(n + 1.0) - math.lgamma(k + 1.0) - math.lgamma(n - k + 1.0)
        + k * math.log(p) + (n - k) * math.log(1.0 - p)
    )
    term = math.exp(log1term)
    if term == 0.0:
        if k > n * p:
            return -log1term / math.log(10.0) - log_nt
        return -log_nt
    bin_tail = term
    tol = 0.1
    for i in range(k + 1, n + 1):
        bin_term = (n - i + 1) / i
        mult_term = bin_term * p_term
        term *= mult_term
        bin_tail += term
        if bin_term < 1.0:
            err = term * ((1.0 - mult_term ** (n - i + 1)) / (1.0 - mult_term) - 1.0)
            if err < tol * abs(-math.log10(bin_tail) - log_nt) * bin_tail:
                break
    return -math.log10(bin_tail) - log_nt


@nb.njit(cache=True)
def _rect_nfa(rec, angles, log_nt):
    rows, cols = angles.shape
    hw = rec[WIDTH] / 2.0
    dx = rec[DX]
    dy = rec[DY]
    x1 = rec[X1]
    y1 = rec[Y1]
    length = math.hypot(rec[X2] - x1, rec[Y2] - y1)
    # bounding box of the four corners
    cxs = (x1 - dy * hw, x1 + dy * hw, rec[X2] - dy * hw, rec[X2] + dy * hw)
    cys = (y1 + dx * hw, y1 - dx * hw, rec[Y2] + dx * hw, rec[Y2] - dx * hw)
    xmin = max(int(math.ceil(min(cxs))), 0)
    xmax = min(int(math.floor(max(cxs))), cols - 1)
    ymin = max(int(math.ceil(min(cys))), 0)
    ymax = min(int(math.floor(max(cys))), rows - 1)
    pts = 0
    alg = 0
    eps = 1e-9
    for y in range(ymin, ymax + 1):
        for x in range(xmin, xmax + 1):
            ddx = x - x1
            ddy = y - y1
            l = ddx * dx + ddy * dy
            w = -ddx * dy + ddy * dx
            if l >= -eps and l <= length + eps and abs(w) <= hw + eps:
                pts += 1
                if _is_aligned(angles, x, y, rec[THETA], rec[PREC]):
                    alg += 1
    return _log_nfa(pts, alg, rec[P], log_nt)


@nb.njit(cache=True)
def _rect_improve(rec, angles, log_nt, log_eps):
    delta = 0.5
    delta_2 = delta / 2.0
    log_nfa = _rect_nfa(rec, angles, log_nt)
    if log_nfa > log_eps:
        return log_nfa

    r = rec.copy()
    for _ in range(5):
        r[P] /= 2.0
        r[PREC] = r[P] * math.pi
        v = _rect_nfa(r, angles, log_nt)
        if v > log_nfa:
            log_nfa = v
            rec[:] = r
    if log_nfa > log_eps:
        return log_nfa

    r = rec.copy()
    for _ in range(5):
        if r[WIDTH] - delta >= 0.5:
            r[WIDTH] -= delta
            v = _rect_nfa(r, angles, log_nt)
            if v > log_nfa:
                log_nfa = v
                rec[:] = r
    if log_nfa > log_eps:
        return log_nfa

    for sign in (1.0, -1.0):
        r = rec.copy()
        for _ in range(5):
            if r[WIDTH] - delta >= 0.5:
                r[X1] += -sign * r[DY] * delta_2
                r[Y1] += sign * r[DX] * delta_2
                r[X2] += -sign * r[DY] * delta_2
                r[Y2] += sign * r[DX] * delta_2
                r[WIDTH] -= delta
                v = _rect_nfa(r, angles, log_nt)
                if v > log_nfa:
                    log_nfa = v
                    rec[:] = r
        if log_nfa > log_eps:
            return log_nfa

    r = rec.copy()
    for _ in range(5):
        r[P] /= 2.0
        r[PREC] = r[P] * math.pi
        v = _rect_nfa(r, angles, log_nt)
        if v > log_nfa:
            log_nfa = v
            rec[:] = r
    return log_nfa


@nb.njit(cache=True)
def _reduce_region_radius(reg_x, reg_y, size, modgrad, reg_angle, prec, p, rec, used, density_th):
    length = math.hypot(rec[X1] - rec[X2], rec[Y1] - rec[Y2])
    density = size / (length * rec[WIDTH])
    if density >= density_th:
        return size
    xc = reg_x[0]
    yc = reg_y[0]
    rad1 = math.hypot(xc - rec[X1], yc - rec[Y1])
    rad2 = math.hypot(xc - rec[X2], yc - rec[Y2])
    rad = max(rad1, rad2)
    while density < density_th:
        rad *= 0.75
        i = 0
        while i < size:
            if math.hypot(xc - reg_x[i], yc - reg_y[i]) > rad:
                used[reg_y[i], reg_x[i]] = 0
                reg_x[i] = reg_x[size - 1]
                reg_y[i] = reg_y[size - 1]
                size -= 1
            else:
                i += 1
        if size < 2:
            return 0
        _region_to_rect(reg_x, reg_y, size, modgrad, reg_angle, prec, p, rec)
        length = math.hypot(rec[X1] - rec[X2], rec[Y1] - rec[Y2])
        density = size / (length * rec[WIDTH])
    return size


@nb.njit(cache=True)
def _refine(reg_x, reg_y, size, modgrad, reg_angle, prec, p, rec, used, angles, density_th):
    """Returns the (possibly shrunk) region size, 0 when the region is rejected."""
    length = math.hypot(rec[X1] - rec[X2], rec[Y1] - rec[Y2])
    density = size / (length * rec[WIDTH])
    if density >= density_th:
        return size

    xc = reg_x[0]
    yc = reg_y[0]
    ang_c = angles[yc, xc]
    s = 0.0
    s_sum = 0.0
    n = 0
    for i in range(size):
        used[reg_y[i], reg_x[i]] = 0
        if math.hypot(xc - reg_x[i], yc - reg_y[i]) < rec[WIDTH]:
            ang_d = _angle_diff(angles[reg_y[i], reg_x[i]], ang_c)
            s += ang_d
            s_sum += ang_d * ang_d
            n += 1
    mean_angle = s / n
    tau = 2.0 * math.sqrt((s_sum - 2.0 * mean_angle * s) / n + mean_angle * mean_angle)

    size, reg_angle = _region_grow(xc, yc, angles, reg_x, reg_y, used, tau)
    if size < 2:
        return 0
    _region_to_rect(reg_x, reg_y, size, modgrad, reg_angle, prec, p, rec)
    length = math.hypot(rec[X1] - rec[X2], rec[Y1] - rec[Y2])
    density = size / (length * rec[WIDTH])
    if density < density_th:
        return _reduce_region_radius(reg_x, reg_y, size, modgrad, reg_angle, prec, p, rec, used, density_th)
    return size


@nb.njit(cache=True)
def _detect(img, rho, prec, p, log_eps):
    rows, cols = img.shape
    angles, modgrad, order = _level_line_angles(img, rho, N_BINS)
    log_nt = 5.0 * (math.log10(cols) + math.log10(rows)) / 2.0 + math.log10(11.0)
    min_reg_size = int(-log_nt / math.log10(p))

    used = np.zeros((rows, cols), np.uint8)
    reg_x = np.empty(rows * cols, np.int64)
    reg_y = np.empty(rows * cols, np.int64)
    rec = np.zeros(12)
    out = []
    for idx in order:
        y = idx // cols
        x = idx % cols
        if used[y, x] != 0:
            continue
        size, reg_angle = _region_grow(x, y, angles, reg_x, reg_y, used, prec)
        if size < min_reg_size:
            continue
        _region_to_rect(reg_x, reg_y, size, modgrad, reg_angle, prec, p, rec)
        size = _refine(reg_x, reg_y, size, modgrad, reg_angle, prec, p, rec, used, angles, DENSITY_TH)
        if size == 0:
            continue
        log_nfa = _rect_improve(rec, angles, log_nt, log_eps)
        if log_nfa <= log_eps:
            continue
        out.append((rec[X1] + 0.5, rec[Y1] + 0.5, rec[X2] + 0.5, rec[Y2] + 0.5, rec[WIDTH], log_nfa))
    return out


# --------------------------------------------------------------------- public API


def as_gray(img) -> np.ndarray:
    """Validate and convert an image to a 2D float64 intensity array."""
    arr = np.asarray(img)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError("expected a non-empty 2D grayscale image")
    return arr.astype(np.float64)


def detect_raw(img, params: LsdParams = LsdParams()) -> np.ndarray:
    """Detections as an (N, 6) array ``x1, y1, x2, y2, width, -log10(NFA)`` at input resolution.

    No length filtering and no sorting; order follows the seed pseudo-order.
    """
    gray = as_gray(img)
    if params.scale != 1.0:
        gray = gaussian_downscale(gray, params.scale)
    if gray.shape[0] < MIN_SIZE or gray.shape[1] < MIN_SIZE:
        raise ImageTooSmallError(f"image is {gray.shape[1]}x{gray.shape[0]} after scaling; need 8x8")
    prec = math.radians(params.angle_tolerance)
    p = params.angle_tolerance / 180.0
    log_eps = -math.log10(params.nfa_epsilon)
    found = _detect(np.ascontiguousarray(gray), params.rho, prec, p, log_eps)
    res = np.array(found, dtype=float).reshape(-1, 6)
    if params.scale != 1.0:
        res[:, :5] /= params.scale
    return res


def filter_by_length(segments: list[Segment2D], min_length: float) -> list[Segment2D]:
    return [s for s in segments if s.length >= min_length]


def detect_segments(img, params: LsdParams = LsdParams()) -> list[Segment2D]:
    """Detect straight segments, drop those shorter than ``params.min_length``,
    and return them longest first."""
    raw = detect_raw(img, params)
    segs = [Segment2D(r[0:2], r[2:4]) for r in raw]
    segs = filter_by_length(segs, params.min_length)
    order = sorted(range(len(segs)), key=lambda i: -segs[i].length)
    return [segs[i] for i in order]
