"""Dense optical flow and RANSAC homographies over flow correspondences."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import ndimage

from errors import (
    DegenerateConfiguration, DimensionMismatch, FlowFormatError, FrameTooSmall, InsufficientCorners, PointAtInfinity,
)

logger = logging.getLogger(__name__)

MIN_FRAME_SIZE = 16
FLO_MAGIC = b"FLO1"

# Smallest pyramid level side; coarser levels are not built
_MIN_LEVEL_SIZE = 16
# Smallest structure-tensor eigenvalue for a solvable LK window (intensities in [0, 1])
_MIN_EIGENVALUE = 1e-6
# Largest per-iteration update, px
_MAX_STEP = 1.0
_CONVERGED = 1e-3


@dataclass(frozen=True, eq=False)
class Frame:
    rgb: np.ndarray
    index: int = 0
    timestamp: float = 0.0

    def __post_init__(self):
        rgb = np.asarray(self.rgb)
        if rgb.ndim != 3 or rgb.shape[2] != 3:
            raise DimensionMismatch(f"frame buffer must be height x width x 3, got {rgb.shape}")
        rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
        rgb.setflags(write=False)
        object.__setattr__(self, "rgb", rgb)

    @classmethod
    def from_buffer(cls, width: int, height: int, data: bytes, index: int = 0, fps: float = 1.0) -> "Frame":
        if width * height * 3 != len(data):
            raise DimensionMismatch(f"buffer holds {len(data)} bytes, expected {width * height * 3}")
        rgb = np.frombuffer(data, dtype=np.uint8).reshape(height, width, 3)
        return cls(rgb=rgb, index=index, timestamp=index / fps)

    @property
    def width(self) -> int:
        return self.rgb.shape[1]

    @property
    def height(self) -> int:
        return self.rgb.shape[0]

    def gray(self) -> np.ndarray:
        """Luma in [0, 1] as float64."""
        rgb = self.rgb.astype(np.float64) / 255.0
        return rgb[..., 0] * 0.299 + rgb[..., 1] * 0.587 + rgb[..., 2] * 0.114


@dataclass(frozen=True, eq=False)
class FlowField:
    """Per-pixel (dx, dy) in pixels/frame; ``vectors`` has shape (height, width, 2)."""
    vectors: np.ndarray

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=np.float64)
        if vectors.ndim != 3 or vectors.shape[2] != 2:
            raise DimensionMismatch(f"flow must be height x width x 2, got {vectors.shape}")
        if not np.all(np.isfinite(vectors)):
            raise FlowFormatError("flow contains non-finite values")
        vectors = np.ascontiguousarray(vectors)
        vectors.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)

    @classmethod
    def zeros(cls, width: int, height: int) -> "FlowField":
        return cls(np.zeros((height, width, 2)))

    @property
    def width(self) -> int:
        return self.vectors.shape[1]

    @property
    def height(self) -> int:
        return self.vectors.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.vectors.shape[:2]

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.vectors[..., 0], self.vectors[..., 1])


@dataclass(frozen=True, eq=False)
class Homography:
    matrix: np.ndarray
    inlier_ratio: float = 1.0
    inliers: int = 0
    correspondences: int = 0

    def __post_init__(self):
        h = np.asarray(self.matrix, dtype=np.float64)
        if h.shape != (3, 3) or not np.all(np.isfinite(h)):
            raise DegenerateConfiguration("homography must be a finite 3x3 matrix")
        if abs(h[2, 2]) < 1e-12:
            raise DegenerateConfiguration("homography cannot be normalized (h22 = 0)")
        h = h / h[2, 2]
        if abs(np.linalg.det(h)) <= 1e-9:
            raise DegenerateConfiguration("homography is singular")
        if not 0.0 <= self.inlier_ratio <= 1.0:
            raise DegenerateConfiguration(f"inlier ratio {self.inlier_ratio} outside [0, 1]")
        h.setflags(write=False)
        object.__setattr__(self, "matrix", h)

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map (N, 2) pixel points through the homography."""
        return _project(self.matrix, points)


class FlowParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    levels: int = Field(default=3, ge=1)
    window_radius: int = Field(default=4, ge=2)
    iterations: int = Field(default=10, ge=1)


class HomographyParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    min_corners: int = Field(default=50, ge=4)
    max_corners: int = Field(default=400, ge=4)
    nms_size: int = Field(default=8, ge=1)
    border: int = Field(default=8, ge=0)
    quality: float = Field(default=0.01, gt=0, lt=1)
    ransac_iterations: int = Field(default=1000, ge=1)
    inlier_threshold: float = Field(default=2.0, gt=0)
    min_inlier_ratio: float = Field(default=0.4, ge=0, le=1)
    confidence: float = Field(default=0.99, gt=0, lt=1)
    seed: int = Field(default=0, ge=0)


def _check_same_size(a, b) -> None:
    if (a.width, a.height) != (b.width, b.height):
        raise DimensionMismatch(f"{a.width}x{a.height} vs {b.width}x{b.height}")


# --- dense flow ---

def _pyramid(image: np.ndarray, levels: int) -> list[np.ndarray]:
    pyramid = [image]
    for _ in range(levels - 1):
        prev = pyramid[-1]
        if min(prev.shape) // 2 < _MIN_LEVEL_SIZE:
            break
        pyramid.append(ndimage.gaussian_filter(prev, sigma=1.0, mode="nearest")[::2, ::2])
    return pyramid


def _upsample_flow(flow: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    h, w = shape
    zoom = (h / flow.shape[0], w / flow.shape[1])
    up = np.empty((h, w, 2))
    for c in range(2):
        up[..., c] = ndimage.zoom(flow[..., c], zoom, order=1, mode="nearest") * 2.0
    return up


def _presmooth(image: np.ndarray) -> np.ndarray:
    return ndimage.gaussian_filter(image, sigma=1.0, mode="nearest")


def _window_sum(values: np.ndarray, radius: int) -> np.ndarray:
    return ndimage.gaussian_filter(values, sigma=radius / 2.0, truncate=2.0, mode="nearest")


def _refine_level(first: np.ndarray, second: np.ndarray, flow: np.ndarray, params: FlowParams) -> np.ndarray:
    h, w = first.shape
    radius = params.window_radius
    fy, fx = np.gradient(first)
    sy, sx = np.gradient(second)
    grid_y, grid_x = np.mgrid[0:h, 0:w].astype(np.float64)
    for _ in range(params.iterations):
        coords = [grid_y + flow[..., 1], grid_x + flow[..., 0]]
        warped = ndimage.map_coordinates(second, coords, order=1, mode="nearest")
        # gradients of both images, averaged at the current alignment
        gx = 0.5 * (fx + ndimage.map_coordinates(sx, coords, order=1, mode="nearest"))
        gy = 0.5 * (fy + ndimage.map_coordinates(sy, coords, order=1, mode="nearest"))
        diff = warped - first

        sxx = _window_sum(gx * gx, radius)
        sxy = _window_sum(gx * gy, radius)
        syy = _window_sum(gy * gy, radius)
        bx = -_window_sum(gx * diff, radius)
        by = -_window_sum(gy * diff, radius)
        det = sxx * syy - sxy * sxy
        min_eig = 0.5 * (sxx + syy - np.sqrt((sxx - syy) ** 2 + 4.0 * sxy * sxy))
        solvable = min_eig > _MIN_EIGENVALUE
        safe_det = np.where(solvable, det, 1.0)
        du = np.where(solvable, (syy * bx - sxy * by) / safe_det, 0.0)
        dv = np.where(solvable, (sxx * by - sxy * bx) / safe_det, 0.0)

        step = np.hypot(du, dv)
        scale = np.minimum(1.0, _MAX_STEP / np.maximum(step, 1e-12))
        flow[..., 0] += du * scale
        flow[..., 1] += dv * scale
        if float(step.max(initial=0.0)) < _CONVERGED:
            break
    for c in range(2):
        flow[..., c] = ndimage.median_filter(flow[..., c], size=3, mode="nearest")
    return flow


def estimate_flow(a: Frame, b: Frame, params: FlowParams | None = None) -> FlowField:
    """Dense flow from ``a`` to ``b``: ``b(x + F(x)) ~ a(x)``."""
    params = params or FlowParams()
    _check_same_size(a, b)
    if a.width < MIN_FRAME_SIZE or a.height < MIN_FRAME_SIZE:
        raise FrameTooSmall(f"frames must be at least {MIN_FRAME_SIZE}x{MIN_FRAME_SIZE}, got {a.width}x{a.height}")

    pyr_a = [_presmooth(level) for level in _pyramid(a.gray(), params.levels)]
    pyr_b = [_presmooth(level) for level in _pyramid(b.gray(), params.levels)]
    flow = np.zeros(pyr_a[-1].shape + (2,))
    for level in range(len(pyr_a) - 1, -1, -1):
        if flow.shape[:2] != pyr_a[level].shape:
            flow = _upsample_flow(flow, pyr_a[level].shape)
        flow = _refine_level(pyr_a[level], pyr_b[level], flow, params)
    # targets clamped to the frame once, after refinement
    grid_y, grid_x = np.mgrid[0:a.height, 0:a.width].astype(np.float64)
    flow[..., 0] = np.clip(flow[..., 0], -grid_x, (a.width - 1) - grid_x)
    flow[..., 1] = np.clip(flow[..., 1], -grid_y, (a.height - 1) - grid_y)
    return FlowField(flow)


# --- corners and homography ---

def detect_corners(gray: np.ndarray, params: HomographyParams | None = None) -> np.ndarray:
    """Top-K minimum-eigenvalue corners as an (N, 2) array of (x, y), strongest first."""
    params = params or HomographyParams()
    smoothed = ndimage.gaussian_filter(gray, sigma=1.0, mode="nearest")
    ix = ndimage.sobel(smoothed, axis=1, mode="nearest")
    iy = ndimage.sobel(smoothed, axis=0, mode="nearest")
    sxx = ndimage.gaussian_filter(ix * ix, sigma=1.5, mode="nearest")
    sxy = ndimage.gaussian_filter(ix * iy, sigma=1.5, mode="nearest")
    syy = ndimage.gaussian_filter(iy * iy, sigma=1.5, mode="nearest")
    response = 0.5 * (sxx + syy - np.sqrt((sxx - syy) ** 2 + 4.0 * sxy * sxy))

    peak_value = float(response.max(initial=0.0))
    if peak_value <= 1e-12:
        return np.empty((0, 2))
    peaks = (response == ndimage.maximum_filter(response, size=params.nms_size, mode="nearest"))
    peaks &= response > params.quality * peak_value
    if params.border:
        peaks[:params.border, :] = False
        peaks[-params.border:, :] = False
        peaks[:, :params.border] = False
        peaks[:, -params.border:] = False
    ys, xs = np.nonzero(peaks)
    order = np.lexsort((xs, ys, -response[ys, xs]))[:params.max_corners]
    return np.column_stack([xs[order], ys[order]]).astype(np.float64)


def _project(h: np.ndarray, points: np.ndarray) -> np.ndarray:
    homogeneous = np.column_stack([points, np.ones(len(points))]) @ h.T
    with np.errstate(divide="ignore", invalid="ignore"):
        return homogeneous[:, :2] / homogeneous[:, 2:3]


def _normalize_points(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    center = points.mean(axis=0)
    spread = np.sqrt(((points - center) ** 2).sum(axis=1)).mean() + 1e-12
    s = math.sqrt(2.0) / spread
    t = np.array([[s, 0.0, -s * center[0]], [0.0, s, -s * center[1]], [0.0, 0.0, 1.0]])
    return (points - center) * s, t


def _dlt(src: np.ndarray, dst: np.ndarray) -> np.ndarray | None:
    """Normalized direct linear transform; None when the system is degenerate."""
    src_n, t_src = _normalize_points(src)
    dst_n, t_dst = _normalize_points(dst)
    x, y = src_n[:, 0], src_n[:, 1]
    u, v = dst_n[:, 0], dst_n[:, 1]
    n = len(src)
    zeros, ones = np.zeros(n), np.ones(n)
    a = np.empty((2 * n, 9))
    a[0::2] = np.column_stack([x, y, ones, zeros, zeros, zeros, -u * x, -u * y, -u])
    a[1::2] = np.column_stack([zeros, zeros, zeros, x, y, ones, -v * x, -v * y, -v])
    _, singular, vt = np.linalg.svd(a)
    if singular[min(7, len(singular) - 1)] < 1e-10:
        return None
    h_n = vt[-1].reshape(3, 3)
    h = np.linalg.inv(t_dst) @ h_n @ t_src
    if abs(h[2, 2]) < 1e-12 or not np.all(np.isfinite(h)):
        return None
    h = h / h[2, 2]
    if abs(np.linalg.det(h)) <= 1e-9:
        return None
    return h


def _non_collinear(points: np.ndarray, min_area: float = 1.0) -> bool:
    a, b, c, d = points
    def area(p, q, r):
        return 0.5 * abs((q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]))
    return min(area(a, b, c), area(a, b, d), area(a, c, d), area(b, c, d)) > min_area


def _reprojection_error(h: np.ndarray, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    err = np.linalg.norm(_project(h, src) - dst, axis=1)
    return np.where(np.isfinite(err), err, np.inf)


def fit_homography(src: np.ndarray, dst: np.ndarray, params: HomographyParams | None = None) -> Homography:
    """RANSAC over 4-point samples, then a least-squares refit on the inliers."""
    params = params or HomographyParams()
    n = len(src)
    if n < 4:
        raise InsufficientCorners(n, 4)
    rng = np.random.default_rng(params.seed)
    threshold = params.inlier_threshold

    best_inliers: np.ndarray | None = None
    best_count = 0
    needed = params.ransac_iterations
    iteration = 0
    while iteration < min(params.ransac_iterations, needed):
        iteration += 1
        sample = rng.choice(n, size=4, replace=False)
        if not (_non_collinear(src[sample]) and _non_collinear(dst[sample])):
            continue
        h = _dlt(src[sample], dst[sample])
        if h is None:
            continue
        inliers = _reprojection_error(h, src, dst) < threshold
        count = int(inliers.sum())
        if count > best_count:
            best_count, best_inliers = count, inliers
            ratio = count / n
            if ratio >= 1.0:
                needed = iteration
            else:
                needed = math.ceil(math.log(1.0 - params.confidence) / math.log(1.0 - ratio ** 4))

    if best_inliers is None or best_count < 4:
        raise DegenerateConfiguration("no non-degenerate homography hypothesis found")

    inliers = best_inliers
    h = None
    for _ in range(2):
        refit = _dlt(src[inliers], dst[inliers])
        if refit is None:
            break
        h = refit
        refined = _reprojection_error(h, src, dst) < threshold
        if refined.sum() < 4:
            break
        inliers = refined
    if h is None:
        raise DegenerateConfiguration("inlier set is degenerate")

    ratio = float(inliers.mean())
    logger.debug("homography: %d/%d inliers after %d iterations", int(inliers.sum()), n, iteration)
    if ratio < params.min_inlier_ratio:
        raise DegenerateConfiguration(f"inlier ratio {ratio:.2f} below {params.min_inlier_ratio}")
    return Homography(h, inlier_ratio=ratio, inliers=int(inliers.sum()), correspondences=n)


def estimate_homography(
    a: Frame,
    b: Frame,
    params: HomographyParams | None = None,
    *,
    flow: FlowField | None = None,
    flow_params: FlowParams | None = None,
) -> Homography:
    """Global motion from ``a`` to ``b``.

    Correspondences are the corners of ``a`` displaced by the dense flow, which is
    estimated here unless ``flow`` is given.
    """
    params = params or HomographyParams()
    _check_same_size(a, b)
    corners = detect_corners(a.gray(), params)
    if len(corners) < params.min_corners:
        raise InsufficientCorners(len(corners), params.min_corners)
    if flow is None:
        flow = estimate_flow(a, b, flow_params)
    elif flow.shape != (a.height, a.width):
        raise DimensionMismatch(f"flow {flow.width}x{flow.height} does not match frames {a.width}x{a.height}")
    xs = corners[:, 0].astype(int)
    ys = corners[:, 1].astype(int)
    dst = corners + flow.vectors[ys, xs]
    return fit_homography(corners, dst, params)


def homography_induced_flow(h: Homography, width: int, height: int) -> FlowField:
    """Per-pixel ``H(x) - x``."""
    m = h.matrix
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    w = m[2, 0] * xs + m[2, 1] * ys + m[2, 2]
    if np.any(np.abs(w) < 1e-9):
        raise PointAtInfinity("homography maps a pixel to infinity")
    mapped_x = (m[0, 0] * xs + m[0, 1] * ys + m[0, 2]) / w
    mapped_y = (m[1, 0] * xs + m[1, 1] * ys + m[1, 2]) / w
    return FlowField(np.stack([mapped_x - xs, mapped_y - ys], axis=-1))


def subtract_global_motion(flow: FlowField, induced: FlowField) -> FlowField:
    if flow.shape != induced.shape:
        raise DimensionMismatch(f"flow {flow.width}x{flow.height} vs induced {induced.width}x{induced.height}")
    return FlowField(flow.vectors - induced.vectors)


# --- backends ---

class FlowBackend(Protocol):
    name: str

    def estimate(self, a: Frame, b: Frame) -> FlowField: ...


@dataclass(frozen=True)
class ClassicalFlowBackend:
    params: FlowParams = field(default_factory=FlowParams)
    name: str = "pyramidal-lk"

    def estimate(self, a: Frame, b: Frame) -> FlowField:
        return estimate_flow(a, b, self.params)


@dataclass(frozen=True)
class PrecomputedFlowBackend:
    """Reads ``<a.index:06d>_<b.index:06d>.flo`` files written by any external estimator."""
    directory: Path
    name: str = "precomputed"

    def path_for(self, a: Frame, b: Frame) -> Path:
        return Path(self.directory) / f"{a.index:06d}_{b.index:06d}.flo"

    def estimate(self, a: Frame, b: Frame) -> FlowField:
        flow = read_flo(self.path_for(a, b))
        if flow.shape != (a.height, a.width):
            raise DimensionMismatch(
                f"precomputed flow {flow.width}x{flow.height} does not match frames {a.width}x{a.height}"
            )
        return flow


def read_flo(path: Path) -> FlowField:
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise FlowFormatError(f"cannot read flow file {path}: {e}") from None
    if len(data) < 12 or data[:4] != FLO_MAGIC:
        raise FlowFormatError(f"{path} is not a FLO1 file")
    width, height = (int(v) for v in np.frombuffer(data, dtype="<u4", count=2, offset=4))
    expected = 12 + width * height * 2 * 4
    if len(data) != expected:
        raise FlowFormatError(f"{path} holds {len(data)} bytes, expected {expected} for {width}x{height}")
    vectors = np.frombuffer(data, dtype="<f4", offset=12).reshape(height, width, 2).astype(np.float64)
    return FlowField(vectors)


def write_flo(path: Path, flow: FlowField) -> None:
    header = FLO_MAGIC + np.array([flow.width, flow.height], dtype="<u4").tobytes()
    Path(path).write_bytes(header + flow.vectors.astype("<f4").tobytes())
