"""Demons-style elastic registration of consecutive frames.

Fields are backward maps: for a field ``d`` registering ``(fixed, moving)``,
``moving(x + d(x))`` approximates ``fixed(x)``. A point at ``x`` in the fixed
frame therefore sits at ``x + d(x)`` in the moving frame, which is what
landmark propagation relies on.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, asdict
from typing import Sequence

import numpy as np
from scipy import ndimage

from .core import CineSeries, LandmarkTrack, PixelPoint
from .errors import DimensionMismatch, PointOutOfBounds

log = logging.getLogger(__name__)

__all__ = [
    "DeformationField",
    "RegistrationParams",
    "register_pair",
    "register_series",
    "warp_image",
    "propagate_landmark",
    "sample_field",
    "ssd",
]


@dataclass(frozen=True)
class DeformationField:
    """Dense displacement in pixels; ``vectors[..., 0]`` is dx, ``[..., 1]`` is dy."""

    vectors: np.ndarray
    frame_pair: tuple[int, int] = (0, 1)

    def __post_init__(self):
        v = np.array(self.vectors, dtype=np.float64)
        if v.ndim != 3 or v.shape[2] != 2:
            raise ValueError(f"field vectors must have shape (H, W, 2), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field contains non-finite displacements")
        v.setflags(write=False)
        object.__setattr__(self, "vectors", v)
        object.__setattr__(self, "frame_pair", (int(self.frame_pair[0]), int(self.frame_pair[1])))

    @classmethod
    def zeros(cls, shape: tuple[int, int], frame_pair=(0, 1)) -> "DeformationField":
        return cls(np.zeros(shape + (2,)), frame_pair)

    @property
    def shape(self) -> tuple[int, int]:
        return self.vectors.shape[0], self.vectors.shape[1]

    @property
    def dx(self) -> np.ndarray:
        return self.vectors[..., 0]

    @property
    def dy(self) -> np.ndarray:
        return self.vectors[..., 1]

    def magnitude(self, spacing: tuple[float, float] | None = None) -> np.ndarray:
        """Per-pixel displacement length, in pixels or, given (row, col) spacing, mm."""
        if spacing is None:
            return np.hypot(self.dx, self.dy)
        return np.hypot(self.dx * spacing[1], self.dy * spacing[0])

    def scaled(self, k: float) -> "DeformationField":
        return DeformationField(self.vectors * k, self.frame_pair)

    def to_bytes(self) -> bytes:
        """Little-endian float32, row-major, interleaved (dx, dy)."""
        return np.ascontiguousarray(self.vectors, dtype="<f4").tobytes()

    def sidecar(self) -> dict:
        h, w = self.shape
        return {"schema_version": 1, "height": h, "width": w, "frame_pair": list(self.frame_pair),
                "dtype": "<f4", "layout": "row-major interleaved dx,dy"}

    @classmethod
    def from_bytes(cls, data: bytes, sidecar: dict) -> "DeformationField":
        h, w = int(sidecar["height"]), int(sidecar["width"])
        v = np.frombuffer(data, dtype="<f4").reshape(h, w, 2).astype(np.float64)
        return cls(v, tuple(sidecar["frame_pair"]))


@dataclass(frozen=True)
class RegistrationParams:
    pyramid_levels: int = 3
    iterations_per_level: int = 50
    smoothing_sigma: float = 2.0
    update_step: float = 1.0
    convergence_tol: float = 1e-3
    # smoothing applied to each update before it is added (fluid regularisation)
    fluid_sigma: float = 1.0
    # Gaussian pre-smoothing of both images against acquisition noise
    image_sigma: float = 1.0

    def __post_init__(self):
        if self.pyramid_levels < 1:
            raise ValueError("pyramid_levels must be >= 1")
        if self.iterations_per_level < 1:
            raise ValueError("iterations_per_level must be >= 1")
        if min(self.smoothing_sigma, self.fluid_sigma, self.image_sigma) < 0:
            raise ValueError("smoothing sigmas must be >= 0")
        if self.convergence_tol <= 0:
            raise ValueError("convergence_tol must be > 0")
        if self.update_step <= 0:
            raise ValueError("update_step must be > 0")

    def to_dict(self) -> dict:
        return asdict(self)


def ssd(a: np.ndarray, b: np.ndarray) -> float:
    """Mean squared intensity difference."""
    return float(np.mean((np.asarray(a) - np.asarray(b)) ** 2))


def _warp(img: np.ndarray, v: np.ndarray) -> np.ndarray:
    h, w = img.shape
    # bilinear with clamp-to-edge, written out: faster than map_coordinates on small grids
    y = np.clip(np.arange(h, dtype=float)[:, None] + v[..., 1], 0.0, h - 1.0)
    x = np.clip(np.arange(w, dtype=float)[None, :] + v[..., 0], 0.0, w - 1.0)
    y0 = np.minimum(np.floor(y).astype(np.intp), h - 2 if h > 1 else 0)
    x0 = np.minimum(np.floor(x).astype(np.intp), w - 2 if w > 1 else 0)
    fy = y - y0
    fx = x - x0
    top = img[y0, x0] * (1.0 - fx) + img[y0, x0 + 1] * fx
    bot = img[y0 + 1, x0] * (1.0 - fx) + img[y0 + 1, x0 + 1] * fx
    return top * (1.0 - fy) + bot * fy


def warp_image(moving: np.ndarray, field: DeformationField) -> np.ndarray:
    """Bilinear sampling of ``moving`` at ``x + d(x)``, clamped at the border."""
    moving = np.asarray(moving, dtype=np.float64)
    if moving.shape != field.shape:
        raise DimensionMismatch(f"image {moving.shape} vs field {field.shape}")
    return _warp(moving, field.vectors)


def _gaussian_kernel(sigma: float) -> np.ndarray:
    radius = int(4.0 * sigma + 0.5)
    x = np.arange(-radius, radius + 1, dtype=float)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def _smooth_field(v: np.ndarray, sigma: float, kernel: np.ndarray | None = None) -> np.ndarray:
    """Separable Gaussian smoothing of both field components at once."""
    if sigma <= 0:
        return v
    if kernel is None:
        kernel = _gaussian_kernel(sigma)
    out = ndimage.correlate1d(v, kernel, axis=0, mode="nearest")
    return ndimage.correlate1d(out, kernel, axis=1, mode="nearest")


def _resize(img: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    h, w = img.shape
    ys = np.linspace(0, h - 1, shape[0])
    xs = np.linspace(0, w - 1, shape[1])
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return ndimage.map_coordinates(img, np.stack([yy, xx]), order=1, mode="nearest")


def _pyramid(img: np.ndarray, levels: int) -> list[np.ndarray]:
    out = [img]
    for _ in range(levels - 1):
        prev = out[-1]
        shape = ((prev.shape[0] + 1) // 2, (prev.shape[1] + 1) // 2)
        if min(shape) < 8:
            break
        out.append(_resize(ndimage.gaussian_filter(prev, 1.0, mode="nearest"), shape))
    return out[::-1]


def _upsample_field(v: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    h, w = v.shape[:2]
    sx = (shape[1] - 1) / (w - 1)
    sy = (shape[0] - 1) / (h - 1)
    return np.stack([_resize(v[..., 0], shape) * sx, _resize(v[..., 1], shape) * sy], axis=-1)


def _demons_level(fixed: np.ndarray, moving: np.ndarray, v: np.ndarray,
                  params: RegistrationParams, track_best: bool) -> np.ndarray:
    gfy, gfx = np.gradient(fixed)
    k_fluid = _gaussian_kernel(params.fluid_sigma) if params.fluid_sigma > 0 else None
    k_diff = _gaussian_kernel(params.smoothing_sigma) if params.smoothing_sigma > 0 else None
    best_v, best_cost = v, np.inf
    for _ in range(params.iterations_per_level):
        warped = _warp(moving, v)
        diff = fixed - warped
        cost = float(np.mean(diff * diff))
        if track_best and cost < best_cost:
            best_v, best_cost = v, cost
        gwy, gwx = np.gradient(warped)
        # symmetric (ESM) gradient; |u| <= 0.5 px by construction of the denominator
        gx = 0.5 * (gfx + gwx)
        gy = 0.5 * (gfy + gwy)
        denom = gx * gx + gy * gy + diff * diff
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.where(denom > 1e-12, diff / denom, 0.0)
        u = np.stack([scale * gx, scale * gy], axis=-1) * params.update_step
        u = _smooth_field(u, params.fluid_sigma, k_fluid)
        v_new = _smooth_field(v + u, params.smoothing_sigma, k_diff)
        step = v_new - v
        v = v_new
        if float(np.mean(np.hypot(step[..., 0], step[..., 1]))) < params.convergence_tol:
            break
    if track_best:
        diff = fixed - _warp(moving, v)
        if float(np.mean(diff * diff)) > best_cost:
            return best_v
    return v


def register_pair(fixed: np.ndarray, moving: np.ndarray,
                  params: RegistrationParams | None = None,
                  frame_pair: tuple[int, int] = (0, 1)) -> DeformationField:
    """Register ``moving`` onto ``fixed`` with coarse-to-fine demons.

    Images are expected on a [0, 1] intensity scale. The returned field never
    increases the SSD against ``fixed`` compared to no deformation.
    """
    params = params or RegistrationParams()
    fixed = np.asarray(fixed, dtype=np.float64)
    moving = np.asarray(moving, dtype=np.float64)
    if fixed.shape != moving.shape or fixed.ndim != 2:
        raise DimensionMismatch(f"fixed {fixed.shape} vs moving {moving.shape}")
    if params.image_sigma > 0:
        fixed_s = ndimage.gaussian_filter(fixed, params.image_sigma, mode="nearest")
        moving_s = ndimage.gaussian_filter(moving, params.image_sigma, mode="nearest")
    else:
        fixed_s, moving_s = fixed, moving
    fixed_pyr = _pyramid(fixed_s, params.pyramid_levels)
    moving_pyr = _pyramid(moving_s, params.pyramid_levels)
    v = np.zeros(fixed_pyr[0].shape + (2,))
    n = len(fixed_pyr)
    for lvl, (f, m) in enumerate(zip(fixed_pyr, moving_pyr)):
        if v.shape[:2] != f.shape:
            v = _upsample_field(v, f.shape)
        v = _demons_level(f, m, v, params, track_best=(lvl == n - 1))
    if ssd(fixed, _warp(moving, v)) > ssd(fixed, moving):
        v = np.zeros_like(v)
    return DeformationField(v, frame_pair)


def register_series(series: CineSeries, params: RegistrationParams | None = None,
                    workers: int = 1) -> list[DeformationField]:
    """Register every consecutive frame pair; field ``k`` maps frame k onto k+1."""
    params = params or RegistrationParams()
    frames = series.frames

    def one(k: int) -> DeformationField:
        return register_pair(frames[k], frames[k + 1], params, (k, k + 1))

    idx = range(series.n_frames - 1)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, idx))
    return [one(k) for k in idx]


def sample_field(field: DeformationField, p: PixelPoint) -> tuple[float, float]:
    """Bilinear field value at a fractional position (clamped to the grid)."""
    coords = np.array([[p.y], [p.x]])
    dx = ndimage.map_coordinates(field.dx, coords, order=1, mode="nearest")[0]
    dy = ndimage.map_coordinates(field.dy, coords, order=1, mode="nearest")[0]
    return float(dx), float(dy)


def propagate_landmark(p0: PixelPoint, fields: Sequence[DeformationField],
                       strict: bool = False) -> LandmarkTrack:
    """Carry a frame-0 point through consecutive fields: ``p[t+1] = p[t] + d_t(p[t])``.

    A point that leaves the image is clamped to the border and logged, or
    raises :class:`PointOutOfBounds` when ``strict`` is set.
    """
    if not fields:
        return LandmarkTrack(np.array([[p0.x, p0.y]]))
    h, w = fields[0].shape
    if not p0.in_bounds((h, w)):
        raise PointOutOfBounds(f"start point {p0} outside {w}x{h} frame")
    pts = [p0]
    for k, f in enumerate(fields):
        if f.shape != (h, w):
            raise DimensionMismatch("fields of a series must share one shape")
        p = pts[-1]
        dx, dy = sample_field(f, p)
        nxt = PixelPoint(p.x + dx, p.y + dy)
        if not nxt.in_bounds((h, w)):
            if strict:
                raise PointOutOfBounds(f"propagated point left the image at frame {k + 1}")
            log.warning("propagated point left the image at frame %d; clamped", k + 1)
            nxt = PixelPoint(min(max(nxt.x, 0.0), w - 1.0), min(max(nxt.y, 0.0), h - 1.0))
        pts.append(nxt)
    return LandmarkTrack.from_points(pts)
