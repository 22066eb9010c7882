"""Domain types, coordinate conventions and series preprocessing.

Coordinates follow one global convention: ``x`` is the column, ``y`` the row,
the origin sits at the top-left pixel centre and pixel centres lie on integer
coordinates. Resampling uses the align-corners convention, so index ``0`` and
index ``N-1`` map onto each other for every axis.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy import ndimage

from .errors import InvalidSeries

__all__ = [
    "CineSeries",
    "PixelPoint",
    "LandmarkTrack",
    "Roi",
    "NormalizationReport",
    "min_max_normalize",
    "resample_series",
    "map_point_resampled_to_original",
    "map_track_resampled_to_original",
]


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class CineSeries:
    """One cardiac cycle of 2-D frames.

    Attributes:
        frames: ``(T, H, W)`` intensity grid.
        pixel_spacing: ``(row, col)`` spacing in mm/pixel.
        trigger_times: ``T`` strictly increasing times in ms, the first being 0.
        rr_interval: cycle length in ms.
        resampled_from: ``(T, H, W)`` of the series this one was resampled
            from, if any. Used to map coordinates back.
    """

    frames: np.ndarray
    pixel_spacing: tuple[float, float]
    trigger_times: np.ndarray
    rr_interval: float
    resampled_from: tuple[int, int, int] | None = None

    def __post_init__(self):
        frames = np.array(self.frames, dtype=np.float64)
        times = np.array(self.trigger_times, dtype=np.float64)
        spacing = (float(self.pixel_spacing[0]), float(self.pixel_spacing[1]))
        if frames.ndim != 3:
            raise InvalidSeries(f"frames must be 3-D (T, H, W), got shape {frames.shape}")
        t, h, w = frames.shape
        if t < 2 or h < 8 or w < 8:
            raise InvalidSeries(f"need T >= 2 and H, W >= 8, got {frames.shape}")
        if not np.all(np.isfinite(frames)):
            raise InvalidSeries("frames contain non-finite intensities")
        if times.shape != (t,):
            raise InvalidSeries(f"expected {t} trigger times, got {times.shape}")
        if times[0] != 0.0 or np.any(np.diff(times) <= 0):
            raise InvalidSeries("trigger times must start at 0 and increase strictly")
        if not times[-1] < self.rr_interval:
            raise InvalidSeries("last trigger time must be below the RR interval")
        if min(spacing) <= 0:
            raise InvalidSeries("pixel spacing must be positive")
        object.__setattr__(self, "frames", _frozen(frames))
        object.__setattr__(self, "trigger_times", _frozen(times))
        object.__setattr__(self, "pixel_spacing", spacing)
        object.__setattr__(self, "rr_interval", float(self.rr_interval))

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(n) for n in self.frames.shape)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def frame_shape(self) -> tuple[int, int]:
        return self.frames.shape[1], self.frames.shape[2]

    @property
    def temporal_resolution(self) -> float:
        return float(np.mean(np.diff(self.trigger_times)))

    def with_frames(self, frames: np.ndarray, **changes) -> "CineSeries":
        return replace(self, frames=frames, **changes)


@dataclass(frozen=True)
class PixelPoint:
    x: float
    y: float

    def __iter__(self):
        yield self.x
        yield self.y

    def in_bounds(self, shape: tuple[int, int]) -> bool:
        h, w = shape
        return bool(np.isfinite(self.x) and np.isfinite(self.y)
                    and 0 <= self.x < w and 0 <= self.y < h)


@dataclass(frozen=True)
class LandmarkTrack:
    """Per-frame target position; ``xy`` has shape ``(T, 2)`` with columns x, y."""

    xy: np.ndarray

    def __post_init__(self):
        xy = np.array(self.xy, dtype=np.float64).reshape(-1, 2)
        if not np.all(np.isfinite(xy)):
            raise ValueError("track contains non-finite coordinates")
        object.__setattr__(self, "xy", _frozen(xy))

    @classmethod
    def from_points(cls, points: Sequence[PixelPoint]) -> "LandmarkTrack":
        return cls(np.array([[p.x, p.y] for p in points], dtype=np.float64))

    def __len__(self) -> int:
        return self.xy.shape[0]

    def __getitem__(self, i: int) -> PixelPoint:
        x, y = self.xy[i]
        return PixelPoint(float(x), float(y))

    @property
    def points(self) -> list[PixelPoint]:
        return [self[i] for i in range(len(self))]

    def shifted(self, dx: float, dy: float) -> "LandmarkTrack":
        return LandmarkTrack(self.xy + np.array([dx, dy]))

    def in_bounds(self, shape: tuple[int, int]) -> bool:
        h, w = shape
        x, y = self.xy[:, 0], self.xy[:, 1]
        return bool(np.all((x >= 0) & (x < w) & (y >= 0) & (y < h)))


@dataclass(frozen=True)
class Roi:
    """Axis-aligned crop box. ``origin`` is the integer top-left pixel."""

    origin: PixelPoint
    size: tuple[int, int]  # (height, width)

    def __post_init__(self):
        if self.size[0] <= 0 or self.size[1] <= 0:
            raise ValueError(f"ROI size must be positive, got {self.size}")

    @property
    def x0(self) -> int:
        return int(self.origin.x)

    @property
    def y0(self) -> int:
        return int(self.origin.y)

    def to_dict(self) -> dict:
        return {"x": self.x0, "y": self.y0, "height": int(self.size[0]), "width": int(self.size[1])}

    @classmethod
    def from_dict(cls, d: dict) -> "Roi":
        return cls(PixelPoint(int(d["x"]), int(d["y"])), (int(d["height"]), int(d["width"])))


@dataclass(frozen=True)
class NormalizationReport:
    min: float
    max: float
    constant: bool = False


def min_max_normalize(series: CineSeries) -> tuple[CineSeries, NormalizationReport]:
    """Affinely rescale intensities of the whole series onto [0, 1].

    A constant series cannot be rescaled; it is mapped to zeros and the
    returned report has ``constant=True``.
    """
    lo = float(series.frames.min())
    hi = float(series.frames.max())
    if hi == lo:
        return series.with_frames(np.zeros_like(series.frames)), NormalizationReport(lo, hi, True)
    out = (series.frames - lo) / (hi - lo)
    return series.with_frames(out), NormalizationReport(lo, hi)


def _axis_coords(n_src: int, n_dst: int) -> np.ndarray:
    if n_dst == 1 or n_src == 1:
        return np.zeros(n_dst)
    return np.arange(n_dst) * ((n_src - 1) / (n_dst - 1))


def resample_series(series: CineSeries, target: tuple[int, int, int]) -> CineSeries:
    """Trilinear resampling over (t, y, x) to ``target = (T', H', W')``.

    Trigger times are linearly interpolated on the frame index and pixel
    spacing is scaled by ``H/H'`` and ``W/W'``.
    """
    tt, th, tw = (int(n) for n in target)
    if min(tt, th, tw) < 2:
        raise ValueError(f"target dims must be >= 2, got {target}")
    t, h, w = series.dims
    if (tt, th, tw) == (t, h, w):
        return series
    ct, cy, cx = (_axis_coords(a, b) for a, b in ((t, tt), (h, th), (w, tw)))
    grid = np.meshgrid(ct, cy, cx, indexing="ij")
    frames = ndimage.map_coordinates(series.frames, grid, order=1, mode="nearest")
    times = np.interp(ct, np.arange(t), series.trigger_times)
    spacing = (series.pixel_spacing[0] * h / th, series.pixel_spacing[1] * w / tw)
    return CineSeries(frames, spacing, times, series.rr_interval, resampled_from=(t, h, w))


def _scale(n_src: int, n_dst: int) -> float:
    if n_src <= 1 or n_dst <= 1:
        return 0.0
    return (n_dst - 1) / (n_src - 1)


def map_point_resampled_to_original(p: PixelPoint, src_dims: Sequence[int],
                                    dst_dims: Sequence[int]) -> PixelPoint:
    """Map a point from a grid of ``src_dims`` onto a grid of ``dst_dims``.

    Dims are ``(H, W)``; a leading frame count is ignored if given. Calling
    with the arguments swapped is the forward map.
    """
    sh, sw = tuple(src_dims)[-2:]
    dh, dw = tuple(dst_dims)[-2:]
    if min(sh, sw, dh, dw) < 1:
        raise ValueError("dims must be >= 1")
    return PixelPoint(p.x * _scale(sw, dw), p.y * _scale(sh, dh))


def map_track_resampled_to_original(track: LandmarkTrack, resampled: CineSeries,
                                    original: CineSeries) -> LandmarkTrack:
    """Bring a track found on a resampled series back onto the original frames.

    In-plane coordinates use the align-corners scale, and the temporal axis is
    linearly interpolated from resampled frame times to original frame times.
    """
    sx = _scale(resampled.frame_shape[1], original.frame_shape[1])
    sy = _scale(resampled.frame_shape[0], original.frame_shape[0])
    xy = track.xy * np.array([sx, sy])
    if resampled.n_frames == original.n_frames:
        return LandmarkTrack(xy)
    # frame index in the resampled series for each original frame (align-corners)
    pos = np.arange(original.n_frames) * _scale(original.n_frames, resampled.n_frames)
    src = np.arange(resampled.n_frames)
    return LandmarkTrack(np.column_stack([np.interp(pos, src, xy[:, 0]), np.interp(pos, src, xy[:, 1])]))
