"""Fixed physical-size ROI around a tracked target."""

from __future__ import annotations

import math

from .core import CineSeries, LandmarkTrack, PixelPoint, Roi
from .errors import RoiLargerThanImage, RoiOutOfBounds

__all__ = ["DEFAULT_ROI_MM", "roi_from_track", "crop_series", "even_pixels"]

DEFAULT_ROI_MM = (50.0, 50.0)


def even_pixels(length_mm: float, spacing_mm: float) -> int:
    """Physical length in pixels, rounded to the nearest even count (ties upward)."""
    return 2 * int(math.floor(length_mm / spacing_mm / 2.0 + 0.5))


def roi_from_track(track: LandmarkTrack, series: CineSeries,
                   roi_size_mm: tuple[float, float] = DEFAULT_ROI_MM) -> Roi:
    """One box for the whole series, centred on the track's bounding box.

    Near the border the box is shifted inward rather than shrunk.
    """
    if len(track) == 0:
        raise ValueError("empty track")
    h, w = series.frame_shape
    if not track.in_bounds((h, w)):
        raise ValueError("track has points outside the frame")
    xs, ys = track.xy[:, 0], track.xy[:, 1]
    cx = (xs.min() + xs.max()) / 2.0
    cy = (ys.min() + ys.max()) / 2.0
    rh = even_pixels(roi_size_mm[0], series.pixel_spacing[0])
    rw = even_pixels(roi_size_mm[1], series.pixel_spacing[1])
    if rh < 2 or rw < 2:
        raise ValueError(f"ROI of {roi_size_mm} mm is below two pixels")
    if rh > h or rw > w:
        raise RoiLargerThanImage(f"ROI {rh}x{rw} px does not fit a {h}x{w} frame")
    x0 = int(math.floor(cx - rw / 2.0 + 0.5))
    y0 = int(math.floor(cy - rh / 2.0 + 0.5))
    x0 = min(max(x0, 0), w - rw)
    y0 = min(max(y0, 0), h - rh)
    return Roi(PixelPoint(x0, y0), (rh, rw))


def crop_series(series: CineSeries, roi: Roi) -> CineSeries:
    h, w = series.frame_shape
    rh, rw = roi.size
    if roi.x0 < 0 or roi.y0 < 0 or roi.x0 + rw > w or roi.y0 + rh > h:
        raise RoiOutOfBounds(f"ROI {roi.to_dict()} exceeds a {h}x{w} frame")
    frames = series.frames[:, roi.y0:roi.y0 + rh, roi.x0:roi.x0 + rw]
    return series.with_frames(frames)


def track_to_roi(track: LandmarkTrack, roi: Roi) -> LandmarkTrack:
    return track.shifted(-roi.x0, -roi.y0)
