"""Target localizers and the localization distance error.

Any object with a ``locate(series) -> LandmarkTrack`` method can drive the
pipeline. Two classical trackers are provided: frame-to-frame normalized
cross-correlation and landmark propagation through registration fields.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import Protocol, Sequence, runtime_checkable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

from .core import CineSeries, LandmarkTrack, PixelPoint, min_max_normalize
from .errors import FlatTemplate, LengthMismatch, PointOutOfBounds
from .registration import RegistrationParams, propagate_landmark, register_series

__all__ = [
    "Localizer",
    "TemplateTrackerParams",
    "NccTemplateLocalizer",
    "PropagationLocalizer",
    "ncc_template_track",
    "propagation_localizer",
    "distance_error",
]


@runtime_checkable
class Localizer(Protocol):
    def locate(self, series: CineSeries) -> LandmarkTrack: ...


@dataclass(frozen=True)
class TemplateTrackerParams:
    template_radius: int = 7
    search_radius: int = 5
    refine_iterations: int = 2

    def __post_init__(self):
        if self.template_radius < 1 or self.search_radius < 1:
            raise ValueError("template and search radii must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


def _parabolic_offset(left: float, centre: float, right: float) -> float:
    denom = left - 2.0 * centre + right
    if denom >= 0:  # not a strict maximum
        return 0.0
    off = 0.5 * (left - right) / denom
    return float(np.clip(off, -0.5, 0.5))


def _ncc_scores(template: np.ndarray, region: np.ndarray) -> np.ndarray:
    """NCC of ``template`` against every same-sized window of ``region``."""
    k = template.shape
    t = template - template.mean()
    t_norm = np.sqrt(np.sum(t * t))
    win = sliding_window_view(region, k)
    wm = win.mean(axis=(-2, -1), keepdims=True)
    wc = win - wm
    num = np.einsum("ijkl,kl->ij", wc, t)
    w_norm = np.sqrt(np.sum(wc * wc, axis=(-2, -1)))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = num / (w_norm * t_norm)
    return np.where(w_norm > 0, out, -1.0)


def _match(frame_a: np.ndarray, frame_b: np.ndarray, px: float, py: float,
           params: TemplateTrackerParams, t: int) -> tuple[float, float]:
    """Displacement of the template of ``frame_a`` around (px, py) into ``frame_b``."""
    r, s = params.template_radius, params.search_radius
    h, w = frame_a.shape
    # keep template and search window inside the frame
    cx = int(np.clip(round(px), r, w - 1 - r))
    cy = int(np.clip(round(py), r, h - 1 - r))
    template = frame_a[cy - r:cy + r + 1, cx - r:cx + r + 1]
    if np.ptp(template) == 0:
        raise FlatTemplate(f"template in frame {t} has zero variance")
    y_lo, y_hi = max(cy - s - r, 0), min(cy + s + r, h - 1)
    x_lo, x_hi = max(cx - s - r, 0), min(cx + s + r, w - 1)
    scores = _ncc_scores(template, frame_b[y_lo:y_hi + 1, x_lo:x_hi + 1])
    iy, ix = np.unravel_index(int(np.argmax(scores)), scores.shape)
    sub_y = sub_x = 0.0
    if 0 < iy < scores.shape[0] - 1:
        sub_y = _parabolic_offset(scores[iy - 1, ix], scores[iy, ix], scores[iy + 1, ix])
    if 0 < ix < scores.shape[1] - 1:
        sub_x = _parabolic_offset(scores[iy, ix - 1], scores[iy, ix], scores[iy, ix + 1])
    # window top-left in region coords -> matched centre
    mx = x_lo + ix + r + sub_x
    my = y_lo + iy + r + sub_y
    # re-centre the 3x3 neighbourhood on the sub-pixel estimate and fit again;
    # a parabola is least biased for a peak close to a sample
    offs = np.arange(-r - 1, r + 2, dtype=float)
    coeffs = ndimage.spline_filter(frame_b, order=3, mode="nearest")
    for _ in range(params.refine_iterations):
        if not (r + 1 <= mx <= w - r - 2 and r + 1 <= my <= h - r - 2):
            break
        yy, xx = np.meshgrid(my + offs, mx + offs, indexing="ij")
        region = ndimage.map_coordinates(coeffs, np.stack([yy, xx]), order=3,
                                         mode="nearest", prefilter=False)
        sc = _ncc_scores(template, region)
        oy = _parabolic_offset(sc[0, 1], sc[1, 1], sc[2, 1])
        ox = _parabolic_offset(sc[1, 0], sc[1, 1], sc[1, 2])
        mx += ox
        my += oy
        if max(abs(ox), abs(oy)) < 1e-4:
            break
    return mx - cx, my - cy


def ncc_template_track(series: CineSeries, p0: PixelPoint,
                       params: TemplateTrackerParams | None = None) -> LandmarkTrack:
    """Track a point by matching a square template between consecutive frames.

    The integer NCC peak within ``search_radius`` is refined by a 3-point
    parabola per axis, and the template is re-cut from each newly matched
    frame. A parabola through an asymmetric correlation peak is biased even at
    zero motion, so every step is estimated forward and backward and the two
    estimates are averaged, which cancels that bias to first order.
    """
    params = params or TemplateTrackerParams()
    r = params.template_radius
    h, w = series.frame_shape
    cx, cy = int(round(p0.x)), int(round(p0.y))
    if cx - r < 0 or cy - r < 0 or cx + r >= w or cy + r >= h:
        raise PointOutOfBounds(f"template window around {p0} does not fit in frame 0")
    frames = series.frames
    pts = [np.array([p0.x, p0.y], dtype=float)]
    for t in range(series.n_frames - 1):
        px, py = pts[-1]
        fx, fy = _match(frames[t], frames[t + 1], px, py, params, t)
        bx, by = _match(frames[t + 1], frames[t], px + fx, py + fy, params, t + 1)
        nxt = np.array([px + 0.5 * (fx - bx), py + 0.5 * (fy - by)])
        nxt[0] = min(max(nxt[0], 0.0), w - 1.0)
        nxt[1] = min(max(nxt[1], 0.0), h - 1.0)
        pts.append(nxt)
    return LandmarkTrack(np.array(pts))


def propagation_localizer(series: CineSeries, p0: PixelPoint,
                          reg_params: RegistrationParams | None = None,
                          workers: int = 1) -> LandmarkTrack:
    """Annotate frame 0 and carry the point forward through registration fields."""
    if not p0.in_bounds(series.frame_shape):
        raise PointOutOfBounds(f"start point {p0} outside the frame")
    normalized, _ = min_max_normalize(series)
    fields = register_series(normalized, reg_params, workers=workers)
    return propagate_landmark(p0, fields)


@dataclass(frozen=True)
class NccTemplateLocalizer:
    p0: PixelPoint
    params: TemplateTrackerParams = TemplateTrackerParams()

    def locate(self, series: CineSeries) -> LandmarkTrack:
        return ncc_template_track(series, self.p0, self.params)


@dataclass(frozen=True)
class PropagationLocalizer:
    p0: PixelPoint
    reg_params: RegistrationParams = RegistrationParams()
    workers: int = 1

    def locate(self, series: CineSeries) -> LandmarkTrack:
        return propagation_localizer(series, self.p0, self.reg_params, self.workers)


def distance_error(predicted: Sequence[LandmarkTrack], truth: Sequence[LandmarkTrack],
                   spacing) -> tuple[float, float]:
    """Mean and population std, over datasets, of the per-dataset mean distance in mm.

    ``spacing`` is one ``(row, col)`` pair for all datasets or one pair per
    dataset.
    """
    if len(predicted) != len(truth):
        raise LengthMismatch(f"{len(predicted)} predicted vs {len(truth)} reference tracks")
    if not predicted:
        raise LengthMismatch("no tracks given")
    sp = np.asarray(spacing, dtype=float)
    if sp.ndim == 1:
        sp = np.tile(sp, (len(predicted), 1))
    per_dataset = []
    for p, t, (sr, sc) in zip(predicted, truth, sp):
        if len(p) != len(t):
            raise LengthMismatch(f"track lengths {len(p)} and {len(t)} differ")
        d = (p.xy - t.xy) * np.array([sc, sr])
        per_dataset.append(float(np.mean(np.hypot(d[:, 0], d[:, 1]))))
    arr = np.array(per_dataset)
    return float(arr.mean()), float(arr.std())
