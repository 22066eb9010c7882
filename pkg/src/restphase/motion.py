"""Per-transition motion values from deformation fields and target tracks.

Five aggregations are supported, each producing one value per frame
transition ``t -> t+1``:

``dist``      distance between consecutive track points
``pct(n)``    n-th percentile of field magnitudes over the ROI
``mean``      mean field magnitude over the ROI
``wpct(n)``   n-th percentile of Gaussian-weighted magnitudes
``wmean``     mean of Gaussian-weighted magnitudes

The Gaussian is ``exp(-|x - p_t|^2 / sigma^2)`` (no factor 2), centred on the
midpoint of the track points at ``t`` and ``t+1``. ``wpct(50)`` is the default
motion measure.
"""

from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import LandmarkTrack, PixelPoint
from .errors import BadVariant, EmptyInput, LengthMismatch
from .registration import DeformationField

__all__ = [
    "DEFAULT_SIGMA",
    "MotionVariant",
    "MotionParams",
    "MotionCurve",
    "GaussianWeightMap",
    "percentile",
    "gaussian_weights",
    "motion_curve",
    "median_weighted_motion",
    "all_variants",
]

DEFAULT_SIGMA = 12.0

_KINDS = ("dist", "pct", "mean", "wpct", "wmean")
_PATTERN = re.compile(r"^\s*(dist|pct|mean|wpct|wmean)\s*(?:\(\s*([0-9.]+)\s*\))?\s*$")


@dataclass(frozen=True)
class MotionVariant:
    kind: str = "wpct"
    percentile: float | None = 50.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise BadVariant(f"unknown motion variant {self.kind!r}")
        if self.kind in ("pct", "wpct"):
            if self.percentile is None or not 0 <= self.percentile <= 100:
                raise BadVariant(f"{self.kind} needs a percentile in [0, 100]")
            object.__setattr__(self, "percentile", float(self.percentile))
        else:
            object.__setattr__(self, "percentile", None)

    @classmethod
    def parse(cls, text: "str | MotionVariant", percentile: float | None = None) -> "MotionVariant":
        """Parse ``"wpct(50)"``, ``"pct"`` (with ``percentile``), ``"mean"`` and so on."""
        if isinstance(text, MotionVariant):
            return text
        m = _PATTERN.match(str(text))
        if not m:
            raise BadVariant(f"cannot parse motion variant {text!r}")
        kind, n = m.group(1), m.group(2)
        if n is not None:
            percentile = float(n)
        elif kind in ("pct", "wpct") and percentile is None:
            percentile = 50.0
        return cls(kind, percentile)

    @property
    def weighted(self) -> bool:
        return self.kind in ("wpct", "wmean")

    def __str__(self) -> str:
        if self.percentile is None:
            return self.kind
        return f"{self.kind}({self.percentile:g})"


@dataclass(frozen=True)
class MotionParams:
    sigma: float = DEFAULT_SIGMA
    # aggregate squared magnitudes instead of magnitudes (comparison only)
    squared: bool = False

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")


@dataclass(frozen=True)
class GaussianWeightMap:
    weights: np.ndarray
    center: PixelPoint
    sigma: float


@dataclass(frozen=True)
class MotionCurve:
    """One value per transition; ``frame_times`` holds all T frame trigger times."""

    values: np.ndarray
    frame_times: np.ndarray
    variant: str
    sigma: float | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        t = np.array(self.frame_times, dtype=np.float64)
        if t.shape != (v.shape[0] + 1,):
            raise LengthMismatch(f"{v.shape[0]} values need {v.shape[0] + 1} frame times")
        v.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "frame_times", t)

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def transition_times(self) -> np.ndarray:
        return self.frame_times[:-1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["transition_index", "trigger_time_ms", "value", "variant"])
        for i, (t, v) in enumerate(zip(self.transition_times, self.values)):
            wr.writerow([i, repr(float(t)), repr(float(v)), self.variant])
        return buf.getvalue()


def percentile(values, n: float) -> float:
    """n-th percentile with linear interpolation between closest ranks.

    The rank is ``(N - 1) * n / 100``; ``n = 50`` is the median and
    ``n = 100`` the maximum.
    """
    a = np.asarray(values, dtype=np.float64).ravel()
    if a.size == 0:
        raise EmptyInput("percentile of an empty set")
    if not 0 <= n <= 100:
        raise ValueError(f"percentile {n} outside [0, 100]")
    h = (n / 100.0) * (a.size - 1)
    lo = int(math.floor(h))
    hi = min(lo + 1, a.size - 1)
    part = np.partition(a, (lo, hi)) if hi != lo else np.partition(a, lo)
    f = h - lo
    if f == 0.0:
        return float(part[lo])
    return float((1.0 - f) * part[lo] + f * part[hi])


def gaussian_weights(p: PixelPoint, dims: tuple[int, int], sigma: float = DEFAULT_SIGMA) -> GaussianWeightMap:
    """``exp(-|x - p|^2 / sigma^2)`` evaluated at every pixel centre of a ``dims`` grid."""
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    h, w = dims
    dy2 = (np.arange(h, dtype=np.float64) - p.y) ** 2
    dx2 = (np.arange(w, dtype=np.float64) - p.x) ** 2
    g = np.exp(-(dy2[:, None] + dx2[None, :]) / (sigma * sigma))
    return GaussianWeightMap(g, p, float(sigma))


def _magnitudes(field: DeformationField, squared: bool, spacing) -> np.ndarray:
    mag = field.magnitude(spacing)
    return mag * mag if squared else mag


def _midpoint(track: LandmarkTrack, t: int) -> PixelPoint:
    a, b = track.xy[t], track.xy[t + 1]
    return PixelPoint(float(0.5 * (a[0] + b[0])), float(0.5 * (a[1] + b[1])))


def motion_curve(fields: Sequence[DeformationField], track: LandmarkTrack,
                 variant: "MotionVariant | str" = "wpct(50)",
                 params: MotionParams | None = None,
                 trigger_times=None, spacing=None) -> MotionCurve:
    """Motion value per transition.

    Args:
        fields: ``T-1`` fields on the ROI grid.
        track: ``T`` target positions in ROI pixel coordinates.
        variant: aggregation, e.g. ``"wpct(50)"`` or a :class:`MotionVariant`.
        params: Gaussian sigma (pixels) and the squared-magnitude switch.
        trigger_times: ``T`` frame times in ms; frame indices if omitted.
        spacing: ``(row, col)`` mm per pixel to report magnitudes in mm.
    """
    variant = MotionVariant.parse(variant)
    params = params or MotionParams()
    n_t = len(track)
    if len(fields) != n_t - 1:
        raise LengthMismatch(f"{len(fields)} fields for a track of {n_t} points")
    times = np.arange(n_t, dtype=float) if trigger_times is None else np.asarray(trigger_times, float)
    if times.shape != (n_t,):
        raise LengthMismatch(f"{times.shape[0]} trigger times for {n_t} frames")
    values = np.empty(n_t - 1)
    for t in range(n_t - 1):
        if variant.kind == "dist":
            d = track.xy[t + 1] - track.xy[t]
            if spacing is not None:
                d = d * np.array([spacing[1], spacing[0]])
            v = float(np.hypot(d[0], d[1]))
            values[t] = v * v if params.squared else v
            continue
        mag = _magnitudes(fields[t], params.squared, spacing)
        if variant.weighted:
            mag = gaussian_weights(_midpoint(track, t), mag.shape, params.sigma).weights * mag
        if variant.kind in ("pct", "wpct"):
            values[t] = percentile(mag, variant.percentile)
        else:
            values[t] = float(np.mean(mag))
    return MotionCurve(values, times, str(variant), params.sigma if variant.weighted else None)


def median_weighted_motion(fields: Sequence[DeformationField], track: LandmarkTrack,
                           sigma: float = DEFAULT_SIGMA, squared: bool = False) -> np.ndarray:
    """Median of Gaussian-weighted field magnitudes, written out directly."""
    out = []
    for t, f in enumerate(fields):
        a, b = track.xy[t], track.xy[t + 1]
        px, py = 0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])
        h, w = f.shape
        yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
        g = np.exp(-((yy - py) ** 2 + (xx - px) ** 2) / (sigma * sigma))
        mag = np.hypot(f.dx, f.dy)
        if squared:
            mag = mag * mag
        out.append(float(np.median(g * mag)))
    return np.array(out)


def all_variants(percentiles: Sequence[float] = tuple(range(10, 101, 10))) -> list[MotionVariant]:
    """Every aggregation in table order: dist, pct(n)..., mean, wpct(n)..., wmean."""
    out = [MotionVariant("dist")]
    out += [MotionVariant("pct", n) for n in percentiles]
    out.append(MotionVariant("mean"))
    out += [MotionVariant("wpct", n) for n in percentiles]
    out.append(MotionVariant("wmean"))
    return out
