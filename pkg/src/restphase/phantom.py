"""Synthetic CINE phantoms with analytically known rest plateaus.

A phantom frame is a smooth random tissue texture with a bright disk (the
target) on top. The target follows a closed-form displacement profile: it
is constant inside each configured rest interval and moves along a cosine
ramp between consecutive intervals. Optionally a second bright disk (the
distractor) moves on its own sinusoidal schedule and drags the surrounding
tissue with it, so motion that is off the target can be told apart from
target motion only by weighting around the target.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from .core import CineSeries, LandmarkTrack
from .errors import TrajectoryOutOfBounds

__all__ = [
    "PhantomConfig",
    "PhantomTruth",
    "CohortRanges",
    "target_displacement",
    "distractor_displacement",
    "phantom_frame_times",
    "generate_phantom",
    "cohort_configs",
    "generate_cohort",
]


@dataclass(frozen=True)
class PhantomConfig:
    dims: tuple[int, int, int] = (25, 96, 96)
    pixel_spacing: tuple[float, float] = (1.5, 1.5)
    rr_interval: float = 1000.0
    target_radius: float = 4.0  # mm
    motion_amplitude: float = 8.0  # mm
    rest_intervals: tuple[tuple[float, float], ...] = ((250.0, 350.0), (600.0, 800.0))
    noise_sigma: float = 0.0
    background_level: float = 0.2
    target_level: float = 1.0
    seed: int = 0
    motion_angle_deg: float = 30.0
    # target position at zero displacement, mm from the top-left pixel centre;
    # None puts it at the image centre
    target_center_mm: tuple[float, float] | None = None
    texture_contrast: float = 1.0
    texture_scale_mm: float = 4.0
    texture_blobs: int = 400
    distractor: bool = False
    distractor_amplitude: float = 6.0  # mm
    distractor_offset_mm: tuple[float, float] = (-20.0, 16.0)
    distractor_radius: float = 5.0  # mm
    distractor_angle_deg: float = -60.0
    distractor_phase: float = 0.0  # fraction of the cycle
    distractor_path: str = "circle"  # "circle" or "line"
    # radius (mm) of the tissue that follows the target; beyond it tissue follows the distractor
    tissue_coupling_mm: float = 18.0

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(n) for n in self.dims))
        object.__setattr__(self, "pixel_spacing", tuple(float(s) for s in self.pixel_spacing))
        object.__setattr__(
            self, "rest_intervals",
            tuple(sorted((float(a), float(b)) for a, b in self.rest_intervals)))
        if self.target_center_mm is not None:
            object.__setattr__(self, "target_center_mm", tuple(float(v) for v in self.target_center_mm))
        object.__setattr__(self, "distractor_offset_mm", tuple(float(v) for v in self.distractor_offset_mm))
        if self.motion_amplitude < 0 or self.distractor_amplitude < 0:
            raise ValueError("amplitudes must be non-negative")
        if self.target_radius <= 0 or self.distractor_radius <= 0:
            raise ValueError("radii must be positive")
        if self.distractor_path not in ("line", "circle"):
            raise ValueError(f"unknown distractor path {self.distractor_path!r}")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        prev_end = None
        for a, b in self.rest_intervals:
            if not (0 <= a < b < self.rr_interval):
                raise ValueError(f"rest interval ({a}, {b}) not inside [0, {self.rr_interval})")
            if prev_end is not None and a <= prev_end:
                raise ValueError("rest intervals must be disjoint and separated")
            prev_end = b

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rest_intervals"] = [list(iv) for iv in self.rest_intervals]
        for k in ("dims", "pixel_spacing", "distractor_offset_mm", "target_center_mm"):
            if d[k] is not None:
                d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PhantomConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown phantom config keys: {sorted(unknown)}")
        kw = dict(d)
        if "rest_intervals" in kw:
            kw["rest_intervals"] = tuple(tuple(iv) for iv in kw["rest_intervals"])
        return cls(**kw)


@dataclass(frozen=True)
class PhantomTruth:
    track: LandmarkTrack
    resting_frames: np.ndarray  # bool per transition
    rest_intervals: tuple[tuple[float, float], ...]

    def to_dict(self) -> dict:
        return {
            "track": self.track.xy.tolist(),
            "resting_frames": [bool(v) for v in self.resting_frames],
            "rest_intervals": [list(iv) for iv in self.rest_intervals],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PhantomTruth":
        return cls(LandmarkTrack(np.array(d["track"], dtype=float)),
                   np.array(d["resting_frames"], dtype=bool),
                   tuple(tuple(iv) for iv in d["rest_intervals"]))


@dataclass(frozen=True)
class CohortRanges:
    """Ranges that cohort members are drawn from (uniformly)."""

    rr_interval: tuple[float, float] = (620.0, 1710.0)  # 35-97 bpm
    n_frames: tuple[int, int] = (25, 32)
    motion_amplitude: tuple[float, float] = (7.0, 12.0)
    systolic_start: tuple[float, float] = (0.22, 0.28)  # fractions of RR
    systolic_duration: tuple[float, float] = (0.08, 0.13)
    diastolic_start: tuple[float, float] = (0.60, 0.66)
    diastolic_duration: tuple[float, float] = (0.12, 0.20)
    motion_angle_deg: tuple[float, float] = (0.0, 360.0)
    distractor_angle_deg: tuple[float, float] = (0.0, 360.0)
    distractor_phase: tuple[float, float] = (0.0, 1.0)

    @classmethod
    def from_dict(cls, d: dict) -> "CohortRanges":
        return cls(**{k: tuple(v) for k, v in d.items()})

    def to_dict(self) -> dict:
        return {k: list(v) for k, v in asdict(self).items()}


def _ramp(u):
    return 0.5 * (1.0 - np.cos(np.pi * u))


def target_displacement(cfg: PhantomConfig, t) -> np.ndarray:
    """Scalar target displacement (mm) along the motion direction at times ``t``.

    Plateau ``k`` sits at level ``A`` for even ``k`` and 0 for odd ``k``.
    Between plateaus the level changes along a half-cosine; where two
    neighbouring plateaus share a level a full-cosine bump of height ``A``
    is inserted instead, so every gap between plateaus contains motion.
    """
    t = np.mod(np.asarray(t, dtype=np.float64), cfg.rr_interval)
    amp = cfg.motion_amplitude
    rests = cfg.rest_intervals
    rr = cfg.rr_interval
    if not rests:
        return amp * 0.5 * (1.0 - np.cos(2.0 * np.pi * t / rr))
    k_n = len(rests)
    levels = [amp if k % 2 == 0 else 0.0 for k in range(k_n)]
    out = np.empty_like(t)
    # unwrap times before the first plateau onto the previous cycle's gap
    first_start = rests[0][0]
    tw = np.where(t < first_start, t + rr, t)
    for k in range(k_n):
        a, b = rests[k]
        nxt = (k + 1) % k_n
        na = rests[nxt][0] + (rr if nxt == 0 else 0.0)
        in_rest = (tw >= a) & (tw <= b)
        out[in_rest] = levels[k]
        in_gap = (tw > b) & (tw < na)
        u = (tw[in_gap] - b) / (na - b)
        dl = levels[nxt] - levels[k]
        bump = amp if dl == 0.0 else 0.0
        out[in_gap] = levels[k] + dl * _ramp(u) + bump * 0.5 * (1.0 - np.cos(2.0 * np.pi * u))
    return out


def distractor_displacement(cfg: PhantomConfig, t) -> np.ndarray:
    """Distractor displacement vectors (mm), shape ``(len(t), 2)``.

    ``"line"`` oscillates along ``distractor_angle_deg`` with peak-to-peak
    ``distractor_amplitude``. ``"circle"`` travels a circle of that diameter
    once per cycle at constant speed, starting at the angle.
    """
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    phase = 2.0 * np.pi * (t / cfg.rr_interval + cfg.distractor_phase)
    amp = cfg.distractor_amplitude
    if cfg.distractor_path == "line":
        return (amp * 0.5 * (1.0 - np.cos(phase)))[:, None] * _unit(cfg.distractor_angle_deg)[None, :]
    a0 = math.radians(cfg.distractor_angle_deg)
    return 0.5 * amp * np.column_stack([np.cos(phase + a0), np.sin(phase + a0)])


def phantom_frame_times(cfg: PhantomConfig) -> np.ndarray:
    return np.arange(cfg.dims[0]) * (cfg.rr_interval / cfg.dims[0])


_COUPLING_EDGE_MM = 1.0


def _unit(angle_deg: float) -> np.ndarray:
    a = math.radians(angle_deg)
    return np.array([math.cos(a), math.sin(a)])


def _target_center(cfg: PhantomConfig) -> np.ndarray:
    if cfg.target_center_mm is not None:
        return np.array(cfg.target_center_mm)
    _, h, w = cfg.dims
    return np.array([(w - 1) * cfg.pixel_spacing[1] / 2.0, (h - 1) * cfg.pixel_spacing[0] / 2.0])


def _disk_coverage(dist_mm: np.ndarray, radius_mm: float, px_mm: float) -> np.ndarray:
    # linear edge ramp one pixel wide: area coverage of a straight boundary
    return np.clip((radius_mm - dist_mm) / px_mm + 0.5, 0.0, 1.0)


def _texture(cfg: PhantomConfig, rng: np.random.Generator):
    _, h, w = cfg.dims
    sy, sx = cfg.pixel_spacing
    k = cfg.texture_blobs
    margin = 3.0 * cfg.texture_scale_mm
    cx = rng.uniform(-margin, (w - 1) * sx + margin, k)
    cy = rng.uniform(-margin, (h - 1) * sy + margin, k)
    amp = rng.uniform(-1.0, 1.0, k) * cfg.texture_contrast
    width = rng.uniform(0.6, 1.4, k) * cfg.texture_scale_mm

    def evaluate(x_mm: np.ndarray, y_mm: np.ndarray) -> np.ndarray:
        val = np.zeros_like(x_mm)
        for i in range(k):
            d2 = (x_mm - cx[i]) ** 2 + (y_mm - cy[i]) ** 2
            val += amp[i] * np.exp(-d2 / (2.0 * width[i] ** 2))
        return val

    def shifted(xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        # separable form for a grid shifted as a whole: sum_i a_i g_i(y) g_i(x)
        inv = 1.0 / (2.0 * width ** 2)
        ey = np.exp(-((ys[:, None] - cy[None, :]) ** 2) * inv[None, :])
        ex = np.exp(-((xs[:, None] - cx[None, :]) ** 2) * inv[None, :])
        return (ey * amp[None, :]) @ ex.T

    return evaluate, shifted


def _check_bounds(name: str, centers_mm: np.ndarray, radius_mm: float, cfg: PhantomConfig):
    _, h, w = cfg.dims
    sy, sx = cfg.pixel_spacing
    x, y = centers_mm[:, 0], centers_mm[:, 1]
    ok = ((x - radius_mm >= 0) & (x + radius_mm <= (w - 1) * sx)
          & (y - radius_mm >= 0) & (y + radius_mm <= (h - 1) * sy))
    if not np.all(ok):
        bad = int(np.argmin(ok))
        raise TrajectoryOutOfBounds(f"{name} leaves the image at frame {bad}")


def generate_phantom(cfg: PhantomConfig) -> tuple[CineSeries, PhantomTruth]:
    """Render one phantom series and its ground truth."""
    n_t, h, w = cfg.dims
    sy, sx = cfg.pixel_spacing
    times = phantom_frame_times(cfg)
    rng = np.random.default_rng(cfg.seed)
    texture, texture_shifted = _texture(cfg, rng)

    s = target_displacement(cfg, times)
    u_dir = _unit(cfg.motion_angle_deg)
    c0 = _target_center(cfg)
    centers = c0[None, :] + s[:, None] * u_dir[None, :]
    _check_bounds("target", centers, cfg.target_radius, cfg)

    q = distractor_displacement(cfg, times)
    d_centers = c0 + np.array(cfg.distractor_offset_mm) + q
    if cfg.distractor:
        _check_bounds("distractor", d_centers, cfg.distractor_radius, cfg)

    ym, xm = np.meshgrid(np.arange(h) * sy, np.arange(w) * sx, indexing="ij")
    # tissue inside a soft-edged disk around the target follows the target
    r = np.hypot(xm - c0[0], ym - c0[1])
    coupling = 0.5 * (1.0 - np.tanh((r - cfg.tissue_coupling_mm) / (2.0 * _COUPLING_EDGE_MM)))
    px_mm = 0.5 * (sx + sy)

    frames = np.empty((n_t, h, w))
    for i in range(n_t):
        if cfg.distractor:
            # tissue displacement blends target and distractor motion
            ux = coupling * s[i] * u_dir[0] + (1.0 - coupling) * q[i, 0]
            uy = coupling * s[i] * u_dir[1] + (1.0 - coupling) * q[i, 1]
            img = cfg.background_level + texture(xm - ux, ym - uy)
        else:
            img = cfg.background_level + texture_shifted(xm[0] - s[i] * u_dir[0], ym[:, 0] - s[i] * u_dir[1])
        cov = _disk_coverage(np.hypot(xm - centers[i, 0], ym - centers[i, 1]), cfg.target_radius, px_mm)
        img = img * (1.0 - cov) + cfg.target_level * cov
        if cfg.distractor:
            cov = _disk_coverage(np.hypot(xm - d_centers[i, 0], ym - d_centers[i, 1]),
                                 cfg.distractor_radius, px_mm)
            img = img * (1.0 - cov) + cfg.target_level * cov
        frames[i] = img
    if cfg.noise_sigma > 0:
        frames = frames + rng.normal(0.0, cfg.noise_sigma, frames.shape)

    track = LandmarkTrack(centers / np.array([sx, sy]))
    step = np.abs(np.diff(s))
    resting = step <= np.finfo(float).eps * max(1.0, cfg.motion_amplitude)
    series = CineSeries(frames, (sy, sx), times, cfg.rr_interval)
    return series, PhantomTruth(track, resting, cfg.rest_intervals)


def _member_config(cfg_base: PhantomConfig, ranges: CohortRanges,
                   seq: np.random.SeedSequence) -> PhantomConfig:
    rng = np.random.default_rng(seq)
    rr = float(rng.uniform(*ranges.rr_interval))
    n_t = int(rng.integers(ranges.n_frames[0], ranges.n_frames[1] + 1))
    amp = float(rng.uniform(*ranges.motion_amplitude))
    s0 = rng.uniform(*ranges.systolic_start) * rr
    s1 = s0 + rng.uniform(*ranges.systolic_duration) * rr
    d0 = rng.uniform(*ranges.diastolic_start) * rr
    d1 = d0 + rng.uniform(*ranges.diastolic_duration) * rr
    return replace(
        cfg_base,
        dims=(n_t, cfg_base.dims[1], cfg_base.dims[2]),
        rr_interval=rr,
        motion_amplitude=amp,
        rest_intervals=((float(s0), float(s1)), (float(d0), float(d1))),
        motion_angle_deg=float(rng.uniform(*ranges.motion_angle_deg)),
        distractor_angle_deg=float(rng.uniform(*ranges.distractor_angle_deg)),
        distractor_phase=float(rng.uniform(*ranges.distractor_phase)),
        seed=int(seq.generate_state(1)[0]),
    )


def cohort_configs(cfg_base: PhantomConfig, n: int, seed: int,
                   ranges: CohortRanges | None = None) -> list[PhantomConfig]:
    """Member configs of a cohort, each with its own derived seed."""
    if n < 1:
        raise ValueError("cohort size must be >= 1")
    ranges = ranges or CohortRanges()
    children = np.random.SeedSequence(seed).spawn(n)
    return [_member_config(cfg_base, ranges, c) for c in children]


def generate_cohort(cfg_base: PhantomConfig, n: int, seed: int,
                    ranges: CohortRanges | None = None) -> list[tuple[CineSeries, PhantomTruth]]:
    return [generate_phantom(c) for c in cohort_configs(cfg_base, n, seed, ranges)]
