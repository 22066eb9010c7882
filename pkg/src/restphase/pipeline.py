"""End-to-end resting-phase detection: localize, crop, register, quantify, classify."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .calibration import CohortMember
from .classification import RestingPhaseSet, RpParams, classify_mask, classify_rp
from .core import (CineSeries, LandmarkTrack, PixelPoint, Roi, map_point_resampled_to_original,
                   map_track_resampled_to_original, min_max_normalize, resample_series)
from .cropping import DEFAULT_ROI_MM, crop_series, roi_from_track, track_to_roi
from .errors import RestPhaseError
from .localization import TemplateTrackerParams, ncc_template_track, propagation_localizer
from .motion import MotionCurve, MotionParams, MotionVariant, motion_curve
from .phantom import PhantomTruth
from .registration import DeformationField, RegistrationParams, register_series

log = logging.getLogger(__name__)

__all__ = [
    "LocalizerConfig",
    "MotionConfig",
    "PipelineConfig",
    "PipelineResult",
    "StageError",
    "run_pipeline",
    "locate",
    "truth_rest_set",
    "cohort_member",
]


class StageError(RestPhaseError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class LocalizerConfig:
    kind: str = "ncc"  # "ncc" or "propagation"
    template_radius: int = 7
    search_radius: int = 5
    # optional (T, H, W) grid the localizer runs on; tracks are mapped back
    resample: tuple[int, int, int] | None = None

    def __post_init__(self):
        if self.kind not in ("ncc", "propagation"):
            raise ValueError(f"unknown localizer {self.kind!r}")
        if self.resample is not None:
            object.__setattr__(self, "resample", tuple(int(v) for v in self.resample))


@dataclass(frozen=True)
class MotionConfig:
    variant: str = "wpct(50)"
    sigma: float = 12.0
    squared: bool = False

    def __post_init__(self):
        object.__setattr__(self, "variant", str(MotionVariant.parse(self.variant)))

    @property
    def params(self) -> MotionParams:
        return MotionParams(self.sigma, self.squared)


def _build(cls, d: dict | None):
    if d is None:
        return cls()
    if isinstance(d, cls):
        return d
    known = {f.name for f in fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**d)


@dataclass(frozen=True)
class PipelineConfig:
    localizer: LocalizerConfig = LocalizerConfig()
    registration: RegistrationParams = RegistrationParams()
    motion: MotionConfig = MotionConfig()
    rp: RpParams = RpParams()
    roi_size_mm: tuple[float, float] = DEFAULT_ROI_MM
    threads: int = 1
    annotation: str | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["roi_size_mm"] = list(self.roi_size_mm)
        if d["localizer"]["resample"] is not None:
            d["localizer"]["resample"] = list(d["localizer"]["resample"])
        d["schema_version"] = 1
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = {k: v for k, v in d.items() if k != "schema_version"}
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown pipeline config keys: {sorted(unknown)}")
        return cls(
            localizer=_build(LocalizerConfig, d.get("localizer")),
            registration=_build(RegistrationParams, d.get("registration")),
            motion=_build(MotionConfig, d.get("motion")),
            rp=_build(RpParams, d.get("rp")),
            roi_size_mm=tuple(float(v) for v in d.get("roi_size_mm", DEFAULT_ROI_MM)),
            threads=int(d.get("threads", 1)),
            annotation=d.get("annotation"),
        )

    def with_overrides(self, *, tau=None, variant=None, percentile=None, sigma=None,
                       alpha_ms=None, omega_ms=None, threads=None) -> "PipelineConfig":
        cfg = self
        rp_changes = {k: v for k, v in (("tau", tau), ("alpha_ms", alpha_ms), ("omega_ms", omega_ms))
                      if v is not None}
        if rp_changes:
            cfg = replace(cfg, rp=replace(cfg.rp, **rp_changes))
        if variant is not None or percentile is not None:
            current = MotionVariant.parse(cfg.motion.variant)
            if variant is None:
                v = MotionVariant(current.kind, percentile)
            else:
                v = MotionVariant.parse(variant, percentile)
            cfg = replace(cfg, motion=replace(cfg.motion, variant=str(v)))
        if sigma is not None:
            cfg = replace(cfg, motion=replace(cfg.motion, sigma=float(sigma)))
        if threads is not None:
            cfg = replace(cfg, threads=int(threads))
        return cfg


@dataclass
class PipelineResult:
    track: LandmarkTrack
    roi: Roi
    fields: list[DeformationField]
    roi_track: LandmarkTrack
    curve: MotionCurve
    rp: RestingPhaseSet
    timings: dict = field(default_factory=dict)


def locate(series: CineSeries, p0: PixelPoint, cfg: LocalizerConfig,
           reg_params: RegistrationParams | None = None, workers: int = 1) -> LandmarkTrack:
    """Run the configured localizer, optionally on a resampled grid."""
    work, start = series, p0
    if cfg.resample is not None:
        work = resample_series(series, cfg.resample)
        start = map_point_resampled_to_original(p0, series.frame_shape, work.frame_shape)
    if cfg.kind == "ncc":
        track = ncc_template_track(work, start, TemplateTrackerParams(cfg.template_radius, cfg.search_radius))
    else:
        track = propagation_localizer(work, start, reg_params, workers)
    if work is not series:
        track = map_track_resampled_to_original(track, work, series)
    return track


def _stage(name: str, timings: dict, fn, *args, **kwargs):
    t0 = time.perf_counter()
    try:
        return fn(*args, **kwargs)
    except RestPhaseError as exc:
        raise StageError(name, exc) from exc
    except (ValueError, FileNotFoundError, KeyError) as exc:
        raise StageError(name, exc) from exc
    finally:
        timings[name] = timings.get(name, 0.0) + time.perf_counter() - t0


def _front_half(series: CineSeries, p0: PixelPoint | None, cfg: PipelineConfig, timings: dict):
    if p0 is None:
        raise StageError("localization", ValueError("no landmark annotation for frame 0"))
    normalized, report = _stage("normalization", timings, min_max_normalize, series)
    if report.constant:
        log.warning("series has constant intensity; motion will be zero")
    track = _stage("localization", timings, locate, normalized, p0, cfg.localizer,
                   cfg.registration, cfg.threads)
    roi = _stage("cropping", timings, roi_from_track, track, normalized, cfg.roi_size_mm)
    cropped = _stage("cropping", timings, crop_series, normalized, roi)
    fields_ = _stage("registration", timings, register_series, cropped, cfg.registration, cfg.threads)
    return track, roi, fields_, track_to_roi(track, roi)


def run_pipeline(series: CineSeries, p0: PixelPoint | None, cfg: PipelineConfig | None = None) -> PipelineResult:
    """Localize, crop, register, quantify and classify one series."""
    cfg = cfg or PipelineConfig()
    timings: dict[str, float] = {}
    track, roi, fields_, roi_track = _front_half(series, p0, cfg, timings)
    curve = _stage("motion", timings, motion_curve, fields_, roi_track, cfg.motion.variant,
                   cfg.motion.params, series.trigger_times)
    rp = _stage("classification", timings, classify_rp, curve, series.rr_interval, cfg.rp)
    for k, v in timings.items():
        log.info("stage %s: %.3f s", k, v)
    return PipelineResult(track, roi, fields_, roi_track, curve, rp, timings)


def truth_rest_set(truth: PhantomTruth, series: CineSeries, params: RpParams | None = None,
                   min_duration_ms: float = 0.0) -> RestingPhaseSet:
    """Reference resting phases of a phantom, windowed like a prediction.

    Short intervals are kept by default so that evaluation can count their
    exclusion itself.
    """
    params = params or RpParams()
    params = replace(params, min_duration_ms=min_duration_ms)
    return classify_mask(truth.resting_frames, series.trigger_times, series.rr_interval, params)


def cohort_member(series: CineSeries, truth: PhantomTruth, p0: PixelPoint,
                  cfg: PipelineConfig | None = None, name: str = "") -> CohortMember:
    """Localize, crop and register one labelled series for threshold calibration."""
    cfg = cfg or PipelineConfig()
    _, _, fields_, roi_track = _front_half(series, p0, cfg, {})
    return CohortMember(tuple(fields_), roi_track, np.asarray(truth.resting_frames, bool),
                        np.asarray(series.trigger_times), series.rr_interval, name)
