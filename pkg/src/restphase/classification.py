"""Threshold-based resting-phase classification of a motion curve.

A transition ``t -> t+1`` is resting when its motion value is strictly below
``tau`` and its whole span ``[time(t), time(t+1)]`` lies in the valid window
``[alpha, rr - omega]``. Maximal runs of resting transitions become intervals
reaching from the first frame of the run to the frame after its last
transition.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InvalidWindow
from .motion import MotionCurve

__all__ = [
    "RpParams",
    "RestInterval",
    "RestingPhaseSet",
    "SYSTOLIC_FRACTION",
    "valid_transitions",
    "mask_to_runs",
    "classify_rp",
    "classify_mask",
    "rp_overlap_mask",
]

# intervals whose midpoint falls before this fraction of RR are systolic candidates
SYSTOLIC_FRACTION = 0.4


@dataclass(frozen=True)
class RpParams:
    tau: float = 0.2
    alpha_ms: float = 80.0
    omega_ms: float = 80.0
    min_duration_ms: float = 30.0

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be > 0")
        if self.alpha_ms < 0 or self.omega_ms < 0:
            raise ValueError("alpha and omega must be >= 0")
        if self.min_duration_ms < 0:
            raise ValueError("min_duration_ms must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class RestInterval:
    start_ms: float
    end_ms: float
    start_frame: int
    end_frame: int
    label: str = "unlabeled"

    @property
    def duration_ms(self) -> float:
        return self.end_ms - self.start_ms

    @property
    def midpoint_ms(self) -> float:
        return 0.5 * (self.start_ms + self.end_ms)

    def overlap_ms(self, other: "RestInterval") -> float:
        return max(0.0, min(self.end_ms, other.end_ms) - max(self.start_ms, other.start_ms))

    def to_dict(self) -> dict:
        return {"label": self.label, "start_ms": self.start_ms, "end_ms": self.end_ms,
                "start_frame": self.start_frame, "end_frame": self.end_frame}

    @classmethod
    def from_dict(cls, d: dict) -> "RestInterval":
        return cls(float(d["start_ms"]), float(d["end_ms"]), int(d["start_frame"]),
                   int(d["end_frame"]), d.get("label", "unlabeled"))


@dataclass(frozen=True)
class RestingPhaseSet:
    intervals: tuple[RestInterval, ...]
    rp_mask: np.ndarray
    rr_interval: float
    tau: float | None = None
    alpha_ms: float = 0.0
    omega_ms: float = 0.0
    dropped_short_intervals: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        m = np.array(self.rp_mask, dtype=bool)
        m.setflags(write=False)
        object.__setattr__(self, "rp_mask", m)
        object.__setattr__(self, "intervals", tuple(self.intervals))

    def by_label(self, label: str) -> list[RestInterval]:
        return [iv for iv in self.intervals if iv.label == label]

    def to_dict(self) -> dict:
        d = {
            "schema_version": 1,
            "intervals": [iv.to_dict() for iv in self.intervals],
            "rp_mask": [bool(v) for v in self.rp_mask],
            "rr_interval": self.rr_interval,
            "tau": self.tau,
            "alpha": self.alpha_ms,
            "omega": self.omega_ms,
            "dropped_short_intervals": self.dropped_short_intervals,
        }
        d.update(self.extra)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RestingPhaseSet":
        known = {"schema_version", "intervals", "rp_mask", "rr_interval", "tau", "alpha",
                 "omega", "dropped_short_intervals"}
        return cls(
            tuple(RestInterval.from_dict(iv) for iv in d["intervals"]),
            np.array(d["rp_mask"], dtype=bool),
            float(d["rr_interval"]),
            d.get("tau"),
            float(d.get("alpha", 0.0)),
            float(d.get("omega", 0.0)),
            int(d.get("dropped_short_intervals", 0)),
            {k: v for k, v in d.items() if k not in known},
        )


def valid_transitions(frame_times, rr_interval: float, alpha_ms: float, omega_ms: float) -> np.ndarray:
    """True for transitions whose full span lies inside ``[alpha, rr - omega]``."""
    t = np.asarray(frame_times, dtype=np.float64)
    lo, hi = alpha_ms, rr_interval - omega_ms
    if not lo < hi:
        raise InvalidWindow(f"empty validity window [{lo}, {hi}]")
    return (t[:-1] >= lo) & (t[1:] <= hi)


def mask_to_runs(mask) -> list[tuple[int, int]]:
    """Maximal runs of True as ``(first, last)`` transition indices."""
    m = np.asarray(mask, dtype=bool)
    runs = []
    start = None
    for i, v in enumerate(m):
        if v and start is None:
            start = i
        elif not v and start is not None:
            runs.append((start, i - 1))
            start = None
    if start is not None:
        runs.append((start, len(m) - 1))
    return runs


def _label(intervals: list[RestInterval], rr_interval: float) -> list[RestInterval]:
    cut = SYSTOLIC_FRACTION * rr_interval
    sys_idx = [i for i, iv in enumerate(intervals) if iv.midpoint_ms < cut]
    dia_idx = [i for i, iv in enumerate(intervals) if iv.midpoint_ms >= cut]
    labels = ["unlabeled"] * len(intervals)
    if sys_idx:
        labels[sys_idx[0]] = "systolic"
    if dia_idx:
        labels[dia_idx[-1]] = "diastolic"
    return [RestInterval(iv.start_ms, iv.end_ms, iv.start_frame, iv.end_frame, lab)
            for iv, lab in zip(intervals, labels)]


def classify_mask(mask, frame_times, rr_interval: float, params: RpParams,
                  tau: float | None = None) -> RestingPhaseSet:
    """Turn a per-transition resting mask into labelled intervals.

    The mask is intersected with the validity window first. Intervals shorter
    than ``min_duration_ms`` are dropped and counted.
    """
    times = np.asarray(frame_times, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if times.shape != (mask.shape[0] + 1,):
        raise ValueError(f"{mask.shape[0]} transitions need {mask.shape[0] + 1} frame times")
    mask = mask & valid_transitions(times, rr_interval, params.alpha_ms, params.omega_ms)
    kept, dropped = [], 0
    for a, b in mask_to_runs(mask):
        iv = RestInterval(float(times[a]), float(times[b + 1]), a, b + 1)
        if iv.duration_ms < params.min_duration_ms:
            dropped += 1
            continue
        kept.append(iv)
    return RestingPhaseSet(tuple(_label(kept, rr_interval)), mask, float(rr_interval), tau,
                           params.alpha_ms, params.omega_ms, dropped)


def classify_rp(curve: MotionCurve, rr_interval: float, params: RpParams | None = None) -> RestingPhaseSet:
    """Mark transitions with ``m(t) < tau`` inside the valid window as resting."""
    params = params or RpParams()
    if len(curve) == 0:
        raise ValueError("empty motion curve")
    if params.alpha_ms + params.omega_ms >= rr_interval:
        raise InvalidWindow("alpha + omega must be below the RR interval")
    return classify_mask(curve.values < params.tau, curve.frame_times, rr_interval, params, params.tau)


def rp_overlap_mask(rp: RestingPhaseSet, frame_times) -> np.ndarray:
    """Per-transition mask: covered by a reported interval and inside the set's window."""
    t = np.asarray(frame_times, dtype=np.float64)
    if np.any(np.diff(t) <= 0):
        raise ValueError("frame times must increase strictly")
    out = np.zeros(t.shape[0] - 1, dtype=bool)
    for iv in rp.intervals:
        out |= (t[:-1] >= iv.start_ms) & (t[1:] <= iv.end_ms)
    hi = rp.rr_interval - rp.omega_ms
    return out & (t[:-1] >= rp.alpha_ms) & (t[1:] <= hi)
