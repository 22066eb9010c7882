"""Readers and writers for series, truth, tracks and reports.

Every JSON artifact carries a ``schema_version``. Writes go to a temporary
file in the target directory and are renamed into place, so a crashed run
never leaves a half-written file behind.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .classification import RestingPhaseSet
from .core import CineSeries, LandmarkTrack, PixelPoint, Roi
from .phantom import PhantomTruth
from .registration import DeformationField

SCHEMA_VERSION = 1

SERIES_JSON = "series.json"
FRAMES_BIN = "frames.bin"
TRUTH_JSON = "truth.json"
ANNOTATION_JSON = "annotation.json"
RP_JSON = "rp.json"
TRACK_JSON = "track.json"
ROI_JSON = "roi.json"
CURVE_CSV = "curve.csv"

_FRAME_DTYPE = np.dtype("<f4")


class SchemaError(ValueError):
    """An artifact file is missing fields or has an unknown schema version."""


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj: dict) -> None:
    if "schema_version" not in obj:
        obj = {"schema_version": SCHEMA_VERSION, **obj}
    atomic_write_text(path, dump_json(obj))


def read_json(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    if not isinstance(d, dict):
        raise SchemaError(f"{path}: expected a JSON object")
    v = d.get("schema_version")
    if v != SCHEMA_VERSION:
        raise SchemaError(f"{path}: unsupported schema_version {v!r}")
    return d


def _require(d: dict, keys, path) -> None:
    missing = [k for k in keys if k not in d]
    if missing:
        raise SchemaError(f"{path}: missing {', '.join(missing)}")


# series


def write_series(directory, series: CineSeries) -> None:
    directory = Path(directory)
    t, h, w = series.dims
    atomic_write_bytes(directory / FRAMES_BIN, series.frames.astype(_FRAME_DTYPE).tobytes(order="C"))
    write_json(directory / SERIES_JSON, {
        "dims": [t, h, w],
        "pixel_spacing": list(series.pixel_spacing),
        "trigger_times": [float(v) for v in series.trigger_times],
        "rr_interval": series.rr_interval,
        "frames_file": FRAMES_BIN,
        "dtype": "float32-le",
    })


def read_series(path) -> CineSeries:
    """Load a series from its directory or its ``series.json``."""
    path = Path(path)
    meta_path = path / SERIES_JSON if path.is_dir() else path
    meta = read_json(meta_path)
    _require(meta, ("dims", "pixel_spacing", "trigger_times", "rr_interval"), meta_path)
    t, h, w = (int(v) for v in meta["dims"])
    raw = (meta_path.parent / meta.get("frames_file", FRAMES_BIN)).read_bytes()
    if len(raw) != t * h * w * _FRAME_DTYPE.itemsize:
        raise SchemaError(f"{meta_path}: frames file holds {len(raw)} bytes, expected {t * h * w * 4}")
    frames = np.frombuffer(raw, dtype=_FRAME_DTYPE).reshape(t, h, w)
    return CineSeries(frames.astype(np.float64), tuple(meta["pixel_spacing"]),
                      np.array(meta["trigger_times"], dtype=np.float64), float(meta["rr_interval"]))


# truth and annotations


def write_truth(directory, truth: PhantomTruth) -> None:
    write_json(Path(directory) / TRUTH_JSON, truth.to_dict())


def read_truth(path) -> PhantomTruth:
    path = Path(path)
    path = path / TRUTH_JSON if path.is_dir() else path
    d = read_json(path)
    _require(d, ("track", "resting_frames", "rest_intervals"), path)
    return PhantomTruth.from_dict(d)


def write_annotation(directory, p: PixelPoint, frame: int = 0) -> None:
    write_json(Path(directory) / ANNOTATION_JSON, {"frame": frame, "x": float(p.x), "y": float(p.y)})


def read_annotation(path) -> PixelPoint:
    path = Path(path)
    path = path / ANNOTATION_JSON if path.is_dir() else path
    d = read_json(path)
    _require(d, ("x", "y"), path)
    if int(d.get("frame", 0)) != 0:
        raise SchemaError(f"{path}: the landmark must be annotated on frame 0")
    return PixelPoint(float(d["x"]), float(d["y"]))


# pipeline outputs


def track_to_dict(track: LandmarkTrack) -> dict:
    return {"schema_version": SCHEMA_VERSION, "points": track.xy.tolist()}


def track_from_dict(d: dict) -> LandmarkTrack:
    return LandmarkTrack(np.array(d["points"], dtype=float))


def write_track(path, track: LandmarkTrack) -> None:
    write_json(path, track_to_dict(track))


def read_track(path) -> LandmarkTrack:
    d = read_json(path)
    _require(d, ("points",), path)
    return track_from_dict(d)


def write_roi(path, roi: Roi) -> None:
    write_json(path, roi.to_dict())


def read_roi(path) -> Roi:
    d = read_json(path)
    return Roi.from_dict({k: v for k, v in d.items() if k != "schema_version"})


def write_rp(path, rp: RestingPhaseSet) -> None:
    write_json(path, rp.to_dict())


def read_rp(path) -> RestingPhaseSet:
    d = read_json(path)
    _require(d, ("intervals", "rp_mask", "rr_interval"), path)
    return RestingPhaseSet.from_dict(d)


def write_field(directory, field: DeformationField, index: int) -> None:
    stem = Path(directory) / f"field_{index:03d}"
    atomic_write_bytes(stem.with_suffix(".bin"), field.to_bytes())
    write_json(stem.with_suffix(".json"), {**field.sidecar(), "data_file": stem.with_suffix(".bin").name})


def read_field(json_path) -> DeformationField:
    json_path = Path(json_path)
    meta = read_json(json_path)
    data = (json_path.parent / meta.get("data_file", json_path.with_suffix(".bin").name)).read_bytes()
    return DeformationField.from_bytes(data, meta)
