"""Command-line interface.

Commands: ``phantom``, ``run``, ``calibrate``, ``evaluate``, ``report``.
Exit codes: 0 ok, 2 configuration or input error, 3 pipeline stage failure,
4 degenerate calibration labels, 5 prediction/reference pairing mismatch.
The log level comes from ``RESTPHASE_LOG`` (default WARNING).
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io
from .calibration import (CLINICAL_REFERENCE_ACCURACY, label_transitions, rp_agreement,
                          threshold_sweep, variant_rows_csv, variant_sweep)
from .errors import DegenerateLabels, PairingMismatch, RestPhaseError
from .motion import all_variants, motion_curve
from .phantom import CohortRanges, PhantomConfig, cohort_configs, generate_phantom
from .pipeline import PipelineConfig, StageError, cohort_member, run_pipeline, truth_rest_set

log = logging.getLogger("restphase")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3
EXIT_DEGENERATE = 4
EXIT_PAIRING = 5


class ConfigError(Exception):
    pass


# configuration


_SECTIONS = {"schema_version", "phantom", "cohort", "pipeline"}


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(d, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    unknown = set(d) - _SECTIONS
    if unknown:
        raise ConfigError(f"config {path}: unknown sections {sorted(unknown)}")
    return d


def pipeline_config(args, raw: dict) -> PipelineConfig:
    try:
        cfg = PipelineConfig.from_dict(raw.get("pipeline", {}))
        tau = args.tau
        if getattr(args, "calibration", None):
            cal = io.read_json(args.calibration)
            tau = cal["best_tau"] if tau is None else tau
            if args.variant is None and args.percentile is None:
                cfg = replace(cfg, motion=replace(cfg.motion, variant=cal["variant"]))
        return cfg.with_overrides(tau=tau, variant=args.variant, percentile=args.percentile,
                                  sigma=args.sigma, alpha_ms=args.alpha_ms, omega_ms=args.omega_ms,
                                  threads=args.threads)
    except (ValueError, TypeError, KeyError, OSError) as exc:
        raise ConfigError(f"invalid pipeline configuration: {exc}") from exc


def phantom_config(args, raw: dict) -> tuple[PhantomConfig, int | None, CohortRanges]:
    try:
        cfg = PhantomConfig.from_dict(raw.get("phantom", {}))
        cohort = dict(raw.get("cohort", {}))
        ranges = CohortRanges.from_dict(cohort.pop("ranges", {}))
        n = cohort.pop("n", None)
        seed = cohort.pop("seed", None)
        if cohort:
            raise ValueError(f"unknown cohort keys {sorted(cohort)}")
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid phantom configuration: {exc}") from exc
    if args.cohort is not None:
        n = args.cohort
    if args.seed is not None:
        seed = args.seed
    if n is None:
        if seed is not None:
            cfg = replace(cfg, seed=int(seed))
        return cfg, None, ranges
    if int(n) < 1:
        raise ConfigError("cohort size must be >= 1")
    return replace(cfg, seed=int(seed if seed is not None else cfg.seed)), int(n), ranges


# dataset discovery


def _datasets(root: Path, marker: str) -> list[tuple[str, Path]]:
    """``(name, dir)`` pairs: the root itself, or its sorted subdirectories holding ``marker``."""
    if (root / marker).is_file():
        return [(root.name, root)]
    found = sorted((p.name, p) for p in root.iterdir() if p.is_dir() and (p / marker).is_file()) \
        if root.is_dir() else []
    if not found:
        raise ConfigError(f"no {marker} found in {root}")
    return found


# commands


def cmd_phantom(args) -> int:
    raw = load_config(args.config)
    cfg, n, ranges = phantom_config(args, raw)
    out = Path(args.out)
    try:
        if n is None:
            items = [("", cfg)]
        else:
            width = max(3, len(str(n - 1)))
            items = [(f"{i:0{width}d}", c) for i, c in enumerate(cohort_configs(cfg, n, cfg.seed, ranges))]
        rendered = [(name, c, *generate_phantom(c)) for name, c in items]
    except (ValueError, RestPhaseError) as exc:
        raise ConfigError(str(exc)) from exc
    for name, c, series, truth in rendered:
        d = out / name if name else out
        io.write_series(d, series)
        io.write_truth(d, truth)
        io.write_annotation(d, truth.track[0])
        io.write_json(d / "phantom.json", c.to_dict())
    log.info("wrote %d phantom(s) to %s", len(rendered), out)
    return EXIT_OK


def _run_one(series_dir: Path, out: Path, cfg: PipelineConfig, annotation: str | None,
             emit_fields: bool) -> None:
    try:
        series = io.read_series(series_dir)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read series {series_dir}: {exc}") from exc
    ann = Path(annotation) if annotation else series_dir / io.ANNOTATION_JSON
    p0 = None
    if ann.is_file():
        try:
            p0 = io.read_annotation(ann)
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"bad annotation {ann}: {exc}") from exc
    res = run_pipeline(series, p0, cfg)
    rp = replace(res.rp, extra={"frame_times": [float(t) for t in series.trigger_times],
                                "variant": res.curve.variant})
    io.write_track(out / io.TRACK_JSON, res.track)
    io.write_roi(out / io.ROI_JSON, res.roi)
    io.atomic_write_text(out / io.CURVE_CSV, res.curve.to_csv())
    io.write_rp(out / io.RP_JSON, rp)
    if emit_fields:
        for k, f in enumerate(res.fields):
            io.write_field(out / "fields", f, k)
    for stage, secs in res.timings.items():
        log.info("%s: %s %.3f s", series_dir.name, stage, secs)
    log.info("%s: total %.3f s", series_dir.name, sum(res.timings.values()))


def cmd_run(args) -> int:
    cfg = pipeline_config(args, load_config(args.config))
    root, out = Path(args.series), Path(args.out)
    sets = _datasets(root, io.SERIES_JSON)
    single = len(sets) == 1 and sets[0][1] == root
    if not single and args.annotation:
        raise ConfigError("--annotation applies to a single series only")
    for name, d in sets:
        _run_one(d, out if single else out / name, cfg, args.annotation or cfg.annotation,
                 args.emit_fields)
    # a complete config file: can be passed back with --config
    pipeline = {k: v for k, v in cfg.to_dict().items() if k != "schema_version"}
    io.write_json(out / "config.json", {"pipeline": pipeline})
    return EXIT_OK


def _members(root: Path, cfg: PipelineConfig):
    members = []
    for name, d in _datasets(root, io.TRUTH_JSON):
        try:
            series = io.read_series(d)
            truth = io.read_truth(d)
            p0 = io.read_annotation(d) if (d / io.ANNOTATION_JSON).is_file() else truth.track[0]
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot read cohort member {d}: {exc}") from exc
        members.append(cohort_member(series, truth, p0, cfg, name))
    return members


def _labeled(members, variant, cfg: PipelineConfig):
    labeled = []
    for m in members:
        curve = motion_curve(m.fields, m.track, variant, cfg.motion.params, m.frame_times)
        labeled += label_transitions(curve.values, m.truth_mask, m.frame_times, m.rr_interval,
                                     cfg.rp.alpha_ms, cfg.rp.omega_ms)
    return labeled


def cmd_calibrate(args) -> int:
    cfg = pipeline_config(args, load_config(args.config))
    out = Path(args.out)
    members = _members(Path(args.cohort), cfg)
    variant = cfg.motion.variant
    result = threshold_sweep(_labeled(members, variant, cfg))
    best = result.best
    io.atomic_write_text(out / "sweep.csv", result.to_csv())
    io.atomic_write_text(out / "roc.csv", result.roc_csv())
    io.write_json(out / "best_tau.json", {
        "variant": variant,
        "sigma": cfg.motion.sigma,
        "alpha": cfg.rp.alpha_ms,
        "omega": cfg.rp.omega_ms,
        "best_tau": best.tau,
        "balanced_accuracy": best.balanced_accuracy,
        "sensitivity": best.tpr,
        "specificity": best.tnr,
        "auc": result.auc,
        "n_datasets": len(members),
        "n_transitions": best.tp + best.fp + best.tn + best.fn,
    })
    if args.variant_sweep:
        rows = variant_sweep(members, all_variants(), cfg.motion.params, cfg.rp.alpha_ms, cfg.rp.omega_ms)
        io.atomic_write_text(out / "variant_sweep.csv", variant_rows_csv(rows))
    if args.svg:
        from .plots import accuracy_svg, roc_svg

        roc_svg(result, out / "roc.svg")
        accuracy_svg(result, out / "accuracy.svg")
    print(f"best tau {best.tau:.2f}: balanced accuracy {best.balanced_accuracy:.3f}, "
          f"sensitivity {best.tpr:.3f}, specificity {best.tnr:.3f}, AUC {result.auc:.3f}")
    return EXIT_OK


def _reference_set(d: Path, cfg: PipelineConfig):
    if (d / io.RP_JSON).is_file():
        return io.read_rp(d / io.RP_JSON)
    series = io.read_series(d)
    rp = truth_rest_set(io.read_truth(d), series, cfg.rp)
    return replace(rp, extra={"frame_times": [float(t) for t in series.trigger_times]})


def _ba_csv(stats: dict, deltas: list[dict]) -> str:
    buf = _io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["dataset", "type", "endpoint", "mean_ms", "difference_ms"])
    for d, m, diff in zip(deltas, stats["means"], stats["differences"]):
        wr.writerow([d["dataset"], d["type"], d["endpoint"], repr(float(m)), repr(float(diff))])
    return buf.getvalue()


def cmd_evaluate(args) -> int:
    cfg = pipeline_config(args, load_config(args.config))
    pred_root, ref_root, out = Path(args.pred), Path(args.ref), Path(args.out)
    preds = dict(_datasets(pred_root, io.RP_JSON))
    try:
        refs = dict(_datasets(ref_root, io.RP_JSON))
    except ConfigError:
        refs = dict(_datasets(ref_root, io.TRUTH_JSON))
    if len(preds) == 1 and len(refs) == 1:
        pairs = [(next(iter(preds)), next(iter(preds.values())), next(iter(refs.values())))]
    else:
        if set(preds) != set(refs):
            raise PairingMismatch(f"predictions {sorted(set(preds) - set(refs))} and references "
                                  f"{sorted(set(refs) - set(preds))} are unpaired")
        pairs = [(k, preds[k], refs[k]) for k in sorted(preds)]
    names, p_sets, r_sets, times = [], [], [], []
    for name, pd, rd in pairs:
        try:
            p = io.read_rp(pd / io.RP_JSON)
            r = _reference_set(rd, cfg)
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot read pair {name}: {exc}") from exc
        t_p, t_r = p.extra.get("frame_times"), r.extra.get("frame_times")
        if t_p is None or t_r is None:
            raise ConfigError(f"{name}: rp.json lacks frame_times")
        if len(t_p) != len(t_r) or not np.allclose(t_p, t_r):
            raise PairingMismatch(f"{name}: prediction and reference cover different frames")
        names.append(name)
        p_sets.append(p)
        r_sets.append(r)
        times.append(np.asarray(t_p))
    ag = rp_agreement(p_sets, r_sets, times, names)
    io.atomic_write_text(out / "agreement.csv", ag.to_csv())
    io.atomic_write_text(out / "deltas.csv", ag.deltas_csv())
    io.write_json(out / "confusion.json", ag.confusion.to_dict())
    io.atomic_write_text(out / "bland_altman.csv", _ba_csv(ag.bland_altman, ag.deltas))
    summary = {k: v for k, v in ag.bland_altman.items() if k not in ("means", "differences")}
    d = np.abs([x["delta_frames"] for x in ag.deltas]) if ag.deltas else np.zeros(0)
    scored = sum(c["datasets_in"] for c in ag.counts.values())
    io.write_json(out / "summary.json", {
        "counts": ag.counts,
        "ranges": ag.ranges,
        "bland_altman": summary,
        "mae": [{"type": t, "endpoint": e, **v} for (t, e), v in sorted(ag.mae.items())],
        "endpoints_scored": 2 * scored,
        "endpoints_within_one_frame": int(np.sum(d <= 1)),
    })
    if args.svg:
        from .plots import bland_altman_svg

        bland_altman_svg(ag.bland_altman, out / "bland_altman.svg")
    for (t, e), v in sorted(ag.mae.items()):
        if v["n"]:
            print(f"{t:9s} {e:5s}: MAE {v['mae_ms']:.1f} +/- {v['std_ms']:.1f} ms, "
                  f"{v['mae_frames']:.2f} frames (n={v['n']})")
    return EXIT_OK


def cmd_report(args) -> int:
    run_dir = Path(args.run)
    try:
        rp = io.read_rp(run_dir / io.RP_JSON)
        roi = io.read_roi(run_dir / io.ROI_JSON)
        track = io.read_track(run_dir / io.TRACK_JSON)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot read run outputs in {run_dir}: {exc}") from exc
    report = {
        "roi": roi.to_dict(),
        "n_frames": len(track),
        "track_start": list(track.xy[0]),
        "resting_phases": rp.to_dict(),
        "clinical_reference": {
            "note": "balanced accuracy on a clinical cohort; context only, not reproducible on phantoms",
            "accuracy_percent": CLINICAL_REFERENCE_ACCURACY,
        },
    }
    if args.calibration:
        try:
            report["calibration"] = io.read_json(Path(args.calibration) / "best_tau.json")
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read calibration: {exc}") from exc
    out = Path(args.out) if args.out else run_dir / "report.json"
    io.write_json(out, report)
    variant = rp.extra.get("variant", "?")
    print(f"{variant}, tau {rp.tau}: {len(rp.intervals)} resting phase(s)")
    for iv in rp.intervals:
        print(f"  {iv.label:10s} {iv.start_ms:8.1f} - {iv.end_ms:8.1f} ms  "
              f"(frames {iv.start_frame}-{iv.end_frame})")
    return EXIT_OK


# argument parsing


def _pipeline_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config with optional 'pipeline' section")
    p.add_argument("--tau", type=float, help="rest threshold")
    p.add_argument("--calibration", help="best_tau.json from 'calibrate'; supplies tau and variant")
    p.add_argument("--variant", help="motion aggregation, e.g. wpct(50), pct, mean, dist, wmean")
    p.add_argument("--percentile", type=float, help="percentile for pct / wpct")
    p.add_argument("--sigma", type=float, help="Gaussian weight width in pixels")
    p.add_argument("--alpha-ms", type=float, help="excluded start of the cycle")
    p.add_argument("--omega-ms", type=float, help="excluded end of the cycle")
    p.add_argument("--threads", type=int, help="worker threads for registration")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="restphase", description="Resting-phase detection for CINE series")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="render a phantom series or cohort")
    p.add_argument("--config", help="JSON config with 'phantom' and optional 'cohort' sections")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--cohort", type=int, metavar="N", help="render N members into numbered subdirectories")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("run", help="detect resting phases in a series (or every series below a directory)")
    p.add_argument("series")
    p.add_argument("--out", required=True)
    p.add_argument("--annotation", help="frame-0 landmark JSON; defaults to <series>/annotation.json")
    p.add_argument("--emit-fields", action="store_true", help="also write deformation fields")
    _pipeline_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("calibrate", help="sweep tau over a cohort with truth")
    p.add_argument("cohort")
    p.add_argument("--out", required=True)
    p.add_argument("--variant-sweep", action="store_true", help="also sweep every motion variant")
    p.add_argument("--svg", action="store_true")
    _pipeline_flags(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("evaluate", help="compare predicted resting phases against references")
    p.add_argument("pred")
    p.add_argument("ref")
    p.add_argument("--out", required=True)
    p.add_argument("--svg", action="store_true")
    _pipeline_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="summarise one run as report.json")
    p.add_argument("run")
    p.add_argument("--calibration", help="calibration output directory")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("RESTPHASE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"error in stage {exc.stage}: {exc.cause}", file=sys.stderr)
        return EXIT_STAGE
    except DegenerateLabels as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except PairingMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PAIRING


if __name__ == "__main__":
    sys.exit(main())
