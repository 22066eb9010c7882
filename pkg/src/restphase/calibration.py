"""Threshold calibration and agreement statistics for resting-phase detection."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .classification import RestInterval, RestingPhaseSet, rp_overlap_mask, valid_transitions
from .errors import DegenerateLabels, LengthMismatch, PairingMismatch
from .motion import MotionParams, MotionVariant, motion_curve
from .registration import DeformationField
from .core import LandmarkTrack

__all__ = [
    "TAU_GRID",
    "CLINICAL_REFERENCE_ACCURACY",
    "LabeledTransition",
    "SweepRow",
    "SweepResult",
    "ConfusionMatrix",
    "CohortMember",
    "VariantRow",
    "RpAgreement",
    "label_transitions",
    "threshold_sweep",
    "evaluate_tau",
    "confusion_matrix",
    "variant_sweep",
    "rp_agreement",
    "bland_altman",
]

TAU_GRID = np.arange(1, 101) / 100.0

# Balanced accuracy (%) reported for the clinical cohort, kept for context in
# sweep reports. Not reproducible on phantoms and never used as a target.
CLINICAL_REFERENCE_ACCURACY = {
    "dist": 71.4,
    "pct(10)": 75.1, "pct(20)": 81.5, "pct(30)": 84.1, "pct(40)": 86.9, "pct(50)": 87.2,
    "pct(60)": 87.7, "pct(70)": 86.5, "pct(80)": 83.2, "pct(90)": 81.7, "pct(100)": 78.3,
    "mean": 89.3,
    "wpct(10)": 62.4, "wpct(20)": 72.8, "wpct(30)": 82.7, "wpct(40)": 87.4, "wpct(50)": 90.1,
    "wpct(60)": 88.0, "wpct(70)": 85.8, "wpct(80)": 85.1, "wpct(90)": 83.6, "wpct(100)": 66.4,
    "wmean": 86.2,
}


@dataclass(frozen=True)
class LabeledTransition:
    motion_value: float
    is_rest: bool
    in_valid_window: bool = True


@dataclass(frozen=True)
class SweepRow:
    tau: float
    tpr: float
    tnr: float
    balanced_accuracy: float
    tp: int
    fp: int
    tn: int
    fn: int


@dataclass(frozen=True)
class SweepResult:
    rows: tuple[SweepRow, ...]
    best_tau: float
    auc: float

    @property
    def best(self) -> SweepRow:
        return next(r for r in self.rows if r.tau == self.best_tau)

    def roc_points(self) -> list[tuple[float, float]]:
        """(FPR, TPR) including the (0, 0) and (1, 1) end points."""
        pts = [(1.0 - r.tnr, r.tpr) for r in self.rows]
        return [(0.0, 0.0)] + pts + [(1.0, 1.0)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["tau", "tpr", "tnr", "balanced_accuracy", "tp", "fp", "tn", "fn"])
        for r in self.rows:
            wr.writerow([f"{r.tau:.2f}", repr(r.tpr), repr(r.tnr), repr(r.balanced_accuracy),
                         r.tp, r.fp, r.tn, r.fn])
        return buf.getvalue()

    def roc_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["fpr", "tpr"])
        for fpr, tpr in self.roc_points():
            wr.writerow([repr(float(fpr)), repr(float(tpr))])
        return buf.getvalue()


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def tpr(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else float("nan")

    @property
    def tnr(self) -> float:
        return self.tn / (self.tn + self.fp) if self.tn + self.fp else float("nan")

    @property
    def fpr(self) -> float:
        return 1.0 - self.tnr

    @property
    def fnr(self) -> float:
        return 1.0 - self.tpr

    @property
    def balanced_accuracy(self) -> float:
        return 0.5 * (self.tpr + self.tnr)

    def rates(self) -> dict:
        """Row-normalised rates; rows are the reference classes."""
        return {"rest": {"rest": self.tpr, "motion": self.fnr},
                "motion": {"rest": self.fpr, "motion": self.tnr}}

    def to_dict(self) -> dict:
        def clean(v):
            return None if v != v else v
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
                "tpr": clean(self.tpr), "tnr": clean(self.tnr),
                "balanced_accuracy": clean(self.balanced_accuracy),
                "rates": {k: {kk: clean(vv) for kk, vv in v.items()} for k, v in self.rates().items()}}


def confusion_matrix(pred_mask, truth_mask) -> ConfusionMatrix:
    p = np.asarray(pred_mask, dtype=bool)
    t = np.asarray(truth_mask, dtype=bool)
    if p.shape != t.shape:
        raise LengthMismatch(f"mask shapes {p.shape} and {t.shape} differ")
    return ConfusionMatrix(int(np.sum(p & t)), int(np.sum(p & ~t)),
                           int(np.sum(~p & ~t)), int(np.sum(~p & t)))


def label_transitions(values, truth_mask, frame_times, rr_interval: float,
                      alpha_ms: float, omega_ms: float) -> list[LabeledTransition]:
    valid = valid_transitions(frame_times, rr_interval, alpha_ms, omega_ms)
    values = np.asarray(values, dtype=float)
    truth = np.asarray(truth_mask, dtype=bool)
    if not (values.shape == truth.shape == valid.shape):
        raise LengthMismatch("values, truth mask and frame times disagree in length")
    return [LabeledTransition(float(v), bool(r), bool(w)) for v, r, w in zip(values, truth, valid)]


def _arrays(labeled: Iterable[LabeledTransition]) -> tuple[np.ndarray, np.ndarray]:
    items = [lt for lt in labeled if lt.in_valid_window]
    values = np.array([lt.motion_value for lt in items], dtype=float)
    rest = np.array([lt.is_rest for lt in items], dtype=bool)
    return values, rest


def evaluate_tau(labeled: Sequence[LabeledTransition], tau: float) -> SweepRow:
    """Pooled sensitivity/specificity of ``value < tau`` over in-window transitions."""
    values, rest = _arrays(labeled)
    cm = confusion_matrix(values < tau, rest)
    return SweepRow(float(tau), cm.tpr, cm.tnr, cm.balanced_accuracy, cm.tp, cm.fp, cm.tn, cm.fn)


def threshold_sweep(labeled: Sequence[LabeledTransition], taus=TAU_GRID) -> SweepResult:
    """Sweep ``tau`` over the grid and pick the best balanced accuracy.

    Ties go to the smaller ``tau``. The AUC integrates the (FPR, TPR) points of
    the sweep with the trapezoid rule, closed by (0, 0) and (1, 1).
    """
    values, rest = _arrays(labeled)
    n_pos = int(rest.sum())
    n_neg = int(rest.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels(f"need both classes in the valid window, got {n_pos} rest / {n_neg} motion")
    taus = np.asarray(taus, dtype=float)
    pred = values[None, :] < taus[:, None]
    tp = np.sum(pred & rest[None, :], axis=1)
    fp = np.sum(pred & ~rest[None, :], axis=1)
    tpr = tp / n_pos
    tnr = (n_neg - fp) / n_neg
    bacc = 0.5 * (tpr + tnr)
    rows = tuple(
        SweepRow(float(taus[i]), float(tpr[i]), float(tnr[i]), float(bacc[i]),
                 int(tp[i]), int(fp[i]), int(n_neg - fp[i]), int(n_pos - tp[i]))
        for i in range(taus.size))
    best = int(np.argmax(bacc))  # first maximum = smallest tau
    fpr = np.concatenate([[0.0], 1.0 - tnr, [1.0]])
    tprs = np.concatenate([[0.0], tpr, [1.0]])
    order = np.lexsort((tprs, fpr))
    auc = float(np.trapezoid(tprs[order], fpr[order]))
    return SweepResult(rows, float(taus[best]), auc)


@dataclass(frozen=True)
class CohortMember:
    """What a variant sweep needs from one processed series."""

    fields: tuple[DeformationField, ...]
    track: LandmarkTrack  # ROI coordinates
    truth_mask: np.ndarray
    frame_times: np.ndarray
    rr_interval: float
    name: str = ""


@dataclass(frozen=True)
class VariantRow:
    variant: str
    accuracy: float | None
    sensitivity: float | None
    specificity: float | None
    best_tau: float | None
    auc: float | None
    error: str | None = None

    @property
    def reference_accuracy(self) -> float | None:
        return CLINICAL_REFERENCE_ACCURACY.get(self.variant)


def variant_sweep(members: Sequence[CohortMember], variants: Sequence[MotionVariant],
                  params: MotionParams | None = None, alpha_ms: float = 80.0,
                  omega_ms: float = 80.0) -> list[VariantRow]:
    """Run the threshold sweep once per motion variant over pooled transitions.

    A variant whose labels are degenerate yields a row carrying the error
    instead of raising, so one bad variant does not hide the others.
    """
    rows = []
    for variant in variants:
        variant = MotionVariant.parse(variant)
        labeled: list[LabeledTransition] = []
        for m in members:
            curve = motion_curve(m.fields, m.track, variant, params, m.frame_times)
            labeled += label_transitions(curve.values, m.truth_mask, m.frame_times,
                                         m.rr_interval, alpha_ms, omega_ms)
        try:
            res = threshold_sweep(labeled)
        except DegenerateLabels as exc:
            rows.append(VariantRow(str(variant), None, None, None, None, None, str(exc)))
            continue
        b = res.best
        rows.append(VariantRow(str(variant), 100.0 * b.balanced_accuracy, 100.0 * b.tpr,
                               100.0 * b.tnr, res.best_tau, res.auc))
    return rows


def variant_rows_csv(rows: Sequence[VariantRow]) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["variant", "accuracy", "sensitivity", "specificity", "best_tau", "auc",
                 "clinical_reference_accuracy", "error"])

    def fmt(v):
        return "" if v is None else repr(float(v))

    for r in rows:
        wr.writerow([r.variant, fmt(r.accuracy), fmt(r.sensitivity), fmt(r.specificity),
                     "" if r.best_tau is None else f"{r.best_tau:.2f}", fmt(r.auc),
                     fmt(r.reference_accuracy), r.error or ""])
    return buf.getvalue()


def _mean_std(values: Sequence[float]) -> tuple[float | None, float | None]:
    if len(values) == 0:
        return None, None
    a = np.asarray(values, dtype=float)
    return float(a.mean()), float(a.std())


def bland_altman(pred: Sequence[float], ref: Sequence[float]) -> dict:
    """Mean difference (pred - ref) with 1.96-std limits of agreement."""
    p = np.asarray(pred, dtype=float)
    r = np.asarray(ref, dtype=float)
    if p.shape != r.shape:
        raise LengthMismatch("Bland-Altman inputs differ in length")
    if p.size == 0:
        return {"n": 0, "mean_difference": None, "std_difference": None,
                "lower_limit": None, "upper_limit": None}
    diff = p - r
    md, sd = float(diff.mean()), float(diff.std())
    return {"n": int(p.size), "mean_difference": md, "std_difference": sd,
            "lower_limit": md - 1.96 * sd, "upper_limit": md + 1.96 * sd}


@dataclass
class RpAgreement:
    """Endpoint agreement between predicted and reference resting phases."""

    # rows: dataset, type, endpoint, pred/ref ms and frame, deltas
    deltas: list[dict] = field(default_factory=list)
    # (type, endpoint) -> {"mae_ms", "std_ms", "mae_frames", "std_frames", "n"}
    mae: dict = field(default_factory=dict)
    confusion: ConfusionMatrix | None = None
    bland_altman: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)
    ranges: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["type", "endpoint", "n", "mae_ms", "std_ms", "mae_frames", "std_frames"])

        def fmt(v):
            return "" if v is None else repr(float(v))

        for (typ, ep), s in sorted(self.mae.items()):
            wr.writerow([typ, ep, s["n"], fmt(s["mae_ms"]), fmt(s["std_ms"]),
                         fmt(s["mae_frames"]), fmt(s["std_frames"])])
        return buf.getvalue()

    def deltas_csv(self) -> str:
        buf = io.StringIO()
        cols = ["dataset", "type", "endpoint", "pred_ms", "ref_ms", "delta_ms",
                "pred_frame", "ref_frame", "delta_frames"]
        wr = csv.DictWriter(buf, cols, lineterminator="\n")
        wr.writeheader()
        for d in self.deltas:
            wr.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in d.items()})
        return buf.getvalue()


def _pick(pred: RestingPhaseSet, ref_iv: RestInterval, label: str) -> tuple[RestInterval | None, int]:
    """Predicted interval of ``label`` with maximal overlap, plus the count of extras."""
    cands = pred.by_label(label)
    if not cands:
        return None, 0
    best = max(cands, key=lambda iv: (iv.overlap_ms(ref_iv), -abs(iv.start_ms - ref_iv.start_ms)))
    return best, len(cands) - 1


def rp_agreement(predicted: Sequence[RestingPhaseSet], reference: Sequence[RestingPhaseSet],
                 frame_times: Sequence, names: Sequence[str] | None = None,
                 min_reference_ms: float = 30.0) -> RpAgreement:
    """Compare predicted and reference resting phases dataset by dataset.

    Intervals are matched by label. A reference lacking a label, or whose
    interval of that label is shorter than ``min_reference_ms``, is excluded
    for that label and counted. A missing prediction for a scored reference is
    counted as a miss.
    """
    if not (len(predicted) == len(reference) == len(frame_times)):
        raise PairingMismatch(f"{len(predicted)} predictions, {len(reference)} references, "
                              f"{len(frame_times)} series")
    names = list(names) if names is not None else [str(i) for i in range(len(predicted))]
    out = RpAgreement()
    all_pred_mask, all_ref_mask = [], []
    ba_pred: list[float] = []
    ba_ref: list[float] = []
    durations: dict[str, list[float]] = {}
    for typ in ("systolic", "diastolic"):
        out.counts[typ] = {"total": len(predicted), "datasets_in": 0, "excluded_short": 0,
                           "excluded_missing_type": 0, "missed_predictions": 0,
                           "false_interval_findings": 0}
    per_endpoint: dict[tuple[str, str], dict[str, list[float]]] = {}
    for name, pred, ref, times in zip(names, predicted, reference, frame_times):
        times = np.asarray(times, dtype=float)
        if pred.rp_mask.shape[0] != times.shape[0] - 1 or ref.rp_mask.shape[0] != times.shape[0] - 1:
            raise PairingMismatch(f"dataset {name}: masks do not match {times.shape[0]} frames")
        all_pred_mask.append(rp_overlap_mask(pred, times))
        all_ref_mask.append(rp_overlap_mask(ref, times))
        for typ in ("systolic", "diastolic"):
            for iv in pred.by_label(typ):
                durations.setdefault(f"predicted_{typ}", []).append(iv.duration_ms)
            for iv in ref.by_label(typ):
                durations.setdefault(f"reference_{typ}", []).append(iv.duration_ms)
            c = out.counts[typ]
            refs = ref.by_label(typ)
            if not refs:
                c["excluded_missing_type"] += 1
                continue
            ref_iv = refs[0]
            if ref_iv.duration_ms < min_reference_ms:
                c["excluded_short"] += 1
                continue
            c["datasets_in"] += 1
            pred_iv, extras = _pick(pred, ref_iv, typ)
            c["false_interval_findings"] += extras
            if pred_iv is None:
                c["missed_predictions"] += 1
                continue
            for ep in ("start", "end"):
                p_ms = getattr(pred_iv, f"{ep}_ms")
                r_ms = getattr(ref_iv, f"{ep}_ms")
                p_fr = getattr(pred_iv, f"{ep}_frame")
                r_fr = getattr(ref_iv, f"{ep}_frame")
                out.deltas.append({"dataset": name, "type": typ, "endpoint": ep,
                                   "pred_ms": p_ms, "ref_ms": r_ms, "delta_ms": p_ms - r_ms,
                                   "pred_frame": p_fr, "ref_frame": r_fr,
                                   "delta_frames": p_fr - r_fr})
                acc = per_endpoint.setdefault((typ, ep), {"ms": [], "frames": []})
                acc["ms"].append(abs(p_ms - r_ms))
                acc["frames"].append(abs(p_fr - r_fr))
                ba_pred.append(p_ms)
                ba_ref.append(r_ms)
    for typ in ("systolic", "diastolic"):
        for ep in ("start", "end"):
            acc = per_endpoint.get((typ, ep), {"ms": [], "frames": []})
            mae_ms, std_ms = _mean_std(acc["ms"])
            mae_fr, std_fr = _mean_std(acc["frames"])
            out.mae[(typ, ep)] = {"n": len(acc["ms"]), "mae_ms": mae_ms, "std_ms": std_ms,
                                  "mae_frames": mae_fr, "std_frames": std_fr}
    if all_pred_mask:
        out.confusion = confusion_matrix(np.concatenate(all_pred_mask), np.concatenate(all_ref_mask))
    out.bland_altman = bland_altman(ba_pred, ba_ref)
    out.bland_altman["means"] = [0.5 * (p + r) for p, r in zip(ba_pred, ba_ref)]
    out.bland_altman["differences"] = [p - r for p, r in zip(ba_pred, ba_ref)]
    for key, vals in sorted(durations.items()):
        m, s = _mean_std(vals)
        out.ranges[key] = {"n": len(vals), "mean_ms": m, "std_ms": s}
    return out
